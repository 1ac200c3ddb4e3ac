"""Sampled field envelopes and space-time grids shared by every module."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Waveform:
    """Uniformly sampled complex envelope a(t) with a(t0 + k*dt) = samples[k]."""

    t0: float
    dt: float
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=complex)
        if s.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "samples", s)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.samples))

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (len(self.samples) - 1)

    def __len__(self) -> int:
        return len(self.samples)

    def window(self, t_start: float, t_stop: float) -> "Waveform":
        """Samples whose times fall in [t_start, t_stop] (grid-snapped, inclusive)."""
        t = self.times
        tol = 1e-9 * self.dt
        sel = np.flatnonzero((t >= t_start - tol) & (t <= t_stop + tol))
        if sel.size == 0:
            return Waveform(t_start, self.dt, np.zeros(0, complex))
        return Waveform(float(t[sel[0]]), self.dt, self.samples[sel[0]: sel[-1] + 1])

    def at(self, t) -> np.ndarray:
        """Linear interpolation of the samples (zero outside the record)."""
        t = np.asarray(t, dtype=float)
        tt = self.times
        re = np.interp(t, tt, self.samples.real, left=0.0, right=0.0)
        im = np.interp(t, tt, self.samples.imag, left=0.0, right=0.0)
        return re + 1j * im

    def energy(self) -> float:
        """Trapezoidal integral of |a|^2 over the record."""
        if len(self) < 2:
            return 0.0
        return float(np.trapezoid(np.abs(self.samples) ** 2, dx=self.dt))


def time_grid(t_start: float, t_stop: float, n: int) -> tuple[float, float]:
    """(t0, dt) for n uniformly spaced nodes spanning [t_start, t_stop]."""
    if n < 2:
        raise ValueError("need at least two time nodes")
    return float(t_start), (t_stop - t_start) / (n - 1)


def gaussian_input(t_in: float, fwhm: float, t_start: float, t_stop: float, n: int) -> Waveform:
    """a(t) = exp(-2 ln2 (t - t_in)^2 / fwhm^2); fwhm is the amplitude FWHM."""
    t0, dt = time_grid(t_start, t_stop, n)
    t = t0 + dt * np.arange(n)
    return Waveform(t0, dt, np.exp(-2.0 * math.log(2.0) * (t - t_in) ** 2 / fwhm ** 2))


def expdecay_input(t_in: float, gamma: float, t_start: float, t_stop: float, n: int) -> Waveform:
    """a(t) = exp(-gamma (t - t_in)) across the whole record."""
    t0, dt = time_grid(t_start, t_stop, n)
    t = t0 + dt * np.arange(n)
    return Waveform(t0, dt, np.exp(-gamma * (t - t_in)))


def delta_approx_input(t_in: float, width: float, t_start: float, t_stop: float,
                       n: int) -> Waveform:
    """Unit-area Gaussian of standard deviation ``width`` approximating delta(t - t_in)."""
    t0, dt = time_grid(t_start, t_stop, n)
    t = t0 + dt * np.arange(n)
    g = np.exp(-0.5 * ((t - t_in) / width) ** 2) / (width * math.sqrt(2 * math.pi))
    return Waveform(t0, dt, g)


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Complex samples on a (z, t) lattice; z is measured from the entrance face."""

    z: np.ndarray = field(repr=False)
    t: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    length: float = 1.0

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (z.size, t.size):
            raise ValueError(f"values shape {v.shape} does not match ({z.size}, {t.size})")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "values", v)

    @property
    def z_centered(self) -> np.ndarray:
        """Positions in the symmetric frame [-L/2, L/2]."""
        return self.z - 0.5 * self.length

    def at_time(self, t: float) -> np.ndarray:
        return self.values[:, int(np.argmin(np.abs(self.t - t)))]

    def at_position(self, z: float) -> np.ndarray:
        return self.values[int(np.argmin(np.abs(self.z - z))), :]


class FieldGrid(SpaceTimeGrid):
    """Field envelope a(z, t)."""


class CoherenceGrid(SpaceTimeGrid):
    """Collective coherence S(z, t) (atomic density normalised to one)."""
