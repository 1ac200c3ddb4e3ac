"""Memory figures of merit: efficiency, fidelity, amplitude preservation, echo windows."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate, signal

from .signals import Waveform

__all__ = ["MetricsError", "MetricsReport", "EchoPartition", "efficiency", "fidelity",
           "amplitude_preservation", "stretched_fidelity", "evaluate", "echo_partition"]


class MetricsError(ValueError):
    """Degenerate input for a figure of merit."""


@dataclass(frozen=True)
class MetricsReport:
    n_in: float
    n_out: float
    eta: float
    fidelity: float
    amp_preservation: float
    t_bar: float
    window: tuple[float, float]
    defined: bool = True

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        for k in ("fidelity", "amp_preservation"):
            if not math.isfinite(d[k]):
                d[k] = None
        return d


def _energy(w: Waveform) -> float:
    return w.energy()


def _require_input(a_in: Waveform) -> float:
    n_in = _energy(a_in)
    if not n_in > 0:
        raise MetricsError("input energy is zero")
    return n_in


def efficiency(a_in: Waveform, a_out: Waveform) -> float:
    """N_out / N_in with trapezoidal |a|^2 integrals over each record."""
    return _energy(a_out) / _require_input(a_in)


def _trap_weights(n: int, dt: float) -> np.ndarray:
    w = np.full(n, dt)
    if n:
        w[0] = w[-1] = dt / 2
    return w


def _reversed_input(a_in: Waveform, a_out: Waveform, t_bar: float) -> np.ndarray:
    """a_in(t_bar - t) on the output grid; exact samples when the grids align."""
    t = t_bar - a_out.times
    k = (t - a_in.t0) / a_in.dt
    kr = np.rint(k)
    if np.isclose(a_in.dt, a_out.dt) and np.all(np.abs(k - kr) < 1e-9):
        kr = kr.astype(int)
        inside = (kr >= 0) & (kr < len(a_in))
        out = np.zeros(len(a_out), dtype=complex)
        out[inside] = a_in.samples[kr[inside]]
        return out
    return a_in.at(t)


def _overlap_terms(a_in, a_out, t_bar):
    w = _trap_weights(len(a_out), a_out.dt)
    return w * a_out.samples * np.conj(_reversed_input(a_in, a_out, t_bar))


def _auto_t_bar(a_in: Waveform, a_out: Waveform) -> float:
    """Grid value of t_bar maximising |int a_out(t) a_in*(t_bar - t) dt|."""
    if not np.isclose(a_in.dt, a_out.dt):
        raise MetricsError("automatic t_bar needs equal sampling steps")
    w = _trap_weights(len(a_out), a_out.dt)
    corr = signal.fftconvolve(w * a_out.samples, np.conj(a_in.samples))
    j = int(np.argmax(np.abs(corr)))
    return float(a_out.t0 + a_in.t0 + j * a_in.dt)


def _resolve_t_bar(a_in, a_out, t_bar):
    if isinstance(t_bar, str):
        if t_bar != "auto":
            raise ValueError("t_bar must be a number or 'auto'")
        return _auto_t_bar(a_in, a_out)
    return float(t_bar)


def fidelity(a_in: Waveform, a_out: Waveform, t_bar: float | str = 0.0) -> float:
    """|int a_out(t) a_in*(t_bar - t) dt|^2 / (N_in N_out); NaN when the output is empty."""
    n_in = _require_input(a_in)
    n_out = _energy(a_out)
    if not n_out > 0:
        return math.nan
    tb = _resolve_t_bar(a_in, a_out, t_bar)
    ov = _overlap_terms(a_in, a_out, tb).sum()
    return float(abs(ov) ** 2 / (n_in * n_out))


def amplitude_preservation(a_in: Waveform, a_out: Waveform, t_bar: float | str = 0.0) -> float:
    """(int |a_out(t) a_in*(t_bar - t)| dt)^2 / (N_in N_out); NaN when the output is empty."""
    n_in = _require_input(a_in)
    n_out = _energy(a_out)
    if not n_out > 0:
        return math.nan
    tb = _resolve_t_bar(a_in, a_out, t_bar)
    ov = np.abs(_overlap_terms(a_in, a_out, tb)).sum()
    return float(ov ** 2 / (n_in * n_out))


def stretched_fidelity(a_in: Waveform, a_out: Waveform, stretch: float,
                       t_bar: float = 0.0) -> float:
    """Overlap with the time-rescaled reversed input a_in(t_bar - t / stretch).

    A diagnostic for read-out with |beta'| != |beta|, where the echo is
    stretched by |beta / beta'|; equals ``fidelity`` for stretch = 1.
    """
    if not stretch > 0:
        raise ValueError("stretch must be positive")
    n_in = _require_input(a_in)
    n_out = _energy(a_out)
    if not n_out > 0:
        return math.nan
    ref = a_in.at(t_bar - a_out.times / stretch)
    w = _trap_weights(len(a_out), a_out.dt)
    ov = np.sum(w * a_out.samples * np.conj(ref))
    return float(abs(ov) ** 2 / (n_in * stretch * n_out))


def evaluate(a_in: Waveform, a_out: Waveform, t_bar: float | str = 0.0) -> MetricsReport:
    """All three figures of merit for one storage/retrieval record pair."""
    n_in = _require_input(a_in)
    n_out = _energy(a_out)
    tb = _resolve_t_bar(a_in, a_out, t_bar) if n_out > 0 else (0.0 if t_bar == "auto" else float(t_bar))
    if n_out > 0:
        terms = _overlap_terms(a_in, a_out, tb)
        fid = abs(terms.sum()) ** 2 / (n_in * n_out)
        amp = np.abs(terms).sum() ** 2 / (n_in * n_out)
        defined = True
    else:
        fid = amp = math.nan
        defined = False
    return MetricsReport(n_in, n_out, n_out / n_in, float(fid), float(amp), tb,
                         (a_out.t0, a_out.t_end), defined)


@dataclass(frozen=True)
class EchoPartition:
    """Per-echo windows [t0 + n T0 - T0/2, t0 + n T0 + T0/2], n = 1..n_max."""

    windows: np.ndarray
    energies: np.ndarray
    peaks: np.ndarray
    peak_times: np.ndarray

    def to_dict(self) -> dict:
        return {"windows": self.windows.tolist(), "energies": self.energies.tolist(),
                "peaks": self.peaks.tolist(), "peak_times": self.peak_times.tolist()}


def echo_partition(a_out: Waveform, T0: float, n_max: int = 5, t_origin: float = 0.0) -> EchoPartition:
    """Energy and peak |a| of each echo window.

    Window energies are differences of the cumulative trapezoid integral
    (linearly interpolated at the window edges), so adjacent windows add up
    exactly to the energy of their union.
    """
    if not T0 > 0:
        raise ValueError("T0 must be positive")
    horizon = t_origin + (n_max + 0.5) * T0
    if len(a_out) == 0 or a_out.t_end < horizon - 1e-9 * a_out.dt or a_out.t0 > t_origin + 0.5 * T0:
        raise MetricsError(f"record [{a_out.t0:.6g}, {a_out.t_end:.6g}] does not cover the "
                           f"echo horizon [{t_origin + 0.5 * T0:.6g}, {horizon:.6g}]")
    t = a_out.times
    power = np.abs(a_out.samples) ** 2
    cum = integrate.cumulative_trapezoid(power, t, initial=0.0)
    n = np.arange(1, n_max + 1)
    lo = t_origin + (n - 0.5) * T0
    hi = t_origin + (n + 0.5) * T0
    edges = np.concatenate([lo, hi[-1:]])
    c = np.interp(edges, t, cum)
    energies = np.diff(c)
    peaks = np.zeros(n_max)
    peak_times = np.zeros(n_max)
    amp = np.abs(a_out.samples)
    for k in range(n_max):
        sel = np.flatnonzero((t >= lo[k]) & (t < hi[k]))
        if sel.size:
            j = sel[np.argmax(amp[sel])]
            peaks[k] = amp[j]
            peak_times[k] = t[j]
        else:
            peak_times[k] = t_origin + (k + 1) * T0
    return EchoPartition(np.stack([lo, hi], axis=1), energies, peaks, peak_times)
