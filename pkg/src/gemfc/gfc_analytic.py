"""Closed-form results for gradient frequency combs.

The comb has M = 2 M0 + 1 segments of length d centred at m l0
(m = -M0..M0) in the symmetric frame z in [-L/2, L/2].  In the
discontinuous variant each segment keeps the gradient, Delta = beta z; in
the stepwise variant each segment is flat at Delta = m delta_omega.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from .signals import Waveform
from .specfun import DEFAULT_CONTROL, EvalControl, j1_tilde, kummer_1f1

__all__ = [
    "GfcParams", "EchoSeries", "AliasingError", "thin_medium_echoes", "transfer_function",
    "propagate_via_transfer", "first_five_echoes", "first_echo_efficiency",
    "optimization_report", "efficiency_contour",
]

VARIANTS = ("stepwise", "discontinuous")
_GAMMA_FLOOR = 1e-12


class AliasingError(ValueError):
    """The transform length cannot hold the requested output horizon."""


@dataclass(frozen=True)
class GfcParams:
    """Comb geometry and coupling.

    ``beta`` is the in-segment gradient (zero for the stepwise variant);
    for the discontinuous variant ``delta_omega`` must equal beta * l0.
    """

    M: int
    d: float
    l0: float
    beta: float
    delta_omega: float
    gamma: float
    gN2: float
    variant: str = "discontinuous"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.M < 1 or self.M % 2 != 1:
            raise ValueError("M must be a positive odd integer")
        if not (self.d > 0 and self.l0 >= self.d):
            raise ValueError("need l0 >= d > 0")
        if not self.delta_omega > 0:
            raise ValueError("delta_omega must be positive")
        if self.gamma < 0 or self.gN2 < 0:
            raise ValueError("gamma and gN2 must be non-negative")
        if self.variant == "stepwise" and self.beta != 0:
            raise ValueError("stepwise combs have no in-segment gradient (beta = 0)")
        if self.variant == "discontinuous":
            if not self.beta > 0:
                raise ValueError("discontinuous combs need beta > 0")
            if abs(self.beta * self.l0 - self.delta_omega) > 1e-9 * self.delta_omega:
                raise ValueError("discontinuous combs need delta_omega = beta * l0")

    @classmethod
    def from_groups(cls, variant: str, M: int, F_prime: float, mu: float,
                    F: float = math.inf, T0: float = 1.0) -> "GfcParams":
        """Normalised comb with l0 = 1 and the given rephasing time."""
        dw = 2 * math.pi / T0
        l0 = 1.0
        d = l0 / F_prime
        beta_eff = dw / l0
        gamma = 0.0 if math.isinf(F) else dw / (2 * F)
        beta = beta_eff if variant == "discontinuous" else 0.0
        return cls(M, d, l0, beta, dw, gamma, mu * beta_eff, variant)

    @classmethod
    def from_physical(cls, variant: str, M: int, F: float, F_prime: float, mu: float,
                      gN2: float, beta_L: float) -> "GfcParams":
        """Comb from coupling density, finesses and the total gradient span beta L."""
        beta_eff = gN2 / mu
        L = beta_L / beta_eff
        l0 = L / ((M - 1) + 1 / F_prime)
        d = l0 / F_prime
        dw = beta_eff * l0
        gamma = 0.0 if math.isinf(F) else dw / (2 * F)
        beta = beta_eff if variant == "discontinuous" else 0.0
        return cls(M, d, l0, beta, dw, gamma, gN2, variant)

    @property
    def M0(self) -> int:
        return (self.M - 1) // 2

    @property
    def T0(self) -> float:
        return 2 * math.pi / self.delta_omega

    @property
    def F(self) -> float:
        return math.inf if self.gamma == 0 else self.delta_omega / (2 * self.gamma)

    @property
    def F_prime(self) -> float:
        return self.l0 / self.d

    @property
    def L(self) -> float:
        return (self.M - 1) * self.l0 + self.d

    @property
    def beta_eff(self) -> float:
        """True gradient (discontinuous) or effective gradient delta_omega / l0 (stepwise)."""
        return self.delta_omega / self.l0

    @property
    def beta_tilde_bandwidth(self) -> float:
        """Alternative effective gradient M delta_omega / L (diagnostic only)."""
        return self.M * self.delta_omega / self.L

    @property
    def mu(self) -> float:
        return self.gN2 / self.beta_eff

    @property
    def thickness(self) -> float:
        """gN2 d T0, the per-segment effective thickness."""
        return self.gN2 * self.d * self.T0

    @property
    def zeta_eff0(self) -> float:
        return 2 / math.pi * self.thickness

    def segment_centers(self) -> np.ndarray:
        return self.l0 * np.arange(-self.M0, self.M0 + 1)

    def detuning(self, z_centered, segment) -> np.ndarray:
        """Detuning at centred positions belonging to segment indices 0..M-1."""
        z = np.asarray(z_centered, dtype=float)
        if self.variant == "discontinuous":
            return self.beta * z
        return (np.asarray(segment) - self.M0) * self.delta_omega

    def groups(self) -> dict:
        return {"M": self.M, "T0": self.T0, "F": self.F, "F_prime": self.F_prime,
                "mu": self.mu, "zeta_eff0": self.zeta_eff0, "gN2_d_T0": self.thickness,
                "L": self.L, "variant": self.variant}


@dataclass(frozen=True)
class EchoSeries:
    """a_out(t) = leakage a_in(t) + sum_n c_n a_in(t - n T0)."""

    leakage_coeff: complex
    echo_coeffs: np.ndarray = field(repr=False)
    T0: float = 1.0
    in_domain: bool = True

    def __post_init__(self):
        object.__setattr__(self, "echo_coeffs", np.asarray(self.echo_coeffs, dtype=complex))

    @property
    def n_max(self) -> int:
        return int(self.echo_coeffs.size)

    def efficiencies(self) -> np.ndarray:
        return np.abs(self.echo_coeffs) ** 2

    def synthesize(self, a_in: Waveform, t_start: float | None = None,
                   t_stop: float | None = None) -> Waveform:
        """Replica train on a grid with the input's step."""
        t_start = a_in.t0 if t_start is None else t_start
        t_stop = a_in.t_end + self.n_max * self.T0 if t_stop is None else t_stop
        n = int(round((t_stop - t_start) / a_in.dt)) + 1
        t = t_start + a_in.dt * np.arange(n)
        out = self.leakage_coeff * a_in.at(t)
        for k, c in enumerate(self.echo_coeffs, start=1):
            out = out + c * a_in.at(t - k * self.T0)
        return Waveform(t_start, a_in.dt, out)


def thin_medium_echoes(p: GfcParams, n_max: int = 5,
                       ctl: EvalControl = DEFAULT_CONTROL) -> EchoSeries:
    """First-order (single-scattering) echo train, valid for gN2 d T0 <~ 1."""
    x = p.thickness
    n = np.arange(1, n_max + 1)
    damp = np.exp(-p.gamma * n * p.T0)
    if p.gN2 == 0:
        shape = np.zeros(n_max, dtype=complex)
    elif p.variant == "discontinuous":
        arg = p.beta * p.d * n * p.T0
        shape = np.exp(-0.5j * arg) * kummer_1f1(1j * p.mu + 1, 2.0, 1j * arg, ctl)
    else:
        shape = j1_tilde(x * n).astype(complex)
    coeffs = -x * damp * shape
    return EchoSeries(1 - x / 2, coeffs, p.T0, in_domain=bool(x <= 1))


def transfer_function(omega, p: GfcParams, sigma: float = 0.0) -> np.ndarray:
    """Exact finite-comb response a_out(w) / a_in(w) for F(w) = int F(t) e^{+i w t} dt.

    ``sigma > 0`` evaluates at w + i sigma, the response to the damped pair
    a(t) e^{-sigma t}.
    """
    w = np.asarray(omega, dtype=float)
    scalar = w.ndim == 0
    w = np.atleast_1d(w)
    g = max(p.gamma + sigma, _GAMMA_FLOOR * p.delta_omega)
    base = (g - 1j * w)[:, None]
    centers = p.segment_centers()
    if p.variant == "discontinuous":
        lo = base - 1j * p.beta * (centers - p.d / 2)[None, :]
        hi = base - 1j * p.beta * (centers + p.d / 2)[None, :]
        expo = (1j / p.beta) * (np.log(hi) - np.log(lo)).sum(axis=1)
    else:
        det = (np.arange(p.M) - p.M0) * p.delta_omega
        expo = (p.d / (base - 1j * det[None, :])).sum(axis=1)
    out = np.exp(-p.gN2 * expo)
    return out[0] if scalar else out


def propagate_via_transfer(a_in: Waveform, p: GfcParams, t_stop: float | None = None,
                           n_fft: int | None = None) -> Waveform:
    """Exact linear response of the comb to a sampled input.

    The output shares the input's grid start and step and runs to ``t_stop``
    (default: the input's end).  An exponential window e^{-sigma t}, undone
    after the inverse transform, suppresses circular wrap-around of the long
    echo tail.
    """
    t_stop = a_in.t_end if t_stop is None else t_stop
    n_out = int(round((t_stop - a_in.t0) / a_in.dt)) + 1
    if n_out < 1:
        raise ValueError("t_stop precedes the input record")
    needed = max(n_out, len(a_in))
    n_min = 2 * needed
    if n_fft is None:
        n_fft = sfft.next_fast_len(n_min)
    elif n_fft < n_min:
        raise AliasingError(f"n_fft = {n_fft} cannot hold the {needed}-sample horizon "
                            f"without wrap-around (need >= {n_min})")
    period = n_fft * a_in.dt
    sigma = 18.0 / period
    tau = a_in.dt * np.arange(n_fft)
    x = np.zeros(n_fft, dtype=complex)
    x[: len(a_in)] = a_in.samples * np.exp(-sigma * tau[: len(a_in)])
    omega = -2 * np.pi * sfft.fftfreq(n_fft, a_in.dt)
    y = sfft.ifft(sfft.fft(x) * transfer_function(omega, p, sigma))
    y = y[:n_out] * np.exp(sigma * tau[:n_out])
    return Waveform(a_in.t0, a_in.dt, y)


def _exp_series(b: np.ndarray, n_max: int) -> np.ndarray:
    """Power-series coefficients e_0..e_n of exp(sum_k b_k x^k), b indexed from k = 1."""
    e = np.zeros(n_max + 1, dtype=complex)
    e[0] = 1.0
    for k in range(1, n_max + 1):
        e[k] = sum(j * b[j - 1] * e[k - j] for j in range(1, k + 1)) / k
    return e


def first_five_echoes(p: GfcParams, n_max: int = 5) -> EchoSeries:
    """Leakage and echoes from the periodic (infinite comb) expansion.

    Discontinuous combs use the gamma -> 0 form; stepwise combs keep the
    e^{-n pi / F} decoherence factors.
    """
    n = np.arange(1, n_max + 1)
    if p.variant == "discontinuous":
        u = math.pi / p.F_prime
        lead = math.exp(-p.mu * u)
        b = -(2 * p.mu / n) * np.sin(n * u)
    else:
        x = p.thickness
        lead = math.exp(-x / 2)
        b = -x * np.exp(-p.gamma * n * p.T0)
    e = _exp_series(b, n_max)
    return EchoSeries(lead, lead * e[1:], p.T0, in_domain=True)


def first_echo_efficiency(p: GfcParams) -> float:
    """|c_1|^2 of the periodic expansion.

    Stepwise: (2 mu pi / F')^2 e^{-2 mu pi / F'} e^{-2 pi / F}, which is the
    high-finesse formula when F -> infinity.  Discontinuous:
    4 mu^2 sin^2(pi / F') e^{-2 mu pi / F'}.
    """
    u = math.pi / p.F_prime
    if p.variant == "discontinuous":
        return 4 * p.mu ** 2 * math.sin(u) ** 2 * math.exp(-2 * p.mu * u)
    return (2 * p.mu * u) ** 2 * math.exp(-2 * p.mu * u) * math.exp(-2 * p.gamma * p.T0)


def _eta_formula(variant: str, F_prime, mu):
    u = np.pi / np.asarray(F_prime, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if variant == "discontinuous":
        return 4 * mu ** 2 * np.sin(u) ** 2 * np.exp(-2 * mu * u)
    return (2 * mu * u) ** 2 * np.exp(-2 * mu * u)


def efficiency_contour(variant: str, F_prime_values, mu_values) -> dict:
    """High-finesse first-echo efficiency on an (F', mu) grid and its ridge.

    The ridge is the best mu for every F' row; for both variants it lies on
    F' = pi mu.
    """
    Fp = np.asarray(F_prime_values, dtype=float)
    mu = np.asarray(mu_values, dtype=float)
    eta = _eta_formula(variant, Fp[:, None], mu[None, :])
    best = np.argmax(eta, axis=1)
    return {"F_prime": Fp, "mu": mu, "eta": eta, "ridge_mu": mu[best],
            "ridge_eta": eta[np.arange(Fp.size), best]}


def optimization_report(p: GfcParams, delta_t: float | None = None,
                        tol: float = 0.05, finesse_min: float = 100.0) -> dict:
    """First-echo efficiency and which optimisation conditions hold.

    ``high_finesse``: F >= finesse_min.  ``resolvable``: delta_t < T0 < M delta_t
    (None when no pulse duration is given).  ``matched``: |pi mu / F' - 1| <= tol.
    ``large_mu`` (discontinuous only): mu >= 2.
    """
    eta1 = first_echo_efficiency(p)
    report = {
        "eta1": eta1,
        "eta1_matched": float(_eta_formula(p.variant, math.pi * p.mu, p.mu)),
        "high_finesse": bool(p.F >= finesse_min),
        "resolvable": None if delta_t is None else bool(delta_t < p.T0 < p.M * delta_t),
        "matched": bool(abs(math.pi * p.mu / p.F_prime - 1) <= tol),
        "large_mu": bool(p.mu >= 2) if p.variant == "discontinuous" else None,
        "eta_bound": 4 * math.exp(-2),
    }
    report["optimal"] = bool(report["high_finesse"] and report["matched"]
                             and report["resolvable"] is not False
                             and report["large_mu"] is not False)
    return report
