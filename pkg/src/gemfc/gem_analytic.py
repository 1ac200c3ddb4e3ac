"""Exact gradient echo memory solutions.

All expressions are written in the derivation frame z in [0, L], with the
detuning at position z equal to beta*(z - L/2) + omega_m.  Fields are photon
amplitudes a(z, t); the coherence reported on grids is the collective
coherence S(z, t) with atomic density normalised to one, so |g|^2 = gN2.

Storage runs over t in [-T, 0] starting from S = 0.  At t = 0 the gradient and
frequency shift switch to their primed values and retrieval runs over
[0, T] with zero input at the entrance face.
"""
from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import signal

from . import specfun
from .signals import CoherenceGrid, FieldGrid, Waveform
from .specfun import DEFAULT_CONTROL, EvalControl

__all__ = [
    "GemParams",
    "RetrievalParams",
    "storage_response",
    "coherence_response",
    "storage_evolve",
    "retrieval_kernel",
    "retrieval_echo",
    "retrieval_general",
    "closed_form_delta_input",
    "closed_form_expdecay",
]


@dataclass(frozen=True)
class GemParams:
    gamma: float
    gN2: float
    beta: float
    L: float = 1.0
    T: float = 1.0
    omega_m: float = 0.0
    g_phase: float = 0.0

    def __post_init__(self):
        if not self.L > 0 or not self.T > 0:
            raise ValueError("L and T must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if self.gN2 < 0:
            raise ValueError("gN2 must be non-negative")

    @property
    def mu(self) -> float:
        if self.beta == 0:
            raise ZeroDivisionError("mu is undefined for beta = 0")
        return self.gN2 / self.beta

    @property
    def zeta(self) -> float:
        if self.gamma <= 0:
            return math.inf
        return 2.0 * self.gN2 * self.L / self.gamma

    @property
    def g(self) -> complex:
        return math.sqrt(self.gN2) * cmath.exp(1j * self.g_phase)

    @classmethod
    def from_groups(cls, mu: float, beta_L_T: float, gamma_T: float = 0.0,
                    omega_m_T: float = 0.0, g_phase: float = 0.0) -> "GemParams":
        """Normalised parameters (T = L = 1) from the dimensionless groups."""
        beta = beta_L_T
        return cls(gamma=gamma_T, gN2=mu * beta, beta=beta, omega_m=omega_m_T,
                   g_phase=g_phase)

    def detuning(self, z) -> np.ndarray:
        return self.beta * (np.asarray(z, dtype=float) - 0.5 * self.L) + self.omega_m


@dataclass(frozen=True)
class RetrievalParams:
    beta_prime: float
    gN2_prime: float
    omega_m_prime: float = 0.0

    @property
    def mu_prime(self) -> float:
        if self.beta_prime == 0:
            raise ZeroDivisionError("mu_prime is undefined for beta_prime = 0")
        return self.gN2_prime / self.beta_prime

    @classmethod
    def reversed(cls, p: GemParams, omega_m_prime: float | None = None) -> "RetrievalParams":
        """Usual GEM read-out: beta' = -beta with unchanged coupling."""
        return cls(-p.beta, p.gN2, p.omega_m if omega_m_prime is None else omega_m_prime)

    @classmethod
    def identity(cls, p: GemParams) -> "RetrievalParams":
        return cls(p.beta, p.gN2, p.omega_m)

    def detuning(self, p: GemParams, z) -> np.ndarray:
        return self.beta_prime * (np.asarray(z, dtype=float) - 0.5 * p.L) + self.omega_m_prime


def is_symmetric(p: GemParams, r: RetrievalParams, rtol: float = 1e-12) -> bool:
    return (abs(r.beta_prime + p.beta) <= rtol * abs(p.beta)
            and abs(r.gN2_prime - p.gN2) <= rtol * max(p.gN2, 1e-300))


# ---------------------------------------------------------------------------
# Storage
# ---------------------------------------------------------------------------

def storage_response(z, t, p: GemParams, gradient: bool = True,
                     ctl: EvalControl = DEFAULT_CONTROL):
    """Continuous part of the storage response f_s(z, t) (the delta(t) is omitted).

    Gradient medium: -mu*beta*z exp(-i(beta L/2 - omega_m) t - gamma t)
    1F1(i mu + 1; 2; i beta z t).  Flat medium (``gradient=False``):
    -gN2 z exp(i omega_m t - gamma t) J1~(gN2 z t).  Zero for t < 0.
    """
    z, t = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(t, dtype=float))
    out = np.zeros(z.shape, dtype=complex)
    live = t >= 0
    zl, tl = z[live], t[live]
    if gradient:
        if p.beta == 0:
            raise ValueError("gradient response needs beta != 0")
        phase = np.exp(-(1j * (0.5 * p.beta * p.L - p.omega_m) + p.gamma) * tl)
        f = specfun.kummer_1f1(1j * p.mu + 1, 2.0, 1j * p.beta * zl * tl, ctl)
        out[live] = -p.gN2 * zl * phase * f
    else:
        phase = np.exp((1j * p.omega_m - p.gamma) * tl)
        out[live] = -p.gN2 * zl * phase * specfun.j1_tilde(p.gN2 * zl * tl)
    return out if out.ndim else complex(out)


def coherence_response(z, t, p: GemParams, gradient: bool = True,
                       ctl: EvalControl = DEFAULT_CONTROL):
    """Coherence response h_s(z, t) of the phase-factored coherence s.

    Gradient: -g exp(-i beta L t/2 - gamma t) 1F1(i mu + 1; 1; i beta z t);
    flat: -g exp(-gamma t) J0(2 sqrt(gN2 z t)).  Zero for t < 0.
    """
    z, t = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(t, dtype=float))
    out = np.zeros(z.shape, dtype=complex)
    live = t >= 0
    zl, tl = z[live], t[live]
    if gradient:
        if p.beta == 0:
            raise ValueError("gradient response needs beta != 0")
        phase = np.exp(-(0.5j * p.beta * p.L + p.gamma) * tl)
        out[live] = -p.g * phase * specfun.kummer_1f1(1j * p.mu + 1, 1.0, 1j * p.beta * zl * tl, ctl)
    else:
        out[live] = -p.g * np.exp(-p.gamma * tl) * specfun.bessel_j(0, 2 * np.sqrt(p.gN2 * zl * tl))
    return out if out.ndim else complex(out)


def _causal_trapezoid(samples: np.ndarray, kernel: np.ndarray, dt: float) -> np.ndarray:
    """out[..., n] = trapezoid over k = 0..n of samples[n-k] * kernel[..., k]."""
    n = samples.shape[-1]
    full = signal.fftconvolve(np.broadcast_to(samples, kernel.shape), kernel, axes=-1)[..., :n]
    ends = 0.5 * (samples[0] * kernel + kernel[..., :1] * samples)
    return dt * (full - ends)


def _storage_input(a_in: Waveform, p: GemParams) -> Waveform:
    win = a_in.window(-p.T, 0.0)
    if len(win) < 2:
        raise ValueError("input waveform has fewer than two samples in [-T, 0]")
    return win


def storage_evolve(a_in: Waveform, p: GemParams, z_nodes, t_nodes=None, gradient: bool = True,
                   ctl: EvalControl = DEFAULT_CONTROL) -> tuple[FieldGrid, CoherenceGrid]:
    """Field a_s(z, t) and coherence S_s(z, t) during storage.

    The convolution with the storage responses runs on the input sampling
    grid restricted to [-T, 0]; the delta part of f_s passes the input
    through unchanged.  ``t_nodes`` (optional) resamples the result linearly.
    """
    win = _storage_input(a_in, p)
    z = np.atleast_1d(np.asarray(z_nodes, dtype=float))
    if np.any(z < 0) or np.any(z > p.L * (1 + 1e-12)):
        raise ValueError("z_nodes must lie in [0, L]")
    if gradient and abs(p.beta) * p.L * win.dt > 0.5:
        warnings.warn("time step does not resolve the storage bandwidth beta*L", RuntimeWarning,
                      stacklevel=2)
    u = win.dt * np.arange(len(win))
    zz, uu = np.meshgrid(z, u, indexing="ij")
    f = storage_response(zz, uu, p, gradient, ctl)
    h = coherence_response(zz, uu, p, gradient, ctl)
    a = win.samples
    field_vals = a[None, :] + _causal_trapezoid(a, f, win.dt)
    # S(z,t) = int a(tau) exp(i omega_m (t - tau)) h_s(z, t - tau) dtau
    hS = h * np.exp(1j * p.omega_m * uu)
    coh_vals = _causal_trapezoid(a, hS, win.dt)
    t = win.times
    if t_nodes is not None:
        tn = np.asarray(t_nodes, dtype=float)
        if np.any(tn < win.t0 - 1e-9 * win.dt) or np.any(tn > win.t_end + 1e-9 * win.dt):
            raise ValueError("t_nodes must lie within the storage window")
        field_vals = _resample(t, field_vals, tn)
        coh_vals = _resample(t, coh_vals, tn)
        t = tn
    return FieldGrid(z, t, field_vals, p.L), CoherenceGrid(z, t, coh_vals, p.L)


def _resample(t, values, tn):
    out = np.empty((values.shape[0], tn.size), dtype=complex)
    for i, row in enumerate(values):
        out[i] = np.interp(tn, t, row.real) + 1j * np.interp(tn, t, row.imag)
    return out


# ---------------------------------------------------------------------------
# Retrieval
# ---------------------------------------------------------------------------

def _separable_phi2(alpha, alpha_p, nu, cx_t, cx_tau, cy, t, tau, ctl):
    """Pieces of Phi2(alpha, alpha'; nu; cx_t*t + cx_tau*tau, cy*t) for separable use.

    Returns (const[t], weights[t, q] * exp(cx_t t xi_q), exp(cx_tau tau xi_q)[q, tau])
    so that Phi2 = const[:, None] + left @ right.
    """
    t = np.asarray(t, dtype=float)
    tau = np.asarray(tau, dtype=float)
    x_max = float(np.max(np.abs(cx_t * t[:, None] + cx_tau * tau[None, :]))) if t.size and tau.size else 0.0
    exp_ = specfun.phi2_expansion(alpha, alpha_p, nu, cy * t, x_max, ctl)
    if exp_.swapped:
        raise specfun.ConvergenceError("separable Phi2 needs the unswapped orientation")
    left = exp_.weights * np.exp(cx_t * np.outer(t, exp_.nodes))
    right = np.exp(cx_tau * np.outer(exp_.nodes, tau))
    return exp_.const, left, right


def _field_pieces(z: float, p: GemParams, r: RetrievalParams):
    """Phi2 parameters and linear coefficients for the retrieval field at z."""
    mu, mup = p.mu, r.mu_prime
    alpha, alpha_p, nu = 1j * mu + 1, 1j * mup - 1j * mu, 2.0
    cx_t, cx_tau, cy = 1j * r.beta_prime * z, -1j * p.beta * z, 1j * r.beta_prime * z
    return alpha, alpha_p, nu, cx_t, cx_tau, cy


def _field_phases(z, t, tau, p: GemParams, r: RetrievalParams):
    """t- and tau-dependent scalar factors of the retrieval field integrand."""
    L = p.L
    pt = -r.gN2_prime * z * np.exp((-0.5j * r.beta_prime * L + 1j * r.omega_m_prime - p.gamma) * t)
    ptau = np.exp((0.5j * p.beta * L - 1j * p.omega_m + p.gamma) * tau)
    return pt, ptau


def _trap_weights(n: int, dt: float) -> np.ndarray:
    w = np.full(n, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def retrieval_kernel(t, tau, p: GemParams, r: RetrievalParams | None = None,
                     ctl: EvalControl = DEFAULT_CONTROL):
    """Echo kernel K(t, tau) with a_out(t) = int a_in(tau) K(t, tau) dtau.

    For the usual reversal (beta' = -beta, unchanged coupling) this is
    -mu beta L exp(i beta L (t + tau)/2) exp(i(omega_m' t - omega_m tau))
    exp(-gamma (t - tau)) Phi2(i mu + 1, -2 i mu; 2; -i beta L (t + tau), -i beta L t).
    Other retrieval parameters give the general exit-face kernel.  Scalar
    arguments give a scalar; 1-D arrays give a (len(t), len(tau)) matrix.
    Entries with t < 0 or tau > 0 vanish (causality).
    """
    r = RetrievalParams.reversed(p) if r is None else r
    scalar = np.ndim(t) == 0 and np.ndim(tau) == 0
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    ta = np.atleast_1d(np.asarray(tau, dtype=float))
    live_t, live_tau = tt >= 0, ta <= 0
    K = np.zeros((tt.size, ta.size), dtype=complex)
    if np.any(live_t) and np.any(live_tau):
        tl, tal = tt[live_t], ta[live_tau]
        alpha, alpha_p, nu, cx_t, cx_tau, cy = _field_pieces(p.L, p, r)
        const, left, right = _separable_phi2(alpha, alpha_p, nu, cx_t, cx_tau, cy, tl, tal, ctl)
        phi = const[:, None] + left @ right
        pt, ptau = _field_phases(p.L, tl, tal, p, r)
        K[np.ix_(live_t, live_tau)] = pt[:, None] * ptau[None, :] * phi
    return complex(K[0, 0]) if scalar else K


def retrieval_echo(a_in: Waveform, p: GemParams, r: RetrievalParams | None = None, t_nodes=None,
                   ctl: EvalControl = DEFAULT_CONTROL, route: str = "kernel",
                   n_terms: int = 60) -> Waveform:
    """Exit-face echo a_out(t) = int_{-T}^0 a_in(tau) K(t, tau) dtau for t in [0, T].

    ``t_nodes`` defaults to the input sampling step continued over [0, T].
    ``route="kernel"`` integrates the Phi2 kernel (trapezoid on the input
    grid, with the tau sum done before the Phi2 quadrature sum).
    ``route="series"`` uses the 2F1 expansion of the kernel in powers of
    -i beta L t; it is only reliable for small |beta L t| and serves as a
    cross-check.
    """
    r = RetrievalParams.reversed(p) if r is None else r
    win = _storage_input(a_in, p)
    if t_nodes is None:
        n = int(round(p.T / win.dt)) + 1
        t_nodes = np.linspace(0.0, (n - 1) * win.dt, n)
    t = np.asarray(t_nodes, dtype=float)
    if np.any(t < 0):
        raise ValueError("echo times must be non-negative")
    if len(t) < 2:
        raise ValueError("need at least two echo time nodes")
    dt_out = float(t[1] - t[0])
    tau = win.times
    w = _trap_weights(len(tau), win.dt)
    pt, ptau = _field_phases(p.L, t, tau, p, r)
    src = win.samples * ptau * w
    if route == "kernel":
        alpha, alpha_p, nu, cx_t, cx_tau, cy = _field_pieces(p.L, p, r)
        const, left, right = _separable_phi2(alpha, alpha_p, nu, cx_t, cx_tau, cy, t, tau, ctl)
        vals = pt * (const * src.sum() + left @ (right @ src))
    elif route == "series":
        if not is_symmetric(p, r):
            raise ValueError("the series route is implemented for the usual reversal only")
        vals = pt * _series_phi2_integral(t, tau, src, p, n_terms)
    else:
        raise ValueError(f"unknown route {route!r}")
    return Waveform(float(t[0]), dt_out, vals)


def _series_phi2_integral(t, tau, src, p: GemParams, n_terms: int) -> np.ndarray:
    """sum_n (-2i mu)_n/(n+1)! (-i beta L t)^n/n! int src(tau) 2F1(-n, i mu+1; 2i mu+1-n; 1+tau/t)."""
    mu = p.mu
    out = np.zeros(t.shape, dtype=complex)
    for j, tj in enumerate(t):
        if tj == 0:
            # Phi2 at y = 0 reduces to 1F1(i mu + 1; 2; -i beta L tau)
            out[j] = np.sum(src * specfun.kummer_1f1(1j * mu + 1, 2.0, -1j * p.beta * p.L * tau))
            continue
        ratio = 1.0 + tau / tj
        # terminating 2F1 for every tau, built by the forward term recurrence
        coef = 1 + 0j
        total = 0j
        for n in range(n_terms):
            if n > 0:
                coef *= (-2j * mu + n - 1) / ((n + 1) * n) * (-1j * p.beta * p.L * tj)
            f = _gauss_2f1_vec(n, 1j * mu + 1, 2j * mu + 1 - n, ratio)
            total += coef * np.sum(src * f)
        out[j] = total
    return out


def _gauss_2f1_vec(n: int, b: complex, c: complex, z: np.ndarray) -> np.ndarray:
    term = np.ones(z.shape, dtype=complex)
    acc = term.copy()
    for k in range(n):
        term = term * (-n + k) * (b + k) / ((c + k) * (k + 1)) * z
        acc += term
    return acc


def retrieval_general(a_in: Waveform, p: GemParams, r: RetrievalParams, z_nodes, t_nodes,
                      ctl: EvalControl = DEFAULT_CONTROL) -> tuple[FieldGrid, CoherenceGrid]:
    """Retrieval field a_r(z, t) and coherence S_r(z, t) for arbitrary primed parameters.

    The read-out coupling enters as gN2' (the coupling constant itself is
    assumed unchanged, so g g'^* N' = gN2').  The coherence is continuous
    across t = 0 and the entrance face carries no field.
    """
    win = _storage_input(a_in, p)
    z = np.atleast_1d(np.asarray(z_nodes, dtype=float))
    t = np.atleast_1d(np.asarray(t_nodes, dtype=float))
    if np.any(t < 0):
        raise ValueError("retrieval times must be non-negative")
    tau = win.times
    w = _trap_weights(len(tau), win.dt)
    mu, mup = p.mu, r.mu_prime
    fvals = np.zeros((z.size, t.size), dtype=complex)
    svals = np.zeros((z.size, t.size), dtype=complex)
    # coherence integrand phases: a(tau) exp(i(beta L/2 - omega_m) tau + gamma tau)
    src_s = win.samples * np.exp((1j * (0.5 * p.beta * p.L - p.omega_m) + p.gamma) * tau) * w
    for i, zi in enumerate(z):
        if zi > 0:
            pt, ptau = _field_phases(zi, t, tau, p, r)
            alpha, alpha_p, nu, cx_t, cx_tau, cy = _field_pieces(zi, p, r)
            const, left, right = _separable_phi2(alpha, alpha_p, nu, cx_t, cx_tau, cy, t, tau, ctl)
            src = win.samples * ptau * w
            fvals[i] = pt * (const * src.sum() + left @ (right @ src))
            const, left, right = _separable_phi2(1j * mu + 1, -1j * mup, 1.0, 0.0, -1j * p.beta * zi,
                                                 -1j * r.beta_prime * zi, t, tau, ctl)
            phi_int = const * src_s.sum() + left @ (right @ src_s)
        else:
            # Phi2 at x = y = 0 is one
            phi_int = np.full(t.shape, src_s.sum())
        s_r = -p.g * np.exp(-p.gamma * t) * phi_int
        phase = np.exp(1j * (r.beta_prime * (zi - 0.5 * p.L) + r.omega_m_prime) * t)
        svals[i] = s_r * phase
    return FieldGrid(z, t, fvals, p.L), CoherenceGrid(z, t, svals, p.L)


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClosedForms:
    """Three closed-form pieces: storage output, coherence s(z, 0), echo."""

    storage_output: Callable[[np.ndarray], np.ndarray]
    coherence: Callable[[np.ndarray], np.ndarray]
    echo: Callable[[np.ndarray], np.ndarray]


def _phi2_pointwise(alpha, alpha_p, nu, x, y, ctl):
    """Phi2 at paired (x, y) arrays whose y values share one ray."""
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    if x.size == 0:
        return np.zeros(x.shape, dtype=complex)
    return specfun.phi2_on_grid(alpha, alpha_p, nu, x.reshape(-1, 1), y.reshape(-1), ctl).reshape(x.shape)


def closed_form_delta_input(t_in: float, p: GemParams, r: RetrievalParams | None = None,
                            ctl: EvalControl = DEFAULT_CONTROL) -> ClosedForms:
    """Closed forms for a_in = delta(t - t_in).

    storage_output(t): continuous part of the exit field for t in [-T, 0]
    (the transmitted delta itself is omitted); coherence(z): s_s(z, 0);
    echo(t): exit field for t >= 0 under the usual reversal.
    """
    if not -p.T < t_in < 0:
        raise ValueError("t_in must lie in (-T, 0)")
    r = RetrievalParams.reversed(p) if r is None else r
    if not is_symmetric(p, r):
        raise ValueError("delta-input echo closed form assumes beta' = -beta")
    mu, b, L = p.mu, p.beta, p.L

    def leak(t):
        t = np.asarray(t, dtype=float)
        return storage_response(L, t - t_in, p, True, ctl)

    def coherence(z):
        z = np.asarray(z, dtype=float)
        pref = -p.g * np.exp(1j * (0.5 * b * L - p.omega_m) * t_in + p.gamma * t_in)
        return pref * specfun.kummer_1f1(1j * mu + 1, 1.0, -1j * b * t_in * z, ctl)

    def echo(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape, dtype=complex)
        live = t >= 0
        tl = t[live]
        pref = (-mu * b * L * np.exp(0.5j * b * L * (tl + t_in))
                * np.exp(1j * (r.omega_m_prime * tl - p.omega_m * t_in))
                * np.exp(-p.gamma * (tl - t_in)))
        out[live] = pref * _phi2_pointwise(1j * mu + 1, -2j * mu, 2.0, -1j * b * L * (tl + t_in),
                                           -1j * b * L * tl, ctl)
        return out

    return ClosedForms(leak, coherence, echo)


def closed_form_expdecay(t_in: float, p: GemParams, r: RetrievalParams | None = None,
                         ctl: EvalControl = DEFAULT_CONTROL) -> ClosedForms:
    """Closed forms for a_in(t) = exp(-gamma (t - t_in)) on [-T, 0] with omega_m = beta L/2.

    storage_output(t) = exp(-gamma (t - t_in)) 1F1(i mu; 1; i beta L (t + T));
    coherence(z) = s_s(z, 0) = -g T exp(gamma t_in) 1F1(i mu + 1; 2; i beta T z);
    echo(t) = exp(-gamma (t - t_in)) exp(i(beta L/2 + omega_m') t)
    [Phi2(i mu, -2i mu; 1; -i beta L (t - T), -i beta L t) - 1F1(-i mu; 1; -i beta L t)].
    """
    if not -p.T < t_in < 0:
        raise ValueError("t_in must lie in (-T, 0)")
    if not math.isclose(p.omega_m, 0.5 * p.beta * p.L, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError("closed form requires omega_m = beta L / 2")
    r = RetrievalParams(-p.beta, p.gN2, -0.5 * p.beta * p.L) if r is None else r
    if not is_symmetric(p, r):
        raise ValueError("closed-form echo assumes beta' = -beta")
    mu, b, L, T = p.mu, p.beta, p.L, p.T

    def storage_output(t):
        t = np.asarray(t, dtype=float)
        return np.exp(-p.gamma * (t - t_in)) * specfun.kummer_1f1(1j * mu, 1.0, 1j * b * L * (t + T), ctl)

    def coherence(z):
        z = np.asarray(z, dtype=float)
        return -p.g * T * math.exp(p.gamma * t_in) * specfun.kummer_1f1(1j * mu + 1, 2.0, 1j * b * T * z, ctl)

    def echo(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape, dtype=complex)
        live = t >= 0
        tl = t[live]
        pref = np.exp(-p.gamma * (tl - t_in)) * np.exp(1j * (0.5 * b * L + r.omega_m_prime) * tl)
        phi = _phi2_pointwise(1j * mu, -2j * mu, 1.0, -1j * b * L * (tl - T), -1j * b * L * tl, ctl)
        out[live] = pref * (phi - specfun.kummer_1f1(-1j * mu, 1.0, -1j * b * L * tl, ctl))
        return out

    return ClosedForms(storage_output, coherence, echo)
