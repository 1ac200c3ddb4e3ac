"""Complex-parameter special functions used by the GEM/GFC closed forms.

Everything here works in double precision.  Kummer's function is evaluated by
its Maclaurin series while the series is well conditioned and by Taylor-series
continuation of Kummer's ODE along a ray otherwise.  Humbert's Phi2 has three
routes (double series, Gauss 2F1 expansion and a one-dimensional integral)
and the numerical inverse Laplace transform uses a Talbot contour.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple

import numpy as np
from scipy import special

EPS = np.finfo(float).eps
# phase (radians) a 16-node Gauss-Legendre panel integrates to ~1e-15
PANEL_PHASE = 5.0


class SpecfunError(ArithmeticError):
    """Base class for special-function failures."""


class PoleError(SpecfunError, ValueError):
    """Argument sits on a pole (non-positive integer Gamma/Pochhammer argument)."""


class ConvergenceError(SpecfunError):
    """Tolerance not reached within the term or quadrature budget."""


class RouteDisagreementError(SpecfunError):
    """Independent Phi2 routes disagree beyond the validation threshold."""


class ContourError(SpecfunError):
    """The inverse Laplace contour quadrature failed its decay diagnostics."""


@dataclass(frozen=True)
class EvalControl:
    rel_tol: float = 1e-10
    max_terms: int = 500
    quad_points: int = 16

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.max_terms < 16:
            raise ValueError("max_terms must be >= 16")
        if self.quad_points < 8:
            raise ValueError("quad_points must be >= 8")


DEFAULT_CONTROL = EvalControl()


def _is_nonpositive_int(z: complex) -> bool:
    z = complex(z)
    return z.imag == 0 and z.real <= 0 and z.real == math.floor(z.real)


# ---------------------------------------------------------------------------
# Gamma and Pochhammer
# ---------------------------------------------------------------------------

def log_gamma(z: complex) -> complex:
    """Principal branch of log Gamma(z)."""
    if _is_nonpositive_int(z):
        raise PoleError(f"Gamma has a pole at {z}")
    return complex(special.loggamma(complex(z)))


def log_pochhammer(a: complex, n: int) -> complex:
    """log (a)_n with phase tracking; -inf real part when the symbol vanishes."""
    a = complex(a)
    if n == 0:
        return 0j
    if _is_nonpositive_int(a):
        if n > -a.real:
            return complex(-np.inf, 0.0)
        # finite product of negative reals
        prod_sign = (-1) ** n
        mag = sum(math.log(abs(a.real + k)) for k in range(n))
        return complex(mag, 0.0 if prod_sign > 0 else math.pi)
    if _is_nonpositive_int(a + n):
        raise PoleError("Pochhammer argument crosses a pole")
    return complex(special.loggamma(a + n) - special.loggamma(a))


def _rgamma(z: complex) -> complex:
    return complex(special.rgamma(complex(z)))


# ---------------------------------------------------------------------------
# Kummer 1F1
# ---------------------------------------------------------------------------

def _kummer_series(a: complex, b: complex, z, max_terms: int):
    """Vectorised Maclaurin series with Neumaier summation.

    Returns (value, condition) where condition = max|term| / |value| estimates
    the cancellation the sum suffered.
    """
    z = np.asarray(z, dtype=complex)
    total = np.ones_like(z)
    comp = np.zeros_like(z)
    term = np.ones_like(z)
    biggest = np.ones(z.shape)
    converged = np.zeros(z.shape, dtype=bool)
    for n in range(max_terms):
        term = term * ((a + n) / (b + n)) * z / (n + 1)
        t = total + term
        big = np.abs(total) >= np.abs(term)
        comp = comp + np.where(big, (total - t) + term, (term - t) + total)
        total = t
        mag = np.abs(term)
        biggest = np.maximum(biggest, mag)
        converged = mag <= EPS * np.abs(total + comp) * 0.5
        if np.all(converged | (mag == 0)):
            break
    else:
        if not np.all(converged):
            raise ConvergenceError("1F1 Maclaurin series did not converge")
    value = total + comp
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(value != 0, biggest / np.abs(value), np.inf)
    return value, cond


def _anchor_radius(a: complex, b: complex) -> float:
    return min(1.0, 2.0 / (1.0 + abs(a) + abs(b - 1)))


def _taylor_coefficients(a, b, zc, f, fp, order):
    c = np.empty(order + 1, dtype=complex)
    c[0], c[1] = f, fp
    for k in range(order - 1):
        c[k + 2] = ((k + a) * c[k] - (k + 1) * (k + b - zc) * c[k + 1]) / (zc * (k + 1) * (k + 2))
    return c


class KummerRay:
    """1F1(a; b; d*r) for many radii r >= 0 on the ray with unit direction d.

    Small radii use the Maclaurin series; larger ones are reached by
    Taylor-series continuation of z f'' + (b - z) f' - a f = 0 from an anchor
    point, each step staying well inside the disc of convergence (the only
    finite singular point is z = 0) and short enough that the local Taylor
    sum does not cancel.
    """

    ORDER = 48

    def __init__(self, a: complex, b: complex, direction: complex, r_max: float,
                 ctl: EvalControl = DEFAULT_CONTROL):
        if _is_nonpositive_int(b):
            raise PoleError("1F1 lower parameter is a non-positive integer")
        self.a, self.b = complex(a), complex(b)
        d = complex(direction)
        self.direction = d / abs(d) if d != 0 else 1.0 + 0j
        self.r_max = float(r_max)
        self.ctl = ctl
        self.r0 = _anchor_radius(self.a, self.b)
        self._build()

    def _build(self):
        a, b, d = self.a, self.b, self.direction
        knots = [self.r0]
        z0 = d * self.r0
        f, _ = _kummer_series(a, b, z0, self.ctl.max_terms)
        fp, _ = _kummer_series(a + 1, b + 1, z0, self.ctl.max_terms)
        fp = fp * a / b
        coeffs = []
        r = self.r0
        order = self.ORDER
        powers = np.arange(order + 1)
        while r < self.r_max:
            # local wavenumber of 1F1 grows like sqrt(|a|/r) near the origin
            h = min(0.5 * r, 1.0 / (1.0 + math.sqrt(abs(a) / r) + abs(b - 1) / r))
            c = _taylor_coefficients(a, b, d * r, complex(f), complex(fp), order)
            coeffs.append(c)
            hs = d * h
            hp = hs ** powers
            f = np.dot(c, hp)
            fp = np.dot(c[1:] * powers[1:], hp[:-1])
            r = r + h
            knots.append(r)
        self.knots = np.array(knots)
        self.coeffs = np.array(coeffs) if coeffs else np.zeros((0, order + 1), complex)

    def __call__(self, radii) -> np.ndarray:
        radii = np.asarray(radii, dtype=float)
        flat = radii.ravel()
        out = np.empty(flat.shape, dtype=complex)
        if np.any(flat < 0) or np.any(flat > self.r_max * (1 + 1e-12) + 1e-300):
            raise ValueError("radius outside the prepared ray")
        small = flat <= self.r0
        if np.any(small):
            out[small], _ = _kummer_series(self.a, self.b, self.direction * flat[small],
                                           self.ctl.max_terms)
        big = ~small
        if np.any(big):
            rb = flat[big]
            seg = np.clip(np.searchsorted(self.knots, rb, side="right") - 1, 0,
                          len(self.coeffs) - 1)
            h = self.direction * (rb - self.knots[seg])
            c = self.coeffs[seg]
            val = c[:, -1].copy()
            for k in range(c.shape[1] - 2, -1, -1):
                val = val * h + c[:, k]
            out[big] = val
        return out.reshape(radii.shape)


@lru_cache(maxsize=256)
def _cached_ray(a, b, direction, r_max, ctl):
    return KummerRay(a, b, direction, r_max, ctl)


def kummer_ray(a: complex, b: complex, direction: complex, r_max: float,
               ctl: EvalControl = DEFAULT_CONTROL) -> KummerRay:
    """Cached :class:`KummerRay`; r_max is rounded up to limit cache churn."""
    d = complex(direction)
    if d != 0:
        d = d / abs(d)
    # round r_max up to 3 significant digits
    if r_max > 0:
        e = math.floor(math.log10(r_max)) - 2
        r_max = math.ceil(r_max / 10.0 ** e) * 10.0 ** e
    return _cached_ray(complex(a), complex(b), complex(round(d.real, 15), round(d.imag, 15)),
                       float(r_max), ctl)


def kummer_1f1(a: complex, b: complex, z, ctl: EvalControl = DEFAULT_CONTROL):
    """Kummer's confluent hypergeometric function 1F1(a; b; z).

    Accepts scalar or array ``z``.  The Maclaurin series is used wherever its
    cancellation estimate keeps the result within ``ctl.rel_tol``; the
    remaining points are continued along their ray from the origin.
    """
    if _is_nonpositive_int(b):
        raise PoleError(f"1F1 lower parameter b={b} is a non-positive integer")
    a, b = complex(a), complex(b)
    zarr = np.asarray(z, dtype=complex)
    scalar = zarr.ndim == 0
    zf = zarr.ravel()
    out = np.empty(zf.shape, dtype=complex)
    # cheap bound on cancellation before trying the series
    mag = np.abs(zf)
    try_series = mag <= 4.0 * _anchor_radius(a, b) * 10
    if np.any(try_series):
        val, cond = _kummer_series(a, b, zf[try_series], ctl.max_terms)
        ok = cond * EPS * 10 <= ctl.rel_tol
        idx = np.flatnonzero(try_series)
        out[idx[ok]] = val[ok]
        try_series[idx[~ok]] = False
    rest = np.flatnonzero(~try_series)
    if rest.size:
        # group by direction so each ray is prepared once
        dirs = np.where(mag[rest] > 0, zf[rest] / np.where(mag[rest] > 0, mag[rest], 1), 1)
        keys = np.round(np.angle(dirs), 12)
        for key in np.unique(keys):
            sel = rest[keys == key]
            d = complex(np.exp(1j * key))
            ray = kummer_ray(a, b, d, float(mag[sel].max()), ctl)
            out[sel] = ray(mag[sel])
    return complex(out[0]) if scalar else out.reshape(zarr.shape)


# ---------------------------------------------------------------------------
# Bessel
# ---------------------------------------------------------------------------

def bessel_j(order: int, x):
    """J0 or J1 of real argument."""
    if order == 0:
        return special.j0(x)
    if order == 1:
        return special.j1(x)
    raise ValueError("only orders 0 and 1 are provided")


def j1_tilde(x):
    """J1(2*sqrt(x))/sqrt(x), continuous at 0 with value 1."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("j1_tilde needs x >= 0")
    out = np.empty_like(x)
    small = x < 1e-3
    xs = x[small]
    # ascending series sum (-x)^n / (n! (n+1)!)
    out[small] = 1 - xs / 2 + xs ** 2 / 12 - xs ** 3 / 144
    xb = x[~small]
    rt = np.sqrt(xb)
    out[~small] = special.j1(2 * rt) / rt
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Gauss 2F1, terminating
# ---------------------------------------------------------------------------

def gauss_2f1_terminating(n: int, b: complex, c: complex, z: complex) -> complex:
    """2F1(-n, b; c; z) as the exact finite sum (compensated)."""
    if n < 0 or int(n) != n:
        raise ValueError("n must be a non-negative integer")
    n = int(n)
    c = complex(c)
    for k in range(n):
        if c + k == 0:
            raise PoleError("2F1 denominator Pochhammer vanishes before termination")
    term = 1 + 0j
    re, im = [1.0], [0.0]
    for k in range(n):
        term = term * (-n + k) * (b + k) / ((c + k) * (k + 1)) * z
        re.append(term.real)
        im.append(term.imag)
    return complex(math.fsum(re), math.fsum(im))


# ---------------------------------------------------------------------------
# Humbert Phi2
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Phi2Args:
    alpha: complex
    alpha_prime: complex
    nu: complex
    x: complex
    y: complex

    def __post_init__(self):
        if _is_nonpositive_int(self.nu):
            raise PoleError("Phi2 needs nu not a non-positive integer")


class Phi2Value(NamedTuple):
    value: complex
    route: str


def _log_abs(z: complex) -> float:
    return math.log(abs(z)) if z != 0 else -math.inf


def _phi2_series(p: Phi2Args, ctl: EvalControl) -> tuple[complex, float]:
    """Double series grouped by total degree; coefficients built in log space."""
    x, y = complex(p.x), complex(p.y)
    if x == 0 and y == 0:
        return 1 + 0j, 1.0
    nmax = ctl.max_terms
    lx, ly = _log_abs(x), _log_abs(y)
    ax, ay = (np.angle(x) if x else 0.0), (np.angle(y) if y else 0.0)
    # log[(alpha)_m x^m / m!] and log[(alpha')_n y^n / n!]
    def row(a, lz, az):
        out = np.full(nmax + 1, complex(-np.inf, 0.0))
        out[0] = 0j
        acc = 0j
        for m in range(1, nmax + 1):
            step = complex(a) + m - 1
            if step == 0 or lz == -math.inf:
                break
            acc += complex(math.log(abs(step)), np.angle(step)) + complex(lz, az) - math.log(m)
            out[m] = acc
        return out
    lu = row(p.alpha, lx, ax)
    lv = row(p.alpha_prime, ly, ay)
    total = 0j
    re_parts, im_parts = [], []
    biggest = 0.0
    lnu = 0j
    small_run = 0
    for N in range(nmax + 1):
        if N > 0:
            step = complex(p.nu) + N - 1
            lnu += complex(math.log(abs(step)), np.angle(step))
        logs = lu[: N + 1] + lv[N::-1] - lnu
        finite = np.isfinite(logs.real)
        if np.any(finite):
            terms = np.exp(logs[finite])
            s = complex(np.sum(terms))
            biggest = max(biggest, float(np.max(np.abs(terms))))
        else:
            s = 0j
        re_parts.append(s.real)
        im_parts.append(s.imag)
        total = complex(math.fsum(re_parts), math.fsum(im_parts))
        if abs(s) <= EPS * abs(total) * 0.1:
            small_run += 1
            if small_run >= 3:
                break
        else:
            small_run = 0
    else:
        raise ConvergenceError("Phi2 double series did not converge")
    cond = biggest / abs(total) if total != 0 else math.inf
    return total, cond


def _phi2_gauss(p: Phi2Args, ctl: EvalControl) -> tuple[complex, float]:
    """Sum over m of (alpha)_m/(nu)_m 2F1(-m, alpha'; 1-alpha-m; y/x) x^m/m!."""
    x, y = complex(p.x), complex(p.y)
    if x == 0:
        raise ConvergenceError("2F1 expansion needs x != 0")
    ratio = y / x
    alpha, ap, nu = complex(p.alpha), complex(p.alpha_prime), complex(p.nu)
    pref = 1 + 0j
    re_parts, im_parts = [], []
    biggest = 0.0
    small_run = 0
    for m in range(ctl.max_terms + 1):
        if m > 0:
            pref = pref * (alpha + m - 1) / (nu + m - 1) * x / m
        term = pref * gauss_2f1_terminating(m, ap, 1 - alpha - m, ratio)
        re_parts.append(term.real)
        im_parts.append(term.imag)
        total = complex(math.fsum(re_parts), math.fsum(im_parts))
        biggest = max(biggest, abs(term))
        if abs(term) <= EPS * abs(total) * 0.1:
            small_run += 1
            if small_run >= 3:
                break
        else:
            small_run = 0
    else:
        raise ConvergenceError("Phi2 2F1 expansion did not converge")
    cond = biggest / abs(total) if total != 0 else math.inf
    return total, cond


def _gl_nodes(n: int):
    return np.polynomial.legendre.leggauss(n)


def _panel_nodes(s0: float, rate: Callable[[float], float], decay: float, n: int):
    """Composite Gauss-Legendre nodes on [s0, s_end) with width ~2 rad of phase."""
    xg, wg = _gl_nodes(n)
    s_end = s0 + 40.0 / decay
    nodes, weights = [], []
    s = s0
    panels = 0
    while s < s_end:
        w = min(2.0, PANEL_PHASE / max(rate(s), 1e-3))
        a, b = s, min(s + w, s_end)
        nodes.append(0.5 * (b - a) * xg + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * wg)
        s = b
        panels += 1
        if panels > 20000:
            raise ConvergenceError("Phi2 quadrature panel budget exceeded")
    return np.concatenate(nodes), np.concatenate(weights)


class Phi2Expansion(NamedTuple):
    """Phi2(x, y) ~= const + sum_q weights[q] * exp(x * nodes[q]) for fixed y."""

    const: np.ndarray
    weights: np.ndarray
    nodes: np.ndarray
    swapped: bool


def _integral_orientation(alpha, alpha_p, nu):
    c1 = nu - alpha
    if alpha.real >= 0 and c1.real >= 0:
        return False
    c2 = nu - alpha_p
    if alpha_p.real >= 0 and c2.real >= 0:
        return True
    return None


def integral_route_available(alpha: complex, alpha_p: complex, nu: complex) -> bool:
    return _integral_orientation(complex(alpha), complex(alpha_p), complex(nu)) is not None


def phi2_expansion(alpha: complex, alpha_p: complex, nu: complex, y, x_max: float,
                   ctl: EvalControl = DEFAULT_CONTROL) -> Phi2Expansion:
    """Exponential-sum representation of Phi2 in its first variable.

    Uses Phi2 = Gamma(nu)/(Gamma(a)Gamma(nu-a)) * int_0^1 exp(x xi) xi^(a-1)
    (1-xi)^(nu-a-1) 1F1(a'; nu-a; y(1-xi)) d xi, split at xi = 1/2 with
    xi = exp(-s) and 1 - xi = exp(-s).  Endpoints whose exponent has a small
    real part are regularised by subtracting the endpoint value of the smooth
    factor.  ``y`` may be an array on a single ray; rows of the result then
    correspond to its entries.

    When only the swapped orientation converges (Re alpha < 0 or
    Re(nu - alpha) < 0), the roles of (alpha, x) and (alpha', y) are exchanged
    and ``swapped`` is set: the expansion is then in ``y`` for fixed ``x``.
    """
    alpha, alpha_p, nu = complex(alpha), complex(alpha_p), complex(nu)
    swapped = _integral_orientation(alpha, alpha_p, nu)
    if swapped is None:
        raise ConvergenceError("integral route needs Re a >= 0 and Re(nu - a) >= 0 "
                               "in one orientation")
    if swapped:
        alpha, alpha_p = alpha_p, alpha
    c = nu - alpha
    yarr = np.atleast_1d(np.asarray(y, dtype=complex))
    ymag = np.abs(yarr)
    ymax = float(ymag.max()) if ymag.size else 0.0
    nz = ymag > 0
    if np.any(nz):
        dirs = np.exp(1j * np.angle(yarr[nz]))
        if np.max(np.abs(dirs - dirs[0])) > 1e-9:
            raise ValueError("all y values must lie on one ray from the origin")
        direction = complex(dirs[0])
    else:
        direction = 1.0 + 0j
    n = ctl.quad_points
    inner_scale = abs(alpha_p) + abs(c)

    def rate_a(s):
        xi = math.exp(-s)
        return abs(alpha.imag) + (x_max + ymax + math.sqrt(inner_scale * (ymax + 1))) * xi + 0.5

    def rate_b(s):
        om = math.exp(-s)
        return abs(c.imag) + (x_max + ymax + math.sqrt(inner_scale * (ymax + 1))) * om + 0.5

    reg_a = alpha.real < 0.75
    reg_b = c.real < 0.75
    dec_a = alpha.real + (1.0 if reg_a else 0.0)
    dec_b = c.real + (1.0 if reg_b else 0.0)
    sa, wa = _panel_nodes(math.log(2.0), rate_a, dec_a, n)
    sb, wb = _panel_nodes(math.log(2.0), rate_b, dec_b, n)
    xi_a = np.exp(-sa)          # (0, 1/2]
    om_b = np.exp(-sb)          # 1 - xi on (1/2, 1)
    xi_b = 1.0 - om_b
    ray = kummer_ray(alpha_p, c, direction, max(ymax, 1e-12), ctl) if ymax > 0 else None

    def inner(radii):
        if ray is None:
            return np.ones(radii.shape, dtype=complex)
        return ray(np.minimum(radii, ray.r_max))

    # F(y(1 - xi)) for every row and node
    fa = inner(np.outer(ymag, 1.0 - xi_a))
    fb = inner(np.outer(ymag, om_b))
    pref = complex(special.gamma(nu)) * _rgamma(alpha) * _rgamma(c)
    # half A: xi^alpha (1-xi)^(c-1) F ds
    base_a = np.exp(alpha * np.log(xi_a) + (c - 1) * np.log1p(-xi_a)) * wa
    # half B: xi^(alpha-1) (1-xi)^c F ds
    base_b = np.exp((alpha - 1) * np.log(xi_b) + c * np.log(om_b)) * wb
    wts_a = pref * fa * base_a
    wts_b = pref * fb * base_b
    const = np.zeros(yarr.shape, dtype=complex)
    nodes = [xi_a, xi_b]
    wts = [wts_a, wts_b]
    if reg_a:
        # subtract K(0) = F(y) * (1-0)^(c-1) on half A
        f0 = inner(ymag)
        xi_pow = np.exp(alpha * np.log(xi_a)) * wa
        corr = complex(special.gamma(nu)) * _rgamma(alpha + 1) * _rgamma(c) * 0.5 ** alpha
        const = const + f0 * (corr - pref * np.sum(xi_pow))
    if reg_b:
        # subtract H(1) = exp(x) * 1^(alpha-1) * F(0) on half B
        om_pow = np.exp(c * np.log(om_b)) * wb
        corr = complex(special.gamma(nu)) * _rgamma(alpha) * _rgamma(c + 1) * 0.5 ** c
        w_one = np.full(yarr.shape, corr - pref * np.sum(om_pow), dtype=complex)
        nodes.append(np.array([1.0]))
        wts.append(w_one[:, None])
    return Phi2Expansion(const, np.concatenate(wts, axis=1), np.concatenate(nodes), swapped)


def phi2_on_grid(alpha: complex, alpha_p: complex, nu: complex, x, y,
                 ctl: EvalControl = DEFAULT_CONTROL) -> np.ndarray:
    """Phi2 at x[j, k] for y[j] (all y on one ray) via the integral route.

    ``x`` has shape (ny, nx) and ``y`` shape (ny,).  The swapped orientation
    is handled by transposing the roles internally.
    """
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    swapped = _integral_orientation(complex(alpha), complex(alpha_p), complex(nu))
    if swapped is None:
        raise ConvergenceError("integral route unavailable for these parameters")
    if not swapped:
        exp_ = phi2_expansion(alpha, alpha_p, nu, y, float(np.abs(x).max(initial=0.0)), ctl)
        out = exp_.const[:, None] + np.einsum("jq,jkq->jk", exp_.weights,
                                               np.exp(x[:, :, None] * exp_.nodes))
        return out
    # expansion in y for fixed x: evaluate point by point along each row
    out = np.empty(x.shape, dtype=complex)
    for j in range(x.shape[0]):
        for k in range(x.shape[1]):
            out[j, k] = _phi2_integral_scalar(Phi2Args(alpha, alpha_p, nu, x[j, k], y[j]), ctl)
    return out


def _phi2_integral_scalar(p: Phi2Args, ctl: EvalControl) -> complex:
    alpha, alpha_p, nu = complex(p.alpha), complex(p.alpha_prime), complex(p.nu)
    swapped = _integral_orientation(alpha, alpha_p, nu)
    if swapped is None:
        raise ConvergenceError("integral route unavailable for these parameters")
    x, y = complex(p.x), complex(p.y)
    if swapped:
        alpha, alpha_p, x, y = alpha_p, alpha, y, x
    exp_ = phi2_expansion(alpha, alpha_p, nu, np.array([y]), abs(x), ctl)
    return complex(exp_.const[0] + np.dot(exp_.weights[0], np.exp(x * exp_.nodes)))


def humbert_phi2(args: Phi2Args, ctl: EvalControl = DEFAULT_CONTROL, route: str = "auto",
                 validate: bool = False) -> Phi2Value:
    """Humbert's confluent double series Phi2(alpha, alpha'; nu; x, y).

    ``route`` is one of ``"auto"``, ``"series"``, ``"gauss"`` or ``"integral"``.
    In auto mode the double series is used while its cancellation estimate
    stays within ``ctl.rel_tol``, then the integral reduction, then the 2F1
    expansion (which covers parameters outside the integral's domain).  With
    ``validate=True`` every route that converges is evaluated and a
    :class:`RouteDisagreementError` is raised if any two differ by more than
    ``1e3 * rel_tol`` relative.
    """
    if args.x == 0 and args.y == 0:
        return Phi2Value(1 + 0j, "series")
    routes = {
        "series": lambda: _checked(_phi2_series(args, ctl), ctl),
        "gauss": lambda: _checked(_phi2_gauss(args, ctl), ctl),
        "integral": lambda: _phi2_integral_scalar(args, ctl),
    }
    if route != "auto":
        if route not in routes:
            raise ValueError(f"unknown Phi2 route {route!r}")
        return Phi2Value(routes[route](), route)
    results: dict[str, complex] = {}
    for name in ("series", "integral", "gauss"):
        try:
            results[name] = routes[name]()
        except (ConvergenceError, PoleError, ZeroDivisionError):
            continue
        if not validate:
            return Phi2Value(results[name], name)
    if not results:
        raise ConvergenceError("no Phi2 route converged for these arguments")
    if validate:
        vals = list(results.items())
        for i in range(len(vals)):
            for j in range(i + 1, len(vals)):
                a, b = vals[i][1], vals[j][1]
                scale = max(abs(a), abs(b), 1e-300)
                if abs(a - b) / scale > 1e3 * ctl.rel_tol:
                    raise RouteDisagreementError(
                        f"Phi2 routes {vals[i][0]} and {vals[j][0]} differ: {a} vs {b}")
    name, value = next(iter(results.items()))
    return Phi2Value(value, name)


def _checked(res: tuple[complex, float], ctl: EvalControl) -> complex:
    value, cond = res
    if cond * EPS * 10 > ctl.rel_tol:
        raise ConvergenceError(f"series cancellation too strong (condition {cond:.3g})")
    return value


# ---------------------------------------------------------------------------
# Numerical inverse Laplace transform
# ---------------------------------------------------------------------------

def inverse_laplace(transform: Callable[[np.ndarray], np.ndarray], t: float,
                    ctl: EvalControl = DEFAULT_CONTROL, *, sigma: float = 0.0,
                    center: float = 0.0, height: float = 0.0, nodes: int | None = None) -> complex:
    """Bromwich inversion on a Talbot contour.

    The contour is p(theta) = sigma + i*center + lam*(theta*cot(theta) + i*nu*theta)
    on theta in (-pi, pi), traversed with the midpoint rule.  ``center`` shifts
    the contour vertically (use the midpoint of singularities sitting on the
    imaginary axis) and ``height`` is the largest distance of a singularity
    from that centre line; the contour is made tall enough to enclose the
    horizontal branch cuts running left from them.  ``transform`` must accept
    an array of complex p.

    Convergence is checked by comparing N and 2N nodes; a
    :class:`ContourError` is raised when they disagree beyond ``rel_tol``.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    lam = 6.0 / t
    # need lam * nu * pi/2 > height so the contour passes right of i*height
    nu_c = max(1.0, 1.6 * height / (lam * math.pi / 2)) if height > 0 else 1.0
    n0 = nodes or max(64, int(8 * nu_c * lam * t) + 32)
    n0 += n0 % 2  # midpoint nodes then avoid theta = 0

    def estimate(n):
        theta = -math.pi + (np.arange(n) + 0.5) * 2 * math.pi / n
        cot = np.cos(theta) / np.sin(theta)
        p = sigma + 1j * center + lam * (theta * cot + 1j * nu_c * theta)
        dp = lam * (cot - theta / np.sin(theta) ** 2 + 1j * nu_c)
        vals = np.asarray(transform(p), dtype=complex)
        integrand = np.exp(p * t) * vals * dp
        return complex(np.sum(integrand) * (2 * math.pi / n) / (2j * math.pi)), integrand

    v1, _ = estimate(n0)
    v2, integ = estimate(2 * n0)
    scale = max(abs(v2), 1e-300)
    tail = float(np.max(np.abs(integ[:4])) + np.max(np.abs(integ[-4:])))
    peak = float(np.max(np.abs(integ)))
    if abs(v1 - v2) > max(ctl.rel_tol, 1e-12) * scale * 10 or tail > 1e-8 * peak:
        # one more doubling before giving up
        v3, integ = estimate(4 * n0)
        if abs(v3 - v2) > max(ctl.rel_tol, 1e-12) * max(abs(v3), 1e-300) * 10:
            raise ContourError(f"Talbot quadrature not converged ({v2} vs {v3})")
        return v3
    return v2
