"""Single-photon four-port router: scattering amplitudes and output photon numbers.

Amplitude normalization
-----------------------
The coefficients returned by :func:`port_amplitudes` are ``sqrt(2)`` times
the physical output amplitude of a photon entering at port ``r_-``.  Flux conservation therefore reads

    (|r_-|^2 + |l_-|^2 + |r_+|^2 + |l_+|^2) / 2 = 1

and a port's share of the photon is ``|amplitude|^2 / 2``.

Detunings
---------
``Delta~ = Delta_k - Delta_-`` is the photon detuning from the ``a_-`` mode;
the input packet is centred at ``delta' = delta - Delta_-``.  The ``+``
channel coefficient is a function of the same ``Delta~`` as the input: the
outgoing ``+`` photon carries the input energy lowered by ``2J``, so
``Delta~_{kJ}`` of that photon equals ``Delta~`` of the incident one.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numba
import numpy as np
import scipy.integrate
from numba import types

__all__ = [
    "RouterParams",
    "PortAmplitudes",
    "PortNumbers",
    "QuadratureError",
    "PORTS",
    "port_amplitudes",
    "port_numbers_integrated",
    "port_numbers_closed_form",
    "port_numbers_windowed",
    "local_extrema",
    "RouterScan",
    "router_scan",
    "OptimumSurface",
    "optimum_surface",
]

SQRT2 = math.sqrt(2.0)
PORTS = ("n_r_minus", "n_l_minus", "n_r_plus", "n_l_plus")


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class RouterParams:
    """Router parameters in units of the mechanical frequency.

    ``gamma = 2 pi xi^2`` is the cavity-waveguide width, ``delta_prime`` the
    packet centre relative to ``Delta_-`` and ``epsilon`` the Lorentzian
    half-width.  ``G1`` defaults to the unit-norm value ``sqrt(epsilon/pi)``.
    """

    g: float
    gamma: float
    delta_prime: float = 0.0
    epsilon: float = 1e-4
    delta_minus: float = 0.0
    G1: complex | None = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.g < 0:
            raise ValueError("g must be >= 0")
        for name in ("g", "gamma", "delta_prime", "epsilon", "delta_minus"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def weight(self) -> float:
        """``|G1|^2``."""
        return self.epsilon / math.pi if self.G1 is None else abs(self.G1) ** 2

    @property
    def packet_norm(self) -> float:
        """``int |mu_k(0)|^2 dk = pi |G1|^2 / epsilon``."""
        return math.pi * self.weight / self.epsilon


@dataclass(frozen=True)
class PortAmplitudes:
    detuning: float
    r_minus: complex
    l_minus: complex
    r_plus: complex
    l_plus: complex

    def flux(self) -> float:
        return 0.5 * (abs(self.r_minus) ** 2 + abs(self.l_minus) ** 2
                      + abs(self.r_plus) ** 2 + abs(self.l_plus) ** 2)


@dataclass(frozen=True)
class PortNumbers:
    n_r_minus: float
    n_l_minus: float
    n_r_plus: float
    n_l_plus: float
    method: str = "integrated"
    error_estimate: float = 0.0
    # imaginary part left over by a closed form (zero for exact methods)
    imag_residual: float = 0.0

    @property
    def total(self) -> float:
        return self.n_r_minus + self.n_l_minus + self.n_r_plus + self.n_l_plus

    def as_array(self) -> np.ndarray:
        return np.array([self.n_r_minus, self.n_l_minus, self.n_r_plus, self.n_l_plus])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(PORTS, self.as_array()))


def _amplitudes(u, g, gamma):
    """Vectorized ``(r_-, l_-, r_+)``, each ``sqrt(2)`` times the physical amplitude."""
    u = np.asarray(u, dtype=float)
    x = u + 1j * gamma
    den = 2.0 * x * x - g * g
    mod = gamma * gamma + u * u
    r_m = SQRT2 * (mod + x * x - g * g) / den
    l_m = SQRT2 * (mod - x * x) / den
    r_p = -2j * g * gamma / den
    return r_m, l_m, r_p


def port_amplitudes(detuning: float, g: float, gamma: float) -> PortAmplitudes:
    """Scattering coefficients at photon detuning ``Delta~`` from ``Delta_-``.

    ``gamma = 0`` decouples the waveguide: the photon passes to ``r_-``.
    """
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if gamma == 0:
        return PortAmplitudes(float(detuning), SQRT2 + 0j, 0j, 0j, 0j)
    r_m, l_m, r_p = _amplitudes(detuning, g, gamma)
    r_p = complex(r_p)
    return PortAmplitudes(float(detuning), complex(r_m), complex(l_m), r_p, r_p)


@numba.cfunc(types.float64(types.intc, types.CPointer(types.float64)), cache=True)
def _integrand(n, xx):
    # xx = (x, g, gamma, delta', eps, |G1|^2, port, theta_mode); QUADPACK calls
    # this directly, so the whole quadrature runs without the interpreter
    x, g, gamma, d0, eps, w = xx[0], xx[1], xx[2], xx[3], xx[4], xx[5]
    port = int(xx[6])
    if xx[7] > 0.5:
        u = d0 + eps * math.tan(x)
        meas = w / eps
    else:
        u = x
        meas = w / ((u - d0) * (u - d0) + eps * eps)
    xr, xi = u, gamma
    x2r, x2i = xr * xr - xi * xi, 2.0 * xr * xi
    den = (2.0 * x2r - g * g) ** 2 + (2.0 * x2i) ** 2
    mod = gamma * gamma + u * u
    if port == 0:
        nr, ni = mod + x2r - g * g, x2i
        val = (nr * nr + ni * ni) / den
    elif port == 1:
        nr, ni = mod - x2r, -x2i
        val = (nr * nr + ni * ni) / den
    else:
        val = 2.0 * g * g * gamma * gamma / den
    # |sqrt2 N / D|^2 / 2 = |N|^2/|D|^2 for the minus ports; |2 g gamma|^2/|D|^2/2
    return meas * val


_LOW_LEVEL = scipy.LowLevelCallable(_integrand.ctypes)


def _breakpoints(xs, a: float, b: float) -> list[float] | None:
    """Interior breakpoints of ``[a, b]``, merging any closer than ``1e-9 (b - a)``.

    QUADPACK fails on subintervals of near-zero width, e.g. ``delta' = 1e-308``
    next to the feature at 0.
    """
    tol = 1e-9 * (b - a)
    out: list[float] = []
    for x in sorted(float(x) for x in xs):
        if a + tol < x < b - tol and (not out or x - out[-1] > tol):
            out.append(x)
    return out or None


def integration_window(p: RouterParams) -> float:
    return max(50.0 * p.epsilon, 20.0 * p.gamma, 10.0 * p.g)


def port_numbers_integrated(p: RouterParams, *, epsrel: float = 1e-9,
                            epsabs: float = 1e-12, window: float | None = None) -> PortNumbers:
    """Output photon numbers from the packet-weighted ``|amplitude|^2 / 2``.

    The window ``delta' +- max(50 eps, 20 gamma, 10 g)`` is integrated
    adaptively in ``Delta~``.  The two tails are integrated exactly over the
    rest of the real line through ``Delta~ = delta' + eps tan(theta)``, which
    turns the Lorentzian measure into ``|G1|^2/eps d(theta)``; nothing is
    dropped, so the four ports sum to ``pi |G1|^2 / eps``.
    """
    if p.gamma == 0:
        n = p.packet_norm
        return PortNumbers(n, 0.0, 0.0, 0.0, method="integrated")
    g, gamma, eps, d0 = p.g, p.gamma, p.epsilon, p.delta_prime
    R = integration_window(p) if window is None else float(window)
    features = np.array([0.0, g / SQRT2, -g / SQRT2, d0])
    lo, hi = d0 - R, d0 + R
    th_R = math.atan(R / eps)
    th_feat = np.arctan((features - d0) / eps)
    segments = [(lo, hi, 0.0, _breakpoints(features, lo, hi))]
    for a, b in ((th_R, math.pi / 2), (-math.pi / 2, -th_R)):
        segments.append((a, b, 1.0, _breakpoints(th_feat, a, b)))

    total = np.zeros(3)
    err_total = 0.0
    for port in range(3):
        for a, b, mode, pts in segments:
            val, err = scipy.integrate.quad(
                _LOW_LEVEL, a, b, args=(g, gamma, d0, eps, p.weight, float(port), mode),
                points=pts, epsabs=epsabs, epsrel=epsrel, limit=2000)
            total[port] += val
            err_total += err
    if not np.all(np.isfinite(total)):
        raise QuadratureError(f"non-finite port numbers for {p}")
    if err_total > max(1e-6, 1e-6 * p.packet_norm):
        raise QuadratureError(f"quadrature error estimate {err_total:.3g} too large for {p}")
    n_rm, n_lm, n_rp = (float(v) for v in total)
    return PortNumbers(n_rm, n_lm, n_rp, n_rp, method="integrated", error_estimate=err_total)


def port_numbers_windowed(p: RouterParams, lo: float, hi: float, *, epsrel: float = 1e-10,
                          epsabs: float = 1e-13) -> PortNumbers:
    """Port numbers of the packet truncated to ``lo <= Delta~ <= hi`` and renormalized.

    This is the analytic counterpart of a packet sampled on a finite grid.
    """
    if not hi > lo:
        raise ValueError("need hi > lo")
    if p.gamma == 0:
        return PortNumbers(1.0, 0.0, 0.0, 0.0, method="windowed")
    g, gamma, eps, d0 = p.g, p.gamma, p.epsilon, p.delta_prime
    pts = _breakpoints((0.0, g / SQRT2, -g / SQRT2, d0), lo, hi)
    total = np.zeros(3)
    for port in range(3):
        total[port] = scipy.integrate.quad(
            _LOW_LEVEL, lo, hi, args=(g, gamma, d0, eps, 1.0, float(port), 0.0),
            points=pts, epsabs=epsabs, epsrel=epsrel, limit=2000)[0]
    norm = (math.atan((hi - d0) / eps) - math.atan((lo - d0) / eps)) / eps
    n = total / norm
    return PortNumbers(float(n[0]), float(n[1]), float(n[2]), float(n[2]), method="windowed")


# -- closed forms -------------------------------------------------------------

def _closed_form_legacy(p: RouterParams) -> PortNumbers:
    """The ``F``-factor expressions evaluated term by term, as commonly quoted."""
    g, gamma, eps, d = p.g, p.gamma, p.epsilon, p.delta_prime
    if g == 0 or gamma == 0:
        raise ValueError("legacy closed form has 1/(g gamma) prefactors; undefined for g=0 or gamma=0")
    G2 = p.weight
    s = g / SQRT2
    Fpp = d + s + gamma + 1j * eps
    Fpm = d + s - gamma + 1j * eps
    Fmp = d - s + gamma + 1j * eps
    Fmm = d - s - gamma + 1j * eps
    prod = Fpp * Fpm * Fmp * Fmm
    pre = SQRT2 / (4 * g * gamma)
    A = 1 / (s + 1j * gamma)
    B = 1 / (s - 1j * gamma)
    PA = np.conj(Fpp) * Fpm
    PB = np.conj(Fmp) * Fmm

    n_rm = (math.pi * G2 / eps - 2 * math.pi * G2 * gamma ** 2 * (
        (gamma ** 2 + g ** 2 + (d + eps) ** 2) / (eps * prod)
        + pre * (A * (1.5 * g ** 2 - 1j * SQRT2 * g * gamma) / PA
                 + B * (1.5 * g ** 2 + 1j * SQRT2) / PB)))
    n_lm = 2 * math.pi * G2 * gamma ** 2 * (
        (gamma ** 2 + (d + eps) ** 2) / (eps * prod)
        + pre * (A * (0.5 * g ** 2 - 1j * SQRT2 * g * gamma) / PA
                 + B * (0.5 * g ** 2 + 1j * SQRT2) / PB))
    n_rp = math.pi * G2 * g ** 2 * gamma ** 2 * (
        1 / (eps * prod) + pre * (A / PA + B / PB))
    vals = np.array([n_rm, n_lm, n_rp], dtype=complex)
    return PortNumbers(float(vals[0].real), float(vals[1].real), float(vals[2].real),
                       float(vals[2].real), method="legacy",
                       imag_residual=float(np.abs(vals.imag).max()))


def _closed_form_residue(p: RouterParams) -> PortNumbers:
    """Exact Lorentzian average by residues in the upper half plane.

    Poles: ``z0 = delta' + i eps`` from the packet and
    ``z_s = s g/sqrt(2) + i gamma`` from the conjugated amplitudes.
    """
    g, gamma, eps, d = p.g, p.gamma, p.epsilon, p.delta_prime
    G2 = p.weight
    if gamma == 0:
        return PortNumbers(p.packet_norm, 0.0, 0.0, 0.0, method="residue")
    if g == 0:
        # two-port limit: |l_-|^2/2 = gamma^2/(u^2+gamma^2), a Lorentzian convolution
        n_lm = p.packet_norm * gamma * (gamma + eps) / (d * d + (gamma + eps) ** 2)
        return PortNumbers(p.packet_norm - n_lm, n_lm, 0.0, 0.0, method="residue")

    def numerators(z):
        x = z + 1j * gamma
        xc = z - 1j * gamma
        mod = z * z + gamma * gamma  # analytic continuation of u^2 + gamma^2
        num = np.array([SQRT2 * (mod + x * x - g * g), SQRT2 * (mod - x * x), -2j * g * gamma])
        num_c = np.array([SQRT2 * (mod + xc * xc - g * g), SQRT2 * (mod - xc * xc),
                          2j * g * gamma])
        return num, num_c, 2 * x * x - g * g, 2 * xc * xc - g * g

    z0 = d + 1j * eps
    num, num_c, den, den_c = numerators(z0)
    # packet pole: 2 pi i * (G2 / (2 i eps)) * A Abar / 2
    total = (math.pi * G2 / eps) * 0.5 * num * num_c / (den * den_c)
    for sgn in (1.0, -1.0):
        zs = sgn * g / SQRT2 + 1j * gamma
        if abs(zs - z0) < 1e-9 * max(gamma, eps):
            raise ValueError("packet pole coincides with a resonance; use the integrated form")
        num, num_c, den, _ = numerators(zs)
        dden_c = 4.0 * (zs - 1j * gamma)
        wz = G2 / ((zs - d) ** 2 + eps * eps)
        total = total + 2j * math.pi * wz * 0.5 * num * num_c / (den * dden_c)
    return PortNumbers(float(total[0].real), float(total[1].real), float(total[2].real),
                       float(total[2].real), method="residue",
                       imag_residual=float(np.abs(total.imag).max()))


def port_numbers_closed_form(p: RouterParams, variant: str = "residue") -> PortNumbers:
    """Closed-form port numbers.

    ``variant="legacy"`` evaluates the ``F``-factor expressions term by term
    (with ``F_{+-+-} = delta' +- g/sqrt(2) +- gamma + i eps``); they disagree
    with the integrated result and are kept only for comparison.
    ``variant="residue"`` is the exact contour-integral evaluation of the
    same Lorentzian average and agrees with :func:`port_numbers_integrated`.
    """
    if variant == "legacy":
        return _closed_form_legacy(p)
    if variant == "residue":
        return _closed_form_residue(p)
    raise ValueError(f"unknown closed-form variant {variant!r}")


# -- scans --------------------------------------------------------------------

def local_extrema(y, atol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Indices of three-point local maxima and minima.

    A point counts when it exceeds (or falls below) both neighbours by more
    than ``atol``; plateaus and quadrature noise are ignored.
    """
    y = np.asarray(y, dtype=float)
    if y.size < 3:
        return np.array([], dtype=int), np.array([], dtype=int)
    mid, left, right = y[1:-1], y[:-2], y[2:]
    maxima = np.flatnonzero((mid - left > atol) & (mid - right > atol)) + 1
    minima = np.flatnonzero((left - mid > atol) & (right - mid > atol)) + 1
    return maxima, minima


@dataclass
class RouterScan:
    base: RouterParams
    delta_prime: np.ndarray
    numbers: np.ndarray  # (n, 4) in PORTS order
    status: list[str] = field(default_factory=list)

    def column(self, port: str) -> np.ndarray:
        return self.numbers[:, PORTS.index(port)]

    @property
    def totals(self) -> np.ndarray:
        return self.numbers.sum(axis=1)

    def extrema(self, port: str, atol: float = 1e-9) -> dict[str, np.ndarray]:
        mx, mn = local_extrema(self.column(port), atol)
        return {"maxima": self.delta_prime[mx], "minima": self.delta_prime[mn]}


def _router_point(p: RouterParams):
    try:
        return port_numbers_integrated(p).as_array(), "ok"
    except Exception as exc:
        return np.full(4, np.nan), f"failed: {type(exc).__name__}: {exc}"


def _map(fn, items, jobs):
    if jobs is None or jobs == 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def router_scan(base: RouterParams, delta_prime_grid=None, *, jobs: int | None = 1) -> RouterScan:
    """Integrated port numbers over a ``delta'`` grid (default 801 points on +-0.1)."""
    grid = (np.linspace(-0.1, 0.1, 801) if delta_prime_grid is None
            else np.asarray(delta_prime_grid, dtype=float))
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("delta' grid must be a nonempty 1-d sequence")
    out = _map(_router_point, [replace(base, delta_prime=float(d)) for d in grid], jobs)
    numbers = np.array([o[0] for o in out])
    return RouterScan(base, grid, numbers, [o[1] for o in out])


@dataclass
class OptimumSurface:
    g: np.ndarray
    gamma: np.ndarray
    n_r_plus: np.ndarray  # (len(g), len(gamma))
    argmax_gamma: np.ndarray  # nan where the row is identically zero


def optimum_surface(g_grid, gamma_grid, delta_prime: float = 0.0, epsilon: float = 1e-4,
                    *, jobs: int | None = 1) -> OptimumSurface:
    """``n_r_plus`` over a ``(g, gamma)`` grid and the best ``gamma`` per ``g``."""
    g_grid = np.asarray(g_grid, dtype=float)
    gamma_grid = np.asarray(gamma_grid, dtype=float)
    if g_grid.size == 0 or gamma_grid.size == 0:
        raise ValueError("grids must be nonempty")
    if np.any(g_grid < 0) or np.any(gamma_grid <= 0):
        raise ValueError("g must be >= 0 and gamma > 0")
    items = [RouterParams(g=float(g), gamma=float(gm), delta_prime=delta_prime, epsilon=epsilon)
             for g in g_grid for gm in gamma_grid]
    out = _map(_router_point, items, jobs)
    surf = np.array([o[0][2] for o in out]).reshape(g_grid.size, gamma_grid.size)
    best = np.full(g_grid.size, np.nan)
    for i, row in enumerate(surf):
        if np.nanmax(row) > 0:
            best[i] = gamma_grid[int(np.nanargmax(row))]
    return OptimumSurface(g_grid, gamma_grid, surf, best)
