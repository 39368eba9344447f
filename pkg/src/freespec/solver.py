"""Shifted Stieltjes system and the radial profile of the limiting spectrum.

For the hermitization ``V + J(alpha)`` the Stieltjes transform ``g`` on
the imaginary axis ``z = i y`` is purely imaginary, ``g = i kappa``.
Writing ``2 |alpha| kappa = sin(theta)`` with ``theta`` in ``[0, pi]``
turns the square root ``sqrt(1 + 4 |alpha|^2 g^2)`` into ``cos(theta)``.
Its sign change happens exactly where ``theta`` crosses ``pi/2``, so the
branch is tracked without sign bookkeeping.  With ``x = 1 + w g`` the
first equation gives ``theta`` in closed form and the whole system
reduces to one scalar root ``sin(theta(x)) / (2|alpha|) = xi(x)``, where
``xi(x) = i (-x) S_V(-x)`` is real and non-negative on ``(0, 1)``.

At ``y = 0`` the reduced equation is ``x (1 - x) = r^2 xi(x)^2`` with
``r = |alpha|``.  In terms of ``psi = 1 - x`` this is the radial
profile: ``psi`` is the mass of the limit law inside the disc of
radius ``r`` and ``f(r) = psi'(r) / (2 pi r)`` its density.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import BranchError, ConfigError, ConvergenceError, SingularityError
from .freeprob import MomentSeries, TransformSeries, branch_sqrt, symmetric_s

Y_START = 1e4
Y_FLOOR = 1e-6
MULTI_TOL = 1e-6
BOX_TOL = 1e-10


class ResolutionWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SVTransform:
    """``S_V`` of a symmetric law together with ``xi(x) = i(-x) S_V(-x)``.

    ``xi`` receives both ``x`` and ``1 - x`` so closed forms can avoid
    cancellation at either end of ``(0, 1)``.
    """

    label: str
    s: Callable
    xi_pair: Callable
    second_moment: float = math.inf

    def xi(self, x, one_minus_x=None):
        x = np.asarray(x, dtype=float)
        omx = 1.0 - x if one_minus_x is None else np.asarray(one_minus_x, dtype=float)
        return self.xi_pair(x, omx)

    @classmethod
    def from_series(cls, ts: TransformSeries, second_moment: float = math.inf, label="series"):
        if ts.kind != "S" or ts.grading != "sqrt_z":
            raise ConfigError("expected a symmetric-branch S series")

        def xi(x, omx):
            return np.real(1j * (-x) * ts(-x))

        return cls(label, ts, xi, second_moment)

    @classmethod
    def from_moments(cls, moments, label="moments") -> SVTransform:
        ms = moments if isinstance(moments, MomentSeries) else MomentSeries(tuple(moments))
        m = [float(v) for v in ms.moments]
        if not ms.hankel_ok():
            raise ConfigError("moments do not come from a probability measure (Hankel matrix not PSD)")
        if len(m) >= 4 and abs(m[3] - m[1] ** 2) <= 1e-12 * max(1.0, m[1] ** 2):
            raise ConfigError(
                "law is a symmetric two-point mass; its S-transform has no "
                "admissible branch for the shifted system"
            )
        return cls.from_series(symmetric_s(ms), m[1] if len(m) >= 2 else math.inf, label)


def _pos_pow(x, p):
    return np.power(np.maximum(x, 0.0), p)


def circular_sv() -> SVTransform:
    return SVTransform(
        "circular",
        lambda z: -1.0 / branch_sqrt(z),
        lambda x, omx: np.sqrt(x),
        1.0,
    )


def product_sv(m: int) -> SVTransform:
    if m < 1:
        raise ConfigError("m must be >= 1")
    e = (m - 1) / 2
    return SVTransform(
        "product(%d)" % m,
        lambda z: -1.0 / (branch_sqrt(z) * (1 + np.asarray(z, dtype=complex)) ** e),
        lambda x, omx: np.sqrt(x) / _pos_pow(omx, e),
        1.0,
    )


def rect_product_sv(ratios: Sequence[float]) -> SVTransform:
    """Square product whose inner factors have aspect ratios ``ratios``."""
    ys = tuple(float(y) for y in ratios)
    if any(not 0 < y <= 1 for y in ys):
        raise ConfigError("ratios must lie in (0, 1]")

    def s(z):
        z = np.asarray(z, dtype=complex)
        out = -1.0 / branch_sqrt(z)
        for y in ys:
            out = out / np.sqrt(1 + y * z)
        return out

    def xi(x, omx):
        out = np.sqrt(x)
        for y in ys:
            out = out / np.sqrt((1 - y) + y * omx)
        return out

    return SVTransform("rect-product%s" % (ys,), s, xi, 1.0)


def spherical_sv() -> SVTransform:
    return SVTransform(
        "spherical",
        lambda z: np.full(np.shape(z), 1j),
        lambda x, omx: np.asarray(x, dtype=float) * 1.0,
    )


def product_spherical_sv(m: int) -> SVTransform:
    if m < 1:
        raise ConfigError("m must be >= 1")
    e = (m - 1) / 2

    def s(z):
        z = np.asarray(z, dtype=complex)
        return 1j * (-z / (z + 1)) ** e

    return SVTransform(
        "product-spherical(%d)" % m, s, lambda x, omx: x * _pos_pow(x / omx, e)
    )


# ---------------------------------------------------------------------------
# master system on the imaginary axis


def _theta(x, y, a):
    c = y / (2 * a)
    radius = math.sqrt(0.25 + c * c)
    return np.arccos(np.clip((np.asarray(x) - 0.5) / radius, -1.0, 1.0)) - math.atan(2 * c)


def _scan_grid() -> np.ndarray:
    lo = np.logspace(-300, -1, 400)
    mid = np.linspace(0.1, 0.9, 161)[1:-1]
    hi = 1 - np.logspace(-1, -16, 200)
    return np.concatenate([lo, mid, hi])


_GRID = _scan_grid()


def _logit(x):
    x = np.asarray(x, dtype=float)
    return np.log(x) - np.log1p(-x)


def _roots(func, grid):
    vals = func(grid)
    ok = np.isfinite(vals)
    out = []
    for i in np.flatnonzero(ok[:-1] & ok[1:] & (np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0)):
        a, b = grid[i], grid[i + 1]
        if vals[i] == 0:
            out.append(a)
            continue
        if vals[i + 1] == 0:
            continue
        out.append(brentq(lambda t: float(func(np.array([t]))[0]), a, b, xtol=1e-300, rtol=1e-15, maxiter=200))
    return np.array(sorted(set(out)))


def _reduced(sv: SVTransform, y: float, a: float):
    def k(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            return np.sin(_theta(x, y, a)) / (2 * a) - sv.xi(x)

    return k


@dataclass
class GSolution:
    """Solution of the shifted system at ``z = i y``."""

    y: float
    alpha: complex
    g: complex
    w: complex
    x: float  # 1 + w g
    kappa: float
    branch: int  # sign of the square root
    rtilde: float  # Rtilde_alpha(-g), real on the imaginary axis
    violations: list = field(default_factory=list)
    path: list = field(default_factory=list)


def _pack(sv, y, alpha, x, path, violations):
    a = abs(alpha)
    th = float(_theta(x, y, a))
    kappa = math.sin(th) / (2 * a)
    rt = (-1.0 + math.cos(th)) / 2
    g = 1j * kappa
    w = 1j * y + rt / g if kappa > 0 else complex("nan")
    sol = GSolution(y, alpha, g, w, float(x), kappa, 1 if math.cos(th) >= 0 else -1, rt, violations, path)
    _check_box(sv, sol)
    return sol


def _check_box(sv: SVTransform, sol: GSolution) -> None:
    a = abs(sol.alpha)
    v = sol.violations
    if not (-BOX_TOL <= sol.kappa <= 1 / (2 * a) + BOX_TOL):
        v.append((sol.y, "kappa", sol.kappa))
    if not (0.0 < sol.x < 1.0):
        v.append((sol.y, "1+wg", sol.x))
    if not (-1 - BOX_TOL <= sol.rtilde <= BOX_TOL):
        v.append((sol.y, "rtilde", sol.rtilde))
    xi = float(sv.xi(np.array([sol.x]))[0])
    if abs(xi - sol.kappa) > 1e-8 * max(1.0, sol.kappa):
        v.append((sol.y, "residual", xi - sol.kappa))


def _pick(roots, prev_x=None, target_kappa=None, kappas=None):
    if roots.size == 0:
        return None
    if prev_x is not None:
        return roots[np.argmin(np.abs(_logit(roots) - _logit(prev_x)))]
    return roots[np.argmin(np.abs(kappas - target_kappa))]


def _continue(sv: SVTransform, alpha: complex, ys: Sequence[float]) -> list:
    a = abs(alpha)
    if a == 0:
        raise ConfigError("alpha must be non-zero")
    sols = []
    prev = None
    violations: list = []
    for y in ys:
        roots = _roots(_reduced(sv, y, a), _GRID)
        if prev is None:
            kap = np.sin(_theta(roots, y, a)) / (2 * a)
            x = _pick(roots, target_kappa=1.0 / y, kappas=kap)
        else:
            x = _pick(roots, prev_x=prev)
        if x is None:
            raise BranchError("no admissible root at y = %g" % y)
        prev = x
        sols.append(_pack(sv, y, alpha, x, [], violations))
    if violations:
        raise BranchError("continuation left the invariant box at y = %g (%s = %.3g)" % violations[0])
    return sols


def _schedule(y_target: float, y_start: float = Y_START) -> list:
    ys = []
    y = max(y_start, y_target)
    while y > y_target * (1 + 1e-12):
        ys.append(y)
        y /= 2
    ys.append(y_target)
    return ys


def solve_g(sv: SVTransform, alpha: complex, y: float) -> GSolution:
    """``g(i y, alpha)``, continued down from ``y = 1e4`` where ``g ~ i / y``."""
    if y <= 0:
        raise ConfigError("y must be positive")
    sols = _continue(sv, alpha, _schedule(y))
    out = sols[-1]
    out.path = [(s.y, s.g, s.branch) for s in sols]
    return out


@dataclass
class G0Solution:
    alpha: complex
    g0: complex
    wg0: float
    kappa: float
    branch: int
    richardson: complex
    hull: tuple | None
    residual: float
    violations: list


def limit_g0(sv: SVTransform, alpha: complex, y_floor: float = Y_FLOOR) -> G0Solution:
    """``lim_{y -> 0} g(i y, alpha)``.

    Continuation in ``y`` halves from 8 to ``y_floor``; a second-order
    Richardson estimate at the bottom seeds a polish of the ``y = 0``
    equation.  If the iterates stop settling, the last values are
    returned as an interval hull instead of a point.
    """
    a = abs(alpha)
    ys = _schedule(8.0)[:-1] + [8.0 / 2**k for k in range(0, 64) if 8.0 / 2**k >= y_floor]
    ys = sorted(set(ys), reverse=True)
    sols = _continue(sv, alpha, ys)
    kap = np.array([s.kappa for s in sols])
    k1 = 2 * kap[-1] - kap[-2]
    k2 = 2 * kap[-2] - kap[-3]
    rich = (4 * k1 - k2) / 3
    tail = np.diff(kap[-6:])
    settled = np.all(tail >= -1e-12) or np.all(tail <= 1e-12)
    hull = None if settled else (float(kap[-6:].min()), float(kap[-6:].max()))

    def k0(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            return np.sqrt(x * (1 - x)) / a - sv.xi(x)

    roots = _roots(k0, _GRID)
    kap_roots = sv.xi(roots) if roots.size else roots
    kappa, x = 0.0, 0.0
    if roots.size:
        i = int(np.argmin(np.abs(kap_roots - rich)))
        if abs(kap_roots[i] - rich) <= max(1e-3, 10 * abs(kap[-1] - kap[-2])):
            kappa, x = float(kap_roots[i]), float(roots[i])
    # trivial solution: kappa = 0, x = 0, so wg = -1
    wg0 = x - 1.0
    if kappa > 0:
        cos_t = 2 * x - 1.0
        branch = 1 if cos_t >= 0 else -1
        residual = abs(x * (1 - x) - a * a * kappa * kappa)
    else:
        branch, residual = -1, 0.0
    viol = sols[-1].violations if sols else []
    return G0Solution(alpha, 1j * kappa, wg0, kappa, branch, 1j * rich, hull, residual, viol)


# ---------------------------------------------------------------------------
# radial profile


@dataclass
class PsiKappaField:
    r: np.ndarray
    psi: np.ndarray
    kappa: np.ndarray
    transitions: list  # radii where the active branch changes
    transition_index: list
    multiplicity: np.ndarray
    label: str = ""

    @property
    def residual(self) -> np.ndarray:
        return self.psi * (1 - self.psi) - self.r**2 * self.kappa**2


_T_GRID = np.concatenate([np.linspace(-700.0, -1.0, 700)[:-1], -np.logspace(0, -16, 400)])


def _log_q(sv: SVTransform, t):
    psi = np.exp(t)
    x = -np.expm1(t)
    with np.errstate(all="ignore"):
        return 2 * np.log(sv.xi(x, psi)) - np.log(x)


def solve_psi_kappa(sv: SVTransform, radii: Sequence[float]) -> PsiKappaField:
    """``psi(r)`` and ``kappa(r)`` on an ascending grid by homotopy in ``r``.

    The non-trivial solution satisfies ``log psi - log q(1 - psi) = 2 log r``
    with ``q(x) = xi(x)^2 / x``.  This is solved in ``t = log psi`` on a
    fixed bracket grid, followed by bisection.  Along the grid the root
    closest to the previous one is kept.  Where none exists the trivial
    branch ``(psi, kappa) = (1, 0)`` takes over and the radius is
    recorded as a transition.
    """
    r = np.asarray(radii, dtype=float)
    if r.ndim != 1 or r.size < 1 or r[0] <= 0 or np.any(np.diff(r) <= 0):
        raise ConfigError("radii must be positive and strictly increasing")
    if r[0] > 1e-3:
        raise ConfigError("the homotopy must start at r <= 1e-3")
    lt = _T_GRID - _log_q(sv, _T_GRID)
    ok = np.isfinite(lt)
    tg, lt = _T_GRID[ok], lt[ok]
    target = 2 * np.log(r)
    diff = lt[None, :] - target[:, None]
    sgn = np.sign(diff)
    cross = sgn[:, :-1] * sgn[:, 1:] <= 0
    ri, ci = np.nonzero(cross)
    lo, hi = tg[ci].copy(), tg[ci + 1].copy()
    tt = target[ri]

    def f(t):
        return t - _log_q(sv, t) - tt

    flo = f(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        left = np.sign(fm) == np.sign(flo)
        lo = np.where(left, mid, lo)
        flo = np.where(left, fm, flo)
        hi = np.where(left, hi, mid)
        if np.all(np.abs(hi - lo) <= 4e-16 * np.maximum(1e-300, np.abs(lo))):
            break
    troot = 0.5 * (lo + hi)
    cands: list = [[] for _ in range(r.size)]
    for i, t in zip(ri, troot):
        if t < 0:
            cands[i].append(t)
    psi = np.ones(r.size)
    mult = np.zeros(r.size, dtype=int)
    transitions, tidx = [], []
    prev = None
    active = True
    for i in range(r.size):
        c = np.unique(np.array(cands[i]))
        if c.size == 0:
            if active and i > 0:
                transitions.append(float(r[i]))
                tidx.append(i)
            active = False
            prev = None
            continue
        if not active:
            transitions.append(float(r[i]))
            tidx.append(i)
            active = True
        pick = c[0] if prev is None else c[np.argmin(np.abs(c - prev))]
        prev = pick
        psi[i] = math.exp(pick)
        others = np.abs(np.exp(c) - psi[i]) > MULTI_TOL
        mult[i] = int(others.sum())
    if mult.any():
        warnings.warn(
            "additional roots found at %d radii; homotopy branch kept" % int((mult > 0).sum()),
            RuntimeWarning,
        )
    x = 1.0 - psi
    kappa = np.where(psi < 1.0, sv.xi(np.maximum(x, 0.0), psi), 0.0)
    return PsiKappaField(r, psi, kappa, transitions, tidx, mult, sv.label)


def density_from_psi(fld: PsiKappaField, warn: bool = True) -> np.ndarray:
    """``f(r) = psi'(r) / (2 pi r)``, differenced separately on each segment
    between recorded transitions (second order, non-uniform grids allowed)."""
    r, psi = fld.r, fld.psi
    cuts = [0] + list(fld.transition_index) + [r.size]
    dpsi = np.zeros_like(psi)
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b - a >= 3:
            dpsi[a:b] = np.gradient(psi[a:b], r[a:b], edge_order=2)
        elif b - a == 2:
            dpsi[a:b] = (psi[a + 1] - psi[a]) / (r[a + 1] - r[a])
    f = dpsi / (2 * math.pi * r)
    if warn and r.size >= 3:
        h = np.gradient(r)
        d2 = np.gradient(dpsi, r)
        err = np.abs(d2) * h * h / (2 * math.pi * r)
        if np.any(err > 1e-2 * np.abs(f).max()):
            warnings.warn("grid too coarse for the curvature of psi", ResolutionWarning)
    return f


def radial_mass(fld: PsiKappaField, f: np.ndarray | None = None) -> float:
    """``int 2 pi r f(r) dr`` with the trapezoid rule run per branch segment.

    The gap holding a transition is charged the jump of ``psi`` across it
    (``psi`` is continuous there), capped by the larger neighbouring
    density times the gap width.  The disc inside the first radius is
    added at the first density value.
    """
    f = density_from_psi(fld, warn=False) if f is None else f
    r, psi = fld.r, fld.psi
    g = 2 * math.pi * r * f
    cuts = [0] + list(fld.transition_index) + [r.size]
    total = math.pi * r[0] ** 2 * f[0]
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b - a >= 2:
            total += np.trapezoid(g[a:b], r[a:b])
    for b in fld.transition_index:
        cap = max(g[b - 1], g[b], 0.0) * (r[b] - r[b - 1])
        total += min(max(psi[b] - psi[b - 1], 0.0), cap)
    return float(total)


# ---------------------------------------------------------------------------
# Monte Carlo check of the log-potential gradient


@dataclass(frozen=True)
class MonteCarloSpec:
    function: object  # ensembles.FunctionSpec
    law: object  # ensembles.EntryLaw
    trials: int
    seed: int
    step: float = 1e-3


@dataclass
class GradientCheck:
    predicted: float
    empirical: float
    residual: float
    trials_used: int
    discarded: int


def phi_gradient_check(sv: SVTransform, alpha: complex, mc: MonteCarloSpec) -> GradientCheck:
    """Compare ``d/du (1/n) sum log s_j(F - alpha)`` (central difference in the
    real part ``u``) against ``(u / |alpha|^2) psi(|alpha|)``."""
    from .ensembles import assemble, sample_tuple, shift, trial_seed
    from .spectra import LOG_FLOOR, singular_values

    a2 = abs(alpha) ** 2
    sol = limit_g0(sv, alpha)
    psi = -sol.wg0
    predicted = alpha.real / a2 * psi if isinstance(alpha, complex) else alpha / a2 * psi
    h = mc.step
    grads, bad = [], 0
    for t in range(mc.trials):
        f = assemble(mc.function, sample_tuple(mc.function, mc.law, trial_seed(mc.seed, t)))
        vals = []
        for da in (h, -h):
            s = singular_values(shift(f, alpha + da)).values
            if s[-1] < LOG_FLOOR:
                break
            vals.append(np.mean(np.log(s)))
        if len(vals) < 2:
            bad += 1
            continue
        grads.append((vals[0] - vals[1]) / (2 * h))
    if not grads:
        raise SingularityError("every trial hit a singular shift")
    emp = float(np.mean(grads))
    return GradientCheck(float(predicted), emp, abs(emp - predicted), len(grads), bad)
