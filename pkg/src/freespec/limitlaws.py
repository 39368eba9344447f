"""Limit laws for singular values and eigenvalues of matrix functions.

One-dimensional laws describe squared singular values (eigenvalues of
``F F*``); two-dimensional laws are rotation invariant eigenvalue laws
and are parametrized by the radius.

Laws defined by an algebraic equation (``fuss-catalan`` and
``product-rect-sv``) evaluate their Stieltjes transform by following a
root of the polynomial from ``Im z = 1e6`` down to the target, and
build a table of CDF knots once at construction.
"""
from __future__ import annotations

import math
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from . import series as ps
from .errors import BranchError, ConfigError, DivergenceError
from .freeprob import MomentSeries, TransformSeries
from . import solver

SV_KINDS = (
    "marchenko-pastur",
    "fuss-catalan",
    "product-rect-sv",
    "spherical-sv",
    "product-spherical-sv",
)
EV_KINDS = ("circular-ev", "product-ev", "product-rect-ev", "spherical-ev", "product-spherical-ev")
AUX_KINDS = ("semicircle", "point-mass", "symmetric-two-point")
KINDS = SV_KINDS + EV_KINDS + AUX_KINDS

_PARAMS = {
    "marchenko-pastur": {"y"},
    "fuss-catalan": {"m"},
    "product-rect-sv": {"ratios"},
    "spherical-sv": set(),
    "product-spherical-sv": {"m"},
    "circular-ev": set(),
    "product-ev": {"m"},
    "product-rect-ev": {"ratios"},
    "spherical-ev": set(),
    "product-spherical-ev": {"m"},
    "semicircle": {"variance"},
    "point-mass": {"a"},
    "symmetric-two-point": {"a"},
}

EDGE_EPS = 1e-12
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def _product_poly(ratios: Sequence[float], z: np.ndarray) -> np.ndarray:
    """Coefficients (ascending in ``s``) of ``1 + z s - s prod(1 - y - y z s)``."""
    z = np.asarray(z, dtype=complex).ravel()
    prod = np.ones((z.size, 1), dtype=complex)
    for y in ratios:
        a, b = 1.0 - y, -y * z
        nxt = np.zeros((z.size, prod.shape[1] + 1), dtype=complex)
        nxt[:, :-1] += a * prod
        nxt[:, 1:] += b[:, None] * prod
        prod = nxt
    deg = prod.shape[1]
    c = np.zeros((z.size, deg + 1), dtype=complex)
    c[:, 0] = 1.0
    c[:, 1] += z
    c[:, 1:] -= prod
    return c


def _poly_roots(c: np.ndarray) -> np.ndarray:
    """All roots of each row of ascending coefficients (batched companion)."""
    lead = c[:, -1]
    d = c.shape[1] - 1
    comp = np.zeros((c.shape[0], d, d), dtype=complex)
    comp[:, 1:, :-1] = np.eye(d - 1)
    comp[:, :, -1] = -c[:, :-1] / lead[:, None]
    return np.linalg.eigvals(comp)


def product_stieltjes(ratios: Sequence[float], z, y_start: float = 1e6, factor: float = 0.7):
    """Stieltjes transform ``s(z) = int 1/(x - z)`` of the product-rect law.

    Follows the root ``s ~ -1/z`` from ``Im z = y_start`` down to the
    target height at fixed real part, preferring roots with ``Im s >= 0``.
    Steps are halved in height above ``Im z = 1`` and shrink by
    ``factor`` below, where roots can come close to each other.
    """
    z = np.asarray(z, dtype=complex)
    shape = z.shape
    z = z.ravel()
    if np.any(z.imag <= 0):
        raise ConfigError("stieltjes_solve needs Im z > 0")
    target = z.imag
    cur = z.real + 1j * np.maximum(target, y_start)
    roots = _poly_roots(_product_poly(ratios, cur))
    s = roots[np.arange(z.size), np.argmin(np.abs(roots + 1.0 / cur[:, None]), axis=1)]
    h = y_start
    active = target < h
    while np.any(active):
        h = h * (0.5 if h > 1.0 else factor)
        idx = np.flatnonzero(active)
        step = z.real[idx] + 1j * np.maximum(target[idx], h)
        roots = _poly_roots(_product_poly(ratios, step))
        dist = np.abs(roots - s[idx, None])
        scale = np.maximum(np.abs(roots), 1.0)
        dist = np.where(roots.imag < -1e-9 * scale, dist + 1e3 * scale, dist)
        s[idx] = roots[np.arange(idx.size), np.argmin(dist, axis=1)]
        active[idx] = target[idx] < h
    if np.any(s.imag < -1e-8 * np.maximum(1, np.abs(s))):
        raise BranchError("continuation reached a root with Im s < 0")
    return s.reshape(shape)


def _narayana(k: int, y):
    return sum(Fraction(math.comb(k, j) * math.comb(k - 1, j), j + 1) * y**j for j in range(k))


def fuss_catalan_number(m: int, k: int) -> int:
    return math.comb((m + 1) * k, k) // (m * k + 1)


class LimitLaw:
    """A named limit law; construct as ``LimitLaw("fuss-catalan", m=2)``."""

    def __init__(self, kind: str, **params):
        if kind not in KINDS:
            raise ConfigError("unknown law %r; catalog: %s" % (kind, ", ".join(KINDS)))
        extra = set(params) - _PARAMS[kind]
        missing = _PARAMS[kind] - set(params)
        if extra or missing:
            raise ConfigError(
                "law %s takes parameters %s, got %s" % (kind, sorted(_PARAMS[kind]), sorted(params))
            )
        self.kind = kind
        self.params = dict(params)
        self._validate()
        self._knots = None
        if kind in ("marchenko-pastur", "fuss-catalan", "product-rect-sv"):
            self._build_knots()

    # -- construction -----------------------------------------------------

    def _validate(self):
        p = self.params
        if "m" in p:
            if int(p["m"]) != p["m"] or p["m"] < 1:
                raise ConfigError("m must be a positive integer")
            p["m"] = int(p["m"])
        if "y" in p and not 0 < p["y"] <= 1:
            raise ConfigError("y must lie in (0, 1]")
        if "ratios" in p:
            r = tuple(float(y) for y in p["ratios"])
            if not r or any(not 0 < y <= 1 for y in r):
                raise ConfigError("ratios must be non-empty and lie in (0, 1]")
            if self.kind == "product-rect-ev" and r[-1] != 1.0:
                raise ConfigError("the last ratio of a square product must be 1")
            p["ratios"] = r
        if "variance" in p and not p["variance"] > 0:
            raise ConfigError("variance must be positive")
        if self.kind == "symmetric-two-point" and not p["a"] > 0:
            raise ConfigError("a must be positive")

    @property
    def ratios(self) -> tuple:
        k = self.kind
        if k == "marchenko-pastur":
            return (float(self.params["y"]),)
        if k == "fuss-catalan":
            return (1.0,) * self.params["m"]
        return self.params["ratios"]

    @property
    def dim(self) -> int:
        return 2 if self.kind in EV_KINDS else 1

    @property
    def is_radial(self) -> bool:
        return self.dim == 2

    def __repr__(self):
        args = ", ".join("%s=%r" % kv for kv in sorted(self.params.items()))
        return "LimitLaw(%r%s)" % (self.kind, ", " + args if args else "")

    @property
    def label(self) -> str:
        if not self.params:
            return self.kind
        return "%s(%s)" % (
            self.kind,
            ",".join("%s=%s" % (k, v) for k, v in sorted(self.params.items())),
        )

    # -- support ----------------------------------------------------------

    def support(self) -> tuple:
        k = self.kind
        if k == "marchenko-pastur":
            y = self.params["y"]
            return ((1 - math.sqrt(y)) ** 2, (1 + math.sqrt(y)) ** 2)
        if k == "fuss-catalan":
            m = self.params["m"]
            return (0.0, (m + 1) ** (m + 1) / m**m)
        if k == "product-rect-sv":
            return self._edges
        if k in ("spherical-sv", "product-spherical-sv"):
            return (0.0, math.inf)
        if k == "semicircle":
            r = 2 * math.sqrt(self.params["variance"])
            return (-r, r)
        if k == "point-mass":
            return (self.params["a"], self.params["a"])
        if k == "symmetric-two-point":
            return (-self.params["a"], self.params["a"])
        if k in ("circular-ev", "product-ev", "product-rect-ev"):
            return (0.0, 1.0)
        return (0.0, math.inf)

    def _find_edges(self):
        bound = float(np.prod([(1 + math.sqrt(y)) ** 2 for y in self.ratios]))
        xs = np.linspace(0, bound, 4001)[1:]
        d = self._poly_density(xs)
        pos = np.flatnonzero(d > 1e-6)
        if pos.size == 0:
            raise BranchError("could not locate the support")

        def bisect(lo, hi, inside_hi):
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                inside = self._poly_density(np.array([mid]))[0] > 1e-9
                if inside == inside_hi:
                    hi = mid
                else:
                    lo = mid
            return 0.5 * (lo + hi)

        i0, i1 = pos[0], pos[-1]
        a = 0.0 if i0 == 0 else bisect(xs[i0 - 1], xs[i0], True)
        b = bisect(xs[i1], xs[i1 + 1] if i1 + 1 < xs.size else bound, False)
        if a < 1e-10 * b:
            a = 0.0
        return (a, b)

    # -- density ----------------------------------------------------------

    def _poly_density(self, x, cut: float = EDGE_EPS):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        ok = x > cut
        if np.any(ok):
            xi = x[ok]
            s = product_stieltjes(self.ratios, xi * (1 + 1e-10j))
            out[ok] = np.maximum(s.imag, 0.0) / math.pi
        return out

    def density(self, x):
        """Density at ``x`` (1-D laws) or at radius ``x`` (2-D laws)."""
        x = np.asarray(x, dtype=float)
        k, p = self.kind, self.params
        with np.errstate(divide="ignore", invalid="ignore"):
            if k == "marchenko-pastur":
                y = p["y"]
                a, b = self.support()
                val = np.sqrt(np.maximum((x - a) * (b - x), 0.0)) / (2 * math.pi * x * y)
                return np.where((x > max(a, EDGE_EPS)) & (x < b), val, 0.0)
            if k in ("fuss-catalan", "product-rect-sv"):
                a, b = self.support()
                return np.where((x > a) & (x < b), self._poly_density(np.clip(x, a, b)), 0.0)
            if k == "spherical-sv":
                val = 1.0 / (math.pi * np.sqrt(x) * (1 + x))
                return np.where(x > EDGE_EPS, val, 0.0)
            if k == "product-spherical-sv":
                m = p["m"]
                ang = math.pi * m / (m + 1)
                u = np.power(np.maximum(x, 0.0), 1.0 / (m + 1))
                val = math.sin(ang) / (math.pi * np.power(x, m / (m + 1)) * (u * u - 2 * u * math.cos(ang) + 1))
                return np.where(x > EDGE_EPS, val, 0.0)
            if k == "semicircle":
                v = p["variance"]
                return np.sqrt(np.maximum(4 * v - x * x, 0.0)) / (2 * math.pi * v)
            if k in ("point-mass", "symmetric-two-point"):
                raise ConfigError("%s has no density" % k)
            return self._radial_density(x)

    def _radial_density(self, r):
        k, p = self.kind, self.params
        inside = (r >= 0) & (r <= 1)
        if k == "circular-ev":
            return np.where(inside, 1 / math.pi, 0.0)
        if k == "product-ev":
            m = p["m"]
            return np.where(inside & (r > 0), 1.0 / (m * math.pi * np.power(r, 2 * (m - 1) / m)), 0.0)
        if k == "spherical-ev":
            return 1.0 / (math.pi * (1 + r * r) ** 2)
        if k == "product-spherical-ev":
            m = p["m"]
            t = np.power(r, 2.0 / m)
            val = 1.0 / (math.pi * m * np.power(r, 2 * (m - 1) / m) * (1 + t) ** 2)
            return np.where(r > 0, val, 0.0)
        # product-rect-ev: implicit differentiation of h(psi) = r^2
        psi = self._rect_psi(np.minimum(r, 1.0))
        return np.where(inside & (r > 0), 1.0 / (math.pi * self._rect_dh(psi)), 0.0)

    def _rect_h(self, psi):
        out = psi
        for y in self.params["ratios"][:-1]:
            out = out * (1 - y + y * psi)
        return out

    def _rect_dh(self, psi):
        ys = self.params["ratios"][:-1]
        total = np.zeros_like(psi)
        for j in range(len(ys) + 1):
            term = np.ones_like(psi)
            for i, y in enumerate(ys):
                term = term * (y if j == i + 1 else (1 - y + y * psi))
            if j != 0:
                term = term * psi
            total = total + term
        return total

    def _rect_psi(self, r):
        target = np.asarray(r, dtype=float) ** 2
        lo, hi = np.zeros_like(target), np.ones_like(target)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            below = self._rect_h(mid) < target
            lo, hi = np.where(below, mid, lo), np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    # -- cdf --------------------------------------------------------------

    def _map(self):
        a, b = self.support()
        if a == 0.0:
            p = 1 + sum(1 for y in self.ratios if y == 1.0)
        else:
            p = 1
        return a, b, p

    def _build_knots(self, panels: int = 256):
        if self.kind == "product-rect-sv":
            self._edges = self._find_edges()
        a, b, p = self._map()
        edges = np.linspace(0.0, 1.0, panels + 1)
        mids = 0.5 * (edges[:-1] + edges[1:])
        half = 0.5 / panels
        t = (mids[:, None] + half * _GL_NODES[None, :]).ravel()
        u = np.sin(0.5 * math.pi * t) ** 2
        du = 0.5 * math.pi * np.sin(math.pi * t)
        x = a + (b - a) * u**p
        dx = (b - a) * p * u ** (p - 1) * du
        dens = self._density_1d_raw(x)
        vals = (dens * dx).reshape(panels, -1) @ (_GL_WEIGHTS * half)
        cum = np.concatenate([[0.0], np.cumsum(vals)])
        self._mass = float(cum[-1])
        # slopes are the integrand itself; nudge the end knots off the edges
        tk = np.clip(edges, 1e-9, 1 - 1e-9)
        uk = np.sin(0.5 * math.pi * tk) ** 2
        xk = a + (b - a) * uk**p
        dxk = (b - a) * p * uk ** (p - 1) * 0.5 * math.pi * np.sin(math.pi * tk)
        slope = np.nan_to_num(self._density_1d_raw(xk) * dxk, nan=0.0, posinf=0.0)
        self._knots = CubicHermiteSpline(edges, cum / cum[-1], slope / cum[-1])

    def _density_1d_raw(self, x):
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.kind == "marchenko-pastur":
                y = self.params["y"]
                a, b = self.support()
                val = np.sqrt(np.maximum((x - a) * (b - x), 0.0)) / (2 * math.pi * x * y)
                return np.where(x > 0, val, 0.0)
            return self._poly_density(x, cut=0.0)

    def cdf(self, x):
        """CDF (1-D laws) or radial CDF ``P(|lambda| <= x)`` (2-D laws)."""
        x = np.asarray(x, dtype=float)
        k, p = self.kind, self.params
        if self._knots is not None:
            a, b, pw = self._map()
            u = np.power(np.clip((x - a) / (b - a), 0.0, 1.0), 1.0 / pw)
            t = (2 / math.pi) * np.arcsin(np.sqrt(u))
            return np.clip(self._knots(t), 0.0, 1.0)
        if k == "spherical-sv":
            return (2 / math.pi) * np.arctan(np.sqrt(np.maximum(x, 0.0)))
        if k == "product-spherical-sv":
            m = p["m"]
            ang = math.pi * m / (m + 1)
            c, s = math.cos(ang), math.sin(ang)
            u = np.power(np.maximum(x, 0.0), 1.0 / (m + 1))
            return (m + 1) / math.pi * (np.arctan((u - c) / s) - math.atan(-c / s))
        if k == "semicircle":
            v = p["variance"]
            t = np.clip(x / (2 * math.sqrt(v)), -1.0, 1.0)
            return 0.5 + (t * np.sqrt(1 - t * t) + np.arcsin(t)) / math.pi
        if k == "point-mass":
            return np.where(x >= p["a"], 1.0, 0.0)
        if k == "symmetric-two-point":
            return np.where(x >= p["a"], 1.0, np.where(x >= -p["a"], 0.5, 0.0))
        return self.radial_cdf(x)

    @property
    def mass(self) -> float:
        """Raw quadrature mass of the knot table (1-D equation-defined laws)."""
        return getattr(self, "_mass", 1.0)

    def radial_cdf(self, r):
        if self.dim != 2:
            raise ConfigError("radial CDF needs a 2-D law")
        r = np.maximum(np.asarray(r, dtype=float), 0.0)
        k, p = self.kind, self.params
        if k == "circular-ev":
            return np.minimum(r * r, 1.0)
        if k == "product-ev":
            return np.minimum(np.power(r, 2.0 / p["m"]), 1.0)
        if k == "product-rect-ev":
            return np.where(r >= 1.0, 1.0, self._rect_psi(np.minimum(r, 1.0)))
        if k == "spherical-ev":
            return r * r / (1 + r * r)
        t = np.power(r, 2.0 / p["m"])
        return t / (1 + t)

    # -- moments ----------------------------------------------------------

    def moments(self, k: int) -> list:
        kind, p = self.kind, self.params
        if k < 1:
            raise ConfigError("need k >= 1")
        if kind == "fuss-catalan":
            return [fuss_catalan_number(p["m"], j) for j in range(1, k + 1)]
        if kind == "marchenko-pastur":
            y = p["y"]
            y = Fraction(y) if isinstance(y, int) else y
            out = [_narayana(j, y) for j in range(1, k + 1)]
            return [int(v) if isinstance(v, Fraction) and v.denominator == 1 else v for v in out]
        if kind == "product-rect-sv":
            return list(_moments_from_s(self.s_series(k - 1)).moments)
        if kind in ("spherical-sv", "product-spherical-sv"):
            raise DivergenceError("%s has no finite moment of order >= 1" % kind, order=1)
        if kind == "semicircle":
            v = p["variance"]
            return [0 if j % 2 else math.comb(j, j // 2) // (j // 2 + 1) * v ** (j // 2) for j in range(1, k + 1)]
        if kind == "point-mass":
            return [p["a"] ** j for j in range(1, k + 1)]
        if kind == "symmetric-two-point":
            return [0 if j % 2 else p["a"] ** j for j in range(1, k + 1)]
        raise ConfigError("moments are defined for 1-D laws only")

    # -- transforms -------------------------------------------------------

    def stieltjes(self, z):
        """``s(z) = int dmu(x) / (x - z)`` for ``Im z > 0``."""
        z = np.asarray(z, dtype=complex)
        if self.kind in ("marchenko-pastur", "fuss-catalan", "product-rect-sv"):
            return product_stieltjes(self.ratios, z)
        return -self.cauchy(z)

    def cauchy(self, z):
        """``G(z) = int dmu(x) / (z - x)``."""
        z = np.asarray(z, dtype=complex)
        k, p = self.kind, self.params
        if k == "semicircle":
            r = 2 * math.sqrt(p["variance"])
            return (z - np.sqrt(z - r) * np.sqrt(z + r)) / (2 * p["variance"])
        if k == "point-mass":
            return 1.0 / (z - p["a"])
        if k == "symmetric-two-point":
            return z / (z * z - p["a"] ** 2)
        if k in ("marchenko-pastur", "fuss-catalan", "product-rect-sv"):
            up = z.imag > 0
            zz = np.where(up, z, np.conj(z))
            s = product_stieltjes(self.ratios, zz)
            return -np.where(up, s, np.conj(s))
        raise ConfigError("no Cauchy transform for %s" % k)

    def s_transform(self):
        """Closed-form ``S`` (1-D laws) or the solver input ``S_V`` (2-D laws)."""
        k, p = self.kind, self.params
        if k in ("marchenko-pastur", "fuss-catalan", "product-rect-sv"):
            ys = self.ratios

            def s(z):
                z = np.asarray(z, dtype=complex)
                out = np.ones_like(z)
                for y in ys:
                    out = out / (1 + y * z)
                return out

            return s
        if k == "spherical-sv":
            return lambda z: -np.asarray(z, dtype=complex) / (np.asarray(z, dtype=complex) + 1)
        if k == "product-spherical-sv":
            m = p["m"]
            return lambda z: (-np.asarray(z, dtype=complex) / (np.asarray(z, dtype=complex) + 1)) ** m
        if k == "circular-ev":
            return solver.circular_sv()
        if k == "product-ev":
            return solver.product_sv(p["m"])
        if k == "product-rect-ev":
            return solver.rect_product_sv(p["ratios"][:-1])
        if k == "spherical-ev":
            return solver.spherical_sv()
        if k == "product-spherical-ev":
            return solver.product_spherical_sv(p["m"])
        raise ConfigError("no S-transform for %s" % k)

    def s_series(self, order: int) -> TransformSeries:
        """Taylor coefficients of ``S = prod 1/(1 + y z)`` (exact for unit ratios)."""
        if self.kind not in ("marchenko-pastur", "fuss-catalan", "product-rect-sv"):
            raise ConfigError("series S-transform only for compactly supported 1-D laws")
        out = [1] + [0] * order
        for y in self.ratios:
            y = 1 if y == 1.0 else y
            out = ps.mul(out, ps.inv([1, y], order), order)
        return TransformSeries("S", tuple(out), "z", 0)


def _moments_from_s(ts):
    from .freeprob import moments_from_s

    return moments_from_s(ts)


def product_of_powers(powers: Sequence[int]) -> LimitLaw:
    """Squared singular values of ``prod X_q^{m_q}``: the Fuss-Catalan law of order ``sum m_q``."""
    return LimitLaw("fuss-catalan", m=int(sum(powers)))


def from_config(d: dict) -> LimitLaw:
    if not isinstance(d, dict) or "kind" not in d:
        raise ConfigError("law must be an object with a 'kind' field")
    params = {k: v for k, v in d.items() if k != "kind"}
    return LimitLaw(d["kind"], **params)


def density(law: LimitLaw, x):
    return law.density(x)


def cdf(law: LimitLaw, x):
    return law.cdf(x)


def moments(law: LimitLaw, k: int) -> MomentSeries:
    return MomentSeries(tuple(law.moments(k)))


def stieltjes_solve(law: LimitLaw, z):
    if law.kind not in ("marchenko-pastur", "fuss-catalan", "product-rect-sv"):
        raise ConfigError("stieltjes_solve applies to equation-defined singular-value laws")
    return law.stieltjes(z)


def s_transform_of(law: LimitLaw):
    return law.s_transform()
