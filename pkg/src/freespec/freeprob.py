"""Free-probability transforms on truncated moment series.

Conventions (``m_k`` are the moments of the measure):

* ``M(z) = sum_{k>=1} m_k z^k`` and ``G(z) = (1 + M(1/z)) / z``.
* ``R(z) = G^{-1}(z) - 1/z``; its coefficients are the free cumulants
  shifted by one, ``R(z) = sum_k kappa_{k+1} z^k``.  ``Rtilde = z R``.
* ``S(z) = ((1 + z)/z) M^{-1}(z)`` when ``m_1 != 0``.
* For a symmetric measure ``S`` is a series in ``w = sqrt(z)`` with the
  branch ``Im w >= 0`` off the positive axis, and ``z S(z)`` is the
  inverse of ``Rtilde`` on the branch with non-positive imaginary part.

Series built from exact moments (``int`` or ``Fraction``) stay exact
wherever no square root is involved.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import series as ps
from .errors import BranchError, ConfigError, ConvergenceError

GRADINGS = ("z", "sqrt_z")


@dataclass(frozen=True)
class MomentSeries:
    """Moments ``m_1 .. m_K`` of a compactly supported law."""

    moments: tuple

    def __post_init__(self):
        m = tuple(self.moments)
        if not m:
            raise ConfigError("need at least one moment")
        object.__setattr__(self, "moments", m)

    @property
    def order(self) -> int:
        return len(self.moments)

    @property
    def is_symmetric(self) -> bool:
        return all(self.moments[k] == 0 for k in range(0, self.order, 2))

    def hankel_ok(self, tol: float = 1e-9) -> bool:
        """Positive semi-definiteness of the moment Hankel matrix."""
        m = [1.0] + [float(x) for x in self.moments]
        d = (len(m) + 1) // 2
        if d == 0:
            return True
        h = np.array([[m[i + j] for j in range(d)] for i in range(d)])
        ev = np.linalg.eigvalsh(h)
        return bool(ev.min() >= -tol * max(1.0, abs(ev).max()))

    def series(self) -> list:
        """``M`` as a coefficient list starting at ``z**0``."""
        return [self.moments[0] * 0] + list(self.moments)


@dataclass(frozen=True)
class TransformSeries:
    """``sum_j coeffs[j] * v**(valuation + j)`` with ``v = z`` or ``v = sqrt(z)``."""

    kind: str
    coeffs: tuple
    grading: str = "z"
    valuation: int = 0
    branch: str = "upper"

    def __post_init__(self):
        if self.grading not in GRADINGS:
            raise ConfigError("grading must be 'z' or 'sqrt_z'")
        object.__setattr__(self, "coeffs", tuple(self.coeffs))

    def variable(self, z):
        z = np.asarray(z, dtype=complex)
        if self.grading == "z":
            return z
        return branch_sqrt(z)

    def __call__(self, z):
        v = self.variable(z)
        return ps.evaluate(list(self.coeffs), v) * v**self.valuation

    def as_sqrt_grading(self) -> TransformSeries:
        if self.grading == "sqrt_z":
            return self
        c = []
        for x in self.coeffs:
            c.extend([x, x * 0])
        return TransformSeries(self.kind, tuple(c[:-1]), "sqrt_z", 2 * self.valuation, self.branch)

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": self.kind,
                "coefficients": [[complex(c).real, complex(c).imag] for c in self.coeffs],
                "grading": self.grading,
                "valuation": self.valuation,
                "branch": self.branch,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> TransformSeries:
        d = json.loads(text)
        unknown = set(d) - {"kind", "coefficients", "grading", "valuation", "branch"}
        if unknown:
            raise ConfigError("unknown fields %s" % sorted(unknown))
        cs = []
        for re, im in d["coefficients"]:
            cs.append(complex(re, im) if im else float(re))
        return cls(d["kind"], tuple(cs), d.get("grading", "z"), int(d.get("valuation", 0)), d.get("branch", "upper"))


def branch_sqrt(z):
    """Square root with ``Im >= 0`` off the positive real axis."""
    return 1j * np.sqrt(-np.asarray(z, dtype=complex))


def _moment_list(m) -> list:
    if isinstance(m, MomentSeries):
        return list(m.moments)
    return list(m)


def rtilde(moments) -> TransformSeries:
    """``Rtilde(z) = sum_{k>=1} kappa_k z^k`` from the moments.

    With ``u = z (1 + M(z))`` one has ``1 + Rtilde(u) = 1 + M(z)``, so the
    answer is ``M`` composed with the inverse of ``u``.
    """
    m = _moment_list(moments)
    k = len(m)
    mhat = [m[0] * 0 + 1] + m
    u = ps.shift_up(mhat)[: k + 1]
    zu = ps.revert(u, k)
    r = ps.compose(mhat, zu, k)
    r[0] = r[0] * 0
    return TransformSeries("Rtilde", tuple(r[1:]), "z", 1)


def r_transform(moments) -> TransformSeries:
    rt = rtilde(moments)
    return TransformSeries("R", rt.coeffs, "z", 0)


def moments_from_rtilde(rt: TransformSeries) -> MomentSeries:
    """Inverse of :func:`rtilde`: ``u = z (1 + Rtilde(u))`` solved for ``u``."""
    if rt.grading != "z":
        raise ConfigError("Rtilde must be z-graded")
    c = _lower(rt)
    k = len(c) - 1
    chat = [c[1] * 0 + 1] + c[1:]
    g = ps.shift_up(ps.inv(chat, k))  # u / (1 + Rtilde(u))
    u = ps.revert(g, k + 1)
    return MomentSeries(tuple(ps.shift_down(u)[1:]))


def moments_from_r(r: TransformSeries) -> MomentSeries:
    return moments_from_rtilde(TransformSeries("Rtilde", r.coeffs, "z", 1))


def _lower(ts: TransformSeries) -> list:
    """Coefficient list indexed by absolute power (valuation >= 0)."""
    if ts.valuation < 0:
        raise ConfigError("series has a pole")
    return [ts.coeffs[0] * 0] * ts.valuation + list(ts.coeffs)


def s_transform(moments) -> TransformSeries:
    """``S(z) = (1 + z) * M^{-1}(z) / z``; needs ``m_1 != 0``."""
    m = _moment_list(moments)
    if m[0] == 0:
        raise BranchError("S-transform needs a non-zero mean; use symmetric_s")
    k = len(m)
    minv = ps.revert([m[0] * 0] + m, k)
    q = ps.shift_down(minv)  # M^{-1}(z)/z, order k-1
    s = ps.mul([q[0] ** 0, q[0] ** 0], q, k - 1)
    return TransformSeries("S", tuple(s), "z", 0)


def moments_from_s(s: TransformSeries) -> MomentSeries:
    """Invert :func:`s_transform`: ``M^{-1}(z) = z S(z) / (1 + z)``."""
    if s.grading != "z" or s.valuation != 0:
        raise ConfigError("moment reconstruction needs a z-graded S series")
    c = list(s.coeffs)
    k = len(c)
    one = c[0] ** 0
    q = ps.mul(c, ps.inv([one, one], k - 1), k - 1)
    minv = ps.shift_up(q)
    m = ps.revert(minv, k)
    return MomentSeries(tuple(m[1:]))


def push_square(moments) -> MomentSeries:
    """Moments of the image law under ``x -> x**2``."""
    m = _moment_list(moments)
    return MomentSeries(tuple(m[1::2]))


def symmetric_s(moments) -> TransformSeries:
    """S-transform of a symmetric law, graded in ``w = sqrt(z)``.

    ``S(z) = -(1/w) * sqrt((1 + z) S_Q(z))`` where ``Q`` is the square
    push-forward; the sign makes ``Im S >= 0`` on ``(-1, 0)``.
    """
    ms = MomentSeries(tuple(_moment_list(moments)))
    if not ms.is_symmetric:
        raise ConfigError("symmetric_s needs vanishing odd moments")
    q = push_square(ms)
    if q.order < 1 or q.moments[0] <= 0:
        raise BranchError("symmetric law must have positive variance")
    sq = s_transform(q)
    k = len(sq.coeffs) - 1
    a = ps.mul([1.0, 1.0], [float(c) for c in sq.coeffs], k)
    b = ps.sqrt(a, k)
    c = []
    for x in b:
        c.extend([-x, 0.0])
    return TransformSeries("S", tuple(c[:-1]), "sqrt_z", -1)


def _rtilde_inverse_symmetric(rt: TransformSeries) -> TransformSeries:
    """``Rtilde^{-1}`` as a series in ``w``, leading term ``-w / sqrt(kappa_2)``."""
    c = _lower(rt)
    k = len(c) - 1
    if c[1] != 0:
        raise ConfigError("not a centred law")
    if float(c[2]) <= 0:
        raise BranchError("variance must be positive")
    # Rtilde(u) = u^2 h(u) and phi(u) = u sqrt(h(u)), so Rtilde = phi^2.
    h = [float(x) for x in c[2:]]
    phi = ps.shift_up(ps.sqrt(h, k - 2))
    inv_phi = ps.revert(phi, k - 1)
    out = [x * (-1) ** j for j, x in enumerate(inv_phi)]
    return TransformSeries("Rtilde_inv", tuple(out[1:]), "sqrt_z", 1)


def nica_residual(moments) -> float:
    """Coefficient mismatch between ``z S(z)`` and ``Rtilde^{-1}(z)``."""
    ms = MomentSeries(tuple(_moment_list(moments)))
    rt = rtilde(ms)
    if ms.is_symmetric:
        s = symmetric_s(ms)
        lhs = list(s.coeffs)  # z S = w^2 S, valuation 1
        rhs = list(_rtilde_inverse_symmetric(rt).coeffs)
    else:
        s = s_transform(ms)
        lhs = list(s.coeffs)  # valuation 1 after multiplying by z
        rhs = ps.revert(_lower(rt), len(_lower(rt)) - 1)[1:]
    n = min(len(lhs), len(rhs))
    return max(
        abs(complex(a) - complex(b)) / max(1.0, abs(complex(b))) for a, b in zip(lhs[:n], rhs[:n])
    )


def roundtrip_residuals(moments) -> dict:
    """Relative coefficient errors of ``M -> R -> M`` and ``M -> S -> M``."""
    m = _moment_list(moments)

    def rel(a, b):
        return max(abs(float(x) - float(y)) / max(1.0, abs(float(y))) for x, y in zip(a, b))

    out = {"R": rel(moments_from_rtilde(rtilde(m)).moments, m)}
    if m[0] != 0:
        out["S"] = rel(moments_from_s(s_transform(m)).moments, m)
    return out


def free_mult_s(s_mu: TransformSeries, s_nu: TransformSeries) -> TransformSeries:
    """``S_mu * S_nu`` truncated to the shorter input."""
    a, b = s_mu, s_nu
    if a.grading != b.grading:
        a, b = a.as_sqrt_grading(), b.as_sqrt_grading()
    n = min(len(a.coeffs), len(b.coeffs))
    c = ps.mul(list(a.coeffs), list(b.coeffs), n - 1)
    return TransformSeries("S", tuple(c), a.grading, a.valuation + b.valuation)


def rectangular_compose(s_mu: TransformSeries, s_nu: TransformSeries, y: float) -> TransformSeries:
    """``S_mu(z) * S_nu(y z)`` for rectangular (aspect ratio ``y``) products."""
    if not 0 < y <= 1:
        raise ConfigError("aspect ratio must lie in (0, 1]")
    if s_nu.grading == "z":
        scaled = [c * y**j for j, c in enumerate(s_nu.coeffs, start=s_nu.valuation)]
    else:
        r = y**0.5
        scaled = [c * r**j for j, c in enumerate(s_nu.coeffs, start=s_nu.valuation)]
    nu = TransformSeries("S", tuple(scaled), s_nu.grading, s_nu.valuation)
    return free_mult_s(s_mu, nu)


@dataclass(frozen=True)
class ShiftTransforms:
    """Closed-form transforms of ``(delta_a + delta_{-a}) / 2``, ``a = |alpha|``."""

    a: float

    def M(self, z):
        a2z2 = self.a**2 * np.asarray(z, dtype=complex) ** 2
        return a2z2 / (1 - a2z2)

    def G(self, z):
        z = np.asarray(z, dtype=complex)
        return z / (z * z - self.a**2)

    def Rtilde(self, z, sign=1):
        z = np.asarray(z, dtype=complex)
        return (-1 + sign * np.sqrt(1 + 4 * self.a**2 * z * z)) / 2

    def R(self, z, sign=1):
        return self.Rtilde(z, sign) / np.asarray(z, dtype=complex)

    def S(self, z):
        z = np.asarray(z, dtype=complex)
        return branch_sqrt_ratio(z) / self.a

    def moments(self, k: int) -> list:
        return [0.0 if j % 2 else self.a**j for j in range(1, k + 1)]


def branch_sqrt_ratio(z):
    """``sqrt((1 + z)/z)`` with ``Im >= 0`` on ``(-1, 0)``."""
    w = np.sqrt((1 + z) / z + 0j)
    return np.where(w.imag < 0, -w, w)


def t_alpha_transforms(alpha: complex) -> ShiftTransforms:
    a = abs(alpha)
    if a == 0:
        raise ConfigError("alpha must be non-zero")
    return ShiftTransforms(a)


@dataclass(frozen=True)
class GridMeasure:
    """Density samples on an increasing grid."""

    x: np.ndarray
    density: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        d = np.asarray(self.density, dtype=float)
        if x.ndim != 1 or x.shape != d.shape or x.size < 2 or np.any(np.diff(x) <= 0):
            raise ConfigError("grid must be increasing and match the density")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "density", d)

    @property
    def mass(self) -> float:
        return float(np.trapezoid(self.density, self.x))

    def moments(self, k: int) -> list:
        return [float(np.trapezoid(self.x**j * self.density, self.x)) for j in range(1, k + 1)]

    def cauchy(self, z):
        z = np.asarray(z, dtype=complex)
        vals = self.density[:, None] / (z.ravel()[None, :] - self.x[:, None])
        return np.trapezoid(vals, self.x, axis=0).reshape(z.shape)


def moments_of(measure, k: int) -> MomentSeries:
    if k < 1:
        raise ConfigError("need k >= 1")
    return MomentSeries(tuple(measure.moments(k)))


def _cauchy_of(measure) -> Callable:
    if hasattr(measure, "cauchy"):
        return measure.cauchy
    if hasattr(measure, "points"):
        pts = np.asarray(measure.points)
        return lambda z: np.mean(1.0 / (np.asarray(z)[..., None] - pts), axis=-1)
    raise ConfigError("measure has no Cauchy transform")


def free_add(
    mu,
    nu,
    grid: Sequence[float],
    eta: float = 1e-3,
    damping: float = 0.5,
    tol: float = 1e-12,
    max_iter: int = 10_000,
) -> GridMeasure:
    """Density of ``mu (+) nu`` on ``grid`` via subordination at height ``eta``.

    Iterates ``w <- z + h_nu(z + h_mu(w))`` with ``h(w) = 1/G(w) - w``
    (damped), then reads the density off ``-Im G_mu(w) / pi``.
    """
    if eta <= 0:
        raise ConfigError("eta must be positive")
    g_mu, g_nu = _cauchy_of(mu), _cauchy_of(nu)
    x = np.asarray(grid, dtype=float)
    z = x + 1j * eta

    def h(g, w):
        return 1.0 / g(w) - w

    w = z + 1j
    for it in range(1, max_iter + 1):
        w2 = z + h(g_mu, w)
        target = z + h(g_nu, w2)
        target = np.where(target.imag < z.imag, target.real + 1j * z.imag, target)
        new = (1 - damping) * w + damping * target
        step = np.max(np.abs(new - w))
        w = new
        if not np.all(np.isfinite(w)):
            raise ConvergenceError("subordination iterate is not finite", it)
        if step < tol:
            break
    else:
        raise ConvergenceError("subordination did not converge", max_iter, step)
    dens = -np.imag(g_mu(w)) / np.pi
    return GridMeasure(x, dens)


__all__ = [
    "MomentSeries",
    "TransformSeries",
    "GridMeasure",
    "ShiftTransforms",
    "branch_sqrt",
    "rtilde",
    "r_transform",
    "s_transform",
    "symmetric_s",
    "moments_from_r",
    "moments_from_rtilde",
    "moments_from_s",
    "push_square",
    "nica_residual",
    "roundtrip_residuals",
    "free_mult_s",
    "rectangular_compose",
    "t_alpha_transforms",
    "free_add",
    "moments_of",
]
