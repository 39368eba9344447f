"""Goodness-of-fit statistics between spectra and limit laws."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, DivergenceError
from .spectra import ComplexSpectrum, EmpiricalMeasure

KS_COEFF = 1.63  # two-sample Kolmogorov-Smirnov, level 0.01


@dataclass(frozen=True)
class GoFReport:
    statistic: str
    value: float
    threshold: float | None
    passed: bool | None
    n: int
    law: str
    convention: str
    seed: int | None = None

    def to_json(self) -> str:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return json.dumps(d, sort_keys=True)


def _cdf_of(law) -> Callable:
    if callable(law) and not hasattr(law, "cdf"):
        return law
    return law.cdf


def _points(emp) -> np.ndarray:
    if isinstance(emp, EmpiricalMeasure):
        return emp.points
    return np.sort(np.asarray(emp, dtype=float).ravel())


def ks_distance(emp, law) -> float:
    """``sup_x |F_emp(x) - F(x)|`` against a continuous CDF or a second sample."""
    x = _points(emp)
    if x.size == 0:
        raise ConfigError("empty sample")
    n = x.size
    if isinstance(law, EmpiricalMeasure):
        y = law.points
        grid = np.concatenate([x, y])
        fx = np.searchsorted(x, grid, side="right") / n
        fy = np.searchsorted(y, grid, side="right") / y.size
        return float(np.max(np.abs(fx - fy)))
    u, first = np.unique(x, return_index=True)
    last = np.searchsorted(x, u, side="right")
    g = np.asarray(_cdf_of(law)(u), dtype=float)
    upper = last / n - g
    lower = g - first / n
    return float(max(upper.max(), lower.max()))


def two_sample_ks(a, b) -> float:
    return ks_distance(EmpiricalMeasure(_points(a)), EmpiricalMeasure(_points(b)))


def _step(points: np.ndarray):
    n = points.size

    def right(t):
        return np.searchsorted(points, t, side="right") / n

    def left(t):
        return np.searchsorted(points, t, side="left") / n

    return right, left


def levy_distance(emp, other, tol: float = 1e-6) -> float:
    """Lévy distance by bisection on ``eps``.

    ``F`` is the empirical CDF; ``G`` is a continuous CDF or another
    empirical CDF.  The defining inequalities
    ``F(x - eps) - eps <= G(x) <= F(x + eps) + eps`` only need checking
    at points where one of the step functions jumps, using one-sided
    limits there.
    """
    x = _points(emp)
    f_r, f_l = _step(x)
    if isinstance(other, EmpiricalMeasure):
        y = other.points
        g_r, g_l = _step(y)
    else:
        y = np.empty(0)
        cdf = _cdf_of(other)

        def g_r(t):
            return np.asarray(cdf(t), dtype=float)

        g_l = g_r

    def ok(eps: float) -> bool:
        pts = np.concatenate([x + eps, x - eps, y])
        # G(t) >= F(t - eps) - eps, tested on both sides of every jump
        if np.any(g_r(pts) < f_r(pts - eps) - eps - 1e-15):
            return False
        if np.any(g_l(pts) < f_l(pts - eps) - eps - 1e-15):
            return False
        # G(t) <= F(t + eps) + eps
        if np.any(g_r(pts) > f_r(pts + eps) + eps + 1e-15):
            return False
        if np.any(g_l(pts) > f_l(pts + eps) + eps + 1e-15):
            return False
        return True

    lo, hi = 0.0, 1.0
    if ok(0.0):
        return 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def radial_ks(spectrum, law) -> float:
    """KS distance between ``|lambda|`` and the radial CDF of a 2-D law."""
    vals = spectrum.values if isinstance(spectrum, ComplexSpectrum) else np.asarray(spectrum)
    if getattr(law, "dim", 2) != 2:
        raise ConfigError("radial_ks needs a 2-D law")
    return ks_distance(np.abs(vals), law.radial_cdf)


def angular_ks(spectrum) -> float:
    """KS distance of ``arg(lambda) / 2 pi`` (mod 1) from the uniform law."""
    vals = spectrum.values if isinstance(spectrum, ComplexSpectrum) else np.asarray(spectrum)
    theta = np.mod(np.angle(vals) / (2 * math.pi), 1.0)
    return ks_distance(theta, lambda t: np.clip(t, 0.0, 1.0))


def moment_match(emp, law, k: int) -> list:
    """Relative errors of the first ``k`` empirical moments.

    Stops at the first moment the law does not have, so the list can be
    shorter than ``k``.
    """
    x = _points(emp)
    try:
        ref = law.moments(k)
    except DivergenceError as exc:
        order = exc.order or 1
        if order <= 1:
            return []
        ref = law.moments(order - 1)
    out = []
    for j, r in enumerate(ref, start=1):
        e = float(np.mean(x**j))
        r = float(r)
        out.append(abs(e - r) / abs(r) if r != 0 else abs(e))
    return out


def universality_threshold(n: int) -> float:
    return KS_COEFF * math.sqrt(2.0 / n)


@dataclass(frozen=True)
class EnsembleRun:
    """Squared singular values of one draw, plus what produced them."""

    function: object
    law: object
    seed: int
    values: np.ndarray


def simulate_run(spec, law, seed: int) -> EnsembleRun:
    from .ensembles import assemble, sample_tuple
    from .spectra import singular_values

    f = assemble(spec, sample_tuple(spec, law, seed))
    return EnsembleRun(spec, law, seed, singular_values(f).squared)


def universality_test(a: EnsembleRun, b: EnsembleRun) -> GoFReport:
    """Two-sample KS between runs that differ only in the entry law."""
    if a.function != b.function:
        raise ConfigError("universality runs must share the matrix function")
    n = min(len(a.values), len(b.values))
    d = two_sample_ks(a.values, b.values)
    thr = universality_threshold(n)
    label = "%s vs %s" % (getattr(a.law, "kind", a.law), getattr(b.law, "kind", b.law))
    return GoFReport("ks2", d, thr, bool(d <= thr), n, label, "squared", a.seed)
