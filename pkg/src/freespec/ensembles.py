"""Random matrix ensembles: entry laws, dimension profiles, matrix functions.

Every factor ``X_q`` has size ``n_{q-1} x n_q`` and is scaled by
``1/sqrt(n_q)``, so its entries have variance ``1/n_q``.  Factor ``q``
draws from its own counter-based stream keyed on ``(seed, q)``; the
matrix a factor receives therefore does not depend on how many other
factors the function uses.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, SingularityError

ENTRY_LAWS = (
    "standard-real-gaussian",
    "standard-complex-gaussian",
    "rademacher",
    "uniform-symmetric",
    "two-point",
)
_ALIASES = {
    "real-gaussian": "standard-real-gaussian",
    "gaussian": "standard-real-gaussian",
    "complex-gaussian": "standard-complex-gaussian",
    "uniform": "uniform-symmetric",
}

FUNCTIONS = ("identity", "product", "power", "product-of-powers", "spherical-product")

COND_LIMIT = 1e12


def stream(seed: int, *key: int) -> np.random.Generator:
    """Philox generator for the stream ``key`` under ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def trial_seed(seed: int, trial: int) -> int:
    """Deterministic 63-bit seed for Monte Carlo trial ``trial``."""
    ss = np.random.SeedSequence([int(seed), int(trial)])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class EntryLaw:
    """Law of the unscaled entries; every catalog law has mean 0, variance 1."""

    kind: str
    p: float | None = None

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        if kind not in ENTRY_LAWS:
            raise ConfigError("unknown entry law %r" % self.kind)
        object.__setattr__(self, "kind", kind)
        if kind == "two-point":
            if self.p is None or not 0.0 < float(self.p) < 1.0:
                raise ConfigError("two-point law needs 0 < p < 1")
        elif self.p is not None:
            raise ConfigError("parameter p only applies to the two-point law")

    @property
    def is_complex(self) -> bool:
        return self.kind == "standard-complex-gaussian"

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        k = self.kind
        if k == "standard-real-gaussian":
            x = rng.standard_normal(shape)
        elif k == "standard-complex-gaussian":
            x = rng.standard_normal((2,) + tuple(shape)) * math.sqrt(0.5)
            return x[0] + 1j * x[1]
        elif k == "rademacher":
            x = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
        elif k == "uniform-symmetric":
            x = rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), shape)
        else:
            p = float(self.p)
            hi, lo = math.sqrt((1 - p) / p), -math.sqrt(p / (1 - p))
            x = np.where(rng.random(shape) < p, hi, lo)
        return x.astype(np.complex128)


@dataclass(frozen=True)
class DimensionProfile:
    """Base size ``n`` and ratios ``y_q = n / n_q`` in (0, 1]."""

    n: int
    ratios: tuple = (1.0,)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ConfigError("n must be an integer >= 2")
        r = tuple(float(y) for y in self.ratios)
        if not r or any(not 0.0 < y <= 1.0 for y in r):
            raise ConfigError("ratios must lie in (0, 1]")
        object.__setattr__(self, "ratios", r)

    @property
    def dims(self) -> tuple:
        return (int(self.n),) + tuple(int(round(self.n / y)) for y in self.ratios)


@dataclass(frozen=True)
class FunctionSpec:
    """Which matrix function to assemble and from what factor shapes.

    ``m`` counts factors for ``product``, the exponent for ``power``,
    and quotient pairs for ``spherical-product``.  ``powers`` lists the
    exponents of ``product-of-powers``.  ``ratios`` defaults to all ones.
    """

    kind: str
    n: int
    m: int = 1
    ratios: tuple | None = None
    powers: tuple = ()
    ridge: float = 0.0

    def __post_init__(self):
        if self.kind not in FUNCTIONS:
            raise ConfigError("unknown matrix function %r" % self.kind)
        if int(self.m) != self.m or self.m < 1:
            raise ConfigError("m must be a positive integer")
        object.__setattr__(self, "powers", tuple(int(p) for p in self.powers))
        if self.kind == "product-of-powers":
            if not self.powers or min(self.powers) < 1:
                raise ConfigError("product-of-powers needs positive integer powers")
        elif self.powers:
            raise ConfigError("powers only apply to product-of-powers")
        if self.ridge < 0:
            raise ConfigError("ridge must be non-negative")
        k = self.n_factors
        ratios = (1.0,) * k if self.ratios is None else tuple(self.ratios)
        if len(ratios) != k:
            raise ConfigError("expected %d ratios, got %d" % (k, len(ratios)))
        if self.kind != "product" and any(y != 1.0 for y in ratios):
            raise ConfigError("%s needs square factors (all ratios 1)" % self.kind)
        object.__setattr__(self, "ratios", tuple(float(y) for y in ratios))
        self.profile  # validates n and ratios

    @property
    def n_factors(self) -> int:
        return {
            "identity": 1,
            "product": self.m,
            "power": 1,
            "product-of-powers": len(self.powers),
            "spherical-product": 2 * self.m,
        }[self.kind]

    @property
    def profile(self) -> DimensionProfile:
        return DimensionProfile(self.n, self.ratios)

    @property
    def factor_shapes(self) -> list:
        d = self.profile.dims
        return [(d[q], d[q + 1]) for q in range(self.n_factors)]

    @property
    def shape(self) -> tuple:
        d = self.profile.dims
        return (d[0], d[-1])


@dataclass(frozen=True)
class MatrixTuple:
    matrices: tuple
    seed: int
    raw_scale: tuple = field(default=())  # sqrt(n_q) per factor

    def raw(self, q: int) -> np.ndarray:
        """Factor ``q`` without the ``1/sqrt(n_q)`` scaling."""
        return self.matrices[q] * self.raw_scale[q]


def sample_tuple(spec: FunctionSpec, law: EntryLaw, seed: int) -> MatrixTuple:
    mats, scales = [], []
    for q, (rows, cols) in enumerate(spec.factor_shapes):
        s = math.sqrt(cols)
        mats.append(law.sample(stream(seed, q), (rows, cols)) / s)
        scales.append(s)
    return MatrixTuple(tuple(mats), int(seed), tuple(scales))


def _check_conditioning(x: np.ndarray) -> None:
    s = np.linalg.svd(x, compute_uv=False)
    if s[-1] == 0 or s[0] / s[-1] > COND_LIMIT:
        raise SingularityError(
            "factor is numerically singular (condition number %.3g)" % (s[0] / s[-1] if s[-1] else np.inf)
        )


def regularized_inverse(x: np.ndarray, t: float = 0.0) -> np.ndarray:
    """``(X*X + tI)^{-1} X*``; the exact inverse when ``t == 0``."""
    x = np.asarray(x)
    if t < 0:
        raise ConfigError("ridge must be non-negative")
    if t == 0:
        if x.shape[0] != x.shape[1]:
            raise ConfigError("exact inverse needs a square matrix")
        _check_conditioning(x)
        return np.linalg.inv(x)
    xh = x.conj().T
    return np.linalg.solve(xh @ x + t * np.eye(x.shape[1]), xh)


def _right_divide(a: np.ndarray, x: np.ndarray, t: float) -> np.ndarray:
    if t == 0:
        _check_conditioning(x)
        return np.linalg.solve(x.T, a.T).T
    return a @ regularized_inverse(x, t)


def assemble(spec: FunctionSpec, tup: MatrixTuple) -> np.ndarray:
    mats = tup.matrices
    if len(mats) != spec.n_factors:
        raise ConfigError("tuple has %d factors, %s needs %d" % (len(mats), spec.kind, spec.n_factors))
    for q, (mat, shp) in enumerate(zip(mats, spec.factor_shapes)):
        if mat.shape != shp:
            raise ConfigError("factor %d has shape %s, expected %s" % (q, mat.shape, shp))
    k = spec.kind
    if k == "identity":
        return mats[0].copy()
    if k == "power":
        return np.linalg.matrix_power(mats[0], spec.m)
    if k == "product":
        out = mats[0]
        for x in mats[1:]:
            out = out @ x
        return np.array(out)
    if k == "product-of-powers":
        out = None
        for x, p in zip(mats, spec.powers):
            xp = np.linalg.matrix_power(x, p)
            out = xp if out is None else out @ xp
        return out
    out = None
    for q in range(spec.m):
        f = _right_divide(mats[2 * q], mats[2 * q + 1], spec.ridge)
        out = f if out is None else out @ f
    return out


def shift(f: np.ndarray, alpha: complex) -> np.ndarray:
    f = np.asarray(f)
    if f.shape[0] != f.shape[1]:
        raise ConfigError("shift needs a square matrix")
    return f - alpha * np.eye(f.shape[0])


def hermitize(f: np.ndarray, alpha: complex = 0.0) -> np.ndarray:
    """``[[0, F - aI], [(F - aI)*, 0]]``; rectangular ``F`` allowed when ``a == 0``."""
    f = np.asarray(f, dtype=np.complex128)
    g = shift(f, alpha) if alpha != 0 else f
    n, p = g.shape
    v = np.zeros((n + p, n + p), dtype=np.complex128)
    v[:n, n:] = g
    v[n:, :n] = g.conj().T
    return v


def shift_block(alpha: complex, n: int) -> np.ndarray:
    """The block ``[[0, -aI], [-conj(a) I, 0]]`` of size ``2n``."""
    j = np.zeros((2 * n, 2 * n), dtype=np.complex128)
    j[:n, n:] = -alpha * np.eye(n)
    j[n:, :n] = -np.conj(alpha) * np.eye(n)
    return j


def lindeberg_statistic(tup: MatrixTuple, tau: float) -> float:
    """``n^-2 * sum |X|^2 1{|X| > tau sqrt(n)}`` over raw entries of all factors."""
    if tau <= 0:
        raise ConfigError("tau must be positive")
    n = tup.matrices[0].shape[0]
    cut = tau * math.sqrt(n)
    total = 0.0
    for q in range(len(tup.matrices)):
        a2 = np.abs(tup.raw(q)) ** 2
        total += float(a2[a2 > cut * cut].sum())
    return total / n**2


def truncate_entries(tup: MatrixTuple, tau: float) -> MatrixTuple:
    """Zero every entry whose raw modulus exceeds ``tau sqrt(n)``."""
    if tau <= 0:
        raise ConfigError("tau must be positive")
    n = tup.matrices[0].shape[0]
    cut = tau * math.sqrt(n)
    mats = tuple(
        np.where(np.abs(tup.raw(q)) > cut, 0.0, tup.matrices[q])
        for q in range(len(tup.matrices))
    )
    return MatrixTuple(mats, tup.seed, tup.raw_scale)


def freeness_statistic(
    sample_a: Callable[[np.random.Generator], np.ndarray],
    sample_b: Callable[[np.random.Generator], np.ndarray],
    pattern: Sequence[tuple],
    trials: int,
    seed: int,
) -> float:
    """Monte Carlo estimate of the normalized trace of an alternating
    centred word ``prod_i (A^{j_i} - t_{j_i})(B^{l_i} - t'_{l_i})``.

    Centring constants are the sample means of ``tr A^j / n`` over the
    same draws.  Passing the same callable twice reuses the drawn
    matrix for both letters.
    """
    if trials < 1 or not pattern:
        raise ConfigError("need at least one trial and a non-empty pattern")
    same = sample_b is sample_a
    draws = []
    for t in range(trials):
        a = np.asarray(sample_a(stream(seed, t, 0)))
        b = a if same else np.asarray(sample_b(stream(seed, t, 1)))
        if a.shape != b.shape or a.shape[0] != a.shape[1]:
            raise ConfigError("samplers must return square matrices of one size")
        draws.append((a, b))
    ja = sorted({j for j, _ in pattern})
    jb = sorted({l for _, l in pattern})
    pa = [{j: np.linalg.matrix_power(a, j) for j in ja} for a, _ in draws]
    pb = [{l: np.linalg.matrix_power(b, l) for l in jb} for _, b in draws]
    n = draws[0][0].shape[0]
    ta = {j: np.mean([np.trace(p[j]) / n for p in pa]) for j in ja}
    tb = {l: np.mean([np.trace(p[l]) / n for p in pb]) for l in jb}
    eye = np.eye(n)
    vals = []
    for p, q in zip(pa, pb):
        word = eye
        for j, l in pattern:
            word = word @ (p[j] - ta[j] * eye) @ (q[l] - tb[l] * eye)
        vals.append(np.trace(word) / n)
    return float(np.real(np.mean(vals)))
