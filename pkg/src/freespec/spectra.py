"""Spectra of sampled matrices and the empirical measures built from them."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.linalg import blas

from .errors import ConfigError, ConvergenceError, SingularityError

LOG_FLOOR = 1e-300


@dataclass(frozen=True)
class SingularSpectrum:
    values: np.ndarray  # descending

    def __len__(self):
        return len(self.values)

    @property
    def squared(self) -> np.ndarray:
        return self.values**2


@dataclass(frozen=True)
class ComplexSpectrum:
    values: np.ndarray

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Uniform-weight atoms at ``points`` (kept sorted for fast CDFs)."""

    points: np.ndarray

    def __post_init__(self):
        p = np.sort(np.asarray(self.points, dtype=float).ravel())
        if p.size == 0 or not np.all(np.isfinite(p)):
            raise ConfigError("empirical measure needs finite, non-empty support")
        object.__setattr__(self, "points", p)

    @classmethod
    def symmetrized(cls, singular: SingularSpectrum | np.ndarray) -> EmpiricalMeasure:
        s = singular.values if isinstance(singular, SingularSpectrum) else np.asarray(singular)
        return cls(np.concatenate([s, -s]))

    def __len__(self):
        return self.points.size

    def cdf(self, x, side: str = "right"):
        return np.searchsorted(self.points, x, side=side) / self.points.size

    def moments(self, k: int) -> list:
        return [float(np.mean(self.points**j)) for j in range(1, k + 1)]


def _as_matrix(f) -> np.ndarray:
    f = np.asarray(f, dtype=np.complex128)
    if f.ndim != 2 or 0 in f.shape:
        raise ConfigError("expected a non-empty 2-D matrix")
    if not np.all(np.isfinite(f)):
        raise ConfigError("matrix has non-finite entries")
    return f


def singular_values(f) -> SingularSpectrum:
    """Singular values from the Hermitian eigenproblem of the smaller Gram matrix."""
    f = _as_matrix(f)
    if f.shape[0] > f.shape[1]:
        f = f.conj().T
    gram = blas.zherk(1.0, f, lower=0)
    ev = sla.eigh(gram, eigvals_only=True, lower=False, driver="evr", check_finite=False)
    ev = np.clip(ev[::-1], 0.0, None)
    return SingularSpectrum(np.sqrt(ev))


def eigenvalues(f, method: str = "lapack", tol: float = 1e-13) -> ComplexSpectrum:
    """Eigenvalues of a square matrix.

    ``method="lapack"`` calls the library Hessenberg/QR driver.
    ``method="qr"`` runs the bundled single-shift Hessenberg QR
    iteration, which is only practical for small matrices.
    """
    f = _as_matrix(f)
    if f.shape[0] != f.shape[1]:
        raise ConfigError("eigenvalues need a square matrix")
    if method == "lapack":
        try:
            return ComplexSpectrum(sla.eigvals(f, check_finite=False))
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(str(exc)) from exc
    if method == "qr":
        return ComplexSpectrum(hessenberg_qr(f, tol=tol))
    raise ConfigError("unknown eigenvalue method %r" % method)


def hessenberg_reduce(a: np.ndarray) -> np.ndarray:
    """Householder reduction to upper Hessenberg form (similarity)."""
    h = np.array(a, dtype=np.complex128)
    n = h.shape[0]
    for k in range(n - 2):
        x = h[k + 1 :, k]
        alpha = np.linalg.norm(x)
        if alpha == 0:
            continue
        phase = x[0] / abs(x[0]) if x[0] != 0 else 1.0
        v = x.copy()
        v[0] += phase * alpha
        v /= np.linalg.norm(v)
        h[k + 1 :, k:] -= 2.0 * np.outer(v, v.conj() @ h[k + 1 :, k:])
        h[:, k + 1 :] -= 2.0 * np.outer(h[:, k + 1 :] @ v, v.conj())
        h[k + 2 :, k] = 0.0
    return h


def _givens(a: complex, b: complex):
    r = math.hypot(abs(a), abs(b))
    if r == 0:
        return 1.0, 0.0
    return a / r, b / r


def hessenberg_qr(a: np.ndarray, tol: float = 1e-13, max_iter: int | None = None) -> np.ndarray:
    """Eigenvalues by shifted QR sweeps on the Hessenberg form.

    Wilkinson shifts, deflation when a subdiagonal drops below
    ``tol * ||A||``, exceptional shifts every tenth stagnant sweep.
    """
    h = hessenberg_reduce(a)
    n = h.shape[0]
    norm = np.linalg.norm(h) or 1.0
    max_iter = 30 * n if max_iter is None else max_iter
    eig = np.zeros(n, dtype=np.complex128)
    hi = n - 1
    its = stagnant = 0
    while hi >= 0:
        if hi == 0:
            eig[0] = h[0, 0]
            break
        lo = hi
        while lo > 0 and abs(h[lo, lo - 1]) > tol * norm:
            lo -= 1
        if lo == hi:
            eig[hi] = h[hi, hi]
            h[hi, hi - 1] = 0.0
            hi -= 1
            stagnant = 0
            continue
        its += 1
        stagnant += 1
        if its > max_iter:
            raise ConvergenceError("QR iteration did not converge", iterations=its)
        a11, a12, a21, a22 = h[hi - 1, hi - 1], h[hi - 1, hi], h[hi, hi - 1], h[hi, hi]
        if stagnant % 10 == 0:
            mu = a22 + abs(a21)
        else:
            tr, det = a11 + a22, a11 * a22 - a12 * a21
            disc = np.sqrt(tr * tr / 4 - det)
            r1, r2 = tr / 2 + disc, tr / 2 - disc
            mu = r1 if abs(r1 - a22) < abs(r2 - a22) else r2
        seg = slice(lo, hi + 1)
        h[seg, seg] -= mu * np.eye(hi - lo + 1)
        rots = []
        for k in range(lo, hi):
            c, s = _givens(h[k, k], h[k + 1, k])
            rows = h[k : k + 2, k:].copy()
            h[k, k:] = np.conj(c) * rows[0] + np.conj(s) * rows[1]
            h[k + 1, k:] = -s * rows[0] + c * rows[1]
            rots.append((c, s))
        for k, (c, s) in zip(range(lo, hi), rots):
            cols = h[: k + 2, k : k + 2].copy()
            h[: k + 2, k] = cols[:, 0] * c + cols[:, 1] * s
            h[: k + 2, k + 1] = -cols[:, 0] * np.conj(s) + cols[:, 1] * np.conj(c)
        h[seg, seg] += mu * np.eye(hi - lo + 1)
    return eig


def empirical_cdf(m: EmpiricalMeasure, x):
    return m.cdf(x)


def empirical_stieltjes(m: EmpiricalMeasure, z):
    """``int 1/(t - z) dm(t)``; ``z`` must be off the real axis."""
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag == 0):
        raise ConfigError("Stieltjes transform needs Im z != 0")
    return np.mean(1.0 / (m.points[:, None] - z.ravel()[None, :]), axis=0).reshape(z.shape)


def log_potential(f, alpha: complex) -> float:
    """``-(1/n) sum_j log s_j(F - alpha I)``."""
    from .ensembles import shift

    s = singular_values(shift(_as_matrix(f), alpha)).values
    if s[-1] < LOG_FLOOR:
        raise SingularityError("F - alpha I is singular to working precision")
    return float(-np.mean(np.log(s)))


@dataclass(frozen=True)
class ConditionDiagnostics:
    moment: float
    smallest: float
    tail: float
    tail_window_empty: bool


def condition_diagnostics(
    f, alpha: complex, p: float = 2.0, gamma: float = 0.5, delta: float | None = None
) -> ConditionDiagnostics:
    """Moment, smallest-singular-value and log-tail probes of ``F - alpha I``.

    ``moment`` is ``(1/n) sum s_k(F)^p``; ``tail`` is the mean absolute log
    over the window ``[n - n delta] + 1 <= j <= [n - n^gamma]`` of the
    descending singular values of ``F - alpha I``.
    """
    from .ensembles import shift

    f = _as_matrix(f)
    n = f.shape[0]
    if not 0 < gamma < 1:
        raise ConfigError("gamma must lie in (0, 1)")
    # 1/log n exceeds 1 for n <= 2
    delta = min(1.0 / math.log(n), 0.5) if delta is None else float(delta)
    if not 0 < delta < 1:
        raise ConfigError("delta must lie in (0, 1)")
    s_f = singular_values(f).values
    s = singular_values(shift(f, alpha)).values
    n1 = math.floor(n - n * delta) + 1
    n2 = math.floor(n - n**gamma)
    if n1 > n2:
        tail, empty = 0.0, True
    else:
        window = s[n1 - 1 : n2]
        if window.min() < LOG_FLOOR:
            raise SingularityError("zero singular value inside the log window")
        tail, empty = float(np.sum(np.abs(np.log(window))) / n), False
    return ConditionDiagnostics(float(np.mean(s_f**p)), float(s[-1]), tail, empty)


@dataclass(frozen=True)
class VarianceRecord:
    variance: float
    n: int
    samples: np.ndarray


def variance_probe(spec, law, z: complex, trials: int, seed: int) -> VarianceRecord:
    """Sample variance of ``(1/N) Tr (V - z)^{-1}`` across independent draws,
    ``V`` the hermitization of the assembled function (``N`` its size).

    ``law`` may be any object with a ``sample(rng, shape)`` method.
    """
    from .ensembles import assemble, sample_tuple, trial_seed

    if trials < 2:
        raise ConfigError("variance needs at least two trials")
    if np.imag(z) <= 0:
        raise ConfigError("z must lie in the upper half-plane")
    vals = np.empty(trials, dtype=complex)
    for t in range(trials):
        f = assemble(spec, sample_tuple(spec, law, trial_seed(seed, t)))
        s = singular_values(f).values
        big = sum(f.shape)
        zeros = big - 2 * s.size
        tr = np.sum(1.0 / (s - z)) + np.sum(1.0 / (-s - z)) - zeros / z
        vals[t] = tr / big
    var = float(np.var(vals.real, ddof=1) + np.var(vals.imag, ddof=1))
    return VarianceRecord(var, spec.n, vals)
