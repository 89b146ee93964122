"""Sampled least-squares test of the span condition for linear functional observers.

For a characteristic polynomial ``λ^v + α_1 λ^{v-1} + ... + α_v`` we look for
row vectors ``β_0..β_v`` with

    L_F^v q + α_1 L_F^{v-1} q + ... + α_v q
        = Σ_j (β_0j L_F^v H_j + β_1j L_F^{v-1} H_j + ... + β_vj H_j)

on a set of sampled states.  The identity must hold as functions, so a
small relative residual on samples (and on a fresh set) is the numerical
surrogate.

The basis functions are frequently linearly dependent (for instance when an
output obeys a linear ODE), so ``β`` is not unique.  The default
representative keeps the lowest Lie-derivative orders: columns are admitted
in the order ``H, L_F H, ..., L_F^v H`` and a column is dropped when it lies
in the span of those already admitted; its coefficient is then zero.
``method="min-norm"`` returns the minimum-norm solution instead.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .expr import EvalDomainError
from .jet import lie_table

__all__ = [
    "SampleSet", "CharPoly", "BetaSet", "sample", "char_from_roots",
    "build_lsq", "solve_beta", "solve_joint", "companion", "lsq_residual",
    "select_columns", "prioritized_lstsq", "DEFAULT_TOL", "COND_LIMIT",
]

DEFAULT_TOL = 1e-8
EPS_SCALE = 1e-12
COND_LIMIT = 1e10
RANK_TOL = 1e-10


@dataclass(frozen=True)
class SampleSet:
    seed: int
    lower: np.ndarray
    upper: np.ndarray
    points: np.ndarray  # (N, n)

    @property
    def count(self):
        return self.points.shape[0]

    def __iter__(self):
        return iter(self.points)


def sample(box, N, seed) -> SampleSet:
    """Draw ``N`` states uniformly from ``box = (lower, upper)``.

    Uses the counter-based Philox generator so that a seed reproduces the
    same matrix on every platform.
    """
    lower, upper = (np.asarray(b, dtype=float) for b in box)
    if lower.shape != upper.shape or lower.ndim != 1:
        raise ValueError("box bounds must be 1-d arrays of equal length")
    if not np.all(lower < upper):
        raise ValueError("box lower bound must be below upper bound in every coordinate")
    if N < 1:
        raise ValueError("need at least one sample")
    rng = np.random.Generator(np.random.Philox(key=int(seed) & (2**64 - 1)))
    u = rng.random((int(N), lower.size))
    return SampleSet(int(seed), lower, upper, lower + u * (upper - lower))


def companion(alpha) -> np.ndarray:
    """Companion matrix with sub-diagonal ones and last column ``(-α_v, ..., -α_1)``."""
    alpha = np.asarray(alpha, dtype=float)
    v = alpha.size
    A = np.zeros((v, v))
    if v > 1:
        A[np.arange(1, v), np.arange(v - 1)] = 1.0
    A[:, -1] = -alpha[::-1]
    return A


@dataclass(frozen=True)
class CharPoly:
    """Monic polynomial ``λ^v + α_1 λ^{v-1} + ... + α_v``."""

    alpha: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        if len(self.alpha) < 1:
            raise ValueError("observer order must be at least 1")

    @property
    def order(self) -> int:
        return len(self.alpha)

    @property
    def roots(self) -> np.ndarray:
        return np.linalg.eigvals(companion(self.alpha))

    @property
    def hurwitz(self) -> bool:
        return bool(np.all(self.roots.real < 0))

    def coefficients(self):
        """``(1, α_1, ..., α_v)``."""
        return (1.0,) + self.alpha


def char_from_roots(roots) -> CharPoly:
    """Expand ``Π (λ - r)``; complex roots must come in conjugate pairs."""
    roots = [complex(r) for r in roots]
    if not roots:
        raise ValueError("need at least one root")
    pending = [r for r in roots if r.imag != 0]
    while pending:
        r = pending.pop(0)
        scale = max(1.0, abs(r))
        for i, s in enumerate(pending):
            if abs(s - r.conjugate()) <= 1e-12 * scale:
                del pending[i]
                break
        else:
            raise ValueError(f"complex root {r} has no conjugate partner")
    coeffs = np.array([1.0 + 0j])
    for r in roots:
        coeffs = np.convolve(coeffs, [1.0, -r])
    return CharPoly(tuple(coeffs.real[1:]))


@dataclass(frozen=True)
class BetaSet:
    """Rows ``β_0..β_v`` (each of length p) and the relative fit residual."""

    beta: np.ndarray  # (v+1, p)
    residual: float
    tol: float
    condition: float = 1.0
    effective_samples: int = 0
    skipped: tuple[int, ...] = ()
    dropped: tuple[int, ...] = ()  # design-matrix columns found dependent

    @property
    def feasible(self) -> bool:
        return bool(self.residual <= self.tol)

    @property
    def ill_conditioned(self) -> bool:
        return bool(not np.isfinite(self.condition) or self.condition > COND_LIMIT)

    @property
    def order(self) -> int:
        return self.beta.shape[0] - 1


def _workers():
    try:
        return max(1, int(os.environ.get("FOLIN_THREADS", "1")))
    except ValueError:
        return 1


def _tables(system, points, v, skip_bad):
    def one(x):
        try:
            return lie_table(system, x.tolist(), v)
        except (EvalDomainError, ZeroDivisionError) as exc:
            return exc

    workers = _workers()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, points))
    else:
        results = [one(x) for x in points]
    kept, skipped = [], []
    for i, res in enumerate(results):
        if isinstance(res, Exception):
            if not skip_bad:
                raise EvalDomainError(f"sample {i} at {points[i].tolist()}: {res}") from res
            skipped.append(i)
        else:
            kept.append(res)
    return kept, tuple(skipped)


def _design(tables, v, p):
    # column i*p + j holds L_F^{v-i} H_j so that β_i multiplies L_F^{v-i} H
    M = np.empty((len(tables), (v + 1) * p))
    Q = np.empty((len(tables), v + 1))  # Q[s, i] = L_F^{v-i} q
    for s, (H, q) in enumerate(tables):
        for i in range(v + 1):
            M[s, i * p:(i + 1) * p] = H[v - i]
            Q[s, i] = q[v - i]
    return M, Q


def build_lsq(system, samples, v, alpha, skip_bad=False):
    """Design matrix ``M`` (N x (v+1)p) and right side ``r`` (N).

    Returns ``(M, r, skipped)``; ``skipped`` lists sample indices dropped under
    the skip policy.
    """
    if v < 1:
        raise ValueError("observer order v must be at least 1")
    a = _alpha_tuple(alpha, v)
    tables, skipped = _tables(system, np.asarray(samples.points if isinstance(
        samples, SampleSet) else samples, dtype=float), v, skip_bad)
    M, Q = _design(tables, v, system.p)
    return M, Q @ np.asarray(a), skipped


def _alpha_tuple(alpha, v):
    a = alpha.coefficients() if isinstance(alpha, CharPoly) else (1.0, *alpha)
    if len(a) != v + 1:
        raise ValueError(f"characteristic polynomial has order {len(a) - 1}, expected {v}")
    return a


def _condition(M):
    if M.shape[1] == 0:
        return 1.0
    norms = np.linalg.norm(M, axis=0)
    if np.any(norms == 0):
        return np.inf
    s = np.linalg.svd(M / norms, compute_uv=False)
    return float(s[0] / s[-1]) if s[-1] > 0 else np.inf


def select_columns(G, priority, tol=RANK_TOL):
    """Greedily admit columns of ``G`` in ``priority`` order.

    A column is admitted when its unit-normalised distance to the span of the
    admitted columns exceeds ``tol``.  Returns the admitted indices in
    priority order.
    """
    n_rows = G.shape[0]
    basis = np.zeros((n_rows, 0))
    keep = []
    for c in priority:
        col = G[:, c]
        norm = np.linalg.norm(col)
        if norm == 0:
            continue
        res = col / norm
        for _ in range(2):  # re-orthogonalise once
            res = res - basis @ (basis.T @ res)
        dist = np.linalg.norm(res)
        if dist > tol:
            keep.append(c)
            basis = np.hstack([basis, (res / dist)[:, None]])
    return keep


def prioritized_lstsq(G, r, priority, tol=RANK_TOL):
    """Least squares over the admitted columns; dropped columns get zero.

    Returns ``(solution, condition, dropped)`` where ``condition`` is the
    condition estimate of the admitted, column-equilibrated submatrix.
    """
    keep = select_columns(G, priority, tol)
    x = np.zeros(G.shape[1])
    if keep:
        sub = G[:, keep]
        xs, *_ = np.linalg.lstsq(sub, r, rcond=None)
        x[keep] = xs
        cond = _condition(sub)
    else:
        cond = 1.0
    dropped = tuple(sorted(set(range(G.shape[1])) - set(keep)))
    return x, cond, dropped


def beta_priority(v, p, offset=0):
    """Column order ``H_1..H_p, L_F H_1.., ..., L_F^v H`` in design-matrix indices."""
    return [offset + i * p + j for i in range(v, -1, -1) for j in range(p)]


def lsq_residual(M, beta_flat, r):
    return float(np.linalg.norm(M @ beta_flat - r) / max(np.linalg.norm(r), EPS_SCALE))


def _check_count(n_eff, need):
    if n_eff < need:
        raise ValueError(f"need at least {need} usable samples, have {n_eff}")


def _solve(G, r, priority, method):
    if method == "lowest-order":
        return prioritized_lstsq(G, r, priority)
    if method == "min-norm":
        x, *_ = np.linalg.lstsq(G, r, rcond=None)
        return x, _condition(G), ()
    raise ValueError(f"unknown method {method!r}")


def solve_beta(system, samples, v, alpha, tol=DEFAULT_TOL, skip_bad=False,
               method="lowest-order") -> BetaSet:
    """Least-squares ``β`` for a fixed characteristic polynomial.

    Parameters
    ----------
    system : SystemModel
    samples : SampleSet
        Needs at least ``3 (v+1) p`` points.
    v : int
        Observer order.
    alpha : CharPoly or sequence of ``α_1..α_v``
    tol : float
        Relative residual accepted as "in the span".
    skip_bad : bool
        Drop samples where evaluation fails instead of raising.
    method : {"lowest-order", "min-norm"}
        Representative chosen when ``β`` is not unique.
    """
    p = system.p
    need = 3 * (v + 1) * p
    _check_count(samples.count, need)
    M, r, skipped = build_lsq(system, samples, v, alpha, skip_bad)
    _check_count(M.shape[0], need)
    beta, cond, dropped = _solve(M, r, beta_priority(v, p), method)
    return BetaSet(beta.reshape(v + 1, p), lsq_residual(M, beta, r), tol,
                   cond, M.shape[0], skipped, dropped)


def solve_joint(system, samples, v, tol=DEFAULT_TOL, skip_bad=False,
                method="lowest-order"):
    """Solve for ``α`` and ``β`` together (``α`` enters linearly).

    Returns ``(CharPoly, BetaSet)``.  The verdict is feasible only if the
    residual is within ``tol`` and the recovered polynomial is Hurwitz; use
    ``beta.feasible and charpoly.hurwitz``.
    """
    p = system.p
    need = 3 * (v + (v + 1) * p)
    _check_count(samples.count, need)
    tables, skipped = _tables(system, samples.points, v, skip_bad)
    _check_count(len(tables), need)
    M, Q = _design(tables, v, p)
    # unknowns (α_1..α_v, β):  Σ α_i L^{v-i} q - M β = -L^v q
    G = np.hstack([Q[:, 1:], -M])
    priority = list(range(v)) + beta_priority(v, p, offset=v)
    sol, cond, dropped = _solve(G, -Q[:, 0], priority, method)
    charpoly = CharPoly(tuple(sol[:v]))
    beta = sol[v:]
    r = Q @ np.asarray(charpoly.coefficients())
    return charpoly, BetaSet(beta.reshape(v + 1, p), lsq_residual(M, beta, r), tol,
                             cond, len(tables), skipped, dropped)
