"""Exact linear-time-invariant path: ``dx/dt = F x``, ``y = H x``, ``z = q x``.

Feasibility of an order-``v`` functional observer with a prescribed
characteristic polynomial reduces to a row-space test,

    q F^v + α_1 q F^{v-1} + ... + α_v q  ∈  span{H_j F^i : i = 0..v},

and Luenberger's order ``v_o - 1`` design always passes it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .span import BetaSet, CharPoly, beta_priority, char_from_roots, prioritized_lstsq
from .synth import ObserverLTI, synthesize
from .system import LTISystem

__all__ = ["UnobservableError", "obs_index", "condition_61", "design_corollary",
           "linear_transform", "verify_luenberger", "LuenbergerReport",
           "LTI_TOL"]

LTI_TOL = 1e-10


class UnobservableError(ValueError):
    def __init__(self, rank, n):
        super().__init__(f"(H, F) is not observable: observability rank stalls at {rank} < {n}")
        self.rank = rank
        self.n = n


def _rank(M, n, p, k):
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    tol = max(n, p * k) * s[0] * 1e-12
    return int(np.sum(s > tol))


def obs_index(sys: LTISystem) -> int:
    """Smallest ``k`` with ``rank [H; HF; ...; HF^{k-1}] = n``."""
    n, p = sys.n, sys.p
    blocks = [sys.H]
    prev = -1
    for k in range(1, n + 1):
        O = np.vstack(blocks)
        r = _rank(O, n, p, k)
        if r == n:
            return k
        if r == prev:
            break
        prev = r
        blocks.append(blocks[-1] @ sys.F)
    raise UnobservableError(r, n)


def _basis_rows(sys, v):
    # row i*p + j = H_j F^{v-i}, matching the β layout of the sampled test
    powers = [sys.H]
    for _ in range(v):
        powers.append(powers[-1] @ sys.F)
    return np.vstack([powers[v - i] for i in range(v + 1)])


def condition_61(sys: LTISystem, v: int, alpha) -> BetaSet:
    """Least-squares row-space test; feasible iff relative residual ≤ 1e-10.

    ``β`` uses the same lowest-derivative-order representative as
    :func:`folin.span.solve_beta`.
    """
    if v < 1:
        raise ValueError("observer order v must be at least 1")
    a = alpha.coefficients() if isinstance(alpha, CharPoly) else (1.0, *alpha)
    if len(a) != v + 1:
        raise ValueError(f"polynomial order {len(a) - 1} does not match v = {v}")
    target = np.zeros(sys.n)
    qF = sys.q.copy()
    qpow = [qF]
    for _ in range(v):
        qpow.append(qpow[-1] @ sys.F)
    for i in range(v + 1):
        target = target + a[i] * qpow[v - i]
    basis = _basis_rows(sys, v)
    G = basis.T
    beta, cond, dropped = prioritized_lstsq(G, target, beta_priority(v, sys.p))
    resid = float(np.linalg.norm(G @ beta - target) / max(np.linalg.norm(target), 1e-300))
    return BetaSet(beta.reshape(v + 1, sys.p), resid, LTI_TOL, cond, sys.n, (), dropped)


def linear_transform(sys: LTISystem, alpha: CharPoly, beta) -> np.ndarray:
    """``T`` (v x n) whose rows are ``Σ α_k q F^{m-k} - Σ β_k H F^{m-k}``."""
    b = np.atleast_2d(np.asarray(getattr(beta, "beta", beta), dtype=float))
    a = alpha.coefficients()
    v = alpha.order
    qpow, Hpow = [sys.q], [sys.H]
    for _ in range(v):
        qpow.append(qpow[-1] @ sys.F)
        Hpow.append(Hpow[-1] @ sys.F)
    T = np.zeros((v, sys.n))
    for i in range(v):
        m = v - 1 - i
        for k in range(m + 1):
            T[i] += a[k] * qpow[m - k] - b[k] @ Hpow[m - k]
    return T


@dataclass(frozen=True)
class LuenbergerReport:
    pde_residual: float
    output_residual: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.pde_residual <= self.tol and self.output_residual <= self.tol


def verify_luenberger(sys: LTISystem, T, obs: ObserverLTI, tol=LTI_TOL) -> LuenbergerReport:
    """Relative residuals of ``TF = AT + BH`` and ``q = CT + DH``."""
    T = np.atleast_2d(np.asarray(T, dtype=float))
    if T.shape != (obs.order, sys.n):
        raise ValueError(f"T must be {obs.order}x{sys.n}, got {T.shape}")
    TF, AT, BH = T @ sys.F, obs.A @ T, obs.B @ sys.H
    scale = max(np.linalg.norm(TF), np.linalg.norm(AT), np.linalg.norm(BH), 1e-300)
    r1 = float(np.linalg.norm(TF - AT - BH) / scale)
    CT, DH = (obs.C @ T)[0], (obs.D @ sys.H)[0]
    scale = max(np.linalg.norm(sys.q), np.linalg.norm(CT), np.linalg.norm(DH), 1e-300)
    r2 = float(np.linalg.norm(sys.q - CT - DH) / scale)
    return LuenbergerReport(r1, r2, tol)


def design_corollary(sys: LTISystem, roots, allow_unstable=False) -> ObserverLTI:
    """Order ``v_o - 1`` observer with the given eigenvalues."""
    vo = obs_index(sys)
    v = vo - 1
    if v < 1:
        raise ValueError("observability index is 1: the functional is a static "
                         "function of y and no dynamic observer is needed")
    roots = list(roots)
    if len(roots) != v:
        raise ValueError(f"need {v} eigenvalues (observability index {vo}), got {len(roots)}")
    alpha = char_from_roots(roots)
    beta = condition_61(sys, v, alpha)
    if not beta.feasible:
        raise ArithmeticError(
            f"row-space test failed at v = v_o - 1 (residual {beta.residual:.3e}); "
            "this indicates numerical rank trouble")
    return synthesize(alpha, beta, allow_unstable=allow_unstable)
