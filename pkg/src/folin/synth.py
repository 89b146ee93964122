"""Companion-form functional observer built from ``(α, β)``.

The observer is

    dξ̂/dt = A ξ̂ + B y,    ẑ = C ξ̂ + D y

with ``A`` the companion matrix of ``λ^v + α_1 λ^{v-1} + ... + α_v``,
``B`` rows ``β_v - α_v β_0, ..., β_1 - α_1 β_0`` (top to bottom),
``C = (0, ..., 0, 1)`` and ``D = β_0``.  The matching immersion ``𝒯`` has
component ``v - m`` (counting from 1 at the top, ``m = v-1 .. 0``)

    𝒯 = Σ_{k=0}^{m} α_k L_F^{m-k} q  -  Σ_{k=0}^{m} β_k L_F^{m-k} H,   α_0 = 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .jet import lie_table
from .span import BetaSet, CharPoly, companion

__all__ = ["ObserverLTI", "VerifyReport", "synthesize", "beta_from_observer",
           "transform_eval", "transform_with_derivative", "verify_pde",
           "verify_output", "UnstableObserverError"]


class UnstableObserverError(ValueError):
    """The requested error dynamics are not Hurwitz."""


@dataclass(frozen=True)
class ObserverLTI:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    alpha: CharPoly
    beta: np.ndarray  # (v+1, p) rows β_0..β_v

    @property
    def order(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class VerifyReport:
    name: str
    max_mismatch: float
    tol: float
    per_sample: np.ndarray = field(repr=False)

    @property
    def passed(self) -> bool:
        return bool(self.max_mismatch <= self.tol)

    def summary(self):
        return {"check": self.name, "max_mismatch": self.max_mismatch,
                "tol": self.tol, "passed": self.passed,
                "samples": int(self.per_sample.shape[0])}


def _beta_array(beta):
    b = beta.beta if isinstance(beta, BetaSet) else beta
    return np.atleast_2d(np.asarray(b, dtype=float))


def synthesize(alpha: CharPoly, beta, allow_unstable=False) -> ObserverLTI:
    """Build ``(A, B, C, D)`` from a characteristic polynomial and ``β`` rows."""
    if isinstance(beta, BetaSet) and not beta.feasible:
        raise ValueError(f"β is not a feasible solution (residual {beta.residual:.3e})")
    b = _beta_array(beta)
    v = alpha.order
    if b.shape[0] != v + 1:
        raise ValueError(f"order {v} polynomial needs {v + 1} β rows, got {b.shape[0]}")
    if not allow_unstable and not alpha.hurwitz:
        raise UnstableObserverError(
            f"polynomial with roots {np.round(alpha.roots, 12).tolist()} is not Hurwitz")
    a = np.asarray(alpha.alpha)
    B = np.array([b[v - i] - a[v - i - 1] * b[0] for i in range(v)])
    C = np.zeros((1, v))
    C[0, -1] = 1.0
    return ObserverLTI(companion(a), B, C, b[0:1].copy(), alpha, b.copy())


def beta_from_observer(obs: ObserverLTI, alpha: CharPoly) -> np.ndarray:
    """Recover ``β_0..β_v`` via ``β_k = Σ_{m<k} α_m C A^{k-1-m} B + α_k D``."""
    a = alpha.coefficients()
    v = obs.order
    if len(a) != v + 1:
        raise ValueError("polynomial order does not match observer order")
    CAk = [obs.C]
    for _ in range(v - 1):
        CAk.append(CAk[-1] @ obs.A)
    CAkB = [m @ obs.B for m in CAk]  # C A^k B, k = 0..v-1
    rows = [obs.D[0]]
    for k in range(1, v + 1):
        row = a[k] * obs.D[0]
        for m in range(k):
            row = row + a[m] * CAkB[k - 1 - m][0]
        rows.append(row)
    return np.array(rows)


def _combine(alpha, beta, Hd, qd, m, shift):
    # Σ_k α_k L^{m-k+shift} q - Σ_k β_k · L^{m-k+shift} H
    a = alpha.coefficients()
    total = 0.0
    for k in range(m + 1):
        total += a[k] * qd[m - k + shift] - float(np.dot(beta[k], Hd[m - k + shift]))
    return total


def transform_with_derivative(system, alpha, beta, x):
    """``(𝒯(x), L_F 𝒯(x), H(x))`` from a single flow expansion of order ``v``."""
    b = _beta_array(beta)
    v = alpha.order
    Hd, qd = lie_table(system, list(map(float, x)), v)
    Hd = [np.asarray(h) for h in Hd]
    T = np.array([_combine(alpha, b, Hd, qd, v - 1 - i, 0) for i in range(v)])
    LT = np.array([_combine(alpha, b, Hd, qd, v - 1 - i, 1) for i in range(v)])
    return T, LT, Hd[0]


def transform_eval(system, alpha, beta, x) -> np.ndarray:
    """Evaluate the immersion ``𝒯(x)``; the last entry is ``q(x) - β_0 H(x)``."""
    b = _beta_array(beta)
    v = alpha.order
    Hd, qd = lie_table(system, list(map(float, x)), v - 1)
    Hd = [np.asarray(h) for h in Hd]
    return np.array([_combine(alpha, b, Hd, qd, v - 1 - i, 0) for i in range(v)])


def _relative(diffs, lhs, rhs, name, tol):
    diffs = np.asarray(diffs)
    scale = max(float(np.max(np.abs(lhs))), float(np.max(np.abs(rhs))), 1.0)
    per = np.max(np.abs(diffs), axis=1) / scale
    return VerifyReport(name, float(np.max(per)) if per.size else 0.0, tol, per)


def verify_pde(system, obs, alpha, beta, samples, tol=1e-9) -> VerifyReport:
    """Check ``L_F 𝒯 = A 𝒯 + B H`` at the samples.

    ``L_F 𝒯`` comes from one extra jet order, not finite differences.  The
    mismatch is relative to the largest magnitude on either side, or absolute
    when that magnitude is below one.
    """
    lhs, rhs = [], []
    for x in samples:
        T, LT, H = transform_with_derivative(system, alpha, beta, x)
        lhs.append(LT)
        rhs.append(obs.A @ T + obs.B @ H)
    lhs, rhs = np.array(lhs), np.array(rhs)
    return _relative(lhs - rhs, lhs, rhs, "pde", tol)


def verify_output(system, obs, alpha, beta, samples, tol=1e-12) -> VerifyReport:
    """Check ``q = C 𝒯 + D H`` at the samples."""
    lhs, rhs = [], []
    for x in samples:
        xl = list(map(float, x))
        T = transform_eval(system, alpha, beta, xl)
        lhs.append([system.q(xl)])
        rhs.append(obs.C @ T + obs.D @ np.asarray(system.H(xl)))
    lhs, rhs = np.array(lhs), np.array(rhs)
    return _relative(lhs - rhs, lhs, rhs, "output", tol)
