"""Plant/observer co-simulation with fixed-step RK4.

Alongside the plant and the observer, the linear error model ``ė = A e`` with
``e(0) = ξ̂(0) - 𝒯(x(0))`` is integrated by the same RK4 steps, so the
recorded reference ``C e`` differs from the actual output error only by
integration error in the nonlinear parts of ``𝒯``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .expr import EvalDomainError
from .gfol import GeneralObserver, InversionError, transform_general
from .synth import ObserverLTI, transform_eval

__all__ = ["SimConfig", "Trajectory", "SimulationError", "DecayReport",
           "simulate", "error_decay_check", "export_csv", "observer_transform"]


class SimulationError(RuntimeError):
    def __init__(self, t, cause):
        super().__init__(f"evaluation failed at t = {t!r}: {cause}")
        self.t = t


@dataclass(frozen=True)
class SimConfig:
    t_end: float
    dt: float
    x0: tuple
    xi0: object = "consistent"  # array-like, or "consistent" for ξ̂(0) = 𝒯(x(0))
    stride: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end >= self.dt:
            raise ValueError("t_end must be at least dt")
        if int(self.stride) < 1:
            raise ValueError("record stride must be a positive integer")


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    xi: np.ndarray
    zhat: np.ndarray
    e_out: np.ndarray    # ẑ - z
    e_state: np.ndarray  # ξ̂ - 𝒯(x)
    e_ref: np.ndarray    # C e from the co-integrated linear error model
    e_lin: np.ndarray    # 𝒢(ẑ, y) - 𝒢(z, y); equals e_out for linear output maps

    def __len__(self):
        return self.times.shape[0]


def observer_transform(system, observer):
    if isinstance(observer, GeneralObserver):
        return lambda x: transform_general(system, observer.spec, x)
    return lambda x: transform_eval(system, observer.alpha, observer.beta, x)


def _observer_parts(observer):
    if isinstance(observer, GeneralObserver):
        spec = observer.spec
        inject = observer.B
        output = observer.output
        gdiff = lambda zhat, z, y: spec.G(zhat, y) - spec.G(z, y)  # noqa: E731
    elif isinstance(observer, ObserverLTI):
        B, C, D = observer.B, observer.C[0], observer.D[0]
        inject = lambda y: B @ y  # noqa: E731
        output = lambda xi, y: float(C @ xi + D @ y)  # noqa: E731
        gdiff = lambda zhat, z, y: zhat - z  # noqa: E731
    else:
        raise TypeError(f"unsupported observer type {type(observer).__name__}")
    return inject, output, gdiff


def simulate(system, observer, config: SimConfig) -> Trajectory:
    """Integrate plant, observer and linear error reference together.

    ``config.x0`` is in the model's own coordinates (deviation coordinates
    when the system carries an offset).
    """
    A = observer.A
    C = observer.C[0]
    n, v = system.n, observer.order
    if isinstance(observer, ObserverLTI) and observer.p != system.p:
        raise ValueError(f"observer expects {observer.p} outputs, system has {system.p}")
    inject, output, gdiff = _observer_parts(observer)
    transform = observer_transform(system, observer)

    x = np.asarray(config.x0, dtype=float)
    if x.shape != (n,):
        raise ValueError(f"x0 must have {n} entries")
    try:
        T0 = transform(x)
    except (EvalDomainError, ZeroDivisionError) as exc:
        raise SimulationError(0.0, exc) from exc
    if isinstance(config.xi0, str):
        if config.xi0 != "consistent":
            raise ValueError(f"unknown xi0 mode {config.xi0!r}")
        xi = T0.copy()
    else:
        xi = np.asarray(config.xi0, dtype=float).reshape(-1)
        if xi.shape != (v,):
            raise ValueError(f"xi0 must have {v} entries")
    e = xi - T0

    def rhs(s):
        xs = s[:n].tolist()
        y = np.array(system.H(xs), dtype=float)
        dx = system.F(xs)
        out = np.empty_like(s)
        out[:n] = dx
        out[n:n + v] = A @ s[n:n + v] + inject(y)
        out[n + v:] = A @ s[n + v:]
        return out

    dt = float(config.dt)
    steps = int(round(config.t_end / dt))
    stride = int(config.stride)
    state = np.concatenate([x, xi, e])
    rec = {k: [] for k in ("t", "x", "y", "z", "xi", "zhat", "eo", "es", "er", "el")}

    def record(k, s):
        t = k * dt
        xs = s[:n]
        xl = xs.tolist()
        y = np.array(system.H(xl), dtype=float)
        z = system.q(xl)
        xi_ = s[n:n + v]
        zhat = output(xi_, y)
        rec["t"].append(t)
        rec["x"].append(xs.copy())
        rec["y"].append(y)
        rec["z"].append(z)
        rec["xi"].append(xi_.copy())
        rec["zhat"].append(zhat)
        rec["eo"].append(zhat - z)
        rec["es"].append(xi_ - transform(xs))
        rec["er"].append(float(C @ s[n + v:]))
        rec["el"].append(gdiff(zhat, z, y))

    k = 0
    try:
        record(0, state)
        for k in range(1, steps + 1):
            k1 = rhs(state)
            k2 = rhs(state + 0.5 * dt * k1)
            k3 = rhs(state + 0.5 * dt * k2)
            k4 = rhs(state + dt * k3)
            state = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(state)):
                raise EvalDomainError("state became non-finite")
            if k % stride == 0:
                record(k, state)
    except (EvalDomainError, ZeroDivisionError, InversionError) as exc:
        raise SimulationError(k * dt, exc) from exc

    return Trajectory(
        times=np.array(rec["t"]), x=np.array(rec["x"]), y=np.array(rec["y"]),
        z=np.array(rec["z"]), xi=np.array(rec["xi"]), zhat=np.array(rec["zhat"]),
        e_out=np.array(rec["eo"]), e_state=np.array(rec["es"]),
        e_ref=np.array(rec["er"]), e_lin=np.array(rec["el"]))


@dataclass(frozen=True)
class DecayReport:
    max_deviation: float       # max_t |e_lin(t) - e_ref(t)|
    initial_error: float       # |e_lin(0)|
    relative_deviation: float  # max_deviation / |e_lin(0)| (inf when e(0) = 0)
    closed_form_deviation: float  # max_t |e_lin(t) - C e^{At} e(0)|
    tol: float
    abs_floor: float

    @property
    def passed(self) -> bool:
        return self.max_deviation <= max(self.tol * self.initial_error, self.abs_floor)

    def summary(self):
        return {"max_deviation": self.max_deviation,
                "initial_error": self.initial_error,
                "relative_deviation": (self.relative_deviation
                                       if math.isfinite(self.relative_deviation) else None),
                "closed_form_deviation": self.closed_form_deviation,
                "tol": self.tol, "passed": self.passed}


def error_decay_check(traj: Trajectory, obs, tol=1e-6, abs_floor=1e-8) -> DecayReport:
    """Compare the output error with the co-integrated linear reference.

    Passes when ``max |e_out - e_ref| <= max(tol |e_out(0)|, abs_floor)``; the
    absolute floor makes a zero initial error a vacuous pass.  The deviation
    from the closed form ``C e^{At} e(0)`` is reported as well (it carries the
    RK4 truncation error of the error model itself).
    """
    from scipy.linalg import expm

    if len(traj) < 10:
        raise ValueError("need at least 10 recorded points")
    dev = float(np.max(np.abs(traj.e_lin - traj.e_ref)))
    e0 = abs(float(traj.e_lin[0]))
    e_init = traj.e_state[0]
    A, C = obs.A, obs.C[0]
    closed = np.array([C @ expm(A * t) @ e_init for t in traj.times])
    cf = float(np.max(np.abs(traj.e_lin - closed)))
    rel = dev / e0 if e0 > 0 else math.inf
    return DecayReport(dev, e0, rel, cf, tol, abs_floor)


def export_csv(traj: Trajectory, path, n=None, p=None):
    """Write ``t,x1..xn,y1..yp,z,zhat,err,err_ref`` with round-trip precision."""
    if n is None:
        n = traj.x.shape[1] if traj.x.ndim == 2 else 0
    if p is None:
        p = traj.y.shape[1] if traj.y.ndim == 2 else 0
    header = (["t"] + [f"x{i + 1}" for i in range(n)] + [f"y{j + 1}" for j in range(p)]
              + ["z", "zhat", "err", "err_ref"])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k in range(len(traj)):
            row = [traj.times[k], *traj.x[k], *traj.y[k], traj.z[k], traj.zhat[k],
                   traj.e_out[k], traj.e_ref[k]]
            w.writerow([repr(float(v)) for v in row])
