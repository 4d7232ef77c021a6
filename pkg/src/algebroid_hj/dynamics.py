"""Hamilton's equations on the dual bundle, fixed-step RK4, and the characteristic-curve check."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .algebroid import AlgebroidSpec, SectionEStar, compiled, d_function, d_one_section
from .expr import Expr, ExprDomainError, evaluate, substitute
from .prolongation import (
    DualPoint, SingularOmegaError, _grads, hamiltonian_section, omega_closed_form, section_value,
)
from .report import ResidualReport, format_float


class IntegrationError(RuntimeError):
    def __init__(self, message: str, step: int):
        self.step = step
        super().__init__(f"{message} at step {step}")


@dataclass
class Trajectory:
    times: list[float]
    states: list[DualPoint]
    meta: dict = field(default_factory=dict)

    def array(self) -> np.ndarray:
        return np.array([s.z for s in self.states])

    def to_csv(self, A: AlgebroidSpec, H: Expr | None = None) -> str:
        """Header ``t,<state coordinates>,H``; floats to 17 significant digits."""
        cols = ["t_state" if v == "t" else v for v in A.dual_vars]
        header = ["t", *cols] + (["H"] if H is not None else [])
        out = io.StringIO()
        out.write(",".join(header) + "\n")
        for t, s in zip(self.times, self.states):
            row = [t, *s.z.tolist()]
            if H is not None:
                row.append(evaluate(H, dict(zip(A.dual_vars, s.z.tolist()))))
            out.write(",".join(format_float(float(v)) for v in row) + "\n")
        return out.getvalue()


def hamilton_rhs(A: AlgebroidSpec, H: Expr, p: DualPoint) -> np.ndarray:
    """(xdot, mudot) with xdot = a^T dH/dmu and mudot_b = sum c^g_ab mu_g dH/dmu_a - rho_b(H)."""
    gx, gmu = _grads(A, H, p)
    if A.m:
        a = A.anchor_at(p.x)
        xdot = a.T @ gmu
        rho_h = a @ gx
    else:
        xdot = np.zeros(0)
        rho_h = np.zeros(A.n)
    C = np.einsum("abg,g->ab", A.structure_at(p.x), p.mu)
    return np.concatenate([xdot, C.T @ gmu - rho_h])


def rk4_step(f: Callable[[float, np.ndarray], np.ndarray], t: float, y: np.ndarray, h: float) -> np.ndarray:
    k1 = f(t, y)
    k2 = f(t + h / 2, y + h / 2 * k1)
    k3 = f(t + h / 2, y + h / 2 * k2)
    k4 = f(t + h, y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def step_times(t0: float, t1: float, dt: float) -> list[float]:
    """Uniform grid t0, t0+dt, ... with the final step shortened to land on t1."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not t1 > t0:
        raise ValueError("t1 must exceed t0")
    count = math.floor((t1 - t0) / dt + 1e-9)
    times = [t0 + k * dt for k in range(count + 1)]
    if t1 - times[-1] > 1e-12 * max(1.0, abs(t1)):
        times.append(t1)
    else:
        times[-1] = t1
    return times


def rk4(f, y0, t0: float, t1: float, dt: float):
    """Fixed-step classical RK4.  Returns (times, states, diagnostic)."""
    times = step_times(t0, t1, dt)
    y = np.asarray(y0, dtype=float).copy()
    states = [y]
    for k in range(1, len(times)):
        t, h = times[k - 1], times[k] - times[k - 1]
        try:
            y = rk4_step(f, t, y, h)
        except (ExprDomainError, SingularOmegaError) as exc:
            return times[:k], states, f"right-hand side failed at step {k}: {exc}"
        if not np.all(np.isfinite(y)):
            raise IntegrationError("non-finite state", k)
        states.append(y)
    return times, states, None


def integrate(A: AlgebroidSpec, H: Expr, p0: DualPoint, t0: float, t1: float, dt: float,
              scenario: str = "") -> Trajectory:
    m = A.m

    def f(_t, y):
        return hamilton_rhs(A, H, DualPoint(y[:m], y[m:]))

    times, states, diag = rk4(f, p0.z, t0, t1, dt)
    meta = {"dt": dt, "scenario": scenario}
    if diag:
        meta["diagnostic"] = diag
    return Trajectory(times, [DualPoint(s[:m].copy(), s[m:].copy()) for s in states], meta)


def base_field_of_gamma(A: AlgebroidSpec, H: Expr, gamma: SectionEStar, p) -> np.ndarray:
    """rho(pr_1 xi_H(gamma(p))): the base velocity generated by gamma."""
    x = np.asarray(p, dtype=float).ravel()
    if A.m == 0:
        return np.zeros(0)
    g, _ = section_value(A, gamma, x)
    xi = hamiltonian_section(A, H, DualPoint(x, g))
    return A.anchor_at(x).T @ xi.A


@lru_cache(maxsize=512)
def hj_differential(A: AlgebroidSpec, H: Expr, gamma: SectionEStar):
    """Compiled components of d(H o gamma)."""
    composed = substitute(H, dict(zip(A.fiber_vars, gamma.components)))
    return compiled(d_function(A, composed).components, A.base_vars)


def hj_residual(A: AlgebroidSpec, H: Expr, gamma: SectionEStar, x) -> float:
    vals = hj_differential(A, H, gamma)(np.asarray(x, dtype=float).tolist())
    return float(np.max(np.abs(vals), initial=0.0))


def lifted_curve_residual(A: AlgebroidSpec, H: Expr, gamma: SectionEStar, x) -> np.ndarray:
    """d/dt gamma(sigma(t)) - X_H(gamma(sigma(t))) for a base curve with sigma' = base field.

    The time derivative of the lift uses the chain rule J_gamma sigma'.
    """
    x = np.asarray(x, dtype=float).ravel()
    g, J = section_value(A, gamma, x)
    p = DualPoint(x, g)
    sigma_dot = base_field_of_gamma(A, H, gamma, x)
    lift_dot = np.concatenate([sigma_dot, J @ sigma_dot if A.m else np.zeros(A.n)])
    return lift_dot - hamilton_rhs(A, H, p)


def verify_theorem5(A: AlgebroidSpec, H: Expr, gamma: SectionEStar, base_starts: Sequence,
                    horizon: float = 1.0, dt: float = 0.01, tol: float = 1e-6,
                    seed: int | None = None, require_cocycle: bool = True) -> ResidualReport:
    """Compare the Hamilton-Jacobi residual |d(H o gamma)| with the residual of lifted base curves.

    Each base start is integrated along sigma' = rho(xi_H^gamma)(sigma) up to
    ``horizon``; both residuals are sampled at every node of the curve.  With
    ``require_cocycle`` the cocycle residual of gamma counts toward pass/fail
    as the hypothesis of the equivalence.
    """
    keys = ("hj", "curve") + (("cocycle",) if require_cocycle else ())
    report = ResidualReport("theorem5", tol, seed, keys)
    consistent = True
    for x0 in np.asarray(base_starts, dtype=float).reshape(len(base_starts), A.m):
        if A.m:
            times, states, diag = rk4(lambda _t, y: base_field_of_gamma(A, H, gamma, y), x0, 0.0, horizon, dt)
            if diag:
                report.skipped += 1
                continue
        else:
            states = [x0]
        hj = curve = cocycle = 0.0
        try:
            for x in states:
                hj = max(hj, hj_residual(A, H, gamma, x))
                curve = max(curve, float(np.max(np.abs(lifted_curve_residual(A, H, gamma, x)), initial=0.0)))
                cocycle = max(cocycle, float(np.max(np.abs(d_one_section(A, gamma, x)), initial=0.0)))
        except (ExprDomainError, SingularOmegaError):
            report.skipped += 1
            continue
        consistent &= (curve > tol) == (hj > tol)
        report.add(x0, hj=hj, curve=curve, cocycle=cocycle)
    report.extra["horizon"] = horizon
    report.extra["dt"] = dt
    report.extra["equivalent"] = bool(consistent)
    return report
