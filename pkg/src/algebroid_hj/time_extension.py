"""Extended formalism for time-dependent Hamiltonians.

The algebroid E -> M is extended to R x E -> R x M with an extra basis
section e_0 whose anchor is d/dt and whose brackets all vanish.  Dual
coordinates become (t, x, e, mu) with e conjugate to t, and a time-dependent
H(t, x, mu) is replaced by the autonomous K = e + H on the extended dual.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .algebroid import AlgebroidError, AlgebroidSpec, SectionEStar
from .dynamics import Trajectory, integrate, verify_theorem5
from .expr import ONE, ZERO, Expr, Var, add, evaluate, neg, parse, substitute, variables
from .hamilton_jacobi import (
    THEOREM_TOL, FiberMorphism, preimage_points, type1_residual, type2_residuals,
)
from .prolongation import DualPoint
from .report import ResidualReport

TIME = "t"
ENERGY = "e"


@dataclass(frozen=True)
class ExtendedAlgebroid:
    inner: AlgebroidSpec
    spec: AlgebroidSpec

    @property
    def m(self) -> int:
        return self.spec.m

    @property
    def n(self) -> int:
        return self.spec.n


def extend_algebroid(A: AlgebroidSpec) -> ExtendedAlgebroid:
    if TIME in A.base_vars or ENERGY in A.fiber_vars:
        raise AlgebroidError("algebroid already uses the reserved names t / e")
    n = A.n
    anchor = ((ONE,) + (ZERO,) * A.m,) + tuple((ZERO,) + tuple(row) for row in A.anchor)
    structure = tuple(((a + 1, b + 1), (ZERO,) + tuple(comps)) for (a, b), comps in A.structure)
    spec = AlgebroidSpec(anchor, structure, (TIME,) + A.base_vars, (ENERGY,) + A.fiber_vars,
                         name=f"{A.name}+time" if A.name else "extended")
    assert spec.n == n + 1
    return ExtendedAlgebroid(A, spec)


def extend(A: AlgebroidSpec, H: Expr) -> tuple[ExtendedAlgebroid, Expr]:
    """Extended algebroid and the extended Hamiltonian K = e + H(t, x, mu)."""
    ext = extend_algebroid(A)
    extra = variables(H) - set(ext.spec.dual_vars)
    if extra:
        raise AlgebroidError(f"Hamiltonian uses undeclared variable {sorted(extra)[0]}")
    return ext, add(Var(ENERGY), H)


def project(p_ext: DualPoint) -> tuple[float, DualPoint]:
    """(t, e, x, mu) -> (t, (x, mu)); extended points store x = (t, x), mu = (e, mu)."""
    return float(p_ext.x[0]), DualPoint(p_ext.x[1:].copy(), p_ext.mu[1:].copy())


def embed(t: float, p: DualPoint, e: float) -> DualPoint:
    return DualPoint(np.concatenate([[t], p.x]), np.concatenate([[e], p.mu]))


def zero_level_point(A: AlgebroidSpec, H: Expr, t: float, p: DualPoint) -> DualPoint:
    """The extended point over (t, p) with e = -H(t, x, mu), where K vanishes."""
    bindings = {TIME: t, **dict(zip(A.base_vars, p.x.tolist())), **dict(zip(A.fiber_vars, p.mu.tolist()))}
    return embed(t, p, -evaluate(H, bindings))


def lift_section(A: AlgebroidSpec, H: Expr, gamma_t: SectionEStar) -> SectionEStar:
    """Gamma(t, x) = (-H(t, x, gamma_t(t, x)), gamma_t(t, x))."""
    if len(gamma_t.components) != A.n:
        raise AlgebroidError(f"time section has {len(gamma_t.components)} components, rank is {A.n}")
    energy = neg(substitute(H, dict(zip(A.fiber_vars, gamma_t.components))))
    return SectionEStar((energy,) + tuple(gamma_t.components))


def extend_morphism(A: AlgebroidSpec, eps: FiberMorphism, energy: Expr | None = None) -> FiberMorphism:
    """Extended fiber map (t, x, e, mu) -> (t, x, energy, eps(t, x, mu)); energy defaults to e."""
    return FiberMorphism(((energy if energy is not None else Var(ENERGY)),) + tuple(eps.components))


def integrate_extended(A: AlgebroidSpec, H: Expr, p0: DualPoint, t0: float, t1: float, dt: float,
                       scenario: str = "") -> tuple[ExtendedAlgebroid, Expr, Trajectory]:
    """Integrate the flow of K from the zero level over (t0, p0) until time t1.

    Since dt/ds = 1 the flow parameter starts at t0 and tracks the t state.
    """
    ext, K = extend(A, H)
    start = zero_level_point(A, H, t0, p0)
    return ext, K, integrate(ext.spec, K, start, t0, t1, dt, scenario)


def td_verify(kind: str, A: AlgebroidSpec, H: Expr, gamma_t: SectionEStar, samples,
              eps: FiberMorphism | None = None, tol: float = THEOREM_TOL, seed: int | None = None,
              horizon: float = 1.0, dt: float = 0.01, eps_energy: Expr | None = None,
              alt: bool = False) -> ResidualReport:
    """Run an autonomous verifier on the extended algebroid.

    ``samples`` are (t, x) points.  ``kind`` is ``"theorem10"``, ``"type1"`` or
    ``"type2"``.  Each sample also records the residual with the
    e-row dropped (the part seen through the projection to R x E*).
    """
    ext, K = extend(A, H)
    Gamma = lift_section(A, H, gamma_t)
    spec = ext.spec
    pts = np.asarray(samples, dtype=float).reshape(len(samples), spec.m)
    if kind == "theorem10":
        report = verify_theorem5(spec, K, Gamma, pts, horizon=horizon, dt=dt, tol=tol, seed=seed)
    elif kind == "type1":
        report = type1_residual(spec, K, Gamma, pts, tol=tol, seed=seed)
        _attach_projected(report, spec, K, Gamma)
    elif kind == "type2":
        if eps is None:
            raise ValueError("type2 needs a fiber morphism")
        eps_ext = extend_morphism(A, eps, eps_energy)
        points = preimage_points(spec, Gamma, eps_ext, pts)
        report = type2_residuals(spec, K, Gamma, eps_ext, points, tol=tol, seed=seed, alt=alt)
    else:
        raise ValueError(f"unknown time-dependent check {kind!r}")
    report.check = f"td_{kind}"
    return report


def _attach_projected(report: ResidualReport, spec: AlgebroidSpec, K: Expr, Gamma: SectionEStar) -> None:
    from .hamilton_jacobi import type1_vectors

    e_index = spec.n + spec.m  # position of v_e in (b, v_x, v_mu)
    for record in report.samples:
        lhs, rhs = type1_vectors(spec, K, Gamma, record.point)
        diff = np.abs(lhs.flat() - rhs.flat())
        record.values["projected"] = float(np.max(np.delete(diff, e_index), initial=0.0))


def parse_time_section(sources: Sequence[str], A: AlgebroidSpec) -> SectionEStar:
    names = (TIME,) + A.base_vars
    return SectionEStar(tuple(parse(s, names) for s in sources))
