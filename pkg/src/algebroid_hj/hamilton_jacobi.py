"""Residual checks for Hamilton-Jacobi candidates: cocycle, Type I, symplectic morphisms, Type II."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .algebroid import AlgebroidSpec, SectionEStar, compiled, d_one_section, sample_box
from .expr import Expr, ExprDomainError, differentiate, parse, substitute, variables
from .prolongation import (
    DualPoint, ProlongVec, SingularOmegaError, hamiltonian_section, lift_matrix, omega_closed_form,
    omega_cross_check, prolong_vec, random_prolong_vec, section_value,
)
from .report import ResidualReport

THEOREM_TOL = 1e-7
SENSITIVITY_FLOOR = 0.1


class OmegaInconsistentError(RuntimeError):
    pass


@dataclass(frozen=True)
class FiberMorphism:
    """Fiber map eps(x, mu) = (x, eps_1(x, mu), ..., eps_n(x, mu)) over the identity of M."""

    components: tuple[Expr, ...]

    @classmethod
    def parse(cls, sources: Sequence, variables: Sequence[str] | None = None) -> "FiberMorphism":
        return cls(tuple(s if isinstance(s, Expr) else parse(str(s), variables) for s in sources))

    @classmethod
    def identity(cls, A: AlgebroidSpec) -> "FiberMorphism":
        return cls(tuple(parse(v, A.dual_vars) for v in A.fiber_vars))

    def check(self, A: AlgebroidSpec) -> None:
        if len(self.components) != A.n:
            raise ValueError(f"morphism has {len(self.components)} components, rank is {A.n}")
        allowed = set(A.dual_vars)
        for c in self.components:
            extra = variables(c) - allowed
            if extra:
                raise ValueError(f"morphism component {c} uses undeclared variable {sorted(extra)[0]}")


@lru_cache(maxsize=512)
def _morphism_terms(A: AlgebroidSpec, eps: FiberMorphism):
    eps.check(A)
    exprs = tuple(eps.components) + tuple(
        differentiate(c, v) for c in eps.components for v in A.dual_vars
    )
    return compiled(exprs, A.dual_vars)


def apply_morphism(A: AlgebroidSpec, eps: FiberMorphism, p: DualPoint) -> tuple[DualPoint, np.ndarray, np.ndarray]:
    """eps(p) and the Jacobian blocks d eps/dx (n x m), d eps/dmu (n x n)."""
    vals = np.array(_morphism_terms(A, eps)(p.as_list()), dtype=float)
    n, m = A.n, A.m
    jac = vals[n:].reshape(n, m + n)
    return DualPoint(p.x.copy(), vals[:n]), jac[:, :m], jac[:, m:]


def push_forward(A: AlgebroidSpec, eps: FiberMorphism, v: ProlongVec) -> ProlongVec:
    """T eps (b, v) = (b, T eps . v); lands at eps(v.at) and stays compatible."""
    q, jx, jmu = apply_morphism(A, eps, v.at)
    v_mu = (jx @ v.v_x if A.m else 0.0) + jmu @ v.v_mu
    return ProlongVec(q, v.b.copy(), np.concatenate([v.v_x, v_mu]))


def compose_hamiltonian(A: AlgebroidSpec, H: Expr, eps: FiberMorphism) -> Expr:
    return substitute(H, dict(zip(A.fiber_vars, eps.components)))


def _sup(u, w) -> float:
    return float(np.max(np.abs(np.asarray(u) - np.asarray(w)), initial=0.0))


def ensure_omega_consistent(A: AlgebroidSpec, seed: int = 0, count: int = 10,
                            x_box=None, mu_box=None, tol: float = 1e-10) -> ResidualReport:
    """Refuse to proceed when the closed-form Omega disagrees with the bracket-derived one."""
    rng = np.random.default_rng(seed)
    xs = sample_box(x_box if x_box is not None else [[-1.0, 1.0]] * A.m, count, rng)
    mus = sample_box(mu_box if mu_box is not None else [[-1.0, 1.0]] * A.n, count, rng)
    report = omega_cross_check(A, [DualPoint.of(x, mu) for x, mu in zip(xs, mus)], tol, seed)
    if not report.passed:
        raise OmegaInconsistentError(f"Omega cross-check failed: {report.summary()}")
    return report


# ---------------------------------------------------------------- cocycle and Type I

def cocycle_residual(A: AlgebroidSpec, gamma: SectionEStar, samples, tol: float = 1e-8,
                     seed: int | None = None) -> ResidualReport:
    """max over alpha < beta of |(d gamma)_{alpha beta}|."""
    report = ResidualReport("cocycle", tol, seed, ("cocycle",))
    for x in np.asarray(samples, dtype=float).reshape(len(samples), A.m):
        try:
            dg = d_one_section(A, gamma, x)
        except ExprDomainError:
            report.skipped += 1
            continue
        report.add(x, cocycle=float(np.max(np.abs(np.triu(dg, 1)), initial=0.0)))
    return report


def type1_vectors(A: AlgebroidSpec, H: Expr, gamma: SectionEStar, x) -> tuple[ProlongVec, ProlongVec]:
    """((phi_gamma, gamma)(xi_H^gamma), xi_H o gamma) at the point x of the base."""
    x = np.asarray(x, dtype=float).ravel()
    g, P = lift_matrix(A, gamma, x)
    p = DualPoint(x, g)
    xi = hamiltonian_section(A, H, p)
    rhs = prolong_vec(A, p, xi.A, xi.B)
    lhs = prolong_vec(A, p, xi.A, P @ xi.A)
    return lhs, rhs


def type1_residual(A: AlgebroidSpec, H: Expr, gamma: SectionEStar, samples, tol: float = THEOREM_TOL,
                   seed: int | None = None) -> ResidualReport:
    report = ResidualReport("type1", tol, seed, ("type1",))
    for x in np.asarray(samples, dtype=float).reshape(len(samples), A.m):
        try:
            lhs, rhs = type1_vectors(A, H, gamma, x)
        except (ExprDomainError, SingularOmegaError):
            report.skipped += 1
            continue
        report.add(x, type1=_sup(lhs.flat(), rhs.flat()))
    return report


# ---------------------------------------------------------------- symplectic morphisms and Type II

def symplectic_residual(A: AlgebroidSpec, eps: FiberMorphism, samples: Sequence[DualPoint],
                        tol: float = 1e-8, seed: int | None = None, pairs: int = 3) -> ResidualReport:
    """|Omega_{eps(p)}(T eps v, T eps w) - Omega_p(v, w)| on basis pairs and random compatible pairs."""
    rng = np.random.default_rng(seed)
    report = ResidualReport("symplectic", tol, seed, ("symplectic",))
    n = A.n
    for p in samples:
        try:
            q, jx, jmu = apply_morphism(A, eps, p)
            om_p = omega_closed_form(A, p).matrix
            om_q = omega_closed_form(A, q).matrix
        except ExprDomainError:
            report.skipped += 1
            continue
        # matrix of T eps in (X, P) coordinates: (b, u) -> (b, jx a^T b + jmu u)
        T = np.eye(2 * n)
        T[n:, :n] = jx @ A.anchor_at(p.x).T if A.m else 0.0
        T[n:, n:] = jmu
        basis_res = float(np.max(np.abs(T.T @ om_q @ T - om_p), initial=0.0))
        rand_res = 0.0
        for _ in range(pairs):
            v, w = random_prolong_vec(A, p, rng), random_prolong_vec(A, p, rng)
            tv, tw = push_forward(A, eps, v), push_forward(A, eps, w)
            rand_res = max(rand_res, abs(tv.coords @ om_q @ tw.coords - v.coords @ om_p @ w.coords))
        report.add(p.as_list(), symplectic=max(basis_res, rand_res), basis=basis_res, random=rand_res)
    return report


def preimage_points(A: AlgebroidSpec, gamma: SectionEStar, eps: FiberMorphism, xs,
                    max_iter: int = 50, tol: float = 1e-13) -> list[DualPoint | None]:
    """Dual points p over each x with eps(p) = gamma(x), by Newton's method in mu.

    These are the points where the two sides of the Type II equation live in
    the same fiber.  ``None`` marks points where Newton did not converge.
    """
    out: list[DualPoint | None] = []
    for x in np.asarray(xs, dtype=float).reshape(len(xs), A.m):
        try:
            g, _ = section_value(A, gamma, x)
        except ExprDomainError:
            out.append(None)
            continue
        mu = g.copy()
        found = None
        for _ in range(max_iter):
            try:
                q, _, jmu = apply_morphism(A, eps, DualPoint(x, mu))
                step = np.linalg.solve(jmu, q.mu - g)
            except (ExprDomainError, np.linalg.LinAlgError):
                break
            mu = mu - step
            if not np.all(np.isfinite(mu)):
                break
            if np.max(np.abs(step), initial=0.0) <= tol * max(1.0, float(np.max(np.abs(mu), initial=0.0))):
                found = DualPoint(x.copy(), mu)
                break
        out.append(found)
    return out


def type2_vectors(A: AlgebroidSpec, H: Expr, gamma: SectionEStar, eps: FiberMorphism, p: DualPoint,
                  alt: bool = False) -> dict[str, float]:
    """Both sides of the Type II equation and of its companion at the dual point p."""
    q, _, _ = apply_morphism(A, eps, p)
    xi_q = hamiltonian_section(A, H, q)
    _, P = lift_matrix(A, gamma, p.x)
    xi_q_vec = prolong_vec(A, q, xi_q.A, xi_q.B)
    # (phi_gamma, gamma) applied to xi_H^eps = pr_1 xi_H(eps(p)); equals T~lambda(xi_H(eps(p)))
    lifted = prolong_vec(A, q, xi_q.A, P @ xi_q.A)
    res_b = _sup(lifted.flat(), xi_q_vec.flat())
    xi_comp = hamiltonian_section(A, compose_hamiltonian(A, H, eps), p)
    pushed = push_forward(A, eps, prolong_vec(A, p, xi_comp.A, xi_comp.B))
    res_a = _sup(pushed.flat(), lifted.flat())
    out = {"type2": res_b, "companion": res_a}
    if alt:
        xi_p = hamiltonian_section(A, H, p)
        pushed_alt = push_forward(A, eps, prolong_vec(A, p, xi_p.A, xi_p.B))
        out["companion_alt"] = _sup(pushed_alt.flat(), lifted.flat())
    return out


def type2_residuals(A: AlgebroidSpec, H: Expr, gamma: SectionEStar, eps: FiberMorphism,
                    samples: Sequence[DualPoint | None], tol: float = THEOREM_TOL, seed: int | None = None,
                    alt: bool = False, symplectic_tol: float = 1e-8) -> ResidualReport:
    """Type II residual and the companion residual T eps(xi_{H o eps}) - T~lambda(xi_H o eps).

    ``alt`` additionally reports the companion with xi_H in place of
    xi_{H o eps}.  The report records whether eps passed the symplectic test
    and whether the two families agree on pass/fail at ``tol``.
    """
    keys = ("type2", "companion")
    report = ResidualReport("type2", tol, seed, keys)
    points = [p for p in samples if p is not None]
    report.skipped = len(samples) - len(points)
    for p in points:
        try:
            vals = type2_vectors(A, H, gamma, eps, p, alt=alt)
        except (ExprDomainError, SingularOmegaError):
            report.skipped += 1
            continue
        report.add(p.as_list(), **vals)
    sym = symplectic_residual(A, eps, points, tol=symplectic_tol, seed=seed) if points else None
    report.extra["symplectic"] = bool(sym is not None and sym.passed)
    report.extra["symplectic_max"] = sym.max if sym is not None else float("inf")
    report.extra["equivalent"] = families_agree(report, tol)
    return report


def families_agree(report: ResidualReport, tol: float) -> bool:
    """Type II and companion residuals pass or fail together at ``tol``."""
    if not report.samples:
        return False
    a = report.family_max("type2") <= tol
    b = report.family_max("companion") <= tol
    return a == b
