"""The prolongation algebroid over the dual bundle and its canonical symplectic section.

Vectors of the prolongation at a dual point (x, mu) are pairs (b, v) with
v = (v_x, v_mu) and v_x = a(x)^T b.  In the ordered basis

    X_alpha = (e_alpha, (a_alpha, 0)),   P^alpha = (0, (0, d/dmu_alpha))

such a vector has coordinates z = (b, v_mu), and every two-section is a
2n x 2n matrix acting on these coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .algebroid import (
    AlgebroidSpec, SectionEStar, _sum, compiled, d_one_section, vector_field_commutator,
)
from .expr import ONE, ZERO, Expr, ExprDomainError, Var, add, differentiate, mul, sub
from .report import ResidualReport

DET_FLOOR = 1e-12


class SingularOmegaError(ArithmeticError):
    def __init__(self, det: float, at):
        self.det = det
        self.at = at
        super().__init__(f"canonical symplectic section is singular (det={det:.3e}) at {at}")


@dataclass(frozen=True)
class DualPoint:
    x: np.ndarray
    mu: np.ndarray

    @classmethod
    def of(cls, x, mu) -> "DualPoint":
        return cls(np.asarray(x, dtype=float).ravel(), np.asarray(mu, dtype=float).ravel())

    @property
    def z(self) -> np.ndarray:
        return np.concatenate([self.x, self.mu])

    def as_list(self) -> list[float]:
        return self.z.tolist()


@dataclass(frozen=True)
class ProlongVec:
    at: DualPoint
    b: np.ndarray
    v: np.ndarray  # (v_x, v_mu)

    @property
    def v_x(self) -> np.ndarray:
        return self.v[: self.at.x.size]

    @property
    def v_mu(self) -> np.ndarray:
        return self.v[self.at.x.size:]

    @property
    def coords(self) -> np.ndarray:
        """Coordinates in the (X_alpha, P^alpha) basis."""
        return np.concatenate([self.b, self.v_mu])

    def compatibility_residual(self, A: AlgebroidSpec) -> float:
        if A.m == 0:
            return 0.0
        return float(np.max(np.abs(self.v_x - A.anchor_at(self.at.x).T @ self.b)))

    def flat(self) -> np.ndarray:
        return np.concatenate([self.b, self.v])


@dataclass(frozen=True)
class OmegaMatrix:
    at: DualPoint
    matrix: np.ndarray

    @property
    def xx(self) -> np.ndarray:
        n = self.matrix.shape[0] // 2
        return self.matrix[:n, :n]

    @property
    def xp(self) -> np.ndarray:
        n = self.matrix.shape[0] // 2
        return self.matrix[:n, n:]

    @property
    def pp(self) -> np.ndarray:
        n = self.matrix.shape[0] // 2
        return self.matrix[n:, n:]

    def pair(self, v: ProlongVec, w: ProlongVec) -> float:
        return float(v.coords @ self.matrix @ w.coords)


@dataclass(frozen=True)
class HamSectionCoeffs:
    """xi_H = A^alpha X_alpha + B_alpha P^alpha at a dual point."""

    at: DualPoint
    A: np.ndarray
    B: np.ndarray

    def as_prolong_vec(self, Alg: AlgebroidSpec) -> ProlongVec:
        return prolong_vec(Alg, self.at, self.A, self.B)


def prolong_vec(A: AlgebroidSpec, at: DualPoint, b, v_mu) -> ProlongVec:
    """The compatible vector with E-part b and vertical part v_mu."""
    b = np.asarray(b, dtype=float)
    v_x = A.anchor_at(at.x).T @ b if A.m else np.zeros(0)
    return ProlongVec(at, b, np.concatenate([v_x, np.asarray(v_mu, dtype=float)]))


def random_prolong_vec(A: AlgebroidSpec, at: DualPoint, rng: np.random.Generator) -> ProlongVec:
    return prolong_vec(A, at, rng.standard_normal(A.n), rng.standard_normal(A.n))


# ---------------------------------------------------------------- Liouville section and Omega

def liouville_pair(A: AlgebroidSpec, w: ProlongVec) -> float:
    """Theta(a*)(b, v) = a*(b)."""
    return float(w.at.mu @ w.b)


def exact_contract(T: np.ndarray, v: np.ndarray) -> np.ndarray:
    """T contracted with v on its last index, each sum correctly rounded.

    Padding T and v with zero entries leaves the result bit-identical, which
    keeps extended-algebroid residuals equal to the autonomous ones.
    """
    T = np.asarray(T, dtype=float)
    v = np.asarray(v, dtype=float)
    flat = T.reshape(int(np.prod(T.shape[:-1])), T.shape[-1])
    out = [math.fsum((row * v).tolist()) for row in flat]
    return np.array(out, dtype=float).reshape(T.shape[:-1])


def omega_closed_form(A: AlgebroidSpec, p: DualPoint) -> OmegaMatrix:
    """Omega(X_a, X_b) = c^g_ab mu_g, Omega(X_a, P^b) = delta_a^b, Omega(P, P) = 0."""
    n = A.n
    C = exact_contract(A.structure_at(p.x), p.mu) if n else np.zeros((0, 0))
    eye = np.eye(n)
    M = np.block([[C, eye], [-eye, np.zeros((n, n))]])
    return OmegaMatrix(p, M)


@dataclass(frozen=True)
class ProlongSection:
    """Section (f_alpha (X_alpha o tau*), V) of the prolongation over E*.

    ``e_coeffs`` are functions on E*; ``field`` is a vector field on E* given by
    its components along (x, mu).
    """

    e_coeffs: tuple[Expr, ...]
    field: tuple[Expr, ...]


def prolong_basis(A: AlgebroidSpec) -> list[ProlongSection]:
    n, m = A.n, A.m
    out = []
    for a in range(n):
        e = tuple(ONE if b == a else ZERO for b in range(n))
        out.append(ProlongSection(e, tuple(A.anchor[a]) + (ZERO,) * n))
    for a in range(n):
        f = tuple(ONE if b == a else ZERO for b in range(n))
        out.append(ProlongSection((ZERO,) * n, (ZERO,) * m + f))
    return out


def apply_field(field: Sequence[Expr], f: Expr, names: Sequence[str]) -> Expr:
    return _sum(mul(field[k], differentiate(f, name)) for k, name in enumerate(names))


def prolong_bracket(A: AlgebroidSpec, Z1: ProlongSection, Z2: ProlongSection) -> ProlongSection:
    """[(f_i X_i, V), (g_j X_j, W)] = (f_i g_j [X_i, X_j] + V(g_j) X_j - W(f_i) X_i, [V, W])."""
    names = A.dual_vars
    n = A.n
    e = []
    for g in range(n):
        algebraic = _sum(
            mul(mul(Z1.e_coeffs[i], Z2.e_coeffs[j]), A.structure_tensor[i][j][g])
            for i in range(n) for j in range(n)
        )
        e.append(sub(add(algebraic, apply_field(Z1.field, Z2.e_coeffs[g], names)),
                     apply_field(Z2.field, Z1.e_coeffs[g], names)))
    return ProlongSection(tuple(e), vector_field_commutator(Z1.field, Z2.field, names))


def liouville_expr(A: AlgebroidSpec, Z: ProlongSection) -> Expr:
    return _sum(mul(Var(mu), Z.e_coeffs[a]) for a, mu in enumerate(A.fiber_vars))


@lru_cache(maxsize=256)
def _omega_oracle(A: AlgebroidSpec):
    """Symbolic Omega = -d Theta on basis pairs from the prolongation bracket and anchor."""
    names = A.dual_vars
    basis = prolong_basis(A)
    k = len(basis)
    entries = [[ZERO] * k for _ in range(k)]
    theta = [liouville_expr(A, Z) for Z in basis]
    for i in range(k):
        for j in range(i + 1, k):
            br = prolong_bracket(A, basis[i], basis[j])
            d_theta = sub(sub(apply_field(basis[i].field, theta[j], names),
                              apply_field(basis[j].field, theta[i], names)),
                          liouville_expr(A, br))
            entries[i][j] = -d_theta
            entries[j][i] = d_theta
    flat = tuple(e for row in entries for e in row)
    return compiled(flat, names), k


def omega_from_bracket(A: AlgebroidSpec, p: DualPoint) -> OmegaMatrix:
    fn, k = _omega_oracle(A)
    return OmegaMatrix(p, np.array(fn(p.as_list()), dtype=float).reshape(k, k))


def omega_cross_check(A: AlgebroidSpec, points: Sequence[DualPoint], tol: float = 1e-10,
                      seed: int | None = None) -> ResidualReport:
    """Closed form vs first-principles Omega, antisymmetry and non-degeneracy."""
    report = ResidualReport("omega_oracle", tol, seed, ("oracle", "antisymmetry", "degenerate"))
    for p in points:
        try:
            closed = omega_closed_form(A, p).matrix
            oracle = omega_from_bracket(A, p).matrix
        except ExprDomainError:
            report.skipped += 1
            continue
        det = float(np.linalg.det(closed)) if closed.size else 1.0
        report.add(p.as_list(),
                   oracle=np.max(np.abs(closed - oracle), initial=0.0),
                   antisymmetry=np.max(np.abs(closed + closed.T), initial=0.0),
                   degenerate=0.0 if abs(det) > DET_FLOOR else 1.0,
                   det=det)
    return report


# ---------------------------------------------------------------- Hamiltonian section

@lru_cache(maxsize=1024)
def hamiltonian_gradients(A: AlgebroidSpec, H: Expr):
    """Compiled (dH/dx_1..m, dH/dmu_1..n) over the dual coordinates."""
    grads = tuple(differentiate(H, v) for v in A.dual_vars)
    return compiled(grads, A.dual_vars)


def _grads(A: AlgebroidSpec, H: Expr, p: DualPoint):
    g = np.array(hamiltonian_gradients(A, H)(p.as_list()), dtype=float)
    return g[: A.m], g[A.m:]


def dH_on_basis(A: AlgebroidSpec, H: Expr, p: DualPoint) -> np.ndarray:
    """(dH(X_b), dH(P^b)) = (sum_i a_bi dH/dx_i, dH/dmu_b)."""
    gx, gmu = _grads(A, H, p)
    rho_h = exact_contract(A.anchor_at(p.x), gx) if A.m else np.zeros(A.n)
    return np.concatenate([rho_h, gmu])


def hamiltonian_section(A: AlgebroidSpec, H: Expr, p: DualPoint) -> HamSectionCoeffs:
    """Solve i_xi Omega = dH, i.e. Omega^T xi = dH, on the 2n x 2n basis.

    Omega has the block form [[C, I], [-I, 0]], so the system reads
    C^T A - B = rho(dH), A = dH/dmu and is solved by block elimination.  Any
    other shape goes through a general LU solve.
    """
    om = omega_closed_form(A, p)
    n = A.n
    eye = np.eye(n)
    if n and np.array_equal(om.xp, eye) and np.array_equal(om.pp, np.zeros((n, n))) \
            and np.array_equal(om.matrix[n:, :n], -eye):
        dh = dH_on_basis(A, H, p)
        a, rho_h = dh[n:], dh[:n]
        return HamSectionCoeffs(p, a, exact_contract(om.xx.T, a) - rho_h)
    return hamiltonian_section_lu(A, H, p)


def hamiltonian_section_lu(A: AlgebroidSpec, H: Expr, p: DualPoint) -> HamSectionCoeffs:
    """Generic LU solve of Omega^T xi = dH; the oracle for the block elimination."""
    omega = omega_closed_form(A, p).matrix
    det = float(np.linalg.det(omega)) if omega.size else 1.0
    if abs(det) <= DET_FLOOR:
        raise SingularOmegaError(det, p.as_list())
    xi = np.linalg.solve(omega.T, dH_on_basis(A, H, p)) if omega.size else np.zeros(0)
    return HamSectionCoeffs(p, xi[: A.n], xi[A.n:])


def hamiltonian_section_closed(A: AlgebroidSpec, H: Expr, p: DualPoint) -> HamSectionCoeffs:
    """A^b = dH/dmu_b, B_b = sum c^g_ab mu_g dH/dmu_a - sum_i a_bi dH/dx_i."""
    gx, gmu = _grads(A, H, p)
    C = np.einsum("abg,g->ab", A.structure_at(p.x), p.mu) if A.n else np.zeros((0, 0))
    rho_h = A.anchor_at(p.x) @ gx if A.m else np.zeros(A.n)
    return HamSectionCoeffs(p, gmu, C.T @ gmu - rho_h)


def interior_residual(A: AlgebroidSpec, H: Expr, xi: HamSectionCoeffs) -> float:
    """max |i_xi Omega - dH| on the basis."""
    omega = omega_closed_form(A, xi.at).matrix
    lhs = omega.T @ np.concatenate([xi.A, xi.B])
    return float(np.max(np.abs(lhs - dH_on_basis(A, H, xi.at)), initial=0.0))


def hamiltonian_section_check(A: AlgebroidSpec, H: Expr, points: Sequence[DualPoint], tol: float = 1e-10,
                              seed: int | None = None) -> ResidualReport:
    """LU-solve residual of i_xi Omega = dH and its distance to the closed form."""
    report = ResidualReport("hamiltonian_section", tol, seed, ("interior", "closed_form"))
    for p in points:
        try:
            xi = hamiltonian_section_lu(A, H, p)
            closed = hamiltonian_section_closed(A, H, p)
        except (ExprDomainError, SingularOmegaError):
            report.skipped += 1
            continue
        gap = np.concatenate([xi.A - closed.A, xi.B - closed.B])
        report.add(p.as_list(), interior=interior_residual(A, H, xi),
                   closed_form=float(np.max(np.abs(gap), initial=0.0)))
    return report


# ---------------------------------------------------------------- the morphism (phi_gamma, gamma)

@lru_cache(maxsize=1024)
def section_terms(A: AlgebroidSpec, gamma: SectionEStar):
    """Compiled gamma values followed by the n x m Jacobian d gamma_a / dx_i."""
    exprs = tuple(gamma.components) + tuple(
        differentiate(g, xi) for g in gamma.components for xi in A.base_vars
    )
    return compiled(exprs, A.base_vars)


def section_value(A: AlgebroidSpec, gamma: SectionEStar, x) -> tuple[np.ndarray, np.ndarray]:
    vals = np.array(section_terms(A, gamma)(np.asarray(x, dtype=float).tolist()), dtype=float)
    return vals[: A.n], vals[A.n:].reshape(A.n, A.m)


def lift_matrix(A: AlgebroidSpec, gamma: SectionEStar, x) -> tuple[np.ndarray, np.ndarray]:
    """gamma(x) and P = J_gamma a^T, so that (phi_gamma, gamma)(e) has coordinates (e, P e)."""
    g, J = section_value(A, gamma, x)
    P = J @ A.anchor_at(x).T if A.m else np.zeros((A.n, A.n))
    return g, P


def phi_gamma(A: AlgebroidSpec, gamma: SectionEStar, e, p) -> ProlongVec:
    """(phi_gamma, gamma)(e) = (e, T gamma(rho(e))) at (p, gamma(p))."""
    x = np.asarray(p, dtype=float).ravel()
    g, J = section_value(A, gamma, x)
    e = np.asarray(e, dtype=float)
    v_x = A.anchor_at(x).T @ e if A.m else np.zeros(0)
    v_mu = J @ v_x if A.m else np.zeros(A.n)
    return ProlongVec(DualPoint.of(x, g), e.copy(), np.concatenate([v_x, v_mu]))


def t_tilde_lambda(A: AlgebroidSpec, gamma: SectionEStar, w: ProlongVec) -> ProlongVec:
    """(phi_gamma, gamma) o pr_1; the image sits at (x, gamma(x))."""
    return phi_gamma(A, gamma, w.b, w.at.x)


def verify_prop4(A: AlgebroidSpec, gamma: SectionEStar, samples, tol: float = 1e-8,
                 seed: int | None = None, pairs: int = 3) -> ResidualReport:
    """(phi_gamma, gamma)^* Theta = gamma and (phi_gamma, gamma)^* Omega = -d gamma."""
    rng = np.random.default_rng(seed)
    report = ResidualReport("prop4", tol, seed, ("pullback_theta", "pullback_omega"))
    for x in np.asarray(samples, dtype=float).reshape(len(samples), A.m):
        try:
            g, _ = section_value(A, gamma, x)
            omega = omega_closed_form(A, DualPoint.of(x, g))
            dg = d_one_section(A, gamma, x)
        except ExprDomainError:
            report.skipped += 1
            continue
        r_theta = r_omega = 0.0
        for _ in range(pairs):
            e, f = rng.standard_normal(A.n), rng.standard_normal(A.n)
            ve, vf = phi_gamma(A, gamma, e, x), phi_gamma(A, gamma, f, x)
            r_theta = max(r_theta, abs(liouville_pair(A, ve) - g @ e))
            r_omega = max(r_omega, abs(omega.pair(ve, vf) + e @ dg @ f))
        report.add(x, pullback_theta=r_theta, pullback_omega=r_omega)
    return report


def verify_lemma7(A: AlgebroidSpec, gamma: SectionEStar, samples, tol: float = 1e-8,
                  seed: int | None = None, pairs: int = 3) -> ResidualReport:
    """Check at dual points on the image of gamma, for random compatible v, w:

    (i)  Omega(T v, T w) = -d gamma(pr_1 v, pr_1 w)
    (ii) Omega(T v, w) = Omega(v, w - T w) - d gamma(pr_1 v, pr_1 w)

    with T = (phi_gamma, gamma) o pr_1.
    """
    rng = np.random.default_rng(seed)
    report = ResidualReport("lemma7", tol, seed, ("lemma7_i", "lemma7_ii"))
    for x in np.asarray(samples, dtype=float).reshape(len(samples), A.m):
        try:
            g, _ = section_value(A, gamma, x)
            p = DualPoint.of(x, g)
            omega = omega_closed_form(A, p)
            dg = d_one_section(A, gamma, x)
        except ExprDomainError:
            report.skipped += 1
            continue
        r1 = r2 = 0.0
        for _ in range(pairs):
            v, w = random_prolong_vec(A, p, rng), random_prolong_vec(A, p, rng)
            tv, tw = t_tilde_lambda(A, gamma, v), t_tilde_lambda(A, gamma, w)
            dgvw = v.b @ dg @ w.b
            r1 = max(r1, abs(omega.pair(tv, tw) + dgvw))
            w_minus = ProlongVec(p, w.b - tw.b, w.v - tw.v)
            r2 = max(r2, abs(omega.pair(tv, w) - omega.pair(v, w_minus) + dgvw))
        report.add(x, lemma7_i=r1, lemma7_ii=r2)
    return report
