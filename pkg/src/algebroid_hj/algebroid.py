"""Lie algebroids in a single chart: anchor, bracket, validation and the algebroid differential."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from .expr import (
    ONE, ZERO, Const, Expr, ExprDomainError, add, compile_exprs, differentiate, mul, neg, parse,
    sub, variables,
)
from .report import ResidualReport

DEFAULT_STRUCTURAL_TOL = 1e-8


class AlgebroidError(ValueError):
    pass


def _sum(terms) -> Expr:
    out = ZERO
    for t in terms:
        out = add(out, t)
    return out


@lru_cache(maxsize=4096)
def compiled(exprs: tuple[Expr, ...], names: tuple[str, ...]):
    return compile_exprs(exprs, names)


@dataclass(frozen=True)
class AlgebroidSpec:
    """Coordinate data of a Lie algebroid E -> M of rank n over an m-dimensional base.

    ``anchor[alpha][i]`` is a_{alpha i}, so rho(X_alpha) = sum_i a_{alpha i} d/dx_i.
    ``structure`` maps a pair (alpha, beta) with alpha < beta (0-based) to the n
    functions c^gamma_{alpha beta}; the remaining entries follow from antisymmetry.
    """

    anchor: tuple[tuple[Expr, ...], ...]
    structure: tuple[tuple[tuple[int, int], tuple[Expr, ...]], ...]
    base_vars: tuple[str, ...]
    fiber_vars: tuple[str, ...]
    name: str = field(default="", compare=False)

    def __post_init__(self):
        n, m = len(self.fiber_vars), len(self.base_vars)
        if len(self.anchor) != n or any(len(row) != m for row in self.anchor):
            raise AlgebroidError(f"anchor must be {n}x{m}")
        base = set(self.base_vars)
        for row in self.anchor:
            for a in row:
                extra = variables(a) - base
                if extra:
                    raise AlgebroidError(f"anchor entry {a} uses non-base variable {sorted(extra)[0]}")
        seen = set()
        for (alpha, beta), comps in self.structure:
            if not (0 <= alpha < beta < n):
                raise AlgebroidError(f"structure index ({alpha}, {beta}) must satisfy 0 <= alpha < beta < {n}")
            if (alpha, beta) in seen:
                raise AlgebroidError(f"duplicate structure entry ({alpha}, {beta})")
            seen.add((alpha, beta))
            if len(comps) != n:
                raise AlgebroidError(f"structure entry ({alpha}, {beta}) needs {n} components")
            for c in comps:
                extra = variables(c) - base
                if extra:
                    raise AlgebroidError(f"structure function {c} uses non-base variable {sorted(extra)[0]}")

    @classmethod
    def build(cls, anchor, structure: Mapping[tuple[int, int], Sequence] | None = None, *,
              base_vars: Sequence[str] | None = None, fiber_vars: Sequence[str] | None = None,
              rank: int | None = None, name: str = "") -> "AlgebroidSpec":
        """Convenience constructor accepting strings or Exprs (0-based structure keys)."""
        anchor = [list(row) for row in anchor]
        n = len(anchor) if rank is None else rank
        m = len(anchor[0]) if anchor and anchor[0] else (len(base_vars) if base_vars is not None else 0)
        if base_vars is None:
            base_vars = [f"x{i + 1}" for i in range(m)]
        if fiber_vars is None:
            fiber_vars = [f"mu{a + 1}" for a in range(n)]
        if not anchor:
            anchor = [[] for _ in range(n)]

        def as_expr(v):
            if isinstance(v, Expr):
                return v
            if isinstance(v, (int, float)):
                return Const(v)
            return parse(v, base_vars)

        a = tuple(tuple(as_expr(v) for v in row) for row in anchor)
        s = tuple(sorted(((int(k[0]), int(k[1])), tuple(as_expr(v) for v in comps))
                         for k, comps in (structure or {}).items()))
        return cls(a, s, tuple(base_vars), tuple(fiber_vars), name)

    @property
    def m(self) -> int:
        return len(self.base_vars)

    @property
    def n(self) -> int:
        return len(self.fiber_vars)

    @property
    def dual_vars(self) -> tuple[str, ...]:
        return self.base_vars + self.fiber_vars

    @cached_property
    def structure_tensor(self) -> tuple[tuple[tuple[Expr, ...], ...], ...]:
        """c[alpha][beta][gamma] = c^gamma_{alpha beta}, antisymmetric by construction."""
        n = self.n
        c = [[[ZERO] * n for _ in range(n)] for _ in range(n)]
        for (alpha, beta), comps in self.structure:
            for g, expr in enumerate(comps):
                c[alpha][beta][g] = expr
                c[beta][alpha][g] = neg(expr)
        return tuple(tuple(tuple(row) for row in plane) for plane in c)

    def c(self, alpha: int, beta: int) -> tuple[Expr, ...]:
        return self.structure_tensor[alpha][beta]

    @cached_property
    def _anchor_fn(self):
        return compiled(tuple(a for row in self.anchor for a in row), self.base_vars)

    @cached_property
    def _structure_fn(self):
        flat = tuple(self.structure_tensor[a][b][g] for a in range(self.n) for b in range(self.n) for g in range(self.n))
        return compiled(flat, self.base_vars)

    def anchor_at(self, x) -> np.ndarray:
        return np.array(self._anchor_fn(_vec(x)), dtype=float).reshape(self.n, self.m)

    def structure_at(self, x) -> np.ndarray:
        """Array ``c[alpha, beta, gamma]`` of structure functions at x."""
        return np.array(self._structure_fn(_vec(x)), dtype=float).reshape(self.n, self.n, self.n)

    def rho_of(self, coeffs: Sequence[Expr], f: Expr) -> Expr:
        """rho(X)(f) for X = sum coeffs[alpha] X_alpha, symbolically."""
        terms = []
        for i, xi in enumerate(self.base_vars):
            df = differentiate(f, xi)
            if df == ZERO:
                continue
            vi = _sum(mul(coeffs[a], self.anchor[a][i]) for a in range(self.n))
            terms.append(mul(vi, df))
        return _sum(terms)


def _vec(x) -> list:
    return np.asarray(x, dtype=float).ravel().tolist()


@dataclass(frozen=True)
class SectionE:
    """Section X(x) = sum_alpha X^alpha(x) X_alpha."""

    components: tuple[Expr, ...]

    @classmethod
    def parse(cls, sources: Sequence, variables: Sequence[str] | None = None) -> "SectionE":
        return cls(tuple(_to_expr(s, variables) for s in sources))

    @classmethod
    def basis(cls, n: int, alpha: int) -> "SectionE":
        return cls(tuple(ONE if b == alpha else ZERO for b in range(n)))


@dataclass(frozen=True)
class SectionEStar:
    """One-section gamma(x) = sum_alpha gamma_alpha(x) X^alpha in the dual basis."""

    components: tuple[Expr, ...]

    @classmethod
    def parse(cls, sources: Sequence, variables: Sequence[str] | None = None) -> "SectionEStar":
        return cls(tuple(_to_expr(s, variables) for s in sources))


def _to_expr(s, names):
    if isinstance(s, Expr):
        return s
    if isinstance(s, (int, float)):
        return Const(s)
    return parse(s, names)


def _check_rank(A: AlgebroidSpec, section) -> None:
    if len(section.components) != A.n:
        raise AlgebroidError(f"section has {len(section.components)} components, rank is {A.n}")


# ---------------------------------------------------------------- operations

def anchor_apply(A: AlgebroidSpec, X: SectionE, p) -> np.ndarray:
    _check_rank(A, X)
    coeffs = np.array(compiled(X.components, A.base_vars)(_vec(p)), dtype=float)
    return coeffs @ A.anchor_at(p) if A.m else np.zeros(0)


def bracket(A: AlgebroidSpec, X: SectionE, Y: SectionE) -> SectionE:
    """[X,Y]^g = sum X^a Y^b c^g_ab + rho(X)(Y^g) - rho(Y)(X^g), symbolically."""
    _check_rank(A, X)
    _check_rank(A, Y)
    n = A.n
    out = []
    for g in range(n):
        algebraic = _sum(
            mul(mul(X.components[a], Y.components[b]), A.structure_tensor[a][b][g])
            for a in range(n) for b in range(n)
        )
        out.append(sub(add(algebraic, A.rho_of(X.components, Y.components[g])),
                       A.rho_of(Y.components, X.components[g])))
    return SectionE(tuple(out))


def vector_field_commutator(V: Sequence[Expr], W: Sequence[Expr], names: Sequence[str]) -> tuple[Expr, ...]:
    """[V,W]^i = V^j d_j W^i - W^j d_j V^i in the given coordinates."""
    out = []
    for i in range(len(names)):
        terms = []
        for j, xj in enumerate(names):
            terms.append(mul(V[j], differentiate(W[i], xj)))
            terms.append(neg(mul(W[j], differentiate(V[i], xj))))
        out.append(_sum(terms))
    return tuple(out)


@lru_cache(maxsize=256)
def _structural_exprs(A: AlgebroidSpec):
    n = A.n
    basis = [SectionE.basis(n, a) for a in range(n)]
    jacobi = []
    for a, b, d in combinations(range(n), 3):
        t1 = bracket(A, bracket(A, basis[a], basis[b]), basis[d])
        t2 = bracket(A, bracket(A, basis[b], basis[d]), basis[a])
        t3 = bracket(A, bracket(A, basis[d], basis[a]), basis[b])
        jacobi.extend(add(add(t1.components[g], t2.components[g]), t3.components[g]) for g in range(n))
    anchor = []
    for a, b in combinations(range(n), 2):
        cab = A.c(a, b)
        lhs = [_sum(mul(cab[g], A.anchor[g][i]) for g in range(n)) for i in range(A.m)]
        rhs = vector_field_commutator(A.anchor[a], A.anchor[b], A.base_vars)
        anchor.extend(sub(lhs[i], rhs[i]) for i in range(A.m))
    return compiled(tuple(jacobi), A.base_vars), compiled(tuple(anchor), A.base_vars)


def validate_algebroid(A: AlgebroidSpec, samples, tol: float = DEFAULT_STRUCTURAL_TOL,
                       seed: int | None = None) -> ResidualReport:
    """Sample the Jacobi, anchor-morphism and antisymmetry residuals."""
    jac_fn, anc_fn = _structural_exprs(A)
    report = ResidualReport("validate_algebroid", tol, seed, ("jacobi", "anchor", "antisymmetry"))
    for x in np.asarray(samples, dtype=float).reshape(len(samples), A.m):
        try:
            jac = np.abs(jac_fn(x.tolist()))
            anc = np.abs(anc_fn(x.tolist()))
            c = A.structure_at(x)
        except ExprDomainError:
            report.skipped += 1
            continue
        anti = np.abs(c + c.transpose(1, 0, 2))
        report.add(x, jacobi=jac.max(initial=0.0), anchor=anc.max(initial=0.0), antisymmetry=anti.max(initial=0.0))
    return report


def d_function(A: AlgebroidSpec, f: Expr) -> SectionEStar:
    """(df)_alpha = sum_i a_{alpha i} df/dx_i."""
    extra = variables(f) - set(A.base_vars)
    if extra:
        raise AlgebroidError(f"d_function needs a base function; {sorted(extra)[0]} is not a base variable")
    grads = [differentiate(f, xi) for xi in A.base_vars]
    return SectionEStar(tuple(_sum(mul(A.anchor[a][i], grads[i]) for i in range(A.m)) for a in range(A.n)))


@lru_cache(maxsize=1024)
def d_one_section_exprs(A: AlgebroidSpec, gamma: SectionEStar) -> tuple[tuple[Expr, ...], ...]:
    """Symbolic (d gamma)_{ab} = rho_a(gamma_b) - rho_b(gamma_a) - c^g_ab gamma_g."""
    _check_rank(A, gamma)
    n = A.n
    # rho[a][b] = rho(X_a)(gamma_b)
    rho = [[A.rho_of(SectionE.basis(n, a).components, gamma.components[b]) for b in range(n)] for a in range(n)]
    out = [[ZERO] * n for _ in range(n)]
    for a in range(n):
        for b in range(n):
            if a == b:
                continue
            structural = _sum(mul(A.structure_tensor[a][b][g], gamma.components[g]) for g in range(n))
            out[a][b] = sub(sub(rho[a][b], rho[b][a]), structural)
    return tuple(tuple(row) for row in out)


def d_one_section(A: AlgebroidSpec, gamma: SectionEStar, p) -> np.ndarray:
    exprs = d_one_section_exprs(A, gamma)
    flat = tuple(e for row in exprs for e in row)
    return np.array(compiled(flat, A.base_vars)(_vec(p)), dtype=float).reshape(A.n, A.n)


def sample_box(box: Sequence[Sequence[float]], count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples in a coordinate box; an empty box gives points of dimension 0."""
    if not box:
        return np.zeros((count, 0))
    lo = np.array([b[0] for b in box], dtype=float)
    hi = np.array([b[1] for b in box], dtype=float)
    return lo + (hi - lo) * rng.random((count, len(box)))
