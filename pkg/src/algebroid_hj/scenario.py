"""Scenario files (JSON, ``"schema": 1``) and the built-in catalog."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .algebroid import AlgebroidError, AlgebroidSpec, SectionEStar, sample_box
from .expr import Expr, ExprSyntaxError, parse
from .hamilton_jacobi import FiberMorphism
from .prolongation import DualPoint

SCHEMA_VERSION = 1
DEFAULT_FIBER_BOX = (-2.0, 2.0)

CATALOG_ORDER = (
    "canonical_r1", "canonical_r2", "so3", "heisenberg", "action_r2", "action_aff1", "td_free_particle",
)


class ScenarioError(ValueError):
    def __init__(self, where: str, reason: str):
        self.where = where
        self.reason = reason
        super().__init__(f"{where}: {reason}" if where else reason)


@dataclass(frozen=True)
class Tolerances:
    structural: float = 1e-8
    oracle: float = 1e-10
    theorem: float = 1e-7
    theorem5: float = 1e-6
    sensitivity: float = 0.1


@dataclass(frozen=True)
class SectionDecl:
    name: str
    section: SectionEStar
    hamiltonian: str
    domain: tuple[tuple[float, float], ...]
    role: str = ""


@dataclass(frozen=True)
class MorphismDecl:
    name: str
    morphism: FiberMorphism
    energy: Expr | None = None
    role: str = ""


@dataclass
class Scenario:
    name: str
    algebroid: AlgebroidSpec
    domain: tuple[tuple[float, float], ...]
    fiber_domain: tuple[tuple[float, float], ...]
    hamiltonians: dict[str, Expr]
    sections: dict[str, SectionDecl]
    morphisms: dict[str, MorphismDecl]
    tolerances: Tolerances = field(default_factory=Tolerances)
    seed: int = 0
    samples: int = 100
    time_dependent: bool = False
    time_domain: tuple[float, float] = (0.0, 1.0)
    description: str = ""
    source: dict = field(default_factory=dict, repr=False)

    @property
    def m(self) -> int:
        return self.algebroid.m

    @property
    def n(self) -> int:
        return self.algebroid.n

    def rng(self, seed: int | None = None) -> np.random.Generator:
        return np.random.default_rng(self.seed if seed is None else seed)

    def sample_base(self, count: int, rng: np.random.Generator, box=None) -> np.ndarray:
        box = self.domain if box is None else box
        pts = sample_box(box, count, rng)
        if self.time_dependent:
            ts = sample_box([self.time_domain], count, rng)
            pts = np.hstack([ts, pts])
        return pts

    def sample_dual(self, count: int, rng: np.random.Generator) -> list[DualPoint]:
        xs = sample_box(self.domain, count, rng)
        mus = sample_box(self.fiber_domain, count, rng)
        return [DualPoint.of(x, mu) for x, mu in zip(xs, mus)]

    def hamiltonian(self, name: str | None = None) -> Expr:
        if name is None:
            name = next(iter(self.hamiltonians))
        try:
            return self.hamiltonians[name]
        except KeyError:
            raise ScenarioError("hamiltonians", f"unknown Hamiltonian {name!r}") from None

    def section(self, name: str) -> SectionDecl:
        try:
            return self.sections[name]
        except KeyError:
            raise ScenarioError("sections", f"unknown section {name!r}") from None

    def morphism(self, name: str) -> MorphismDecl:
        try:
            return self.morphisms[name]
        except KeyError:
            raise ScenarioError("morphisms", f"unknown morphism {name!r}") from None

    def sections_with_role(self, role: str) -> list[SectionDecl]:
        return [s for s in self.sections.values() if s.role == role]

    def morphisms_with_role(self, role: str) -> list[MorphismDecl]:
        return [s for s in self.morphisms.values() if s.role == role]


# ---------------------------------------------------------------- parsing

def _require(doc: dict, key: str, kind, where: str):
    if key not in doc:
        raise ScenarioError(where + key, "missing required field")
    value = doc[key]
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ScenarioError(where + key, f"expected {getattr(kind, '__name__', kind)}")
    return value


def _expr(src, names, where: str) -> Expr:
    if isinstance(src, (int, float)) and not isinstance(src, bool):
        src = repr(float(src))
    if not isinstance(src, str):
        raise ScenarioError(where, "expected an expression string")
    try:
        return parse(src, names)
    except ExprSyntaxError as exc:
        raise ScenarioError(where, str(exc)) from None


def _box(value, dim: int, where: str) -> tuple[tuple[float, float], ...]:
    if dim == 0 and value in (None, []):
        return ()
    if not isinstance(value, list) or len(value) != dim:
        raise ScenarioError(where, f"expected {dim} intervals [lo, hi]")
    out = []
    for i, iv in enumerate(value):
        if (not isinstance(iv, list) or len(iv) != 2
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in iv)):
            raise ScenarioError(f"{where}[{i}]", "expected [lo, hi]")
        lo, hi = float(iv[0]), float(iv[1])
        if not lo < hi:
            raise ScenarioError(f"{where}[{i}]", "lo must be < hi")
        out.append((lo, hi))
    return tuple(out)


def scenario_from_dict(doc: dict, origin: str = "") -> Scenario:
    where = f"{origin}: " if origin else ""
    if not isinstance(doc, dict):
        raise ScenarioError(origin, "scenario must be a JSON object")
    schema = doc.get("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise ScenarioError(where + "schema", f"unsupported schema version {schema!r}")
    name = _require(doc, "name", str, where)
    m = _require(doc, "base_dim", int, where)
    n = _require(doc, "rank", int, where)
    if m < 0 or n < 1:
        raise ScenarioError(where + "base_dim/rank", "need base_dim >= 0 and rank >= 1")
    td = bool(doc.get("time_dependent", False))
    base_vars = tuple(f"x{i + 1}" for i in range(m))
    fiber_vars = tuple(f"mu{a + 1}" for a in range(n))
    tvars = ("t",) if td else ()

    anchor_doc = doc.get("anchor", [[] for _ in range(n)] if m == 0 else None)
    if not isinstance(anchor_doc, list) or len(anchor_doc) != n or any(
            not isinstance(row, list) or len(row) != m for row in anchor_doc):
        raise ScenarioError(where + "anchor", f"expected {n} rows of {m} expressions")
    anchor = tuple(tuple(_expr(v, base_vars, f"{where}anchor[{a}][{i}]") for i, v in enumerate(row))
                   for a, row in enumerate(anchor_doc))

    structure: dict[tuple[int, int], list] = {}
    entries = doc.get("structure", [])
    if not isinstance(entries, list):
        raise ScenarioError(where + "structure", "expected a list")
    for k, entry in enumerate(entries):
        loc = f"{where}structure[{k}]"
        if not isinstance(entry, dict):
            raise ScenarioError(loc, "expected an object")
        alpha, beta, gamma = (_require(entry, key, int, loc + ".") for key in ("alpha", "beta", "gamma"))
        if not alpha < beta:
            raise ScenarioError(loc, "alpha must be < beta")
        for key, v in (("alpha", alpha), ("beta", beta), ("gamma", gamma)):
            if not 1 <= v <= n:
                raise ScenarioError(f"{loc}.{key}", f"index must be in 1..{n}")
        comps = structure.setdefault((alpha - 1, beta - 1), [None] * n)
        if comps[gamma - 1] is not None:
            raise ScenarioError(loc, "duplicate structure entry")
        comps[gamma - 1] = _expr(entry.get("expr"), base_vars, loc + ".expr")
    try:
        algebroid = AlgebroidSpec.build(
            anchor, {k: [c if c is not None else 0.0 for c in v] for k, v in structure.items()},
            base_vars=base_vars, fiber_vars=fiber_vars, rank=n, name=name)
    except AlgebroidError as exc:
        raise ScenarioError(where + "anchor/structure", str(exc)) from None

    domain = _box(doc.get("domain"), m, where + "domain")
    fiber_domain = _box(doc.get("fiber_domain", [list(DEFAULT_FIBER_BOX)] * n), n, where + "fiber_domain")
    time_domain = (0.0, 1.0)
    if td:
        time_domain = _box([doc.get("time_domain", [0.0, 1.0])], 1, where + "time_domain")[0]

    ham_names = tvars + base_vars + fiber_vars
    hams_doc = doc.get("hamiltonians")
    if hams_doc is None and "hamiltonian" in doc:
        hams_doc = {"H": doc["hamiltonian"]}
    if not isinstance(hams_doc, dict) or not hams_doc:
        raise ScenarioError(where + "hamiltonians", "expected a non-empty object of expressions")
    hamiltonians = {k: _expr(v, ham_names, f"{where}hamiltonians.{k}") for k, v in hams_doc.items()}
    if "hamiltonian" in doc and "hamiltonians" in doc:
        raise ScenarioError(where + "hamiltonian", "give either 'hamiltonian' or 'hamiltonians'")

    sec_names = tvars + base_vars
    sections = {}
    secs_doc = doc.get("sections", {})
    if not isinstance(secs_doc, dict):
        raise ScenarioError(where + "sections", "expected an object")
    for key, spec in secs_doc.items():
        loc = f"{where}sections.{key}"
        if isinstance(spec, list):
            spec = {"components": spec}
        if not isinstance(spec, dict):
            raise ScenarioError(loc, "expected a component list or an object")
        comps = spec.get("components")
        if not isinstance(comps, list) or len(comps) != n:
            raise ScenarioError(loc + ".components", f"expected {n} expressions")
        section = SectionEStar(tuple(_expr(c, sec_names, f"{loc}.components[{i}]") for i, c in enumerate(comps)))
        ham = spec.get("hamiltonian", next(iter(hamiltonians)))
        if ham not in hamiltonians:
            raise ScenarioError(loc + ".hamiltonian", f"unknown Hamiltonian {ham!r}")
        sec_domain = _box(spec["domain"], m, loc + ".domain") if "domain" in spec else domain
        sections[key] = SectionDecl(key, section, ham, sec_domain, str(spec.get("role", "")))

    mor_names = tvars + base_vars + fiber_vars
    morphisms = {}
    mors_doc = doc.get("morphisms", {})
    if not isinstance(mors_doc, dict):
        raise ScenarioError(where + "morphisms", "expected an object")
    for key, spec in mors_doc.items():
        loc = f"{where}morphisms.{key}"
        if isinstance(spec, list):
            spec = {"components": spec}
        if not isinstance(spec, dict):
            raise ScenarioError(loc, "expected a component list or an object")
        comps = spec.get("components")
        if not isinstance(comps, list) or len(comps) != n:
            raise ScenarioError(loc + ".components", f"expected {n} expressions")
        morph = FiberMorphism(tuple(_expr(c, mor_names, f"{loc}.components[{i}]") for i, c in enumerate(comps)))
        energy = None
        if "energy" in spec:
            if not td:
                raise ScenarioError(loc + ".energy", "only allowed for time-dependent scenarios")
            energy = _expr(spec["energy"], ("t",) + base_vars + ("e",) + fiber_vars, loc + ".energy")
        morphisms[key] = MorphismDecl(key, morph, energy, str(spec.get("role", "")))

    tol_doc = doc.get("tolerances", {})
    if not isinstance(tol_doc, dict):
        raise ScenarioError(where + "tolerances", "expected an object")
    known = Tolerances.__dataclass_fields__
    for k in tol_doc:
        if k not in known:
            raise ScenarioError(f"{where}tolerances.{k}", "unknown tolerance")
    tolerances = Tolerances(**{k: float(v) for k, v in tol_doc.items()})
    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ScenarioError(where + "seed", "expected an unsigned 64-bit integer")
    samples = doc.get("samples", 100)
    if not isinstance(samples, int) or samples < 1:
        raise ScenarioError(where + "samples", "expected a positive integer")

    return Scenario(name, algebroid, domain, fiber_domain, hamiltonians, sections, morphisms,
                    tolerances, seed, samples, td, time_domain, str(doc.get("description", "")), doc)


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(str(path), f"cannot read file ({exc.strerror})") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(str(path), f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return scenario_from_dict(doc, str(path))


def _catalog_dir():
    return resources.files("algebroid_hj") / "catalog"


def catalog_text(name: str) -> str:
    return (_catalog_dir() / f"{name}.json").read_text(encoding="utf-8")


def catalog() -> list[Scenario]:
    return [scenario_from_dict(json.loads(catalog_text(n)), f"{n}.json") for n in CATALOG_ORDER]


def get_scenario(ref: str) -> Scenario:
    """A catalog name or a path to a scenario file."""
    if ref in CATALOG_ORDER:
        return scenario_from_dict(json.loads(catalog_text(ref)), f"{ref}.json")
    path = Path(ref)
    if path.suffix == ".json" or path.exists():
        return load_scenario(path)
    raise ScenarioError("", f"unknown scenario {ref!r} (not in the catalog and no such file)")


def scenario_to_json(s: Scenario) -> str:
    return json.dumps(s.source, indent=2) + "\n"


def summary(s: Scenario) -> dict[str, Any]:
    return {
        "name": s.name, "m": s.m, "n": s.n, "time_dependent": s.time_dependent,
        "hamiltonians": list(s.hamiltonians), "sections": list(s.sections), "morphisms": list(s.morphisms),
    }
