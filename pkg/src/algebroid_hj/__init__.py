"""Hamiltonian mechanics and Hamilton-Jacobi residual checks on Lie algebroids."""
from .algebroid import (
    AlgebroidError, AlgebroidSpec, SectionE, SectionEStar, anchor_apply, bracket, d_function,
    d_one_section, validate_algebroid,
)
from .dynamics import Trajectory, hamilton_rhs, integrate, rk4, verify_theorem5
from .expr import (
    ExprDomainError, ExprSyntaxError, UnknownIdentifierError, differentiate, evaluate, parse,
)
from .hamilton_jacobi import (
    FiberMorphism, cocycle_residual, symplectic_residual, type1_residual, type2_residuals,
)
from .prolongation import (
    DualPoint, ProlongVec, hamiltonian_section, omega_closed_form, omega_from_bracket, phi_gamma,
)
from .report import ResidualReport
from .scenario import Scenario, ScenarioError, catalog, get_scenario, load_scenario
from .time_extension import extend, project, td_verify

__version__ = "0.1.0"
