"""Finite-time boundary stabilization of 1-D quasilinear hyperbolic systems.

Library layout:

- ``transport``: linear transport by backward characteristics (flow,
  entrance times, region classification, explicit solution formula).
- ``feedback``: the signed-power finite-time stable boundary ODE in closed
  form.
- ``quasilinear``: constants ledger, smallness conditions, and the Picard
  realization of the frozen-coefficient closed-loop operator with one or
  two boundary controls.
- ``saintvenant``: shallow-water physics, Riemann-invariant transforms and
  boundary device formulas for a single canal.
- ``network``: tree-shaped canal networks, node coupling by flow
  conservation, leaves-to-root orchestration.
- ``oracle``: independent first-order upwind schemes for cross-validation.
- ``cli``: scenario files, condition verification, simulation artifacts.
"""

from . import cli, feedback, network, oracle, profiles, quasilinear, saintvenant, transport
from .feedback import FeedbackTrace, PowerFeedback
from .network import CanalTree, NetworkScenario, simulate_network, tree_depth, validate_tree
from .quasilinear import (
    BoundaryMap,
    ClosedLoopSolution,
    ConstantsLedger,
    DiagonalSystem,
    build_ledger,
    check_one_control,
    check_two_control,
    picard_one_control,
    picard_two_control,
    verify_extinction,
)
from .saintvenant import CanalParams, PhysicalState, RiemannPair, from_riemann, pick_c, to_riemann
from .transport import (
    BoundaryTrace,
    Coefficient,
    Domain,
    Field,
    GridSpec,
    Profile,
    entrance_time,
    extend_coefficient,
    integrate_characteristic,
    solve_linear_transport,
)

__version__ = "0.1.0"

__all__ = [
    "cli",
    "feedback",
    "network",
    "oracle",
    "profiles",
    "quasilinear",
    "saintvenant",
    "transport",
    "FeedbackTrace",
    "PowerFeedback",
    "CanalTree",
    "NetworkScenario",
    "simulate_network",
    "tree_depth",
    "validate_tree",
    "BoundaryMap",
    "ClosedLoopSolution",
    "ConstantsLedger",
    "DiagonalSystem",
    "build_ledger",
    "check_one_control",
    "check_two_control",
    "picard_one_control",
    "picard_two_control",
    "verify_extinction",
    "CanalParams",
    "PhysicalState",
    "RiemannPair",
    "from_riemann",
    "pick_c",
    "to_riemann",
    "BoundaryTrace",
    "Coefficient",
    "Domain",
    "Field",
    "GridSpec",
    "Profile",
    "entrance_time",
    "extend_coefficient",
    "integrate_characteristic",
    "solve_linear_transport",
    "__version__",
]
