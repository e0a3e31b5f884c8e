"""Controller-based coordination of cognitive functions via Nash social welfare."""
from .agent import CfState, TablePredictor, learning_cycle, new_cf, train
from .conflict import ConflictEdge, ConflictKind, classify_conflicts, conflict_groups
from .controller import Controller, CoordEvent
from .domain import CfDescriptor, Configuration, KpiSample, ParameterGrid, ParameterSpec, build_grid, snap_to_grid
from .envsim import EnvConfig, evaluate_kpis, generate_dataset
from .errors import (
    CoordinationError,
    ProtocolError,
    ReplayError,
    ScenarioError,
    ValidationError,
)
from .nswf import WelfareResult, candidate_set, nswf_value, optimize
from .persistence import replay
from .scenario import REFERENCE_SCENARIO, load_scenario
from .simulation import Simulation, run_scenario
from .transport import CoordMessage, InProcessCarrier, decode, encode
from .utility import (
    LinearUtilityScaler,
    OptimalConfigRange,
    UtilityScale,
    UtilityTable,
    normalize_linear,
    optimal_config_range,
    utility_table,
)

__version__ = "0.1.0"
