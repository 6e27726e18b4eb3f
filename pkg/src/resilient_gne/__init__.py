"""Byzantine-resilient online stochastic GNE seeking in multi-cluster games."""

from .attacks import AttackModel, craft_message
from .dbrosa import AgentState, ScheduleParams, make_schedules, round_step, run_simulation
from .game import CommodityMarketGame, commodity_market
from .metrics import MetricsTrace, SgneSolution, solve_sgne
from .robust_agg import trim_coordinate, trim_vector, trimmed_mean
from .topology import AgentId, ClusterTopology, has_source_component, validate_redundancy

__version__ = "0.1.0"
