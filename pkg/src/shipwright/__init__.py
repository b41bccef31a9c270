"""Function shipping vs. data shipping for sampled group-by queries."""

from .clusternode import Cluster, Telemetry, dispatch, run_data_shipping, run_function_shipping
from .config import ClusterSetup, load_profile, baseline_profile
from .execution import GroupCounts, Query, execute_local, merge, oracle_group_counts, scale
from .planner import CostBreakdown, CostEstimate, Mode, WorkloadStats, choose_mode, estimate
from .relation import ClusterLayout, GenSpec, Order, Relation, generate, layout, size_bytes
from .sampling import Method, SampleSpec, SampleView, bernoulli_sample, cluster_sample, sample
from .transport import LinkModel

__version__ = "0.1.0"
