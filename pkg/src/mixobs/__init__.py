"""Resilient distributed estimation of human-driven vehicles from a CAV network."""
from .graph import (DirectedGraph, GraphError, is_strongly_connected, link_connectivity,
                    node_connectivity, scc_decompose, survives_removal)
from .matrices import (ObserverGain, assemble_ahat, build_dc, build_row_stochastic,
                       check_row_stochastic, kronecker, spectral_radius)
from .observer import (DivergenceError, FaultEvent, FaultKind, ObservabilityLost, ObserverState,
                       centralized_kalman, compute_metrics, distributed_observer, observer_step,
                       run_centralized_kalman, run_distributed)
from .scenario import Scenario, ScenarioError, load_bundled, parse_scenario, serialize_scenario
from .structural import (ObservabilityVerdict, SensorPlacement, StructuredMatrix,
                         centralized_structural_observability, distributed_structural_observability,
                         numeric_observability_check, redundant_observability_level)
from .synthesis import SynthesisConfig, SynthesisResult, synthesize_gain
from .traffic import HdvParams, build_observer_model, simulate_ground_truth

__version__ = "0.1.0"
