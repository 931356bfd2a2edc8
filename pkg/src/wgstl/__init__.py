"""Learning weighted graph-based signal temporal logic formulas from labeled graph data."""
from .engine import ParamStore, backward, forward, soft_aggregate
from .graph import (Dataset, Graph, Sample, Trajectory, build_graph, constant_from_sample,
                    impute_zeros, neighbors, next_step_dim, radius_graph, split, window)
from .logic import (Predicate, boolean_sat, crisp_robustness, harden, parse_structure,
                    print_formula, to_text)
from .synth import synth_dataset
from .train import (TrainConfig, TrainedModel, adam_update, classify, evaluate, loss,
                    step1_learn_operators, step2_learn_parameters, train)

__version__ = "0.1.0"
