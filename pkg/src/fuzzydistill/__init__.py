"""Distil state-action data from a control policy into a first-order TSK fuzzy rule base."""

from .baselines import RegressionTree, tree_fit, tree_predict
from .dataset import Dataset, read_dataset, write_dataset
from .dtw import Trajectory, dtw, dtw_distance
from .errors import (
    DatasetFormatError,
    FuzzyDistillError,
    InvalidInputError,
    ModelFormatError,
    NumericalError,
)
from .linguistics import LabelScheme, assign_label, default_scheme, export_rulebase, parse_rule, render_rule
from .metrics import MetricsReport, asg, evaluate, fidelity, frad, fsc, mean_frad, mse, paired_t_test
from .model import (
    FcsModel,
    FuzzyRule,
    MembershipFamily,
    deserialize,
    firing_strength,
    infer,
    load_model,
    local_consequent,
    membership,
    save_model,
    serialize,
)
from .training import TrainConfig, distill, estimate_spreads, fit_consequents, kmeans_fit

__version__ = "0.1.0"
