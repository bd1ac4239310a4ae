"""Worst-case attack impact under stealthiness constraints, via occupation-measure LPs."""

from .augmentation import AugmentedMdp, augment_binary, augment_counting
from .errors import ConfigurationError, RejectedInputError, ResourceLimitError
from .mdp_core import Mdp, load_mdp, save_mdp, validate_mdp
from .pipeline import SolveResult, solve_problem1, solve_problem2
from .policy import HistoryPolicy, MarkovPolicy, extract_policy, lift_policy

__version__ = "0.1.0"
