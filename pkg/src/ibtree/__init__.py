"""Decision-tree policies for factored MDPs via iterative bounding wrappers.

The package wraps a base environment so that policies over the wrapper's
bound features are exactly binary decision trees over the base features,
trains masked/omniscient nearest-neighbor Q-functions on the wrapper, and
extracts, evaluates and serializes the resulting trees. A backward-induction
expert plus imitation baseline and an experiment harness round out the
toolkit.
"""
import os as _os

# Scalar, branch-heavy kernels gain almost nothing from LLVM's vectorizers
# or O3, but on small machines those passes dominate (and can exhaust)
# compile memory. Must be set before numba is first imported.
_os.environ.setdefault("NUMBA_OPT", "2")
_os.environ.setdefault("NUMBA_LOOP_VECTORIZE", "0")
_os.environ.setdefault("NUMBA_SLP_VECTORIZE", "0")

from .envs import (
    BaseState,
    CartPole,
    EnvSpec,
    PotholeSpec,
    PotholeWorld,
    PrereqSpec,
    PrereqWorld,
    StepResult,
    make_env,
)
from .ibmdp import (
    ActionSpace,
    IbmdpConfig,
    Observation,
    WrappedState,
    legal_actions,
    mask,
    project_value,
    wrap_reset,
    wrap_step,
)
from .learner import (
    LearnerConfig,
    Transition,
    TrainResult,
    compute_target,
    evaluate_tree,
    extract_greedy_tree,
    select_action,
    train,
)
from .memory import DenseQMemory, QMemory
from .tree import (
    TreeMetrics,
    TreeNode,
    TreeParseError,
    extract_tree,
    tree_act,
    tree_deserialize,
    tree_metrics,
    tree_serialize,
)

__version__ = "0.1.0"

__all__ = [
    "ActionSpace", "BaseState", "CartPole", "DenseQMemory", "EnvSpec",
    "IbmdpConfig", "LearnerConfig", "Observation", "PotholeSpec",
    "PotholeWorld", "PrereqSpec", "PrereqWorld", "QMemory", "StepResult",
    "TrainResult", "Transition", "TreeMetrics", "TreeNode", "TreeParseError",
    "WrappedState", "compute_target", "evaluate_tree", "extract_greedy_tree",
    "extract_tree", "legal_actions", "make_env", "mask", "project_value",
    "select_action", "train", "tree_act", "tree_deserialize", "tree_metrics",
    "tree_serialize", "wrap_reset", "wrap_step",
]
