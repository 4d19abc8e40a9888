from .covert import (
    EXACT_CROSS_TERM,
    CovertState,
    CovertTaps,
    Tracking,
    covert_internal_step,
    covert_sensor_comp_linear,
    covert_sensor_comp_nonlinear,
    covert_tracking_input,
    design_tracking_gains,
    perturbed_model,
)
from .replay import (
    NotSteadyState,
    OutOfWindow,
    ReplayBuffer,
    ReplayTaps,
    default_delta_ss,
    replay_output,
    replay_record,
)
from .resources import AttackResources
from .zda import (
    Branch,
    BranchUnsupported,
    Infeasible,
    PreparationPlan,
    Unreachable,
    ZdaNonlinearPlan,
    ZdaNonlinearTaps,
    ZdaPlan,
    ZdaTaps,
    off_manifold_preparation,
    zda_feedback_input,
    zda_input,
    zda_nonlinear_input,
    zda_synthesize_linear,
    zda_synthesize_nonlinear,
)
