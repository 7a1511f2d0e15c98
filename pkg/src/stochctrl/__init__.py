"""Exact controllability of linear systems with multiplicative noise.

The plant x(k+1) = [A x(k) + B u(k)] + w(k) [Abar x(k) + Bbar u(k)] is
turned into a backward equation whose coefficients support two
controllability criteria (a steering Gramian and a word-span rank test),
controller synthesis, and exact verification on the finite noise-path
tree. Output maps, a rank-deficient noise-input structure, and input or
state delays are handled by the corresponding submodules.
"""
from .criteria import (
    ControllabilityReport,
    WordSpanBasis,
    decide,
    decide_form,
    gramian,
    gramian_invertible,
    gramian_oracle,
    moment_step,
    rank_test_words,
    word_matrix,
    word_span,
)
from .delay import (
    PSequence,
    input_delay_controller,
    input_delay_decide,
    input_delay_gramian,
    input_delay_gramian_oracle,
    member_of_S_state_delay,
    state_delay_controller,
    state_delay_decide,
    state_delay_gramian,
    state_delay_gramian_oracle,
    state_delay_P,
)
from .errors import (
    AdaptednessViolation,
    BadUserM,
    CriteriaDisagreement,
    DimensionMismatch,
    EnumerationTooLarge,
    NoIntertwiner,
    NoiseMomentViolation,
    RankDeficient,
    SchemaError,
    SingularBlock,
    SingularGramian,
    SingularPBracket,
    SingularPencil,
    StageMismatch,
    StochctrlError,
    StructureUnsupported,
    TargetNotInS,
    UnsupportedReducedStructure,
)
from .model import (
    NoiseModel,
    ProblemInstance,
    SystemSpec,
    ValidatedSystem,
    parse_instance,
    parse_instance_file,
    serialize_instance,
    validate,
)
from .partial import ReducedForm, intertwine, output_form, partial_decide, reduced_rank_setup
from .sampling import (
    random_attainable_terminal,
    random_controllable,
    random_free_input,
    random_system,
    random_transformed,
    random_x0,
)
from .pathspace import (
    AdaptedProcess,
    BsdeSolution,
    PathTree,
    SMembership,
    backward_solve,
    backward_solve_state_delay,
    cond_expect,
    expected_terminal_product,
    forward_simulate,
    member_of_S,
    representation_residual,
    terminal_from_map,
)
from .synthesis import (
    ControllerProcess,
    controller_csv_text,
    null_controller,
    q_expanded,
    read_controller_table,
    steer_to_target,
    write_controller_csv,
)
from .transform import (
    BsdeForm,
    InputTransform,
    TransformedSystem,
    compute_M,
    reconstruct_u,
    split_u,
    to_bsde,
)

__version__ = "0.1.0"
