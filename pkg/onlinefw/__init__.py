from .algorithms import (
    MetaFrankWolfe,
    OneShotFrankWolfe,
    OnlineGreedy,
    ProjectedGradient,
    RegularizedOnlineFrankWolfe,
    RoundOutcome,
    make_algorithm,
)
from .bench import RegretLedger, brute_force_opt, comparator_values, offline_fw, play_stream
from .core import (
    ConfigError,
    ConstraintSet,
    GradientSample,
    InfeasibleConstraintError,
    InternalInvariantError,
    InvalidArgumentError,
    ObjectiveSense,
    OnlineFWError,
    ParseError,
    RoundObjective,
    Schedule,
    ScheduleKind,
    SizeLimitError,
    StochasticGradientOracle,
    UnsupportedOperationError,
    make_finite_sum_oracle,
    schedule_value,
)
from .lmo import BudgetedBox, FlowNetwork, NuclearBall, PartitionMatroid
from .olo import FplBank, FplOracle
from .submodular import (
    CoverageExtension,
    FacilityLocation,
    FacilityLocationExtension,
    ProbabilisticCoverage,
    SetFunction,
    pipage_round,
)
from .vr import Averager
