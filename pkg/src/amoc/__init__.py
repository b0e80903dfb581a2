"""At-most-one-changepoint tests for mean and trend shifts, with simulated null limits."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AmocError,
    DegenerateSegment,
    DegenerateSegmentWarning,
    DegenerateVariance,
    DomainError,
    EmptyCropRange,
    IndexOutOfRange,
    MissingColumn,
    NonMonotoneTime,
    NumericalSingularity,
    ParseError,
    SingularDesign,
    UnknownFamily,
    ValidationFailure,
)
from .inference import critical_value, gumbel_pvalue, p_bound  # noqa: E402
from .limits import LimitFamily, QuantileTable, SimConfig, estimate_quantiles  # noqa: E402
from .meanshift import (  # noqa: E402
    cusum_max_test,
    cusum_process,
    lrt_test,
    scusum_test,
    snht_test,
    zmax_test,
)
from .series import TimeSeries, as_series, ols_line_fit, sigma_hat_null  # noqa: E402
from .trendshift import dmax_test, fmax_test, hmax_test, jmax_test, joinpoint_beta, two_phase_fit  # noqa: E402
