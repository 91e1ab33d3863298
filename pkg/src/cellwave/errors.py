"""Error type shared by every module.

Messages that callers match on are kept as module constants so the CLI,
the tests and the library agree on the exact wording.
"""

NON_FINITE = "non-finite integrand"
GRID_TOO_COARSE = "grid too coarse"
USE_SUP_NORM = "use sup-norm instead"
NON_DYADIC = "non-dyadic dilation"
RESOLUTION_BELOW = "resolution below finest level"
INSUFFICIENT_MOMENTS = "insufficient kernel moments"
RANGE_ESCAPE = "range escape"
ORDER_TOO_LOW = "wavelet order too low"
TRACE_UNDEFINED = "trace not defined at these parameters"
HYPOTHESIS_VIOLATED = "hypothesis violated"


class CellwaveError(ValueError):
    """Raised when an operation's precondition or validity window fails."""
