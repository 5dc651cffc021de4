"""Exception hierarchy shared by all chainrec modules.

Every domain error carries a stable machine-readable ``code`` so the CLI
can emit ``{"error": code, "detail": str}`` JSON and map errors to exit
status 1 (domain) versus 2 (configuration).
"""


class ChainrecError(Exception):
    """Base class for all domain errors raised by this package."""

    code = "error"

    def __init__(self, detail=""):
        super().__init__(detail)
        self.detail = detail


class ConfigError(ChainrecError):
    """Bad user configuration (CLI exit code 2)."""

    code = "config"


# -- tiling ------------------------------------------------------------

class PointOutsideCube(ChainrecError):
    code = "point_outside_cube"


# -- systems -----------------------------------------------------------

class EvaluationDomain(ChainrecError):
    code = "evaluation_domain"


class ConfigParse(ConfigError):
    code = "config_parse"


class UnknownMapKind(ConfigError):
    code = "unknown_map_kind"


class MissingParameter(ConfigError):
    code = "missing_parameter"


# -- chaingraph --------------------------------------------------------

class ResolutionOverflow(ChainrecError):
    code = "resolution_overflow"


class NotReachable(ChainrecError):
    code = "not_reachable"


# -- conley ------------------------------------------------------------

class DepthExceeded(ChainrecError):
    code = "depth_exceeded"


class NotAQuasiAttractor(ChainrecError):
    code = "not_a_quasi_attractor"


class ShortCycle(ChainrecError):
    code = "short_cycle"

    def __init__(self, detail="", cycle=None):
        super().__init__(detail)
        self.cycle = list(cycle) if cycle is not None else []


class Unreachable(ChainrecError):
    code = "unreachable"

    def __init__(self, detail="", cells=None):
        super().__init__(detail)
        self.cells = list(cells) if cells is not None else []


# -- cluster -----------------------------------------------------------

class HypothesesViolated(ChainrecError):
    code = "hypotheses_violated"


class NoFixpoint(ChainrecError):
    code = "no_fixpoint"


# -- regroup -----------------------------------------------------------

class ReturnsTooSparse(ChainrecError):
    code = "returns_too_sparse"


class EpsilonTooLarge(ChainrecError):
    code = "epsilon_too_large"


class PartitionMismatch(ChainrecError):
    code = "partition_mismatch"


# -- sl2 ---------------------------------------------------------------

class SequenceTooShort(ChainrecError):
    code = "sequence_too_short"


class NumericalFailure(ChainrecError):
    code = "numerical_failure"


class DegenerateNudge(ChainrecError):
    code = "degenerate_nudge"


# -- coloring ----------------------------------------------------------

class NotGeneralPosition(ChainrecError):
    code = "not_general_position"


class PaintingTooLarge(ChainrecError):
    code = "painting_too_large"


class KTooSmall(ChainrecError):
    code = "k_too_small"
