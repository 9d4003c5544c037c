"""Exception hierarchy for matchq.

The CLI maps these onto exit codes: input/validation problems exit 2,
"not applicable" and region errors exit 3, budget overruns exit 4.
"""


class MatchQError(Exception):
    """Base class for all matchq errors."""


# -- input and validation problems (CLI exit 2) ---------------------------


class ValidationError(MatchQError):
    """Malformed graph, rates, policy, state, or file input."""


class SelfLoopError(ValidationError):
    def __init__(self, node: int):
        super().__init__(f"edge from node {node} to itself is not allowed")
        self.node = node


class DuplicateEdgeError(ValidationError):
    def __init__(self, i: int, j: int):
        super().__init__(f"edge {{{i},{j}}} appears more than once")
        self.edge = (i, j)


class IndexOutOfRangeError(ValidationError):
    def __init__(self, node: int, node_count: int):
        super().__init__(f"node {node} outside 1..{node_count}")
        self.node = node
        self.node_count = node_count


class NotConnectedError(ValidationError):
    """The operation requires a connected graph with at least one edge."""


class InvalidStateError(ValidationError):
    """Queue vector has adjacent coordinates simultaneously positive."""


class PolicyGraphMismatchError(ValidationError):
    """Priority order lists are not permutations of the neighbor sets."""


class NotPriorityPolicyError(ValidationError):
    """Operation only defined for priority policies."""


class InputFormatError(ValidationError):
    """Unparseable JSON instance file."""


# -- capability limits and numeric failures --------------------------------


class TooLargeError(MatchQError):
    """Exhaustive enumeration refused beyond the configured cap."""


class InsufficientSamplesError(MatchQError):
    """Too few trace samples inside the requested fit window."""


class NotConvergedError(MatchQError):
    """Stationary solve did not reach the requested residual."""


class ReducibleError(MatchQError):
    """Truncated chain is not irreducible; stationary solve refused."""


# -- domain restrictions (CLI exit 3) --------------------------------------


class UnsupportedPolicyError(MatchQError):
    """No analytical machinery for this policy kind."""


class RatesOutsideRegionError(MatchQError):
    """Closed forms require the geometric ratios to be below one."""


class EpsilonOutOfRangeError(MatchQError):
    """Counterexample parameter outside the family's interval."""


class BoundaryDegenerateError(MatchQError):
    """Requested instance sits on the region boundary (zero drift)."""


class NotApplicableError(MatchQError):
    """Construction undefined for this graph class."""


class NoWitnessFoundError(MatchQError):
    """A connected non-bipartite non-separable graph produced no induced
    pendant and no induced odd cycle. This indicates an implementation bug."""


# -- resource limits (CLI exit 4) -------------------------------------------


class BudgetExceededError(MatchQError):
    """Simulation budget exhausted before the experiment finished."""
