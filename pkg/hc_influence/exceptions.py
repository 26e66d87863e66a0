"""Module defining custom exceptions."""

DATA_ERROR = 'data'
CONFIG_ERROR = 'config'
CAPACITY_ERROR = 'capacity'


class HeatConductionError(Exception):
    """Base error class for exceptions raised by the hc_influence library."""

    category = DATA_ERROR

    def __init__(self, message=None):
        """All hc_influence errors have a message field."""
        super().__init__(message)
        self.message = message


class EdgeListParseError(HeatConductionError):
    """Raised when a line of an edge-list file cannot be parsed."""

    def __init__(self, file_path, line_number, reason):
        """Initialize the exception with the file, line number and reason."""
        super().__init__(f'{file_path}, line {line_number}: {reason}')
        self.line_number = line_number


class InvalidEdgeWeight(HeatConductionError):
    """Raised when an edge weight is negative or not finite."""

    def __init__(self, source, destination, weight):
        """Initialize the exception with the offending edge."""
        super().__init__(
            f'Edge {source} -> {destination} has invalid weight "{weight}"; '
            'weights must be finite and nonnegative.'
        )


class DuplicateEdge(HeatConductionError):
    """Raised when the same (source, destination) pair appears twice."""

    def __init__(self, source, destination):
        """Initialize the exception with the repeated edge."""
        super().__init__(f'Duplicate edge {source} -> {destination}.')


class SelfLoopError(HeatConductionError):
    """Raised when an edge starts and ends at the same node."""

    def __init__(self, node):
        """Initialize the exception with the node carrying the self-loop."""
        super().__init__(f'Self-loop on node {node} is not permitted.')


class InvalidNodeIndex(HeatConductionError):
    """Raised when a node index falls outside the network."""

    def __init__(self, node, n_nodes):
        """Initialize the exception with the index and the node count."""
        super().__init__(f'Node index {node} is outside [0, {n_nodes}).')


class InvalidNetworkParameter(HeatConductionError):
    """Raised when a per-node or global model parameter is out of range."""

    def __init__(self, parameter_name, reason):
        """Initialize the exception with the parameter name and reason."""
        super().__init__(f'Invalid "{parameter_name}": {reason}')


class InvalidSeedSet(HeatConductionError):
    """Raised when a seed set is inconsistent with the network."""

    def __init__(self, reason):
        """Initialize the exception with the reason the seeds were rejected."""
        super().__init__(f'Invalid seed set: {reason}')


class EmptyInteriorError(HeatConductionError):
    """Raised when a fundamental matrix is requested with no interior nodes."""

    def __init__(self):
        """Every node is boundary, so there is nothing to invert."""
        super().__init__('The transition system has no interior nodes.')


class SingularSystemError(HeatConductionError):
    """Raised when an interior node cannot reach any boundary node."""

    def __init__(self, trapped_node):
        """Initialize the exception with one trapped interior node."""
        super().__init__(
            f'Interior node {trapped_node} has no path to a seed or the bias '
            'node, so I - R is singular.'
        )
        self.trapped_node = trapped_node


class UnsupportedBackendError(HeatConductionError):
    """Raised when an operation is not available for a spread backend."""

    category = CONFIG_ERROR

    def __init__(self, backend, operation):
        """Initialize the exception with the backend and requested operation."""
        super().__init__(f'Backend "{backend}" does not support {operation}.')


class MaskedEntryError(HeatConductionError):
    """Raised when reading a fundamental matrix entry for a boundary node."""

    def __init__(self, node):
        """Initialize the exception with the masked node."""
        super().__init__(
            f'Node {node} is not interior under this fundamental matrix.'
        )


class ShapeMismatchError(HeatConductionError):
    """Raised when two matrices or vectors do not describe the same system."""

    def __init__(self, reason):
        """Initialize the exception with a description of the mismatch."""
        super().__init__(f'Shape mismatch: {reason}')


class ModeConstraintError(HeatConductionError):
    """Raised when network parameters violate a diffusion mode's constraints."""

    def __init__(self, mode, reason):
        """Initialize the exception with the mode name and violated constraint."""
        super().__init__(f'Network is not a valid "{mode}" instance: {reason}')


class EmptyGraphError(HeatConductionError):
    """Raised when a graph statistic is requested for a graph with no edges."""

    def __init__(self):
        """No reachable pairs exist."""
        super().__init__('The network has no edges, so no paths exist.')


class InvalidBudgetError(HeatConductionError):
    """Raised when the seed budget K is out of range."""

    category = CONFIG_ERROR

    def __init__(self, budget, n_nodes):
        """Initialize the exception with the budget and network size."""
        super().__init__(
            f'Seed budget K={budget} must satisfy 1 <= K <= {n_nodes}.'
        )


class UnknownMethodError(HeatConductionError):
    """Raised when an algorithm, scheme or mode name is not recognised."""

    category = CONFIG_ERROR

    def __init__(self, kind, name, valid_names):
        """Initialize the exception with the unknown name and valid choices."""
        super().__init__(
            f'Unknown {kind} "{name}"; expected one of: '
            f'{", ".join(sorted(valid_names))}.'
        )


class CapacityExceededError(HeatConductionError):
    """Raised when a requested computation exceeds a configured size limit."""

    category = CAPACITY_ERROR

    def __init__(self, reason):
        """Initialize the exception with an explanation and advice."""
        super().__init__(f'Capacity exceeded: {reason}')
