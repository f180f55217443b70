"""Exception types shared across the package."""


class SparsewireError(Exception):
    """Base class for all package-specific errors."""


class RowFull(SparsewireError):
    """A row of a ragged matrix has no free capacity left."""


class DuplicateEdge(SparsewireError):
    """Adding a synapse that already exists in multapse-free mode."""


class SlotOutOfRange(SparsewireError):
    """A slot index is not within the valid region of its row."""


class KTooLarge(SparsewireError):
    """Asked to sample more distinct values than the population holds."""


class UnresolvedReference(SparsewireError):
    """A rule references a variable or matrix that does not exist."""


class DuplicateName(SparsewireError):
    """A name is already registered."""


class StaleTranspose(SparsewireError):
    """A transpose map is used after its source matrix changed."""


class ConfigError(SparsewireError):
    """An experiment configuration is malformed or inconsistent."""
