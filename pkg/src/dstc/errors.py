"""Exception hierarchy for the emulator."""


class DstcError(Exception):
    """Base class for all emulator errors."""


class IntegrationDivergenceError(DstcError, ArithmeticError):
    """Raised when a state variable or input becomes non-finite."""

    def __init__(self, quantity: str, value=None):
        self.quantity = quantity
        self.value = value
        super().__init__(f"integration diverged: {quantity} is non-finite ({value!r})")


class PreconditionError(DstcError, ValueError):
    """Raised when an operation is called with arguments violating its contract."""


class AddressError(DstcError, IndexError):
    """Raised for chip/core/neuron/slot indices outside the fabric bounds."""


class SlotConflictError(DstcError):
    """Raised when binding a CAM slot that is already occupied."""

    def __init__(self, neuron, slot: int):
        self.neuron = neuron
        self.slot = slot
        super().__init__(f"CAM slot {slot} on neuron {neuron} is already occupied")


class AllocationError(DstcError):
    """Raised when the fabric runs out of free neurons or CAM slots."""


class ConfigError(DstcError, ValueError):
    """Raised for invalid run configurations; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")
