class MflabError(Exception):
    """Base class for every error raised by the lab."""
    code = "mflab-error"
    exit_status = 4


class ModeCapExceeded(MflabError):
    """Raised when a lattice window would need more fermionic modes than the configured cap."""
    code = "mode-cap-exceeded"


class ModeOutOfRange(MflabError):
    """Raised when a (site, spin) pair does not belong to the lattice window."""
    code = "mode-out-of-range"


class WindowTooSmall(MflabError):
    """Raised when an averaging box or observable does not fit inside the lattice window."""
    code = "window-too-small"


class SpinSetTooSmall(MflabError):
    """Raised when a construction needs more spin labels than the context provides."""
    code = "spin-set-too-small"


class RangeExceedsWindow(MflabError):
    """Raised when an interaction reaches further than the torus window extent."""
    code = "range-exceeds-window"


class OddInteractionTerm(MflabError):
    """Raised when an interaction term is a monomial of odd degree."""
    code = "odd-interaction-term"


class MonomialSyntaxError(MflabError):
    """Raised when a monomial string does not follow the generator grammar."""
    code = "monomial-syntax"


class NonHermitian(MflabError):
    """Raised when an operator that must be self-adjoint is not."""
    code = "non-hermitian"


class TemperatureOutOfRange(MflabError):
    """Raised when an inverse temperature is not positive or exceeds the configured cap."""
    code = "temperature-out-of-range"


class StateNotGibbsOfH(MflabError):
    """Raised in strict mode when a state is not the Gibbs state of the Hamiltonian it is checked against."""
    code = "state-not-gibbs"

    def __init__(self, residual: float, mismatch: float):
        super().__init__(f"State differs from the Gibbs state by {mismatch:.3e}; KMS residual {residual:.3e}")
        self.residual = residual
        self.mismatch = mismatch


class StateNotFaithful(MflabError):
    """Raised when modular data is requested for a state with a vanishing eigenvalue."""
    code = "state-not-faithful"


class NonPhysicalState(MflabError):
    """Raised when a density matrix loses positivity or normalization beyond repair."""
    code = "non-physical-state"


class LengthMismatch(MflabError):
    """Raised when a coefficient vector does not match the number of mean-field terms."""
    code = "length-mismatch"


class NoConvergence(MflabError):
    """Raised when a fixed-point iteration hits its iteration cap."""
    code = "no-convergence"

    def __init__(self, iterations: int, residual: float):
        super().__init__(f"No convergence after {iterations} iterations (residual {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


class MaximalityCheckFailed(MflabError):
    """Raised when a perturbation of the decision rule increases the game value."""
    code = "maximality-check-failed"


class GridTooLarge(MflabError):
    """Raised when an oracle grid or a sweep exceeds its cell cap."""
    code = "grid-too-large"

    def __init__(self, cells: int, cap: int):
        super().__init__(f"Grid has {cells} cells, cap is {cap}")
        self.cells = cells
        self.cap = cap


class StepTooLarge(MflabError):
    """Raised when step halving cannot bring an integrator back within tolerance."""
    code = "step-too-large"


class ConfigInvalid(MflabError):
    """Raised when an experiment config fails validation."""
    code = "config-invalid"
    exit_status = 3

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message
