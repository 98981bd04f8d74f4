"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value, file, or command-line argument."""


class SolverError(RuntimeError):
    """Base class for numerical failures inside the solvers."""


class FactorizationError(SolverError):
    """SPD factorization failed; carries the offending block index."""

    def __init__(self, block_index: int, detail: str = ""):
        self.block_index = block_index
        msg = f"Cholesky factorization failed at block {block_index}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class DivergenceError(SolverError):
    """Newton iteration residual grew for several consecutive steps."""


class BlowUpError(SolverError):
    """A model trajectory left the representable range."""

    def __init__(self, step_index: int):
        self.step_index = step_index
        super().__init__(f"trajectory became non-finite at step {step_index}")


class DampingOverflowError(SolverError):
    """Levenberg-Marquardt damping grew past its cap without a cost decrease."""
