"""Exception types shared across the workbench.

The CLI maps these onto exit codes: config problems -> 2, solver failures
-> 3, training divergence -> 4.
"""


class TransromError(Exception):
    """Base class for all workbench errors."""


class ConfigError(TransromError):
    """Malformed or inconsistent experiment configuration."""


class GmresError(TransromError):
    """GMRES failed to reach the requested tolerance."""

    def __init__(self, message, last_residual, iterations):
        super().__init__(f"{message} (last residual {last_residual:.3e} after {iterations} iterations)")
        self.last_residual = last_residual
        self.iterations = iterations


class NewtonError(TransromError):
    """Newton iteration exhausted max_iter without converging."""

    def __init__(self, message, residual_history):
        super().__init__(f"{message} (residual history {['%.3e' % r for r in residual_history]})")
        self.residual_history = list(residual_history)


class RankDeficiencyError(TransromError):
    """A least-squares basis matrix is numerically rank deficient."""

    def __init__(self, column, ratio):
        super().__init__(
            f"column {column} is numerically dependent (|R[{column},{column}]| is "
            f"{ratio:.3e} of the largest diagonal, below the 1e-12 threshold)"
        )
        self.column = column
        self.ratio = ratio


class SolverError(TransromError):
    """A full-order or reduced-order time step failed."""

    def __init__(self, message, step=None, time=None):
        ctx = []
        if step is not None:
            ctx.append(f"step {step}")
        if time is not None:
            ctx.append(f"t={time:.6g}")
        suffix = f" [{', '.join(ctx)}]" if ctx else ""
        super().__init__(message + suffix)
        self.step = step
        self.time = time


class ProjectionConditionError(SolverError):
    """Projected system too ill-conditioned to step safely."""

    def __init__(self, condition, limit, step=None, time=None):
        super().__init__(
            f"projected system condition estimate {condition:.3e} exceeds limit {limit:.3e}",
            step=step,
            time=time,
        )
        self.condition = condition
        self.limit = limit


class TrainingDivergedError(TransromError):
    """Loss became non-finite during training."""

    def __init__(self, epoch, batch, loss):
        super().__init__(f"non-finite loss ({loss}) at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


class PositivityError(SolverError):
    """Density or pressure lost positivity in a gas-dynamics state."""

    def __init__(self, quantity, node, value, step=None, time=None):
        super().__init__(f"non-positive {quantity} ({value:.6g}) at node {node}", step=step, time=time)
        self.quantity = quantity
        self.node = node
        self.value = value
