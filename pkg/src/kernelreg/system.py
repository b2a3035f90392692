"""Matrix-free assembly of the restoration linear systems.

Two equivalent forms of the first-order optimality system for the
quadratic objective f + rho * Phi_W:

    A z = b   with  A = W^T F^T F W + rho W^T D (I - W),   b = W^T F^T y
    C z = d   with  C = F^T F W + rho D (I - W),           d = F^T y

C needs one denoiser apply per operator application and no adjoint, but
is not symmetric; A is symmetric positive semidefinite. The restored
image is W z either way.
"""

from __future__ import annotations

import numpy as np

from .counting import paused_all
from .denoiser import KernelDenoiser
from .errors import ConfigurationError, ShapeMismatch
from .forward import ForwardModel
from .image import Image
from .oracle import DenseSpectralForm

__all__ = ["SystemOperator", "objective_theta", "objective_dense", "materialize_system"]


class SystemOperator:
    """The operator side of A z = b (variant 'A') or C z = d (variant 'C')."""

    def __init__(self, forward: ForwardModel, denoiser: KernelDenoiser,
                 rho: float, variant: str = "C"):
        if variant not in ("A", "C"):
            raise ConfigurationError(f"system variant must be 'A' or 'C', got '{variant}'")
        if rho < 0:
            raise ConfigurationError(f"rho must be nonnegative, got {rho}")
        if forward.input_shape != denoiser.shape:
            raise ShapeMismatch(
                f"forward model works on {forward.input_shape}, "
                f"denoiser on {denoiser.shape}"
            )
        self.forward = forward
        self.denoiser = denoiser
        self.rho = float(rho)
        self.variant = variant
        self.measurement: np.ndarray | None = None  # raw y, for theta telemetry
        self._d = denoiser.row_sums.reshape(-1)

    @property
    def shape(self) -> tuple[int, int]:
        return self.denoiser.shape

    @property
    def n(self) -> int:
        return self.denoiser.n

    @property
    def symmetric(self) -> bool:
        return self.variant == "A"

    def apply_vec(self, z: np.ndarray) -> np.ndarray:
        """One operator application: one W, one F, one F^T (plus W^T for A)."""
        t = self.denoiser.apply_vec(z)
        u = self.forward.adjoint_vec(self.forward.apply_vec(t))
        u = u + self.rho * self._d * (z - t)
        if self.variant == "A":
            u = self.denoiser.adjoint_vec(u)
        return u

    def rhs_vec(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        b = self.forward.adjoint_vec(y)
        if self.variant == "A":
            b = self.denoiser.adjoint_vec(b)
        return b

    def apply(self, z: Image) -> Image:
        if z.shape != self.shape:
            raise ShapeMismatch(f"expected {self.shape}, got {z.shape}")
        return Image(self.apply_vec(z.vector()).reshape(self.shape))

    def rhs(self, y: np.ndarray) -> Image:
        y = np.asarray(y, dtype=np.float64)
        expected = self.forward.output_shape
        if y.shape != expected:
            raise ShapeMismatch(f"expected measurement {expected}, got {y.shape}")
        return Image(self.rhs_vec(y).reshape(self.shape))

    def counting_paused(self):
        """Pause both constituent counters (telemetry evaluations)."""
        return paused_all(self.forward.counter, self.denoiser.counter)

    @property
    def op_count(self) -> int:
        return self.forward.counter.total + self.denoiser.counter.total


def objective_theta(forward: ForwardModel, denoiser: KernelDenoiser,
                    rho: float, y: np.ndarray, z: np.ndarray) -> float:
    """z-parameterized objective theta(z), computable matrix-free at any scale.

    theta(z) = 1/2 ||y - F W z||^2 + rho/2 z^T W^T D (I - W) z equals the
    restoration objective evaluated at x = W z, for every z.
    """
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    t = denoiser.apply_vec(z)
    r = forward.apply_vec(t) - y
    d = denoiser.row_sums.reshape(-1)
    reg = float(t @ (d * (z - t)))
    return 0.5 * float(r @ r) + 0.5 * rho * reg


def objective_dense(form: DenseSpectralForm, forward: ForwardModel,
                    rho: float, y: np.ndarray, x: np.ndarray) -> float:
    """Restoration objective f(x) + rho * Phi_W(x) via the dense regularizer."""
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    r = forward.apply_vec(x) - y
    return 0.5 * float(r @ r) + rho * form.phi(x)


def materialize_system(op: SystemOperator) -> np.ndarray:
    """Dense n x n matrix of the system operator (desk scale only)."""
    from .forward import DENSE_CAP
    from .errors import SizeCapExceeded

    if op.n > DENSE_CAP:
        raise SizeCapExceeded(f"{op.n} pixels exceeds dense cap {DENSE_CAP}")
    cols = np.empty((op.n, op.n))
    e = np.zeros(op.n)
    with op.counting_paused():
        for j in range(op.n):
            e[j] = 1.0
            cols[:, j] = op.apply_vec(e)
            e[j] = 0.0
    return cols
