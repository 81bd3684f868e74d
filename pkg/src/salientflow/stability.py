"""Flow-map Jacobian, Cauchy-Green stretching and the finite-time instability exponent."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .advection import AdvectionConfig, FlowMap, advect_grid
from .errors import ConfigError, GridTooSmall, NumericError
from .field_core import ScalarField, VectorField2

EPS_LAMBDA = 1e-12


@dataclass(frozen=True)
class JacobianField:
    """Entries of d(final position)/d(seed position) on the seed grid."""

    j11: np.ndarray  # dx_t/dx0
    j12: np.ndarray  # dx_t/dy0
    j21: np.ndarray  # dy_t/dx0
    j22: np.ndarray  # dy_t/dy0

    @property
    def shape(self):
        return self.j11.shape

    @classmethod
    def from_matrices(cls, m: np.ndarray) -> "JacobianField":
        """Build from an array of 2x2 matrices of shape ``(..., 2, 2)``."""
        m = np.asarray(m, dtype=np.float64)
        return cls(m[..., 0, 0], m[..., 0, 1], m[..., 1, 0], m[..., 1, 1])


@dataclass(frozen=True)
class StabilityField:
    phi: np.ndarray
    tau: float

    @property
    def shape(self):
        return self.phi.shape


def jacobian_of_flow_map(fmap: FlowMap) -> JacobianField:
    rows, cols = fmap.shape
    if rows < 2 or cols < 2:
        raise GridTooSmall(f"seed grid {cols}x{rows} is smaller than 2x2")
    h = fmap.spacing
    dxf_dy, dxf_dx = np.gradient(fmap.x_final, h, h, edge_order=1)
    dyf_dy, dyf_dx = np.gradient(fmap.y_final, h, h, edge_order=1)
    return JacobianField(dxf_dx, dxf_dy, dyf_dx, dyf_dy)


def max_eigenvalue_ctc(j: JacobianField) -> ScalarField | np.ndarray:
    """Largest eigenvalue of ``C = J^T J`` per point, in closed form.

    The discriminant is evaluated as ``(c11 - c22)^2 + 4 c12^2`` rather than
    ``tr^2 - 4 det``; the two are equal, but the first cannot go negative and
    keeps full relative accuracy when ``C`` is nearly isotropic.
    """
    c11 = j.j11 * j.j11 + j.j21 * j.j21
    c12 = j.j11 * j.j12 + j.j21 * j.j22
    c22 = j.j12 * j.j12 + j.j22 * j.j22
    tr = c11 + c22
    d = c11 - c22
    disc = np.maximum(d * d + 4.0 * c12 * c12, 0.0)
    lam = 0.5 * (tr + np.sqrt(disc))
    if np.ndim(lam) == 2:
        return ScalarField(lam)
    return lam


def stability_exponent(lambda_field: ScalarField | np.ndarray, tau: float) -> StabilityField:
    """``phi = log(sqrt(lambda)) / |tau|`` with ``lambda`` floored at ``EPS_LAMBDA``."""
    tau = float(tau)
    if not tau > 0:
        raise ConfigError(f"tau must be positive, got {tau}")
    lam = lambda_field.values if isinstance(lambda_field, ScalarField) else np.asarray(lambda_field)
    phi = np.log(np.maximum(lam, EPS_LAMBDA)) / (2.0 * abs(tau))
    if not np.all(np.isfinite(phi)):
        raise NumericError("instability exponent is non-finite")
    return StabilityField(phi, tau)


def compute_stability(field: VectorField2, cfg: AdvectionConfig, workers: int = 1) -> StabilityField:
    fmap = advect_grid(field, cfg, workers=workers)
    lam = max_eigenvalue_ctc(jacobian_of_flow_map(fmap))
    return stability_exponent(lam, cfg.horizon_tau)
