"""Information matrix, per-parameter variance bounds and ellipsoid volume.

For Gaussian magnitude/phase noise the information matrix of the eleven
circuit parameters is

    F = J_rho^T W_rho J_rho + J_phi^T W_phi J_phi + S

with diagonal weights W = 1/sigma^2 and S the contribution from the
magnitude variance depending on the parameters through the model magnitude
(sigma_rho is proportional to rho(theta)).  S is tiny at percent-level
noise but is included by default for completeness; a flag disables it.

Raw-unit entries of F span roughly twenty orders of magnitude because the
parameters range from milliohms to 1e7.  Every factorization here therefore
runs on a similarity-scaled matrix D F D with D = diag(|theta|), which has
condition numbers a plain Cholesky handles; results are mapped back to
linear parameter units exactly.  Eigenvalue tracking for the adjustment
loop is offered both in those scaled (log-parameter) coordinates and on the
raw matrix, selectable per call.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .circuit import (
    N_PARAMETERS,
    PARAMETER_NAMES,
    ParameterVector,
    _impedance_and_gradient,
    _polar_sensitivities,
)
from .exceptions import DomainError, SingularInformationError
from .measurement import ErrorStructure

# Positive-definiteness gate used before inverting: smallest eigenvalue of
# the unit-scaled matrix must exceed this fraction of the largest.
PD_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class FisherMatrix:
    """11 x 11 information matrix with its evaluation context."""

    matrix: np.ndarray
    theta: ParameterVector
    grid: object
    err: ErrorStructure
    includes_variance_term: bool = True

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.shape != (N_PARAMETERS, N_PARAMETERS):
            raise DomainError(f"information matrix must be 11x11, got {m.shape}")
        asym = np.max(np.abs(m - m.T))
        scale = np.max(np.abs(m))
        if scale > 0 and asym > 1e-12 * scale:
            raise DomainError("information matrix is not symmetric")
        m = 0.5 * (m + m.T)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)


def _point_weights(err: ErrorStructure, mag: np.ndarray, include_variance_term: bool):
    """Per-point outer-product weights for the magnitude and phase rows."""
    w_mag = 1.0 / (err.sigma_rel_mag * mag) ** 2
    if include_variance_term:
        # d(sigma_mag^2)/dtheta = 2 c^2 rho drho with c = sigma_rel_mag, so
        # the variance-sensitivity term collapses to 2 drho drho^T / rho^2.
        w_mag = w_mag + 2.0 / mag**2
    w_phase = np.full_like(mag, 1.0 / err.sigma_phase_rad**2)
    return w_mag, w_phase


def _contributions(
    theta: ParameterVector,
    freqs_hz: np.ndarray,
    err: ErrorStructure,
    include_variance_term: bool,
) -> np.ndarray:
    z, dz = _impedance_and_gradient(theta.to_array(), 2.0 * np.pi * freqs_hz)
    mag, dmag, dphase = _polar_sensitivities(z, dz)
    w_mag, w_phase = _point_weights(err, mag, include_variance_term)
    out = np.einsum("i,ij,ik->ijk", w_mag, dmag, dmag)
    out += np.einsum("i,ij,ik->ijk", w_phase, dphase, dphase)
    return out


def fisher_contributions(
    theta: ParameterVector,
    grid,
    err: ErrorStructure,
    include_variance_term: bool = True,
) -> np.ndarray:
    """Per-frequency additive pieces of the information matrix.

    Returns shape (n, 11, 11); their sum equals :func:`fisher`'s matrix.
    The adjustment loop uses these to re-evaluate candidate moves by
    swapping a single summand instead of rebuilding the whole matrix.
    """
    theta.validate()
    freqs = np.atleast_1d(
        np.asarray(getattr(grid, "frequencies", grid), dtype=float)
    )
    if freqs.size == 0:
        raise DomainError("frequency set must be nonempty")
    if not np.all(freqs > 0.0):
        raise DomainError("frequencies must be positive")
    return _contributions(theta, freqs, err, include_variance_term)


def fisher(
    theta: ParameterVector,
    grid,
    err: ErrorStructure,
    include_variance_term: bool = True,
) -> FisherMatrix:
    """Information matrix at ``theta`` for the given frequency set."""
    parts = fisher_contributions(theta, grid, err, include_variance_term)
    # np.sum reduces pairwise, keeping the result independent of point
    # ordering to well below the tolerances used downstream.
    matrix = np.sum(parts, axis=0)
    matrix = 0.5 * (matrix + matrix.T)
    return FisherMatrix(matrix, theta, grid, err, include_variance_term)


def _unit_scale(theta: ParameterVector) -> np.ndarray:
    return np.abs(theta.to_array())


def _scaled_matrix(fim: FisherMatrix, scale: np.ndarray) -> np.ndarray:
    return fim.matrix * np.outer(scale, scale)


def _require_pd(scaled: np.ndarray) -> np.ndarray:
    eigvals = np.linalg.eigvalsh(scaled)
    lam_min, lam_max = eigvals[0], eigvals[-1]
    if not (lam_max > 0.0 and lam_min > PD_RTOL * lam_max):
        cond = lam_max / lam_min if lam_min > 0 else np.inf
        raise SingularInformationError(
            "information matrix is numerically singular "
            f"(scaled lambda_min={lam_min:.3e}, lambda_max={lam_max:.3e})",
            lambda_min=lam_min,
            condition_number=cond,
        )
    return eigvals


def crlb(fim: FisherMatrix) -> np.ndarray:
    """Per-parameter minimum variances: the diagonal of the matrix inverse.

    The positive-definiteness gate and the factorization run on the
    unit-scaled matrix; raw-unit eigenvalues would conflate the parameter
    scale disparity with genuine rank deficiency.
    """
    scale = _unit_scale(fim.theta)
    scaled = _scaled_matrix(fim, scale)
    _require_pd(scaled)
    cho = scipy.linalg.cho_factor(scaled, lower=True)
    inv_scaled = scipy.linalg.cho_solve(cho, np.eye(N_PARAMETERS))
    return scale**2 * np.diag(inv_scaled)


def eigen_scale(theta: ParameterVector, scaling: str) -> np.ndarray:
    """Per-parameter similarity scale used for eigenvalue tracking.

    "log" rescales every parameter by its magnitude (the information
    matrix expressed in log-parameter coordinates, where eigenvalues
    measure curvature against *relative* parameter changes); "linear"
    keeps raw parameter units.  A tiny floor guards against an exponent
    sitting exactly at zero, which would collapse the scaled matrix.
    """
    if scaling == "log":
        return np.maximum(np.abs(theta.to_array()), 1e-12)
    if scaling == "linear":
        return np.ones(N_PARAMETERS)
    raise DomainError(f"unknown eigenvalue scaling {scaling!r}")


def eigenvalues(fim: FisherMatrix, scaling: str = "log") -> np.ndarray:
    """Ascending eigenvalues of the information matrix under the chosen
    coordinate scaling (see :func:`eigen_scale`)."""
    scale = eigen_scale(fim.theta, scaling)
    return np.linalg.eigvalsh(_scaled_matrix(fim, scale))


def lambda_min(fim: FisherMatrix, scaling: str = "log") -> float:
    return float(eigenvalues(fim, scaling)[0])


def ellipsoid_log_volume(fim: FisherMatrix) -> float:
    """Log of the uncertainty-ellipsoid volume, up to a common constant.

    The volume is proportional to sqrt(prod eig(F^-1)), i.e. the log-volume
    is -0.5 * log det F, evaluated in linear parameter units.  Computed via
    the unit-scaled eigenvalues to avoid overflow/underflow; the scaling
    correction is exact.
    """
    scale = _unit_scale(fim.theta)
    eigvals = _require_pd(_scaled_matrix(fim, scale))
    log_det = float(np.sum(np.log(eigvals)) - 2.0 * np.sum(np.log(scale)))
    return -0.5 * log_det


def normalized_volume(log_volume: float, log_volume_ref: float) -> float:
    """Ellipsoid volume in per-unit terms of a reference grid's volume."""
    return float(np.exp(log_volume - log_volume_ref))


@dataclass(frozen=True, eq=False)
class UncertaintyReport:
    """Bundle of the derived uncertainty figures for one (theta, grid)."""

    theta: ParameterVector
    crlb: np.ndarray
    eigvals: np.ndarray
    eigen_scaling: str
    log_volume: float

    def __post_init__(self):
        for name in ("crlb", "eigvals"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def lambda_min(self) -> float:
        return float(self.eigvals[0])

    def to_json_dict(self) -> dict:
        return {
            "parameters": self.theta.to_dict(),
            "crlb": dict(zip(PARAMETER_NAMES, self.crlb.tolist())),
            "eigenvalues": self.eigvals.tolist(),
            "eigen_scaling": self.eigen_scaling,
            "lambda_min": self.lambda_min,
            "log_volume": self.log_volume,
        }


def uncertainty_report(fim: FisherMatrix, eigen_scaling: str = "log") -> UncertaintyReport:
    return UncertaintyReport(
        theta=fim.theta,
        crlb=crlb(fim),
        eigvals=eigenvalues(fim, eigen_scaling),
        eigen_scaling=eigen_scaling,
        log_volume=ellipsoid_log_volume(fim),
    )


def save_report_json(report: UncertaintyReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, indent=2)
        fh.write("\n")
