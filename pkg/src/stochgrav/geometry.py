"""Geometry of the projective state space.

A complex state ``psi = u + i v`` is stored as its real and imaginary parts.
The Hermitian inner product splits into a Riemannian part ``G`` and a
symplectic part ``Omega``:

    <psi1|psi2> = G(psi1, psi2) - i * Omega(psi1, psi2)
    G     = (u1, u2) + (v1, v2)
    Omega = (v1, u2) - (u1, v2)

The state-space metric is the Euclidean metric plus a weak symmetric
perturbation, ``G_ik = H_ik + Pi_ik`` with ``H = I``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionError,
    MetricError,
    NormalizationWarning,
    PerturbationTooLargeError,
    SymmetryError,
    WeakPerturbationWarning,
)

PSD_TOLERANCE = 1e-10
WEAK_WARN_RATIO = 0.1
NORMALIZATION_SLACK = 1e-9


@dataclass(frozen=True)
class ComplexStateVector:
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.atleast_1d(np.asarray(self.u, dtype=float))
        v = np.atleast_1d(np.asarray(self.v, dtype=float))
        if u.ndim != 1 or u.shape != v.shape or u.size < 1:
            raise DimensionError(f"u and v must be equal-length vectors, got {u.shape} and {v.shape}")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ValueError("state components must be finite")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @classmethod
    def from_complex(cls, psi) -> "ComplexStateVector":
        psi = np.asarray(psi, dtype=complex)
        return cls(psi.real.copy(), psi.imag.copy())

    @property
    def dim(self) -> int:
        return self.u.size

    def norm2(self) -> float:
        return float(self.u @ self.u + self.v @ self.v)

    def to_complex(self) -> np.ndarray:
        return self.u + 1j * self.v


@dataclass(frozen=True)
class InnerProductDecomposition:
    g_part: float
    omega_part: float

    def reconstruct(self) -> complex:
        """Hermitian inner product ``G - i*Omega``."""
        return complex(self.g_part, -self.omega_part)


@dataclass(frozen=True)
class ProHilbertMetric:
    """Total metric ``h_flat + pi_perturbation`` on an N-dimensional state space."""

    h_flat: np.ndarray
    pi_perturbation: np.ndarray

    def __post_init__(self):
        h = np.array(self.h_flat, dtype=float)
        pi = np.array(self.pi_perturbation, dtype=float)
        if h.ndim != 2 or h.shape[0] != h.shape[1] or h.shape != pi.shape:
            raise DimensionError(f"metric parts must be equal square matrices, got {h.shape} and {pi.shape}")
        if not np.array_equal(h, h.T):
            raise SymmetryError("base metric is not symmetric")
        if not np.array_equal(pi, pi.T):
            raise SymmetryError("perturbation is not symmetric")
        ratio = perturbation_ratio(h, pi)
        if ratio >= 1.0:
            raise PerturbationTooLargeError(f"|Pi| / |H| = {ratio:.3g} >= 1")
        if ratio > WEAK_WARN_RATIO:
            warnings.warn(f"|Pi| / |H| = {ratio:.3g} exceeds {WEAK_WARN_RATIO}", WeakPerturbationWarning, stacklevel=3)
        total = h + pi
        lam_min = float(np.linalg.eigvalsh(total)[0])
        if lam_min < -PSD_TOLERANCE:
            raise MetricError(f"metric is not positive semi-definite (min eigenvalue {lam_min:.3g})")
        h.flags.writeable = False
        pi.flags.writeable = False
        object.__setattr__(self, "h_flat", h)
        object.__setattr__(self, "pi_perturbation", pi)

    @property
    def dim(self) -> int:
        return self.h_flat.shape[0]

    @property
    def total(self) -> np.ndarray:
        return self.h_flat + self.pi_perturbation

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.total)


@dataclass(frozen=True)
class SimplexPointSet:
    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] != pts.shape[1] or pts.shape[0] < 1:
            raise DimensionError(f"need N points of dimension N, got shape {pts.shape}")
        object.__setattr__(self, "points", pts)


def perturbation_ratio(h: np.ndarray, pi: np.ndarray) -> float:
    """Operator (spectral) norm of ``pi`` relative to that of ``h``."""
    h_norm = np.linalg.norm(h, 2)
    if h_norm == 0:
        return math.inf
    return float(np.linalg.norm(pi, 2) / h_norm)


def decompose_inner_product(psi1: ComplexStateVector, psi2: ComplexStateVector) -> InnerProductDecomposition:
    if psi1.dim != psi2.dim:
        raise DimensionError(f"dimension mismatch: {psi1.dim} vs {psi2.dim}")
    g = psi1.u @ psi2.u + psi1.v @ psi2.v
    omega = psi1.v @ psi2.u - psi1.u @ psi2.v
    return InnerProductDecomposition(float(g), float(omega))


def perturbed_metric(pi) -> ProHilbertMetric:
    """Assemble ``I + pi`` after checking symmetry and weakness of ``pi``.

    Raises
    ------
    SymmetryError
        If ``pi`` is not symmetric.
    PerturbationTooLargeError
        If the operator norm of ``pi`` is not below 1.
    """
    pi = np.atleast_2d(np.asarray(pi, dtype=float))
    if pi.ndim != 2 or pi.shape[0] != pi.shape[1]:
        raise DimensionError(f"perturbation must be square, got {pi.shape}")
    return ProHilbertMetric(np.eye(pi.shape[0]), pi)


def probability_form(metric: ProHilbertMetric, psi) -> float:
    """Quadratic form ``sum_ik G_ik psi_i psi_k`` of a real state vector.

    The metric acts directly on the supplied components; no index raising
    is performed. Values above 1 are returned unchanged and flagged with a
    :class:`NormalizationWarning`.
    """
    psi = np.atleast_1d(np.asarray(psi, dtype=float))
    if psi.shape != (metric.dim,):
        raise DimensionError(f"state has shape {psi.shape}, metric is {metric.dim}x{metric.dim}")
    p = float(psi @ metric.total @ psi)
    if p > 1.0 + NORMALIZATION_SLACK:
        warnings.warn(f"probability form P = {p:.12g} > 1", NormalizationWarning, stacklevel=2)
    return p


def simplex_volume(points) -> float:
    """Volume ``|det(points)| / N!`` of the figure spanned by N points in N dimensions."""
    if not isinstance(points, SimplexPointSet):
        points = SimplexPointSet(points)
    n = points.points.shape[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        det = float(np.linalg.det(points.points))
    return abs(det) / math.factorial(n)


def self_check(seed: int = 0, n_pairs: int = 1000, dim: int = 8) -> dict:
    """Run the geometry consistency checks used by the ``geometry`` CLI command."""
    rng = np.random.default_rng(seed)
    worst_recon = 0.0
    worst_sym = 0.0
    worst_anti = 0.0
    for _ in range(n_pairs):
        a = ComplexStateVector(rng.standard_normal(dim), rng.standard_normal(dim))
        b = ComplexStateVector(rng.standard_normal(dim), rng.standard_normal(dim))
        ab = decompose_inner_product(a, b)
        ba = decompose_inner_product(b, a)
        ref = complex(np.sum(np.conj(a.to_complex()) * b.to_complex()))
        worst_recon = max(worst_recon, abs(ab.reconstruct() - ref) / max(abs(ref), 1e-300))
        worst_sym = max(worst_sym, abs(ab.g_part - ba.g_part))
        worst_anti = max(worst_anti, abs(ab.omega_part + ba.omega_part))
    unit = simplex_volume([[1.0, 0.0], [0.0, 1.0]])
    singular = simplex_volume([[1.0, 1.0], [2.0, 2.0]])
    return {
        "n_pairs": n_pairs,
        "dim": dim,
        "max_reconstruction_rel_error": worst_recon,
        "max_g_asymmetry": worst_sym,
        "max_omega_non_antisymmetry": worst_anti,
        "unit_simplex_volume": unit,
        "singular_simplex_volume": singular,
        "pass": bool(worst_recon < 1e-12 and worst_sym == 0.0 and worst_anti == 0.0 and unit == 0.5 and singular == 0.0),
    }
