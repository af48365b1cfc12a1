"""Embedded-manifold abstraction shared by all estimators.

Every manifold maps its native points into a flat real ambient vector
(``embed``), pulls ambient points back onto the embedded image
(``project``) and inverts the embedding on that image (``unembed``).
Solvers only ever see flat real arrays, so one Fermat-Weber
implementation serves every manifold.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np

MEMBERSHIP_TOL = 1e-10


class FocalPointError(ValueError):
    """Raised when an ambient point has no unique nearest point on the image."""

    def __init__(self, message, gap=0.0):
        super().__init__(message)
        self.gap = gap


@dataclass(frozen=True)
class ProjectionResult:
    """Nearest point on the embedded image together with its focal gap."""

    point: np.ndarray
    gap: float


def hermitian_to_flat(matrix):
    """Interleave real/imaginary parts of a complex matrix (row-major)."""
    matrix = np.asarray(matrix, dtype=complex)
    return np.stack([matrix.real, matrix.imag], axis=-1).reshape(*matrix.shape[:-2], -1)


def flat_to_hermitian(flat, k):
    flat = np.asarray(flat, dtype=float)
    pairs = flat.reshape(*flat.shape[:-1], k, k, 2)
    return pairs[..., 0] + 1j * pairs[..., 1]


class Manifold(abc.ABC):
    """Base class for a manifold with an equivariant Euclidean embedding."""

    kind: str = ""

    @property
    @abc.abstractmethod
    def ambient_dim(self) -> int:
        """Number of real scalars in the flat ambient representation."""

    @abc.abstractmethod
    def validate(self, points):
        """Return ``points`` as an array of native points, or raise ``ValueError``."""

    @abc.abstractmethod
    def embed(self, points):
        """Map native points (single or batch) to flat ambient vectors."""

    @abc.abstractmethod
    def project(self, y) -> ProjectionResult:
        """Project a flat ambient vector onto the embedded image."""

    @abc.abstractmethod
    def unembed(self, y):
        """Invert the embedding for a point already on the image."""

    @abc.abstractmethod
    def contains(self, y, tol=MEMBERSHIP_TOL) -> bool:
        """Membership test for the embedded image."""

    @abc.abstractmethod
    def native_shape(self) -> tuple:
        """Array shape of a single native point."""

    def project_unembed(self, y):
        """``J^{-1}(P(y))``; raises :class:`FocalPointError` at focal points."""
        return self.unembed(self.project(y).point)

    def distance(self, a, b):
        return extrinsic_distance(a, b, self)

    def robust_distance(self, a, b):
        """Distance used for robustness curves; the extrinsic one by default."""
        return self.distance(a, b)

    def describe(self) -> dict:
        return {"kind": self.kind, "ambient_dim": self.ambient_dim}

    def __eq__(self, other):
        return type(self) is type(other) and self.describe() == other.describe()

    def __hash__(self):
        return hash((type(self).__name__, tuple(sorted(self.describe().items()))))


def _check_single(point, m: Manifold):
    arr = np.asarray(point)
    if arr.shape != m.native_shape():
        raise ValueError(
            f"point of shape {arr.shape} does not belong to {m.kind} "
            f"(expected {m.native_shape()})"
        )
    return m.validate(arr[None])[0]


def extrinsic_distance(a, b, m: Manifold) -> float:
    """Euclidean (Frobenius) norm of ``J(a) - J(b)``."""
    ja = m.embed(_check_single(a, m))
    jb = m.embed(_check_single(b, m))
    return float(np.linalg.norm(ja - jb))


def ambient_mean(points, weights=None):
    """Weighted arithmetic mean of flat ambient vectors."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ValueError("ambient_mean needs a non-empty (n, D) array")
    if weights is None:
        return points.mean(axis=0)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (points.shape[0],):
        raise ValueError("one weight per point is required")
    if np.any(weights < 0):
        raise ValueError("weights must be nonnegative")
    if abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1 (got {weights.sum():.12g})")
    return weights @ points


def manifold_from_descriptor(desc: dict) -> Manifold:
    """Rebuild a manifold from ``Manifold.describe()`` output or a CLI name."""
    from .sphere import Sphere
    from .shape import PlanarShape
    from .spd import SPD

    kind = desc["kind"]
    if kind == "sphere":
        return Sphere(int(desc["d"]))
    if kind == "planar-shape":
        return PlanarShape(int(desc["k"]))
    if kind == "spd":
        return SPD(int(desc["p"]))
    raise ValueError(f"unknown manifold kind {kind!r}")
