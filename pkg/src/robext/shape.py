"""Kendall planar shape space with the Veronese-Whitney embedding.

A configuration of ``k`` landmarks is a complex ``k``-vector.  Removing
translation and scale gives a preshape ``u``; the shape is the orbit
``{exp(i theta) u}``, embedded as the rank-one Hermitian matrix ``u u*``.
Ambient points are stored flat with interleaved real/imaginary parts.
"""

from __future__ import annotations

import csv
import json
from functools import lru_cache
from pathlib import Path

import numpy as np

from .geometry import (
    MEMBERSHIP_TOL,
    FocalPointError,
    Manifold,
    ProjectionResult,
    flat_to_hermitian,
    hermitian_to_flat,
)

SHAPE_FOCAL_TOL = 1e-9
RANK_ONE_TOL = 1e-9


def to_preshape(z):
    """Centre and scale landmark configurations (single ``(k,)`` or batch ``(n, k)``)."""
    z = np.asarray(z, dtype=complex)
    if z.shape[-1] < 3:
        raise ValueError("planar shapes need at least 3 landmarks")
    centred = z - z.mean(axis=-1, keepdims=True)
    norms = np.linalg.norm(centred, axis=-1, keepdims=True)
    if np.any(norms <= 1e-12):
        raise ValueError("degenerate configuration: all landmarks coincide")
    return centred / norms


def vw_embed(u):
    """Veronese-Whitney embedding ``u -> u u*`` as a complex matrix."""
    u = np.asarray(u, dtype=complex)
    return u[..., :, None] * u[..., None, :].conj()


def canonical_phase(u):
    """Rotate so that the first coordinate with modulus > 1e-10 is real positive."""
    u = np.array(u, dtype=complex)
    idx = int(np.argmax(np.abs(u) > 1e-10))
    u = u * np.exp(-1j * np.angle(u[idx]))
    u[idx] = abs(u[idx])
    return u


def full_procrustes_distance(a, b):
    """``sqrt(1 - |<a, b>|^2)`` for preshapes, computed without cancellation.

    With ``d`` the partial Procrustes distance ``min_theta ||a - e^{i theta} b||``
    one has ``|<a, b>| = 1 - d^2 / 2``, hence ``rho = d sqrt(1 - d^2 / 4)``.
    Accepts single preshapes or stacked batches.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    inner = np.sum(a * b.conj(), axis=-1)
    mod = np.abs(inner)
    phase = np.where(mod > 0, inner / np.where(mod > 0, mod, 1.0), 1.0)
    d = np.linalg.norm(a - phase[..., None] * b, axis=-1)
    rho = np.where(mod > 0, d * np.sqrt(np.clip(1.0 - d * d / 4.0, 0.0, None)), 1.0)
    rho = np.clip(rho, 0.0, 1.0)
    return float(rho) if rho.ndim == 0 else rho


@lru_cache(maxsize=32)
def _centred_basis(k):
    """Orthonormal ``(k, k-1)`` basis of the vectors summing to zero."""
    Q, _ = np.linalg.qr(np.column_stack([np.ones(k), np.eye(k)[:, : k - 1]]))
    B = Q[:, 1:]
    B.setflags(write=False)
    return B


def top_eigenpair(matrix):
    """Largest two eigenvalues and the leading unit eigenvector of a Hermitian matrix."""
    vals, vecs = np.linalg.eigh(matrix)
    return vals[-1], vals[-2], vecs[:, -1]


def shape_project(y, k) -> ProjectionResult:
    """Nearest point ``gamma gamma*`` on the embedded shape space.

    ``gamma`` is the leading eigenvector of the ambient matrix restricted to
    the centred subspace (for averages of embedded shapes this is the plain
    leading eigenvector, since their kernel already contains 1).
    """
    Y = flat_to_hermitian(y, k)
    scale = max(1.0, float(np.linalg.norm(Y)))
    if np.linalg.norm(Y - Y.conj().T) > MEMBERSHIP_TOL * scale:
        raise ValueError("ambient point is not Hermitian")
    Y = 0.5 * (Y + Y.conj().T)
    B = _centred_basis(k)
    lam1, lam2, v = top_eigenpair(B.T @ Y @ B)
    gamma = B @ v
    gap = (lam1 - lam2) / max(abs(lam1), abs(lam2), 1e-300)
    if not gap >= SHAPE_FOCAL_TOL:
        raise FocalPointError(
            f"leading eigenvalue is not simple (relative gap {gap:.3e})", gap=float(max(gap, 0.0))
        )
    gamma = canonical_phase(gamma)
    return ProjectionResult(point=hermitian_to_flat(vw_embed(gamma)), gap=float(gap))


def shape_unembed(y, k):
    """Recover the canonical preshape from a rank-one, trace-one embedded shape."""
    P = flat_to_hermitian(y, k)
    if np.linalg.norm(P - P.conj().T) > MEMBERSHIP_TOL * max(1.0, float(np.linalg.norm(P))):
        raise ValueError("embedded shape must be Hermitian")
    lam1, lam2, gamma = top_eigenpair(0.5 * (P + P.conj().T))
    if abs(np.trace(P).real - 1.0) > 1e-8 or abs(lam2) > RANK_ONE_TOL * max(abs(lam1), 1e-300):
        raise ValueError("matrix is not a rank-one trace-one embedded shape")
    gamma = gamma - gamma.mean()
    gamma = gamma / np.linalg.norm(gamma)
    return canonical_phase(gamma)


class PlanarShape(Manifold):
    """Kendall's shape space of planar ``k``-ads."""

    kind = "planar-shape"

    def __init__(self, k: int):
        if k < 3:
            raise ValueError("planar shapes need k >= 3")
        self.k = int(k)

    @property
    def ambient_dim(self):
        return 2 * self.k * self.k

    def native_shape(self):
        return (self.k,)

    def describe(self):
        return {"kind": self.kind, "k": self.k, "ambient_dim": self.ambient_dim}

    def validate(self, points):
        u = np.asarray(points, dtype=complex)
        if u.ndim != 2 or u.shape[1] != self.k:
            raise ValueError(f"expected an (n, {self.k}) array of preshapes")
        if np.any(np.abs(u.sum(axis=1)) > MEMBERSHIP_TOL):
            raise ValueError("preshapes must be centred")
        if np.any(np.abs(np.linalg.norm(u, axis=1) - 1.0) > MEMBERSHIP_TOL):
            raise ValueError("preshapes must have unit norm")
        return u

    def embed(self, points):
        return hermitian_to_flat(vw_embed(points))

    def project(self, y):
        return shape_project(y, self.k)

    def unembed(self, y):
        return shape_unembed(y, self.k)

    def contains(self, y, tol=MEMBERSHIP_TOL):
        y = np.asarray(y, dtype=float)
        if y.shape != (self.ambient_dim,):
            return False
        P = flat_to_hermitian(y, self.k)
        if np.linalg.norm(P - P.conj().T) > tol:
            return False
        vals = np.linalg.eigvalsh(0.5 * (P + P.conj().T))
        return (
            abs(vals[-1] - 1.0) <= tol
            and np.all(np.abs(vals[:-1]) <= tol)
            and np.linalg.norm(P.sum(axis=1)) <= tol
        )

    def robust_distance(self, a, b):
        return full_procrustes_distance(a, b)


# --- landmark files -----------------------------------------------------------


def read_landmarks_csv(path):
    """Read ``id,landmark,x,y`` rows into ``(ids, configurations)``.

    Landmark numbers are sorted within each id and must run 1..k with the
    same ``k`` for every id.
    """
    groups: dict[str, dict[int, complex]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames[:4]] != [
            "id",
            "landmark",
            "x",
            "y",
        ]:
            raise ValueError(f"{path}: header must be id,landmark,x,y")
        for lineno, row in enumerate(reader, start=2):
            try:
                key = row["id"].strip()
                idx = int(row["landmark"])
                z = complex(float(row["x"]), float(row["y"]))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed landmark row ({exc})") from None
            landmarks = groups.setdefault(key, {})
            if idx in landmarks:
                raise ValueError(f"{path}:{lineno}: duplicate landmark {idx} for id {key}")
            landmarks[idx] = z
    if not groups:
        raise ValueError(f"{path}: no landmark rows")
    ks = {len(v) for v in groups.values()}
    if len(ks) != 1:
        raise ValueError(f"{path}: number of landmarks differs between ids")
    k = ks.pop()
    configs = np.empty((len(groups), k), dtype=complex)
    for row, (key, landmarks) in enumerate(groups.items()):
        if sorted(landmarks) != list(range(1, k + 1)):
            raise ValueError(f"{path}: landmarks of id {key} must be numbered 1..{k}")
        configs[row] = [landmarks[j] for j in range(1, k + 1)]
    return list(groups), configs


def write_landmarks_csv(path, configs, ids=None):
    """Write ``id,landmark,x,y`` rows to a path or an open text file."""
    configs = np.atleast_2d(np.asarray(configs, dtype=complex))
    ids = [str(i) for i in (ids if ids is not None else range(1, len(configs) + 1))]
    if hasattr(path, "write"):
        _write_landmark_rows(path, configs, ids)
        return
    with open(path, "w", newline="") as fh:
        _write_landmark_rows(fh, configs, ids)


def _write_landmark_rows(fh, configs, ids):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["id", "landmark", "x", "y"])
    for key, z in zip(ids, configs):
        for j, zj in enumerate(z, start=1):
            writer.writerow([key, j, repr(float(zj.real)), repr(float(zj.imag))])


def read_landmarks_json(path):
    """JSON array of configurations, each an array of ``[x, y]`` pairs."""
    data = json.loads(Path(path).read_text())
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise ValueError(f"{path}: expected an array of arrays of [x, y] pairs")
    return [str(i) for i in range(1, len(arr) + 1)], arr[..., 0] + 1j * arr[..., 1]


def read_landmarks(path):
    path = Path(path)
    if path.suffix.lower() == ".json":
        return read_landmarks_json(path)
    return read_landmarks_csv(path)
