"""SPD(p) matrices under the log-Euclidean embedding.

``log`` maps SPD(p) onto the whole space of symmetric matrices, so the
projection is the identity and there are no focal points.  Symmetric
matrices are flattened to their upper triangle with off-diagonal entries
scaled by sqrt(2), which makes the flat Euclidean norm equal the
Frobenius norm.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .geometry import MEMBERSHIP_TOL, Manifold, ProjectionResult

SQRT2 = np.sqrt(2.0)


def _sym_eig_apply(X, fn):
    vals, vecs = np.linalg.eigh(X)
    return (vecs * fn(vals)[..., None, :]) @ np.swapaxes(vecs, -1, -2)


def sym_to_flat(S):
    S = np.asarray(S, dtype=float)
    p = S.shape[-1]
    iu = np.triu_indices(p)
    scale = np.where(iu[0] == iu[1], 1.0, SQRT2)
    return S[..., iu[0], iu[1]] * scale


def flat_to_sym(v, p):
    v = np.asarray(v, dtype=float)
    iu = np.triu_indices(p)
    scale = np.where(iu[0] == iu[1], 1.0, SQRT2)
    S = np.zeros(v.shape[:-1] + (p, p))
    S[..., iu[0], iu[1]] = v / scale
    S[..., iu[1], iu[0]] = v / scale
    return S


def spd_embed(X):
    """Matrix logarithm of SPD input(s), flattened."""
    X = np.asarray(X, dtype=float)
    if not np.allclose(X, np.swapaxes(X, -1, -2), atol=1e-12, rtol=0):
        raise ValueError("SPD input must be symmetric")
    Xs = 0.5 * (X + np.swapaxes(X, -1, -2))
    if np.any(np.linalg.eigvalsh(Xs) <= 1e-12):
        raise ValueError("SPD input must be positive definite")
    return sym_to_flat(_sym_eig_apply(Xs, np.log))


def spd_unembed_project(y, p):
    """Matrix exponential of the symmetric matrix encoded by ``y``."""
    return _sym_eig_apply(flat_to_sym(y, p), np.exp)


class SPD(Manifold):
    kind = "spd"

    def __init__(self, p: int):
        if p < 1:
            raise ValueError("p must be positive")
        self.p = int(p)

    @property
    def ambient_dim(self):
        return self.p * (self.p + 1) // 2

    def native_shape(self):
        return (self.p, self.p)

    def describe(self):
        return {"kind": self.kind, "p": self.p, "ambient_dim": self.ambient_dim}

    def validate(self, points):
        X = np.asarray(points, dtype=float)
        if X.ndim != 3 or X.shape[1:] != (self.p, self.p):
            raise ValueError(f"expected an (n, {self.p}, {self.p}) array of SPD matrices")
        if not np.allclose(X, np.swapaxes(X, -1, -2), atol=1e-12, rtol=0):
            raise ValueError("SPD matrices must be symmetric")
        if np.any(np.linalg.eigvalsh(X) <= 1e-12):
            raise ValueError("SPD matrices must be positive definite")
        return X

    def embed(self, points):
        return spd_embed(points)

    def project(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape != (self.ambient_dim,) or not np.all(np.isfinite(y)):
            raise ValueError("invalid flat symmetric matrix")
        return ProjectionResult(point=y.copy(), gap=float("inf"))

    def unembed(self, y):
        return spd_unembed_project(y, self.p)

    def contains(self, y, tol=MEMBERSHIP_TOL):
        y = np.asarray(y, dtype=float)
        return y.shape == (self.ambient_dim,) and bool(np.all(np.isfinite(y)))


def read_spd_json(path):
    data = np.asarray(json.loads(Path(path).read_text()), dtype=float)
    if data.ndim != 3 or data.shape[1] != data.shape[2]:
        raise ValueError(f"{path}: expected a list of square matrices")
    return SPD(data.shape[1]).validate(data)
