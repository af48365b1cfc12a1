"""Seeded generators for circular and planar-shape simulations.

All randomness comes from ``numpy.random.Generator`` over the counter-based
Philox bit generator.  Functions take either an integer seed or an existing
generator, so a fixed seed reproduces the output exactly.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .shape import PlanarShape, to_preshape
from .sphere import TWO_PI, wrap_angle

RNG_NAME = "numpy-philox4x64"
GENERATOR_VERSION = "1"


def make_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


def derive_seed(seed: int, key: str, rep: int) -> int:
    """Per-cell, per-replication seed: first 8 bytes of sha256("seed|key|rep")."""
    digest = hashlib.sha256(f"{int(seed)}|{key}|{int(rep)}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def n_contaminated(rate, n):
    """``ceil(rate * n)`` robust to binary rounding (0.3 * 10 -> 3)."""
    return int(math.ceil(rate * n - 1e-9))


# --- circular samplers -----------------------------------------------------------


def sample_von_mises(mu, kappa, n, seed=None):
    """Best-Fisher rejection sampler; ``kappa == 0`` gives the uniform law."""
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    rng = make_rng(seed)
    if kappa < 1e-8:
        return wrap_angle(rng.uniform(0.0, TWO_PI, size=n))
    tau = 1.0 + math.sqrt(1.0 + 4.0 * kappa * kappa)
    rho = (tau - math.sqrt(2.0 * tau)) / (2.0 * kappa)
    r = (1.0 + rho * rho) / (2.0 * rho)
    out = np.empty(0)
    while out.size < n:
        m = max(2 * (n - out.size), 16)
        u1, u2, u3 = rng.uniform(size=(3, m))
        z = np.cos(np.pi * u1)
        f = (1.0 + r * z) / (r + z)
        c = kappa * (r - f)
        with np.errstate(divide="ignore", invalid="ignore"):
            accept = (c * (2.0 - c) - u2 > 0) | (np.log(c / u2) + 1.0 - c >= 0)
        theta = np.sign(u3 - 0.5) * np.arccos(np.clip(f, -1.0, 1.0))
        out = np.concatenate([out, theta[accept]])
    return wrap_angle(mu + out[:n])


@dataclass(frozen=True)
class WrappedStableSpec:
    alpha: float
    tau: float
    beta: float = 0.0
    mu: float = 0.0

    def __post_init__(self):
        if not 0 < self.alpha <= 2:
            raise ValueError("alpha must lie in (0, 2]")
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")
        if abs(self.beta) > 1:
            raise ValueError("beta must lie in [-1, 1]")


# wrapped values are meaningless once float spacing exceeds ~1e-7 rad
_WRAP_LIMIT = 1e9


def sample_linear_stable(alpha, beta, scale, size, rng):
    """Chambers-Mallows-Stuck draw with characteristic function
    ``exp(-|scale t|^alpha (1 - i beta sign(t) tan(pi alpha / 2)))`` (alpha != 1)."""
    v = rng.uniform(-np.pi / 2, np.pi / 2, size=size)
    w = rng.exponential(1.0, size=size)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        if alpha == 1.0:
            half = np.pi / 2 + beta * v
            x = (2 / np.pi) * (half * np.tan(v) - beta * np.log((np.pi / 2) * w * np.cos(v) / half))
            if scale > 0:
                x = scale * x + (2 / np.pi) * beta * scale * np.log(scale)
            else:
                x = np.zeros(size)
            return x
        zeta = beta * np.tan(np.pi * alpha / 2)
        shift = np.arctan(zeta) / alpha
        factor = (1.0 + zeta * zeta) ** (1.0 / (2.0 * alpha))
        logmag = (
            -np.log(np.cos(v)) / alpha
            + (1.0 - alpha) / alpha * (np.log(np.cos(v - alpha * (v + shift))) - np.log(w))
        )
        x = factor * np.sin(alpha * (v + shift)) * np.exp(logmag)
    return scale * x


def sample_wrapped_stable(spec: WrappedStableSpec, n, seed=None):
    """Wrap a linear stable draw onto the circle and shift by ``mu``.

    Draws too large to wrap meaningfully in floating point (or infinite)
    are replaced by uniform angles, drawn afterwards in index order.
    """
    rng = make_rng(seed)
    x = sample_linear_stable(spec.alpha, spec.beta, spec.tau, n, rng)
    bad = ~np.isfinite(x) | (np.abs(x) > _WRAP_LIMIT)
    theta = np.empty(n)
    theta[~bad] = spec.mu + x[~bad]
    theta[bad] = rng.uniform(0.0, TWO_PI, size=int(bad.sum()))
    return wrap_angle(theta)


def wrapped_stable_density(theta, spec: WrappedStableSpec, tol=1e-12, max_terms=1_000_000):
    """Fourier-series density, truncated at the first term below ``tol``."""
    theta = np.asarray(theta, dtype=float)
    ta = spec.tau**spec.alpha
    skew = spec.beta * np.tan(spec.alpha * np.pi / 2) if spec.alpha != 1 else 0.0
    total = np.full(theta.shape, 1.0 / (2 * np.pi))
    for k in range(1, max_terms + 1):
        amp = math.exp(-ta * k**spec.alpha)
        if amp < tol:
            return total
        total = total + amp / np.pi * np.cos(k * (theta - spec.mu) - ta * k**spec.alpha * skew)
    raise ValueError("density series did not reach the truncation tolerance")


# --- contamination -----------------------------------------------------------------

MECHANISMS = ("replace-angles", "add-complex-normal", "corrupt-landmarks")


@dataclass(frozen=True)
class ContaminationSpec:
    """Outlier model.

    ``replace-angles``: ``mu_out``, ``sigma`` (Normal draws wrapped mod 2 pi).
    ``add-complex-normal``: ``mean`` (complex k-vector or scalar), ``cov``
    (scalar variance or k x k Hermitian matrix).
    ``corrupt-landmarks``: 1-based ``indices``; real parts replaced by
    Normal(``mu``, ``sigma``) draws.
    """

    rate: float
    mechanism: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.rate <= 0.5:
            raise ValueError("contamination rate must lie in [0, 0.5]")
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"mechanism must be one of {MECHANISMS}")

    def with_rate(self, rate):
        return replace(self, rate=rate)


def contaminate_angles(clean, spec: ContaminationSpec, seed=None):
    if spec.mechanism != "replace-angles":
        raise ValueError("contaminate_angles needs the replace-angles mechanism")
    rng = make_rng(seed)
    out = np.array(clean, dtype=float)
    m = n_contaminated(spec.rate, len(out))
    if m == 0:
        return out
    idx = np.sort(rng.choice(len(out), size=m, replace=False))
    mu_out = spec.params.get("mu_out", np.pi / 2)
    sigma = spec.params.get("sigma", 0.1)
    out[idx] = wrap_angle(rng.normal(mu_out, sigma, size=m))
    return out


def _complex_normal(mean, cov, k, size, rng):
    mean = np.broadcast_to(np.asarray(mean, dtype=complex), (k,))
    cov = np.asarray(cov, dtype=complex)
    g = (rng.standard_normal((size, k)) + 1j * rng.standard_normal((size, k))) / np.sqrt(2.0)
    if cov.ndim == 0:
        return mean + np.sqrt(cov.real) * g
    chol = np.linalg.cholesky(cov)
    return mean + g @ chol.T


def contaminate_configurations(configs, spec: ContaminationSpec, seed=None):
    """Apply a shape outlier mechanism to raw landmark configurations.

    Returns the new configurations and the sorted contaminated indices.
    """
    rng = make_rng(seed)
    configs = np.array(configs, dtype=complex)
    n, k = configs.shape
    m = n_contaminated(spec.rate, n)
    if spec.mechanism == "corrupt-landmarks":
        cols = np.asarray(spec.params.get("indices", range(10, 16)), dtype=int) - 1
        if np.any(cols < 0) or np.any(cols >= k):
            raise ValueError(f"landmark indices must lie in 1..{k}")
    elif spec.mechanism != "add-complex-normal":
        raise ValueError("shape contamination needs add-complex-normal or corrupt-landmarks")
    if m == 0:
        return configs, np.array([], dtype=int)
    idx = np.sort(rng.choice(n, size=m, replace=False))
    if spec.mechanism == "add-complex-normal":
        psi = _complex_normal(spec.params.get("mean", 0.0), spec.params.get("cov", 1.0), k, m, rng)
        configs[idx] = configs[idx] + psi
    else:
        mu, sigma = spec.params.get("mu", 1000.0), spec.params.get("sigma", 5.0)
        noise = rng.normal(mu, sigma, size=(m, len(cols)))
        block = configs[np.ix_(idx, cols)]
        configs[np.ix_(idx, cols)] = noise + 1j * block.imag
    return configs, idx


def contaminate_shapes(data, spec: ContaminationSpec, seed=None):
    """Contaminate a shape :class:`~robext.relr.RegressionDataset` and re-preshape."""
    base = data.configurations if data.configurations is not None else data.responses
    configs, _ = contaminate_configurations(base, spec, seed)
    return replace(data, configurations=configs, responses=to_preshape(configs))


# --- planar shape regression -----------------------------------------------------


@dataclass(frozen=True)
class ShapeGenSpec:
    k: int = 10
    p: int = 1
    a: float = 0.0
    b: float = 1.0
    sigma_phi: float = 0.05
    sigma_gamma: float = 0.005
    beta: tuple | None = None  # None -> j / k^2
    phi0: tuple | None = None  # None -> j / 2
    gamma0: tuple | None = None  # None -> 0.1

    def __post_init__(self):
        if self.k < 3:
            raise ValueError("k must be >= 3")
        if not self.a < self.b:
            raise ValueError("need a < b")
        if self.sigma_phi < 0 or self.sigma_gamma < 0:
            raise ValueError("noise scales must be nonnegative")

    def coefficients(self):
        j = np.arange(1, self.k + 1, dtype=float)
        beta = j / self.k**2 if self.beta is None else np.broadcast_to(self.beta, (self.k,))
        phi0 = j / 2.0 if self.phi0 is None else np.broadcast_to(self.phi0, (self.k,))
        gamma0 = np.full(self.k, 0.1) if self.gamma0 is None else np.broadcast_to(self.gamma0, (self.k,))
        return np.asarray(beta, float), np.asarray(phi0, float), np.asarray(gamma0, float)


def shape_configurations(spec: ShapeGenSpec, covariates, rng=None):
    """Polar-coordinate landmark configurations; noiseless when ``rng`` is None."""
    beta, phi0, gamma0 = spec.coefficients()
    drift = np.asarray(covariates, dtype=float).reshape(len(covariates), -1).sum(axis=1)
    mean_phi = phi0[None, :] + beta[None, :] * drift[:, None]
    mean_gamma = gamma0[None, :] + beta[None, :] * drift[:, None]
    if rng is None:
        phi, gamma = mean_phi, mean_gamma
    else:
        phi = mean_phi + spec.sigma_phi * rng.standard_normal(mean_phi.shape)
        gamma = mean_gamma + spec.sigma_gamma * rng.standard_normal(mean_gamma.shape)
    phi = np.mod(phi, TWO_PI)
    return gamma * (np.cos(phi) + 1j * np.sin(phi))


def generate_shape_regression(spec: ShapeGenSpec, n, seed=None):
    """Draw covariates and noisy shape responses.

    Returns ``(dataset, truth)`` where ``truth`` holds the noiseless preshapes
    ``f0(x_i)`` for every observation.
    """
    from .relr import RegressionDataset

    rng = make_rng(seed)
    x = rng.uniform(spec.a, spec.b, size=(n, spec.p))
    configs = shape_configurations(spec, x, rng)
    truth = to_preshape(shape_configurations(spec, x))
    data = RegressionDataset(
        covariates=x,
        responses=to_preshape(configs),
        manifold=PlanarShape(spec.k),
        configurations=configs,
    )
    return data, truth


def cc_template(k=50):
    """A smooth crescent outline standing in for corpus-callosum landmarks."""
    s = np.linspace(0.0, TWO_PI, k, endpoint=False)
    x = np.cos(s)
    y = 0.35 * np.sin(s) + 0.25 * np.cos(2 * s) - 0.1 * np.sin(3 * s)
    return 100.0 * (x + 1j * y)


def generate_shape_sample(n, k=50, noise=2.0, seed=None, template=None):
    """Raw configurations ``template + complex Gaussian noise`` (per-coordinate sd ``noise``)."""
    rng = make_rng(seed)
    base = cc_template(k) if template is None else np.asarray(template, dtype=complex)
    k = base.shape[0]
    eps = rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))
    return base[None, :] + noise * eps
