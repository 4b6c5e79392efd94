"""Scalar Gaussian-process regression with a squared-exponential kernel.

Hyperparameters are learned by maximising the log marginal likelihood with
L-BFGS in log-parameter space. Inputs are shifted and scaled to zero mean and
unit max-absolute-value before training, so the stored length scale is in
normalised input units.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
from scipy.optimize import minimize

from .errors import FactorizationFailure, OptimizationDiverged

SCHEMA = "gppinhole/gp-model/1"

JITTER_START = 1e-14
JITTER_MAX = 1e-4
LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class Hyperparams:
    signal_variance: float
    length_scale: float
    noise_variance: float = 0.0

    def __post_init__(self):
        if not self.signal_variance > 0:
            raise ValueError(f"signal_variance must be > 0, got {self.signal_variance}")
        if not self.length_scale > 0:
            raise ValueError(f"length_scale must be > 0, got {self.length_scale}")
        if not self.noise_variance >= 0:
            raise ValueError(f"noise_variance must be >= 0, got {self.noise_variance}")

    @classmethod
    def from_log(cls, theta) -> "Hyperparams":
        a, b, c = (float(v) for v in theta)
        return cls(float(np.exp(a)), float(np.exp(b)), float(np.exp(c)))

    def to_log(self) -> np.ndarray:
        # log(0) noise is clipped so the vector stays finite
        return np.log([self.signal_variance, self.length_scale,
                       max(self.noise_variance, 1e-300)])


def se_kernel(x, x_prime, h: Hyperparams) -> float:
    """Squared-exponential covariance between two points."""
    d = np.asarray(x, dtype=float) - np.asarray(x_prime, dtype=float)
    return float(h.signal_variance * np.exp(-0.5 * d @ d / h.length_scale**2))


def _sqdist(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    d2 = (
        np.sum(A**2, axis=1)[:, None]
        + np.sum(B**2, axis=1)[None, :]
        - 2.0 * A @ B.T
    )
    return np.maximum(d2, 0.0)


def kernel_matrix(A, B, h: Hyperparams) -> np.ndarray:
    """Matrix of ``se_kernel(A[i], B[j], h)``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.size == 0 or B.size == 0:
        raise ValueError("kernel_matrix needs non-empty inputs")
    return h.signal_variance * np.exp(-0.5 * _sqdist(A, B) / h.length_scale**2)


def jittered_cholesky(Kxx: np.ndarray, h: Hyperparams):
    """Lower Cholesky factor of ``Kxx + noise*I``, escalating jitter on failure.

    Returns ``(L, jitter)`` where ``jitter`` is the relative diagonal
    inflation (times signal variance) that made the factorization succeed.
    """
    n = Kxx.shape[0]
    jitter = JITTER_START
    while jitter <= JITTER_MAX * (1 + 1e-9):
        A = Kxx + (h.noise_variance + jitter * h.signal_variance) * np.eye(n)
        try:
            return la.cholesky(A, lower=True, check_finite=True), jitter
        except (la.LinAlgError, ValueError):
            jitter *= 10.0
    raise FactorizationFailure(
        "kernel system not positive definite even with jitter "
        f"{JITTER_MAX:g}*signal_variance; duplicate inputs or bad hyperparameters?"
    )


def log_marginal_likelihood(X, y, h: Hyperparams):
    """Log evidence of ``y`` (centred internally) and its log-space gradient.

    Returns
    -------
    value : float
    gradient : ndarray, shape (3,)
        Derivatives w.r.t. (log signal_variance, log length_scale,
        log noise_variance).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    y = y - y.mean()
    n = len(y)

    D2 = _sqdist(X, X)
    C = np.exp(-0.5 * D2 / h.length_scale**2)
    L, jitter = jittered_cholesky(h.signal_variance * C, h)

    alpha = la.cho_solve((L, True), y)
    value = -0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * LOG_2PI

    Kinv = la.cho_solve((L, True), np.eye(n))
    W = np.outer(alpha, alpha) - Kinv
    # jitter scales with the signal variance, so it belongs to that derivative
    dK_signal = h.signal_variance * (C + jitter * np.eye(n))
    dK_length = h.signal_variance * C * (D2 / h.length_scale**2)
    grad = 0.5 * np.array([
        np.sum(W * dK_signal),
        np.sum(W * dK_length),
        h.noise_variance * np.trace(W),
    ])
    return float(value), grad


@dataclass(frozen=True, eq=False)
class GpModel:
    """A trained scalar GP.

    ``train_inputs`` are in raw units; ``input_shift``/``input_scale`` define
    the normalisation ``(x - shift) / scale`` under which the kernel is
    evaluated.
    """

    train_inputs: np.ndarray
    centered_targets: np.ndarray
    target_mean: float
    hyperparams: Hyperparams
    input_shift: np.ndarray
    input_scale: float
    kernel_factor: np.ndarray = field(repr=False)
    jitter: float = JITTER_START
    alpha: np.ndarray = field(repr=False, default=None)

    @classmethod
    def build(cls, X, y, h: Hyperparams, input_shift=None, input_scale=None):
        X = np.array(X, dtype=float)
        y = np.array(y, dtype=float).ravel()
        if X.ndim != 2 or len(X) < 2:
            raise ValueError("need at least two training inputs")
        if len(y) != len(X):
            raise ValueError("inputs and targets differ in length")
        if input_shift is None:
            input_shift, input_scale = normalization(X)
        mean = float(y.mean())
        return cls._assemble(X, y - mean, mean, h, input_shift, input_scale)

    @classmethod
    def _assemble(cls, X, yc, mean, h, shift, scale):
        X = np.array(X, dtype=float)
        yc = np.array(yc, dtype=float)
        shift = np.array(shift, dtype=float)
        scale = float(scale)
        Xn = (X - shift) / scale
        L, jitter = jittered_cholesky(kernel_matrix(Xn, Xn, h), h)
        alpha = la.cho_solve((L, True), yc)
        for a in (X, yc, shift, L, alpha):
            a.setflags(write=False)
        return cls(X, yc, float(mean), h, shift, scale, L, jitter, alpha)

    @property
    def n(self) -> int:
        return len(self.train_inputs)

    def normalized(self, X) -> np.ndarray:
        return (np.atleast_2d(np.asarray(X, dtype=float)) - self.input_shift) / self.input_scale

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "train_inputs": self.train_inputs.tolist(),
            "centered_targets": self.centered_targets.tolist(),
            "target_mean": self.target_mean,
            "log_hyperparams": {
                "signal_variance": float(np.log(self.hyperparams.signal_variance)),
                "length_scale": float(np.log(self.hyperparams.length_scale)),
                "noise_variance": (float(np.log(self.hyperparams.noise_variance))
                                   if self.hyperparams.noise_variance > 0 else None),
            },
            # linear values keep reloads bit-exact; the log block is informative
            "hyperparams": {
                "signal_variance": self.hyperparams.signal_variance,
                "length_scale": self.hyperparams.length_scale,
                "noise_variance": self.hyperparams.noise_variance,
            },
            "input_shift": self.input_shift.tolist(),
            "input_scale": self.input_scale,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GpModel":
        if doc.get("schema") != SCHEMA:
            raise ValueError(f"unrecognised GP model schema {doc.get('schema')!r}")
        if "hyperparams" in doc:
            h = Hyperparams(**{k: float(v) for k, v in doc["hyperparams"].items()})
        else:
            lh = doc["log_hyperparams"]
            noise = lh["noise_variance"]
            h = Hyperparams(float(np.exp(lh["signal_variance"])),
                            float(np.exp(lh["length_scale"])),
                            0.0 if noise is None else float(np.exp(noise)))
        return cls._assemble(doc["train_inputs"], doc["centered_targets"],
                             doc["target_mean"], h, doc["input_shift"],
                             doc["input_scale"])


def normalization(X: np.ndarray):
    """Shift and scale mapping ``X`` to zero mean and unit max-abs value."""
    shift = X.mean(axis=0)
    scale = float(np.max(np.abs(X - shift)))
    if scale == 0.0:
        scale = 1.0
    return shift, scale


def _median_pairwise_distance(Xn: np.ndarray) -> float:
    d = np.sqrt(_sqdist(Xn, Xn))[np.triu_indices(len(Xn), k=1)]
    med = float(np.median(d))
    return med if med > 0 else 1.0


def fit(X, y, init: Hyperparams | None = None, *, max_iter: int = 200,
        gtol: float = 1e-5, noise_variance: float | None = None) -> GpModel:
    """Train a GP by maximising the log marginal likelihood.

    Runs L-BFGS (history 10) from ``init`` (if given) and from three
    deterministic starts with length scales ``{0.1, 1, 10}`` times the median
    pairwise distance of the normalised inputs, and keeps the best optimum.
    ``init.length_scale`` is interpreted in normalised input units.

    ``noise_variance`` pins the noise term (0 for exact targets, which the
    model then interpolates); only the signal variance and length scale are
    optimised. ``None`` estimates it along with the others.
    """
    X = np.array(X, dtype=float)
    y = np.array(y, dtype=float).ravel()
    if X.ndim != 2 or len(X) < 2:
        raise ValueError("fit needs at least two training points")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("training data must be finite")

    if noise_variance is not None and not noise_variance >= 0:
        raise ValueError(f"noise_variance must be >= 0, got {noise_variance}")
    shift, scale = normalization(X)
    Xn = (X - shift) / scale
    yc = y - y.mean()
    var = float(yc.var())

    if var <= 1e-24 * max(1.0, float(np.max(np.abs(y))) ** 2):
        # constant targets carry no information about the kernel
        h = init if init is not None else Hyperparams(1.0, 1.0, noise_variance or 0.0)
        return GpModel.build(X, y, h, shift, scale)

    med = _median_pairwise_distance(Xn)
    starts = []
    if init is not None:
        starts.append(init.to_log())
    for mult in (0.1, 1.0, 10.0):
        starts.append(np.log([var, mult * med, 1e-6 * var]))

    bounds = [
        (np.log(var) - 20.0, np.log(var) + 20.0),
        (np.log(1e-3 * med), np.log(1e3)),
        (np.log(var) - 35.0, np.log(var) + 5.0),
    ]

    free = 3
    if noise_variance is not None:
        # optimise (log sf2, log l) only
        free = 2
        starts = [t[:2] for t in starts]
        bounds = bounds[:2]

    def hyperparams(theta):
        if free == 2:
            return Hyperparams(float(np.exp(theta[0])), float(np.exp(theta[1])), noise_variance)
        return Hyperparams.from_log(theta)

    def objective(theta):
        value, grad = log_marginal_likelihood(Xn, yc, hyperparams(theta))
        grad = grad[:free]
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            raise OptimizationDiverged(f"non-finite objective at {np.exp(theta)}")
        return -value, -grad

    best = None
    failures = []
    for theta0 in starts:
        theta0 = np.clip(theta0, [b[0] for b in bounds], [b[1] for b in bounds])
        try:
            res = minimize(objective, theta0, jac=True, method="L-BFGS-B",
                           bounds=bounds,
                           options={"maxcor": 10, "maxiter": max_iter, "gtol": gtol})
        except (OptimizationDiverged, FactorizationFailure) as exc:
            failures.append(exc)
            continue
        if not np.isfinite(res.fun):
            failures.append(OptimizationDiverged(f"non-finite optimum {res.fun}"))
            continue
        if best is None or res.fun < best.fun:
            best = res
    if best is None:
        raise OptimizationDiverged(f"all {len(starts)} starts failed: {failures[-1]}")
    return GpModel.build(X, y, hyperparams(best.x), shift, scale)


def predict_mean(model: GpModel, X_star) -> np.ndarray:
    """Posterior mean at ``X_star``."""
    Ks = kernel_matrix(model.normalized(X_star),
                       model.normalized(model.train_inputs), model.hyperparams)
    return model.target_mean + Ks @ model.alpha


def predict_variance(model: GpModel, X_star) -> np.ndarray:
    """Diagonal of the posterior covariance at ``X_star`` (latent, no noise)."""
    Xs = model.normalized(X_star)
    Ks = kernel_matrix(Xs, model.normalized(model.train_inputs), model.hyperparams)
    V = la.solve_triangular(model.kernel_factor, Ks.T, lower=True)
    var = model.hyperparams.signal_variance - np.sum(V**2, axis=0)
    return np.maximum(var, 0.0)


def predict(model: GpModel, X_star):
    """Mean and variance in one pass."""
    Xs = model.normalized(X_star)
    Ks = kernel_matrix(Xs, model.normalized(model.train_inputs), model.hyperparams)
    mean = model.target_mean + Ks @ model.alpha
    V = la.solve_triangular(model.kernel_factor, Ks.T, lower=True)
    var = np.maximum(model.hyperparams.signal_variance - np.sum(V**2, axis=0), 0.0)
    return mean, var
