"""Projective geometry primitives: homographies, null vectors, line fits."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import (
    DegenerateConfiguration,
    DegeneratePoints,
    NoConsensus,
    PointAtInfinity,
)


def canonical_sign(v: np.ndarray, *, last: bool = False, tol: float = 1e-12) -> np.ndarray:
    """Flip ``v`` so its first (or last) significant entry is positive."""
    flat = v.ravel()
    thresh = tol * np.max(np.abs(flat)) if flat.size else 0.0
    idx = np.flatnonzero(np.abs(flat) > thresh)
    if idx.size == 0:
        return v
    pivot = flat[idx[-1] if last else idx[0]]
    return -v if pivot < 0 else v


@dataclass(frozen=True, eq=False)
class Homography:
    """3x3 projective map, stored with unit Frobenius norm and positive last entry.

    ``rms_residual`` is the RMS transfer error (in destination units) of the
    correspondences it was estimated from, when known.
    """

    H: np.ndarray
    rms_residual: float = float("nan")

    def __post_init__(self):
        H = np.array(self.H, dtype=float).reshape(3, 3)
        norm = np.linalg.norm(H)
        if not norm > 0 or not np.all(np.isfinite(H)):
            raise DegenerateConfiguration("homography must be finite and nonzero")
        if abs(norm - 1.0) > 4 * np.finfo(float).eps:  # keep reloaded matrices bit-exact
            H = H / norm
        H = canonical_sign(H, last=True)
        H.setflags(write=False)
        object.__setattr__(self, "H", H)

    @property
    def matrix(self) -> np.ndarray:
        return self.H

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.H))

    def __matmul__(self, other: "Homography") -> "Homography":
        return Homography(self.H @ other.H)


def to_homogeneous(p) -> np.ndarray:
    p = np.atleast_2d(np.asarray(p, dtype=float))
    return np.hstack([p, np.ones((len(p), 1))])


def apply_homography(H, p) -> np.ndarray:
    """Map Euclidean 2D points through ``H`` (a Homography or 3x3 array)."""
    M = H.H if isinstance(H, Homography) else np.asarray(H, dtype=float)
    q = to_homogeneous(p) @ M.T
    # scale-free test: |w| relative to the homogeneous vector's size
    w = np.abs(q[:, 2]) / np.maximum(np.linalg.norm(q, axis=1), 1e-300)
    if np.any(w <= 1e-12):
        raise PointAtInfinity("point maps to the line at infinity")
    return q[:, :2] / q[:, 2:]


def smallest_singular_vector(A) -> tuple[np.ndarray, float]:
    """Unit right singular vector of the smallest singular value of ``A``.

    The sign is fixed so that the first significant entry is positive. When
    ``A`` has fewer rows than columns the missing singular values are zero.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    m, k = A.shape
    _, s, Vt = np.linalg.svd(A, full_matrices=True)
    sigma = s[-1] if m >= k else 0.0
    v = canonical_sign(Vt[-1].copy())
    return v, float(sigma)


def hartley_normalization(p: np.ndarray) -> np.ndarray:
    """Similarity moving the centroid to 0 and the mean distance to sqrt(2)."""
    c = p.mean(axis=0)
    d = np.mean(np.linalg.norm(p - c, axis=1))
    if not d > 0:
        raise DegenerateConfiguration("all correspondences coincide")
    s = np.sqrt(2.0) / d
    return np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])


def estimate_homography(src, dst) -> Homography:
    """DLT estimate of the homography taking ``src`` to ``dst``.

    Minimises the algebraic error on Hartley-normalised points. Raises
    DegenerateConfiguration when the solution is not unique (e.g. collinear or
    coincident correspondences).
    """
    src = np.asarray(src, dtype=float).reshape(-1, 2)
    dst = np.asarray(dst, dtype=float).reshape(-1, 2)
    if len(src) != len(dst):
        raise ValueError("src and dst differ in length")
    if len(src) < 4:
        raise DegenerateConfiguration(f"need >= 4 correspondences, got {len(src)}")

    Ts = hartley_normalization(src)
    Td = hartley_normalization(dst)
    s = to_homogeneous(src) @ Ts.T
    d = to_homogeneous(dst) @ Td.T

    m = len(src)
    A = np.zeros((2 * m, 9))
    A[0::2, 0:3] = s
    A[0::2, 6:9] = -d[:, [0]] * s
    A[1::2, 3:6] = s
    A[1::2, 6:9] = -d[:, [1]] * s

    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-2] < 1e-10:
        raise DegenerateConfiguration(
            f"DLT system rank-deficient (second-smallest singular value {sv[-2]:.3g}); "
            "correspondences collinear or coincident"
        )
    h, _ = smallest_singular_vector(A)
    Hn = h.reshape(3, 3)
    H = np.linalg.inv(Td) @ Hn @ Ts

    resid = np.linalg.norm(apply_homography(H, src) - dst, axis=1)
    return Homography(H, float(np.sqrt(np.mean(resid**2))))


@dataclass(frozen=True)
class Line2D:
    direction: np.ndarray
    point: np.ndarray

    def distances(self, p) -> np.ndarray:
        r = np.asarray(p, dtype=float) - self.point
        normal = np.array([-self.direction[1], self.direction[0]])
        return np.abs(r @ normal)


@dataclass(frozen=True)
class Line3D:
    direction: np.ndarray
    point: np.ndarray

    def distances(self, p) -> np.ndarray:
        r = np.atleast_2d(np.asarray(p, dtype=float)) - self.point
        along = r @ self.direction
        return np.linalg.norm(r - along[:, None] * self.direction, axis=1)

    def distance_to_origin(self) -> float:
        return float(self.distances(np.zeros(3))[0])


def _principal_direction(centered: np.ndarray) -> np.ndarray:
    _, _, Vt = np.linalg.svd(centered, full_matrices=False)
    return canonical_sign(Vt[0].copy())


def _check_spread(points: np.ndarray):
    spread = np.max(np.abs(points - points.mean(axis=0)))
    scale = max(1.0, float(np.max(np.abs(points))))
    if not spread > 1e-14 * scale:
        raise DegeneratePoints("cannot fit a line: all points coincide")


def fit_line_2d(points) -> tuple[Line2D, np.ndarray]:
    """Total-least-squares line and unsigned perpendicular distances."""
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(p) < 2:
        raise DegeneratePoints("need at least two points for a line")
    _check_spread(p)
    # centring on the first point keeps constant coordinates exact
    c = p[0] + (p - p[0]).mean(axis=0)
    line = Line2D(_principal_direction(p - c), c)
    return line, line.distances(p)


def fit_line_3d(points) -> Line3D:
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(p) < 2:
        raise DegeneratePoints("need at least two points for a line")
    _check_spread(p)
    c = p[0] + (p - p[0]).mean(axis=0)
    return Line3D(_principal_direction(p - c), c)


def fit_line_3d_ransac(points, inlier_threshold: float = 1e-3,
                       iterations: int = 500, seed: int = 42):
    """Robust 3D line: 2-point RANSAC then a TLS refit on the consensus set.

    When the number of distinct point pairs does not exceed ``iterations``
    every pair is tried, which makes small problems exhaustive.

    Returns
    -------
    line : Line3D
    inliers : ndarray of bool
    """
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    m = len(p)
    if m < 2:
        raise NoConsensus("need at least two points")

    n_pairs = m * (m - 1) // 2
    if n_pairs <= iterations:
        pairs = combinations(range(m), 2)
    else:
        rng = np.random.default_rng(seed)
        pairs = (tuple(rng.choice(m, size=2, replace=False)) for _ in range(iterations))

    best_mask, best_count = None, 0
    for i, j in pairs:
        d = p[j] - p[i]
        nd = np.linalg.norm(d)
        if nd == 0:
            continue
        dist = Line3D(d / nd, p[i]).distances(p)
        mask = dist < inlier_threshold
        count = int(mask.sum())
        if count > best_count:
            best_mask, best_count = mask, count
    if best_count < 2:
        raise NoConsensus(f"best consensus has {best_count} point(s)")
    return fit_line_3d(p[best_mask]), best_mask


def nearest_rotation(M) -> np.ndarray:
    """Closest rotation matrix (Frobenius) to ``M``, with det +1."""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=float))
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt
