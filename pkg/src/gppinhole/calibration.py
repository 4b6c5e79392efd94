"""Zhang-style calibration from plane homographies.

Two solvers share one constraint builder. The full linear solver estimates
the 6-entry symmetric ``B = K^-T K^-1`` and recovers ``K`` by a triangular
factorisation. The square-pixel solver parameterises ``B`` by four entries
``(B11, B13, B23, B33)`` (with ``B22 = B11`` and ``B12 = 0``) and reads ``f``
and the principal point off ``b`` directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    BehindCamera,
    DegenerateConfiguration,
    InsufficientBoards,
    NonPhysicalSolution,
    NotPositiveDefinite,
)
from .geometry import Homography, estimate_homography, nearest_rotation, smallest_singular_vector
from .grid import CornerGrid


@dataclass(frozen=True)
class FullIntrinsics:
    fx: float
    fy: float
    skew: float
    u_c: float
    v_c: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal scales must be positive")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, self.skew, self.u_c],
                         [0.0, self.fy, self.v_c],
                         [0.0, 0.0, 1.0]])

    @classmethod
    def from_matrix(cls, K) -> "FullIntrinsics":
        K = np.asarray(K, dtype=float)
        K = K / K[2, 2]
        return cls(float(K[0, 0]), float(K[1, 1]), float(K[0, 1]), float(K[0, 2]), float(K[1, 2]))

    def to_dict(self) -> dict:
        return {"model": "full", "fx": self.fx, "fy": self.fy, "skew": self.skew,
                "principal_point": [self.u_c, self.v_c]}


@dataclass(frozen=True)
class SimplifiedIntrinsics:
    f: float
    u_c: float
    v_c: float

    def __post_init__(self):
        if not self.f > 0:
            raise ValueError("focal length must be positive")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.f, 0.0, self.u_c],
                         [0.0, self.f, self.v_c],
                         [0.0, 0.0, 1.0]])

    @property
    def principal_point(self) -> np.ndarray:
        return np.array([self.u_c, self.v_c])

    def to_dict(self) -> dict:
        return {"model": "simplified", "f": self.f, "principal_point": [self.u_c, self.v_c]}


def intrinsics_from_dict(doc: dict):
    if doc["model"] == "simplified":
        return SimplifiedIntrinsics(doc["f"], *doc["principal_point"])
    if doc["model"] == "full":
        return FullIntrinsics(doc["fx"], doc["fy"], doc["skew"], *doc["principal_point"])
    raise ValueError(f"unknown intrinsics model {doc['model']!r}")


@dataclass(frozen=True, eq=False)
class Pose:
    """World-to-camera rigid transform ``X_cam = R @ X + t``."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.array(self.R, dtype=float).reshape(3, 3)
        t = np.array(self.t, dtype=float).reshape(3)
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-8) or not abs(np.linalg.det(R) - 1) < 1e-8:
            raise ValueError("R is not a proper rotation")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    def plane_homography(self, K) -> np.ndarray:
        """``K [r1 | r2 | t]``: board plane (Z=0) to image."""
        K = K.K if hasattr(K, "K") else np.asarray(K, dtype=float)
        return K @ np.column_stack([self.R[:, 0], self.R[:, 1], self.t])

    def to_dict(self) -> dict:
        return {"R": self.R.tolist(), "t": self.t.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "Pose":
        return cls(np.asarray(doc["R"]), np.asarray(doc["t"]))


def _v(H: np.ndarray, i: int, j: int) -> np.ndarray:
    """Zhang's ``v_ij`` so that ``h_i^T B h_j = v_ij . b`` (6-entry b)."""
    hi, hj = H[:, i], H[:, j]
    return np.array([
        hi[0] * hj[0],
        hi[0] * hj[1] + hi[1] * hj[0],
        hi[1] * hj[1],
        hi[2] * hj[0] + hi[0] * hj[2],
        hi[2] * hj[1] + hi[1] * hj[2],
        hi[2] * hj[2],
    ])


# b6 = (B11, B12, B22, B13, B23, B33); square pixels tie B22 to B11 and zero B12
_SQUARE = np.array([
    [1, 0, 0, 0],
    [0, 0, 0, 0],
    [1, 0, 0, 0],
    [0, 1, 0, 0],
    [0, 0, 1, 0],
    [0, 0, 0, 1],
], dtype=float)


def _as_matrix(H) -> np.ndarray:
    M = H.H if isinstance(H, Homography) else np.asarray(H, dtype=float)
    return M / np.linalg.norm(M)


def constraint_rows(H, simplified: bool = False) -> np.ndarray:
    """Two rows encoding ``h1'Bh2 = 0`` and ``h1'Bh1 - h2'Bh2 = 0``.

    ``H`` is scaled to unit Frobenius norm first, so the rows are invariant
    to the homography's arbitrary scale (up to sign).
    """
    M = _as_matrix(H)
    rows = np.vstack([_v(M, 0, 1), _v(M, 0, 0) - _v(M, 1, 1)])
    return rows @ _SQUARE if simplified else rows


def _b_matrix(b6: np.ndarray) -> np.ndarray:
    B11, B12, B22, B13, B23, B33 = b6
    return np.array([[B11, B12, B13], [B12, B22, B23], [B13, B23, B33]])


@dataclass(frozen=True)
class LinearSolution:
    b: np.ndarray
    sigma_min: float
    sigma_second: float

    @property
    def degeneracy_ratio(self) -> float:
        """``sigma_min / sigma_second``; near 1 means the null space is not unique."""
        return self.sigma_min / self.sigma_second if self.sigma_second > 0 else np.inf


# null spaces of dimension > 1 show up as a second singular value at round-off level
NULLITY_TOL = 1e-6


def _solve(Hs, simplified: bool) -> LinearSolution:
    A = np.vstack([constraint_rows(H, simplified) for H in Hs])
    b, sigma_min = smallest_singular_vector(A)
    s = np.linalg.svd(A, compute_uv=False)
    k = A.shape[1]
    second = float(s[k - 2]) if len(s) >= k - 1 else 0.0
    if second <= NULLITY_TOL * s[0]:
        raise DegenerateConfiguration(
            f"constraints leave more than one solution (sigma_second/sigma_max = {second / s[0]:.2e}); "
            "boards parallel to each other, or fronto-parallel for the square-pixel model, "
            "add no independent constraints"
        )
    if b[0] < 0:
        b = -b
    return LinearSolution(b, sigma_min, second)


def calibrate_full_linear(Hs, return_solution: bool = False):
    """Intrinsics with skew and two focal scales from >= 3 homographies."""
    Hs = list(Hs)
    if len(Hs) < 3:
        raise InsufficientBoards(f"full linear calibration needs >= 3 boards, got {len(Hs)}")
    sol = _solve(Hs, simplified=False)
    B = _b_matrix(sol.b)
    try:
        L = np.linalg.cholesky(B)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite(
            "recovered B is not positive definite; board orientations are degenerate "
            f"(sigma_min={sol.sigma_min:.3g}, sigma_second={sol.sigma_second:.3g})"
        ) from None
    # B = L L^T = K^-T K^-1 with K^-1 = L^T upper triangular
    K = np.linalg.inv(L.T)
    K = K / K[2, 2]
    intr = FullIntrinsics.from_matrix(K)
    return (intr, sol) if return_solution else intr


def calibrate_simplified(Hs, return_solution: bool = False):
    """Square-pixel, zero-skew intrinsics from >= 2 homographies.

    Returns ``(SimplifiedIntrinsics, sigma_min)``; with ``return_solution``
    the full LinearSolution replaces ``sigma_min``.
    """
    Hs = list(Hs)
    if len(Hs) < 2:
        raise InsufficientBoards(f"simplified calibration needs >= 2 boards, got {len(Hs)}")
    sol = _solve(Hs, simplified=True)
    b11, b13, b23, b33 = sol.b
    if not b11 > 0:
        raise NonPhysicalSolution(f"B11 = {b11:.3g} is not positive")
    u_c = -b13 / b11
    v_c = -b23 / b11
    f2 = b33 / b11 - u_c**2 - v_c**2
    if not f2 > 0:
        raise NonPhysicalSolution(f"recovered f^2 = {f2:.3g} <= 0")
    intr = SimplifiedIntrinsics(float(np.sqrt(f2)), float(u_c), float(v_c))
    return (intr, sol) if return_solution else (intr, sol.sigma_min)


def recover_extrinsics(K, H) -> Pose:
    """Board pose from intrinsics and its plane homography.

    The scale is the reciprocal of the mean of ``|K^-1 h1|`` and ``|K^-1 h2|``;
    the rotation is projected onto SO(3) and the sign chosen so the board is
    in front of the camera.
    """
    Kmat = K.K if hasattr(K, "K") else np.asarray(K, dtype=float)
    M = H.H if isinstance(H, Homography) else np.asarray(H, dtype=float)
    Kinv = np.linalg.inv(Kmat)
    a1, a2, a3 = (Kinv @ M[:, i] for i in range(3))
    lam = 2.0 / (np.linalg.norm(a1) + np.linalg.norm(a2))
    t = lam * a3
    if t[2] == 0:
        raise BehindCamera("board plane passes through the camera centre")
    if t[2] < 0:
        lam = -lam
        t = -t
    r1, r2 = lam * a1, lam * a2
    R = nearest_rotation(np.column_stack([r1, r2, np.cross(r1, r2)]))
    return Pose(R, t)


def extract_board_homographies(boards, model: CornerGrid) -> list[Homography]:
    """Homography from the planar model to each board's (mapped) corners."""
    out = []
    for board in boards:
        if (board.rows, board.cols) != (model.rows, model.cols):
            raise ValueError(
                f"board {board.board_id!r} is {board.rows}x{board.cols}, "
                f"model is {model.rows}x{model.cols}"
            )
        try:
            out.append(estimate_homography(model.points, board.points))
        except Exception as exc:
            raise type(exc)(f"board {board.board_id!r}: {exc}") from exc
    return out


@dataclass(frozen=True, eq=False)
class CalibrationResult:
    intrinsics: object
    poses: list
    homographies: list
    sigma_min: float
    sigma_second: float

    def to_dict(self) -> dict:
        return {
            "intrinsics": self.intrinsics.to_dict(),
            "poses": [p.to_dict() for p in self.poses],
            "homographies": [H.H.tolist() for H in self.homographies],
            "homography_rms_residuals": [H.rms_residual for H in self.homographies],
            "sigma_min": self.sigma_min,
            "sigma_second": self.sigma_second,
        }


def calibrate(boards, model: CornerGrid, method: str = "simplified") -> CalibrationResult:
    """Homographies, intrinsics and per-board poses in one call."""
    Hs = extract_board_homographies(boards, model)
    if method == "simplified":
        intr, sol = calibrate_simplified(Hs, return_solution=True)
    elif method == "full-linear":
        intr, sol = calibrate_full_linear(Hs, return_solution=True)
    else:
        raise ValueError(f"unknown calibration method {method!r}")
    poses = [recover_extrinsics(intr, H) for H in Hs]
    return CalibrationResult(intr, poses, Hs, sol.sigma_min, sol.sigma_second)
