"""Synthetic checkerboard scenes with known ground truth.

A scenario poses a planar board in front of a pinhole camera, projects its
corners, bends them with a distortion field and optionally adds pixel noise.
The presets mimic three rendered datasets (pinhole, barrel, off-centre
pincushion) at 3840x2160 with 30 boards of 15x9 corners, plus a smooth
non-parametric warp standing in for a curved mirror.

Ground truth includes the virtual camera induced by the reference board:
projecting onto the reference board plane with grid squares as pixels is a
central projection with square pixels, whose intrinsics are obtained by an
RQ decomposition.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as la
from scipy.spatial.transform import Rotation

from .calibration import FullIntrinsics, Pose, SimplifiedIntrinsics
from .errors import BehindCamera, NonInjectiveWarp
from .grid import CornerGrid, model_grid
from .raster import RasterImage

PRESETS = ("unity-pinhole", "unity-barrel", "unity-pincushion", "mirror-warp")


@dataclass(frozen=True, eq=False)
class DistortionField:
    """Image-space warp applied to ideal pinhole projections.

    ``variant`` is ``"none"``, ``"radial"`` or ``"smooth_warp"``. Radial uses
    ``p' = c + (p - c)(1 + k1 r^2 + k2 r^4)`` with ``r`` measured in units of
    the image half-diagonal. The smooth warp adds Gaussian bumps
    ``sum_i a_i exp(-|p - c_i|^2 / (2 w_i^2))``.
    """

    variant: str = "none"
    image_size: tuple = (0, 0)
    center: tuple = (0.0, 0.0)
    k1: float = 0.0
    k2: float = 0.0
    centers: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    amplitudes: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    widths: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if self.variant not in ("none", "radial", "smooth_warp"):
            raise ValueError(f"unknown distortion variant {self.variant!r}")
        object.__setattr__(self, "centers", np.asarray(self.centers, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "amplitudes", np.asarray(self.amplitudes, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "widths", np.asarray(self.widths, dtype=float).ravel())

    @property
    def half_diagonal(self) -> float:
        w, h = self.image_size
        return 0.5 * float(np.hypot(w, h))

    def displacement(self, p: np.ndarray) -> np.ndarray:
        if self.variant == "radial":
            c = np.asarray(self.center, dtype=float)
            d = p - c
            r2 = np.sum(d**2, axis=1, keepdims=True) / self.half_diagonal**2
            return d * (self.k1 * r2 + self.k2 * r2**2)
        if self.variant == "smooth_warp":
            out = np.zeros_like(p)
            for c, a, w in zip(self.centers, self.amplitudes, self.widths):
                g = np.exp(-np.sum((p - c) ** 2, axis=1) / (2 * w * w))
                out += g[:, None] * a
            return out
        return np.zeros_like(p)

    def jacobian(self, p: np.ndarray) -> np.ndarray:
        """``(m, 2, 2)`` derivative of the displacement, ``J[k, i, j] = dD_i / dp_j``."""
        J = np.zeros((len(p), 2, 2))
        if self.variant == "radial":
            d = p - np.asarray(self.center, dtype=float)
            s2 = self.half_diagonal**2
            r2 = np.sum(d**2, axis=1) / s2
            f = self.k1 * r2 + self.k2 * r2**2
            df = (self.k1 + 2 * self.k2 * r2) * 2 / s2
            J = df[:, None, None] * d[:, :, None] * d[:, None, :]
            J[:, 0, 0] += f
            J[:, 1, 1] += f
        elif self.variant == "smooth_warp":
            for c, a, w in zip(self.centers, self.amplitudes, self.widths):
                d = p - c
                g = np.exp(-np.sum(d**2, axis=1) / (2 * w * w))
                J -= (g / (w * w))[:, None, None] * a[None, :, None] * d[:, None, :]
        return J

    def check_injective(self) -> None:
        """Raise NonInjectiveWarp if the field folds over the image domain."""
        if self.variant == "none":
            return
        w, h = self.image_size
        if self.variant == "radial":
            c = np.asarray(self.center, dtype=float)
            corners = np.array([[0, 0], [w, 0], [0, h], [w, h]], dtype=float)
            rmax = np.max(np.linalg.norm(corners - c, axis=1)) / self.half_diagonal
            r = np.linspace(0.0, rmax, 2001)
            deriv = 1 + 3 * self.k1 * r**2 + 5 * self.k2 * r**4
            if np.any(deriv <= 0):
                raise NonInjectiveWarp(
                    f"radial derivative not positive up to r={rmax:.3f} (k1={self.k1}, k2={self.k2})"
                )
            return
        # smooth warp: bounded displacement and positive Jacobian determinant
        u, v = np.meshgrid(np.linspace(0, w, 101), np.linspace(0, h, 101))
        p = np.stack([u.ravel(), v.ravel()], axis=1)
        disp = self.displacement(p)
        limit = 0.1 * np.hypot(w, h)
        if np.max(np.linalg.norm(disp, axis=1)) > limit:
            raise NonInjectiveWarp(f"smooth warp displacement exceeds 10% of the diagonal ({limit:.1f})")
        eps = 1e-3 * np.hypot(w, h)
        jx = (self.displacement(p + [eps, 0]) - self.displacement(p - [eps, 0])) / (2 * eps)
        jy = (self.displacement(p + [0, eps]) - self.displacement(p - [0, eps])) / (2 * eps)
        det = (1 + jx[:, 0]) * (1 + jy[:, 1]) - jx[:, 1] * jy[:, 0]
        if np.any(det <= 0):
            raise NonInjectiveWarp("smooth warp Jacobian determinant is not positive")

    def to_dict(self) -> dict:
        doc = {"variant": self.variant, "image_size": list(self.image_size)}
        if self.variant == "radial":
            doc.update(center=list(map(float, self.center)), k1=self.k1, k2=self.k2)
        elif self.variant == "smooth_warp":
            doc.update(centers=self.centers.tolist(), amplitudes=self.amplitudes.tolist(),
                       widths=self.widths.tolist())
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "DistortionField":
        doc = dict(doc)
        if "image_size" in doc:
            doc["image_size"] = tuple(doc["image_size"])
        if "center" in doc:
            doc["center"] = tuple(doc["center"])
        return cls(**doc)


def distort_points(field: DistortionField, p) -> np.ndarray:
    """Apply ``field`` to ideal pixel coordinates."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    field.check_injective()
    return p + field.displacement(p)


def _radial_inverse(field: DistortionField, q: np.ndarray) -> np.ndarray:
    # solve r (1 + k1 r^2 + k2 r^4) = rho on the branch where it is increasing
    c = np.asarray(field.center, dtype=float)
    hd = field.half_diagonal
    d = (q - c) / hd
    rho = np.linalg.norm(d, axis=1)
    g = lambda r: r * (1 + field.k1 * r**2 + field.k2 * r**4)
    # first positive root of the derivative 1 + 3 k1 r^2 + 5 k2 r^4 (in r^2)
    roots = np.roots([5 * field.k2, 3 * field.k1, 1.0]) if field.k2 else (
        np.array([-1 / (3 * field.k1)]) if field.k1 else np.array([]))
    roots = np.real(roots[np.isreal(roots) & (np.real(roots) > 0)])
    if len(roots):
        r_hi = float(np.sqrt(roots.min()))
    else:
        r_hi = max(1.0, float(rho.max(initial=0.0)))
        while g(r_hi) < rho.max(initial=0.0):
            r_hi *= 2
    lo = np.zeros_like(rho)
    hi = np.full_like(rho, r_hi)
    for _ in range(12):
        mid = 0.5 * (lo + hi)
        below = g(mid) < rho
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    # safeguarded Newton polish inside the bracket
    r = 0.5 * (lo + hi)
    for _ in range(6):
        dg = 1 + 3 * field.k1 * r**2 + 5 * field.k2 * r**4
        step = np.divide(g(r) - rho, dg, out=np.zeros_like(r), where=dg > 0)
        r = np.clip(r - step, lo, hi)
    r[rho > g(r_hi)] = np.nan
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(rho > 0, r / rho, 1.0)
    return c + d * hd * ratio[:, None]


def undistort_points(field: DistortionField, q, iterations: int = 50, tol: float = 1e-10) -> np.ndarray:
    """Invert ``distort_points``.

    Radial fields are inverted exactly along each ray by bisection; the
    smooth warp uses Newton iterations. Points without a preimage (image
    corners beyond the fold-free range of a strong barrel warp, say) come
    back as NaN.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    if field.variant == "none":
        return q.copy()
    if field.variant == "radial":
        return _radial_inverse(field, q)
    scale = max(field.half_diagonal, 1.0)
    p = q - field.displacement(q)
    active = np.arange(len(q))
    for _ in range(iterations):
        pa = p[active]
        r = pa + field.displacement(pa) - q[active]
        moving = np.max(np.abs(r), axis=1) >= tol * scale
        active, pa, r = active[moving], pa[moving], r[moving]
        if len(active) == 0:
            break
        J = field.jacobian(pa)
        a, b = 1 + J[:, 0, 0], J[:, 0, 1]
        c, d = J[:, 1, 0], 1 + J[:, 1, 1]
        det = a * d - b * c
        p[active] = pa - np.stack([(d * r[:, 0] - b * r[:, 1]) / det,
                                   (-c * r[:, 0] + a * r[:, 1]) / det], axis=1)
    else:
        pa = p[active]
        r = pa + field.displacement(pa) - q[active]
        p[active[~(np.max(np.abs(r), axis=1) < tol * scale)]] = np.nan
    return p


def project_board(K, pose: Pose, grid: CornerGrid, board_id: str = "") -> CornerGrid:
    """Exact pinhole projection of the planar model ``grid`` (Z = 0)."""
    Kmat = K.K if hasattr(K, "K") else np.asarray(K, dtype=float)
    X = np.column_stack([grid.points, np.zeros(len(grid.points))])
    Xc = X @ pose.R.T + pose.t
    if np.any(Xc[:, 2] <= 0):
        raise BehindCamera(f"board {board_id!r} has corners behind the camera")
    q = Xc @ Kmat.T
    return CornerGrid(grid.rows, grid.cols, q[:, :2] / q[:, 2:], board_id or grid.board_id)


@dataclass(frozen=True, eq=False)
class ScenarioSpec:
    intrinsics: FullIntrinsics
    image_size: tuple
    rows: int
    cols: int
    square_size: float
    poses: tuple
    distortion: DistortionField = field(default_factory=DistortionField)
    noise_sigma: float = 0.0
    seed: int = 0
    name: str = "custom"

    @property
    def model(self) -> CornerGrid:
        return model_grid(self.rows, self.cols, self.square_size)

    def validate(self) -> None:
        """Raise ValueError naming the violated invariant."""
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if self.rows < 2 or self.cols < 2:
            raise ValueError("board needs at least 2x2 corners")
        if not self.square_size > 0:
            raise ValueError("square_size must be positive")
        if len(self.poses) < 1:
            raise ValueError("scenario needs at least one board pose")
        self.distortion.check_injective()
        w, h = self.image_size
        for i, pose in enumerate(self.poses):
            uv = distort_points(self.distortion, project_board(self.intrinsics, pose, self.model).points)
            if np.any(uv < 0) or np.any(uv[:, 0] > w - 1) or np.any(uv[:, 1] > h - 1):
                raise ValueError(f"board {i} does not project fully inside the {w}x{h} image")
        if len(self.poses) >= 3:
            normals = np.array([p.R[:, 2] for p in self.poses])
            if np.all(np.abs(normals @ normals[0]) > 1 - 1e-12):
                raise ValueError("all board poses are parallel")


@dataclass(frozen=True, eq=False)
class GroundTruth:
    camera: FullIntrinsics
    poses: tuple
    virtual_intrinsics: SimplifiedIntrinsics
    virtual_rotation: np.ndarray
    virtual_poses: tuple
    ideal_corners: tuple
    virtual_corners: tuple

    def to_dict(self) -> dict:
        return {
            "camera": self.camera.to_dict(),
            "poses": [p.to_dict() for p in self.poses],
            "virtual_camera": {
                "intrinsics": self.virtual_intrinsics.to_dict(),
                "rotation": self.virtual_rotation.tolist(),
                "poses": [p.to_dict() for p in self.virtual_poses],
            },
            "ideal_corners": [g.points.tolist() for g in self.ideal_corners],
            "virtual_corners": [g.points.tolist() for g in self.virtual_corners],
        }


def virtual_camera_truth(K, reference: Pose, square_size: float):
    """Intrinsics and rotation of the camera that images onto the reference board.

    The virtual image of a camera-frame point ``P`` is its central projection
    onto the reference plane, expressed in board-square coordinates:
    ``x ~ S^-1 [r1 r2 t]^-1 P``. Its RQ factors give ``K_virtual R_virtual``.
    """
    M = np.diag([1 / square_size, 1 / square_size, 1.0]) @ np.linalg.inv(
        np.column_stack([reference.R[:, 0], reference.R[:, 1], reference.t]))
    Kv, Rv = la.rq(M)
    S = np.diag(np.sign(np.diag(Kv)))
    Kv, Rv = Kv @ S, S @ Rv
    if np.linalg.det(Rv) < 0:
        Kv, Rv = -Kv, -Rv
    Kv = Kv / Kv[2, 2]
    return Kv, Rv


def generate_dataset(spec: ScenarioSpec):
    """Corner observations for every pose plus the ground truth bundle.

    Returns ``(boards, truth)``; ``boards[i].board_id`` is ``"board_{i:02d}"``.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    model = spec.model
    Kv, Rv = virtual_camera_truth(spec.intrinsics.K, spec.poses[0], spec.square_size)
    v_intr = SimplifiedIntrinsics(float(0.5 * (Kv[0, 0] + Kv[1, 1])), float(Kv[0, 2]), float(Kv[1, 2]))
    unit = model_grid(spec.rows, spec.cols, 1.0)

    boards, ideal, virtual, vposes = [], [], [], []
    for i, pose in enumerate(spec.poses):
        bid = f"board_{i:02d}"
        g = project_board(spec.intrinsics, pose, model, bid)
        uv = distort_points(spec.distortion, g.points)
        if spec.noise_sigma > 0:
            uv = uv + rng.normal(0.0, spec.noise_sigma, uv.shape)
        boards.append(CornerGrid(spec.rows, spec.cols, uv, bid))
        ideal.append(g)
        vpose = Pose(Rv @ pose.R, Rv @ pose.t / spec.square_size)
        vposes.append(vpose)
        virtual.append(project_board(Kv, vpose, unit, bid))

    truth = GroundTruth(spec.intrinsics, tuple(spec.poses), v_intr, Rv, tuple(vposes),
                        tuple(ideal), tuple(virtual))
    return boards, truth


def _look_pose(R: np.ndarray, center_world: np.ndarray, board_center: np.ndarray) -> Pose:
    """Pose placing the board's centre point at ``center_world`` with rotation ``R``."""
    return Pose(R, center_world - R @ board_center)


def sample_poses(K: FullIntrinsics, image_size, rows: int, cols: int, square_size: float,
                 n: int = 30, fill: float = 0.8, seed: int = 7,
                 max_tilt_deg: float = 30.0, depth_range=(0.8, 2.0), margin: float = 0.3):
    """Deterministic board poses; the first is fronto-parallel and fills the frame.

    Later poses are drawn with tilt up to ``max_tilt_deg`` and depth within
    ``depth_range`` times the reference depth, and are kept only if every
    corner lies inside the reference board's footprint (shrunk by ``margin``
    squares), where the image-to-lattice map is trained.
    """
    w, h = image_size
    width = (cols - 1) * square_size
    height = (rows - 1) * square_size
    depth = K.fx * width / (fill * w)
    bc = np.array([width / 2, height / 2, 0.0])
    # centre the reference board on the principal point
    ref = _look_pose(np.eye(3), np.array([0.0, 0.0, depth]), bc)
    poses = [ref]

    rng = np.random.default_rng(seed)
    model = model_grid(rows, cols, square_size)
    X = np.column_stack([model.points, np.zeros(rows * cols)])
    tries = 0
    while len(poses) < n:
        tries += 1
        if tries > 200000:
            raise RuntimeError("could not place enough boards inside the reference footprint")
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        angle = np.deg2rad(rng.uniform(0.0, max_tilt_deg))
        R = Rotation.from_rotvec(axis * angle).as_matrix()
        z = depth * rng.uniform(*depth_range)
        # lateral offset keeps the board near the reference footprint
        xy = rng.uniform(-0.5, 0.5, 2) * np.array([width, height]) * (z / depth - 0.7)
        pose = _look_pose(R, np.array([xy[0], xy[1], z]), bc)
        Xc = X @ R.T + pose.t
        if np.any(Xc[:, 2] <= 0):
            continue
        # ray / reference-plane intersection in square units
        on_ref = Xc[:, :2] * (depth / Xc[:, 2:]) - ref.t[:2]
        lat = on_ref / square_size
        if (np.all(lat[:, 0] >= margin) and np.all(lat[:, 0] <= cols - 1 - margin)
                and np.all(lat[:, 1] >= margin) and np.all(lat[:, 1] <= rows - 1 - margin)):
            poses.append(pose)
    return tuple(poses)


def preset(name: str, noise_sigma: float = 0.0, seed: int = 0, n_boards: int = 30,
           image_size=(3840, 2160), rows: int = 9, cols: int = 15) -> ScenarioSpec:
    """Named scenario. ``image_size`` and grid can be shrunk for fast tests."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    w, h = image_size
    f = 2000.0 * w / 3840.0
    K = FullIntrinsics(f, f, 0.0, (w - 1) / 2.0, (h - 1) / 2.0)
    square = 1.0
    if name == "unity-pinhole":
        dist = DistortionField()
    elif name == "unity-barrel":
        dist = DistortionField("radial", (w, h), ((w - 1) / 2.0, (h - 1) / 2.0), k1=-0.2)
    elif name == "unity-pincushion":
        dist = DistortionField("radial", (w, h), (0.38 * w, 0.62 * h), k1=0.06)
    else:
        diag = np.hypot(w, h)
        centers = np.array([[0.05 * w, 0.5 * h], [0.95 * w, 0.5 * h], [0.5 * w, 0.0],
                            [0.5 * w, h], [0.15 * w, 0.1 * h], [0.85 * w, 0.9 * h]])
        amps = diag * np.array([[0.03, 0.0], [-0.035, 0.0], [0.0, 0.025],
                                [0.0, -0.03], [0.015, 0.012], [-0.012, -0.015]])
        widths = diag * np.array([0.18, 0.2, 0.16, 0.18, 0.12, 0.12])
        dist = DistortionField("smooth_warp", (w, h), centers=centers, amplitudes=amps, widths=widths)
    fill = 0.8
    poses = sample_poses(K, (w, h), rows, cols, square, n=n_boards, fill=fill)
    return ScenarioSpec(K, (w, h), rows, cols, square, poses, dist, noise_sigma, seed, name)


def render_checkerboard(spec: ScenarioSpec, board_index: int, supersample: int = 4) -> RasterImage:
    """Anti-aliased grayscale rendering of one distorted board on white.

    The board extends one square beyond the outer corners on every side, so
    it has ``(cols + 1) x (rows + 1)`` squares; the square touching corner
    (0, 0) from above-left is black. Pixel ``(i, j)`` covers the unit square
    centred at ``(u, v) = (j, i)``.
    """
    if supersample < 1:
        raise ValueError("supersample must be >= 1")
    w, h = spec.image_size
    pose = spec.poses[board_index]
    Hb = pose.plane_homography(spec.intrinsics) @ np.diag([spec.square_size, spec.square_size, 1.0])
    Hinv = np.linalg.inv(Hb)
    offs = (np.arange(supersample) + 0.5) / supersample - 0.5
    acc = np.zeros((h, w))
    jj, ii = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    for dy in offs:
        for dx in offs:
            q = np.stack([(jj + dx).ravel(), (ii + dy).ravel()], axis=1)
            p = undistort_points(spec.distortion, q)
            b = np.column_stack([p, np.ones(len(p))]) @ Hinv.T
            with np.errstate(divide="ignore", invalid="ignore"):
                X = b[:, 0] / b[:, 2]
                Y = b[:, 1] / b[:, 2]
            inside = ((b[:, 2] > 0) & (X >= -1) & (X < spec.cols) & (Y >= -1) & (Y < spec.rows))
            parity = (np.floor(X) + np.floor(Y)) % 2 == 0
            black = inside & np.nan_to_num(parity, nan=False).astype(bool)
            acc += np.where(black, 0.0, 255.0).reshape(h, w)
    img = np.clip(np.rint(acc / supersample**2), 0, 255).astype(np.uint8)
    return RasterImage(img)


def two_center_observations(K: SimplifiedIntrinsics, poses, displacement, rows: int, cols: int,
                            every: int = 3):
    """Corner observations of a non-central camera with two projection centres.

    Boards are expressed in a common frame whose origin is the first centre.
    Every ``every``-th board is seen from the origin, the others from
    ``displacement``; all share intrinsics ``K``. Returns the corner grids in
    the image plane; feeding them with the common-frame ``poses`` to the
    ray-bundle check exposes the non-centrality.
    """
    displacement = np.asarray(displacement, dtype=float)
    unit = model_grid(rows, cols, 1.0)
    out = []
    for i, pose in enumerate(poses):
        shift = np.zeros(3) if i % every == 0 else displacement
        seen = Pose(pose.R, pose.t - shift)
        out.append(project_board(K, seen, unit, f"board_{i:02d}"))
    return out


def with_noise(spec: ScenarioSpec, sigma: float, seed: int | None = None) -> ScenarioSpec:
    return replace(spec, noise_sigma=sigma, seed=spec.seed if seed is None else seed)
