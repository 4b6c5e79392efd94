"""Rectify raster images by pushing every pixel through the virtual camera map.

Each source pixel centre is predicted on the virtual plane, scaled to output
pixels and rounded. Output pixels hit more than once get the average colour;
enclosed holes are filled from their neighbours with a median that always
picks an existing neighbour value. Source pixels whose predictive standard
deviation exceeds a threshold are left out and reported as uncovered.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import EmptyOutput
from .raster import RasterImage
from .virtual_camera import VirtualCameraMap, map_points

FRAME_MARGIN = 0.10


@dataclass(frozen=True)
class UndistortOptions:
    """``scale`` is output pixels per grid square.

    ``sigma_threshold`` is in grid units; None disables uncertainty masking.
    ``framing`` is ``(x0, y0, x1, y1)`` on the virtual plane; by default the
    reference lattice plus a 10% margin on each side.
    """

    scale: float = 40.0
    fill_radius: int = 1
    sigma_threshold: float | None = 0.1
    framing: tuple | None = None

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if int(self.fill_radius) != self.fill_radius or self.fill_radius < 1:
            raise ValueError(f"fill_radius must be a positive integer, got {self.fill_radius}")
        if self.sigma_threshold is not None and not self.sigma_threshold > 0:
            raise ValueError("sigma_threshold must be positive or None")
        if self.framing is not None:
            x0, y0, x1, y1 = self.framing
            if not (x1 > x0 and y1 > y0):
                raise ValueError(f"empty framing {self.framing}")


@dataclass(frozen=True)
class UndistortStats:
    mapped: int        # output pixels hit by at least one source pixel
    filled: int        # holes filled by the median pass
    holes: int         # enclosed pixels still empty after filling
    uncertain: int     # source pixels dropped by the sigma threshold

    @property
    def covered(self) -> int:
        return self.mapped + self.filled

    @property
    def hole_fraction(self) -> float:
        return self.holes / max(self.covered + self.holes, 1)


def default_framing(vmap: VirtualCameraMap) -> tuple:
    w = vmap.reference_cols - 1
    h = vmap.reference_rows - 1
    mx, my = FRAME_MARGIN * w, FRAME_MARGIN * h
    return (-mx, -my, w + mx, h + my)


def output_shape(framing, scale: float) -> tuple:
    x0, y0, x1, y1 = framing
    return (int(np.floor((y1 - y0) * scale)) + 1, int(np.floor((x1 - x0) * scale)) + 1)


def _lower_median_fill(values: np.ndarray, known: np.ndarray, radius: int, max_iter=None):
    """Fill enclosed empty pixels in place; returns ``(known, n_filled)``.

    Each pass fills every empty pixel that has at least one known neighbour
    in the window with the neighbour whose luminance is the lower median.
    """
    enclosed = ndimage.binary_fill_holes(known) & ~known
    target = enclosed.copy()
    h, w = known.shape
    lum = values if values.ndim == 2 else values @ np.array([0.299, 0.587, 0.114])
    offsets = [(dy, dx) for dy in range(-radius, radius + 1) for dx in range(-radius, radius + 1)
               if (dy, dx) != (0, 0)]
    n_filled, it = 0, 0
    while target.any() and (max_iter is None or it < max_iter):
        it += 1
        iy, ix = np.nonzero(target)
        keys = np.full((len(iy), len(offsets)), np.inf)
        src_y = np.empty((len(iy), len(offsets)), dtype=np.intp)
        src_x = np.empty_like(src_y)
        for k, (dy, dx) in enumerate(offsets):
            ny = np.clip(iy + dy, 0, h - 1)
            nx = np.clip(ix + dx, 0, w - 1)
            inside = (iy + dy >= 0) & (iy + dy < h) & (ix + dx >= 0) & (ix + dx < w)
            ok = inside & known[ny, nx]
            keys[ok, k] = lum[ny[ok], nx[ok]]
            src_y[:, k], src_x[:, k] = ny, nx
        count = np.isfinite(keys).sum(axis=1)
        ready = count > 0
        if not ready.any():
            break
        order = np.argsort(keys[ready], axis=1, kind="stable")
        pick = order[np.arange(ready.sum()), (count[ready] - 1) // 2]
        ry, rx = iy[ready], ix[ready]
        sy = src_y[ready, pick]
        sx = src_x[ready, pick]
        values[ry, rx] = values[sy, sx]
        lum[ry, rx] = lum[sy, sx]
        known[ry, rx] = True
        target[ry, rx] = False
        n_filled += len(ry)
    return known, n_filled


def undistort_image(vmap: VirtualCameraMap, src: RasterImage, opts: UndistortOptions | None = None,
                    return_stats: bool = False):
    """Forward-map ``src`` onto the virtual plane.

    Returns ``(image, coverage_mask)`` where the mask is a boolean array that
    is True on valid output pixels; invalid pixels are black. With
    ``return_stats`` an :class:`UndistortStats` is appended.
    """
    opts = opts or UndistortOptions()
    framing = opts.framing or default_framing(vmap)
    x0, y0 = framing[0], framing[1]
    oh, ow = output_shape(framing, opts.scale)

    v, u = np.mgrid[0:src.height, 0:src.width]
    uv = np.stack([u.ravel(), v.ravel()], axis=1).astype(float)
    need_sigma = opts.sigma_threshold is not None
    mapped = map_points(vmap, uv, with_sigma=need_sigma)

    col = np.rint((mapped.xy[:, 0] - x0) * opts.scale)
    row = np.rint((mapped.xy[:, 1] - y0) * opts.scale)
    keep = (col >= 0) & (col < ow) & (row >= 0) & (row < oh)
    uncertain = 0
    if need_sigma:
        sure = mapped.sigma <= opts.sigma_threshold
        uncertain = int(np.count_nonzero(keep & ~sure))
        keep &= sure
    if not keep.any():
        raise EmptyOutput(
            f"no source pixel lands inside the {ow}x{oh} output; check scale={opts.scale} and framing"
        )

    flat = (row[keep] * ow + col[keep]).astype(np.intp)
    pixels = src.data.reshape(src.height * src.width, -1)[keep].astype(float)
    hits = np.bincount(flat, minlength=oh * ow)
    sums = np.stack([np.bincount(flat, weights=pixels[:, c], minlength=oh * ow)
                     for c in range(pixels.shape[1])], axis=1)
    known = (hits > 0).reshape(oh, ow)
    values = np.zeros_like(sums)
    values[hits > 0] = sums[hits > 0] / hits[hits > 0, None]
    values = values.reshape(oh, ow, -1)
    if src.channels == 1:
        values = values[..., 0]

    n_mapped = int(known.sum())
    known, n_filled = _lower_median_fill(values, known.copy(), int(opts.fill_radius))
    holes = int((ndimage.binary_fill_holes(known) & ~known).sum())

    out = np.where(known[..., None] if values.ndim == 3 else known, values, 0.0)
    img = RasterImage(np.clip(np.rint(out), 0, 255).astype(np.uint8))
    if return_stats:
        return img, known, UndistortStats(n_mapped, n_filled, holes, uncertain)
    return img, known


def _crossings(g: np.ndarray, valid: np.ndarray, threshold: float, level: float):
    """Sub-pixel level crossings along axis 1, one list of positions per row."""
    a, b = g[:, :-1], g[:, 1:]
    da, db = a - level, b - level
    cross = (da * db < 0) | ((da == 0) & (db != 0))
    # contrast over a 4-pixel window around the step
    pad = np.pad(g, ((0, 0), (1, 1)), mode="edge")
    win = np.stack([pad[:, :-3], pad[:, 1:-2], pad[:, 2:-1], pad[:, 3:]])
    contrast = win.max(axis=0) - win.min(axis=0)
    vpad = np.pad(valid, ((0, 0), (1, 1)), constant_values=False)
    vwin = vpad[:, :-3] & vpad[:, 1:-2] & vpad[:, 2:-1] & vpad[:, 3:]
    hit = cross & (contrast > threshold) & vwin
    i, j = np.nonzero(hit)
    frac = (level - a[i, j]) / (b[i, j] - a[i, j])
    return i, j + frac


def _chain(lines: np.ndarray, pos: np.ndarray, gap: int, reach: float) -> list:
    """Link crossings on successive scan lines into chains by proximity."""
    order = np.lexsort((pos, lines))
    lines, pos = lines[order], pos[order]
    open_chains: list = []   # [last_line, last_pos, points]
    done = []
    starts = np.searchsorted(lines, np.unique(lines))
    ends = np.append(starts[1:], len(lines))
    for s, e in zip(starts, ends):
        ln = lines[s]
        still = []
        for ch in open_chains:
            (still if ln - ch[0] <= gap else done).append(ch)
        open_chains = still
        # match closest (chain, crossing) pairs first so a stray crossing on
        # a junction row cannot steal a chain from its true continuation
        pairs = sorted((abs(ch[1] - pos[k]), ci, k)
                       for ci, ch in enumerate(open_chains)
                       for k in range(s, e) if abs(ch[1] - pos[k]) <= reach)
        used_chain, used_point = set(), set()
        for _, ci, k in pairs:
            if ci in used_chain or k in used_point:
                continue
            ch = open_chains[ci]
            ch[0], ch[1] = ln, pos[k]
            ch[2].append((ln, pos[k]))
            used_chain.add(ci)
            used_point.add(k)
        for k in range(s, e):
            if k not in used_point:
                open_chains.append([ln, pos[k], [(ln, pos[k])]])
    done.extend(open_chains)
    return [np.array(ch[2]) for ch in done]


def sample_edges(img: RasterImage, threshold: float, mask=None, min_length: int = 10,
                 gap: int = 3, reach: float = 1.5) -> list:
    """Edge points found by row and column scans, linked into chains.

    A crossing of the mid grey level is kept when the local contrast exceeds
    ``threshold``. Crossings on consecutive scan lines within ``reach``
    pixels are linked (edge polarity is ignored, so a grid line crossed by
    other lines stays one chain); up to ``gap - 1`` scan lines may be missing.
    Pixels outside ``mask`` never contribute. Each chain is an ``(n, 2)``
    array of ``(x, y)`` points; chains shorter than ``min_length`` are dropped.
    """
    g = img.gray()
    valid = np.ones(g.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if not valid.any():
        return []
    lo, hi = g[valid].min(), g[valid].max()
    if hi - lo <= threshold:
        return []
    level = 0.5 * (lo + hi)

    chains = []
    # row scans find steep edges: points (x=pos, y=row)
    r, x = _crossings(g, valid, threshold, level)
    for c in _chain(r, x, gap, reach):
        chains.append(np.column_stack([c[:, 1], c[:, 0]]))
    # column scans find flat edges: points (x=col, y=pos)
    cidx, y = _crossings(g.T, valid.T, threshold, level)
    for c in _chain(cidx, y, gap, reach):
        chains.append(np.column_stack([c[:, 0], c[:, 1]]))
    return [c for c in chains if len(c) >= min_length]
