"""Scan-line edge detector and Hough line finder.

Pipeline: RGB -> HSV, area downscale, 11-tap scan-line gradient on selected
rows, threshold + ROI gate, (rho, theta) Hough accumulator with 3x3 peak
suppression. :func:`detect` adds a final merge/refit pass so that the two
gradient bands flanking one painted stripe come out as a single centered line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import LineParam

HALF = 5  # half-width of the equivalent gradient kernel (5 left, 5 right)
KERNEL = np.array([-0.2] * HALF + [0.0] + [0.2] * HALF)


@dataclass(frozen=True)
class DetectionConfig:
    downscale_to: tuple[int, int] = (640, 368)
    gradient_threshold: float = 0.15
    hough_rho_resolution: float = 1.0
    hough_theta_resolution: float = 1.0
    accumulator_threshold: int = 25
    theta_limits: tuple[float, float] = (15.0, 165.0)
    rho_limits: tuple[float, float] = (-1.0e9, 1.0e9)
    # normal angles of near-horizontal lines; sparse scan rows make these
    # light up along every scanned row, and lane markings are never horizontal
    theta_exclude: tuple[float, float] | None = (75.0, 105.0)
    # polygon in downscaled pixel coords; None -> lower half of the image
    roi: tuple[tuple[float, float], ...] | None = None
    # explicit rows; None -> every ``scanline_step``-th row inside the ROI
    scanline_rows: tuple[int, ...] | None = None
    scanline_step: int = 4
    channel_reducer: str = "max"  # max | sum | v
    # post-Hough consolidation used by detect()
    merge_px: float = 6.0
    merge_theta: float = 5.0
    refine_band: float = 7.0

    def __post_init__(self):
        if not 0 < self.gradient_threshold <= 1:
            raise ValueError("gradient_threshold must be in (0, 1]")
        if self.accumulator_threshold <= 0:
            raise ValueError("accumulator_threshold must be > 0")
        if self.hough_rho_resolution <= 0 or self.hough_theta_resolution <= 0:
            raise ValueError("Hough resolutions must be > 0")
        lo, hi = self.theta_limits
        if not 0 <= lo < hi <= 180:
            raise ValueError(f"theta_limits {self.theta_limits} not inside [0, 180]")
        if self.channel_reducer not in ("max", "sum", "v"):
            raise ValueError(f"unknown channel_reducer {self.channel_reducer!r}")


@dataclass(frozen=True)
class ScoredLine:
    line: LineParam
    score: int


# -- color / resampling -------------------------------------------------------


def rgb_to_hsv(img: np.ndarray) -> np.ndarray:
    """Hexcone HSV with all channels in [0, 1] (H is degrees / 360).

    Achromatic pixels get H = 0; black pixels get S = 0.
    """
    img = np.asarray(img, dtype=float)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("rgb_to_hsv needs an (h, w, 3) image")
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    v = img.max(axis=2)
    c = v - img.min(axis=2)
    s = np.divide(c, v, out=np.zeros_like(v), where=v > 0)
    safe = np.where(c > 0, c, 1.0)
    h = np.where(
        v == r,
        ((g - b) / safe) % 6.0,
        np.where(v == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0),
    )
    h = np.where(c > 0, h / 6.0, 0.0)
    return np.stack([h, s, v], axis=2)


def _area_matrix(n_src: int, n_dst: int) -> np.ndarray:
    """Row-stochastic matrix averaging source cells over each destination cell."""
    scale = n_src / n_dst
    M = np.zeros((n_dst, n_src))
    for i in range(n_dst):
        lo, hi = i * scale, (i + 1) * scale
        j0, j1 = int(math.floor(lo)), min(int(math.ceil(hi)), n_src)
        for j in range(j0, j1):
            M[i, j] = min(hi, j + 1) - max(lo, j)
    return M / scale


def downscale(img: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Area-average ``img`` down to ``target = (width, height)``."""
    img = np.asarray(img, dtype=float)
    h, w = img.shape[:2]
    tw, th = target
    if tw > w or th > h:
        raise ValueError(f"cannot upscale {w}x{h} to {tw}x{th}")
    if (tw, th) == (w, h):
        return img.copy()
    My = _area_matrix(h, th)
    Mx = _area_matrix(w, tw)
    if img.ndim == 2:
        return My @ img @ Mx.T
    planes = np.ascontiguousarray(np.moveaxis(img, 2, 0))
    return np.moveaxis(My @ planes @ Mx.T, 0, 2)


# -- scan-line gradient ---------------------------------------------------------


def _window_means(rows: np.ndarray):
    """Columns with full support and the 5-pixel means to their left and right.

    Windows are summed directly (not via cumulative sums) so identical
    windows give identical means and a constant row has exactly zero gradient.
    """
    w = rows.shape[-1]
    sums = np.lib.stride_tricks.sliding_window_view(rows, HALF, axis=-1).sum(axis=-1)
    x = np.arange(HALF, w - HALF)
    return x, sums[..., x - HALF] / HALF, sums[..., x + 1] / HALF


def _window_diff(rows: np.ndarray) -> np.ndarray:
    """mean(x+1..x+5) - mean(x-5..x-1) along the last axis, 0 without support."""
    out = np.zeros(rows.shape, dtype=float)
    if rows.shape[-1] < 2 * HALF + 1:
        return out
    x, left, right = _window_means(rows)
    out[..., x] = right - left
    return out


def _gradient_rows(rows: np.ndarray, reducer: str = "max") -> np.ndarray:
    """Gradient for a stack of rows, shape ``(n, w)`` or ``(n, w, 3)`` (HSV)."""
    if rows.shape[1] < 2 * HALF + 1:
        raise ValueError(f"row width {rows.shape[1]} narrower than the {2 * HALF + 1}-tap kernel")
    if rows.ndim == 2:
        return _window_diff(rows)
    h, s, v = rows[..., 0], rows[..., 1], rows[..., 2]
    gv = _window_diff(v)
    if reducer == "v":
        return gv
    gs = _window_diff(s)
    # hue is angular (window means are circular means), and meaningless
    # where saturation is low
    gh = np.zeros(h.shape)
    ang = 2.0 * np.pi * h
    x, cl, cr = _window_means(np.cos(ang))
    _, sl_, sr_ = _window_means(np.sin(ang))
    d = (np.arctan2(sr_, cr) - np.arctan2(sl_, cl)) / (2.0 * np.pi)
    d = d - np.round(d)
    _, sl, sr = _window_means(s)
    gh[:, x] = d * np.minimum(sl, sr)
    if reducer == "sum":
        return np.abs(gh) + np.abs(gs) + np.abs(gv)
    stack = np.stack([gh, gs, gv])
    idx = np.abs(stack).argmax(axis=0)
    return np.take_along_axis(stack, idx[None], axis=0)[0]


def scanline_gradient(img: np.ndarray, row: int, reducer: str = "max") -> np.ndarray:
    """Gradient of one image row with the 11-tap kernel [-1/5 x5, 0, 1/5 x5].

    For 3-channel (HSV) input the per-channel gradients are fused by
    ``reducer``; ``max`` keeps the signed value with the largest magnitude.
    """
    img = np.asarray(img, dtype=float)
    if not 0 <= row < img.shape[0]:
        raise IndexError(f"row {row} outside image of height {img.shape[0]}")
    return _gradient_rows(img[row : row + 1], reducer)[0]


def default_roi(width: int, height: int):
    return ((0.0, height / 2.0), (float(width), height / 2.0), (float(width), float(height)), (0.0, float(height)))


def roi_mask(shape: tuple[int, int], polygon) -> np.ndarray:
    """Boolean mask of pixel centers inside ``polygon`` (even-odd rule)."""
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w]
    px = xs + 0.5
    py = ys + 0.5
    inside = np.zeros((h, w), dtype=bool)
    pts = list(polygon)
    for (x0, y0), (x1, y1) in zip(pts, pts[1:] + pts[:1]):
        if y0 == y1:
            continue
        crosses = (y0 > py) != (y1 > py)
        xi = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
        inside ^= crosses & (px < xi)
    return inside


def scan_rows(shape: tuple[int, int], cfg: DetectionConfig) -> np.ndarray:
    h, w = shape
    if cfg.scanline_rows is not None:
        rows = np.array(sorted(set(cfg.scanline_rows)), dtype=int)
        return rows[(rows >= 0) & (rows < h)]
    mask = roi_mask(shape, cfg.roi or default_roi(w, h))
    live = np.flatnonzero(mask.any(axis=1))
    if live.size == 0:
        return live
    return np.arange(live[0], live[-1] + 1, cfg.scanline_step)


def gradient_image(img: np.ndarray, cfg: DetectionConfig, rows=None) -> np.ndarray:
    """Gradient magnitudes on the scanned rows; zero on all other rows."""
    img = np.asarray(img, dtype=float)
    if rows is None:
        rows = scan_rows(img.shape[:2], cfg)
    out = np.zeros(img.shape[:2])
    if len(rows):
        out[rows] = _gradient_rows(img[rows], cfg.channel_reducer)
    return out


def edge_binarize(gradients: np.ndarray, cfg: DetectionConfig) -> np.ndarray:
    g = np.asarray(gradients, dtype=float)
    h, w = g.shape
    mask = roi_mask((h, w), cfg.roi or default_roi(w, h))
    return ((np.abs(g) > cfg.gradient_threshold) & mask).astype(np.uint8)


# -- Hough ----------------------------------------------------------------------


@dataclass(frozen=True)
class HoughSpace:
    thetas: np.ndarray  # degrees
    rho_offset: int
    rho_res: float
    cos: np.ndarray
    sin: np.ndarray

    @property
    def n_rho(self) -> int:
        return 2 * self.rho_offset + 1

    def rho(self, idx):
        return (np.asarray(idx) - self.rho_offset) * self.rho_res


def hough_space(shape: tuple[int, int], cfg: DetectionConfig) -> HoughSpace:
    h, w = shape
    n_theta = int(math.ceil(180.0 / cfg.hough_theta_resolution - 1e-9))
    thetas = np.array([k * cfg.hough_theta_resolution for k in range(n_theta)])
    # math.cos/sin so that a plain-Python loop reproduces the same votes bit for bit
    cos = np.array([math.cos(math.radians(t)) for t in thetas])
    sin = np.array([math.sin(math.radians(t)) for t in thetas])
    diag = math.hypot(w, h)
    offset = int(math.ceil(diag / cfg.hough_rho_resolution)) + 1
    return HoughSpace(thetas, offset, cfg.hough_rho_resolution, cos, sin)


def hough_accumulator(binary: np.ndarray, cfg: DetectionConfig):
    """Vote array of shape ``(n_theta, n_rho)`` and the matching HoughSpace."""
    binary = np.asarray(binary)
    space = hough_space(binary.shape, cfg)
    ys, xs = np.nonzero(binary)
    n_theta = len(space.thetas)
    if xs.size == 0:
        return np.zeros((n_theta, space.n_rho), dtype=np.int64), space
    xs = xs.astype(float)[:, None]
    ys = ys.astype(float)[:, None]
    rho = xs * space.cos[None, :] + ys * space.sin[None, :]
    ridx = np.rint(rho / space.rho_res).astype(np.int64) + space.rho_offset
    flat = np.arange(n_theta)[None, :] * space.n_rho + ridx
    acc = np.bincount(flat.ravel(), minlength=n_theta * space.n_rho)
    return acc.reshape(n_theta, space.n_rho), space


def _peak_mask(acc: np.ndarray) -> np.ndarray:
    """3x3 non-maximum suppression; among equal neighbors the first cell in
    (theta, rho) raster order wins."""
    a = np.pad(acc, 1, constant_values=-1)
    c = a[1:-1, 1:-1]
    keep = np.ones(acc.shape, dtype=bool)
    for dt in (-1, 0, 1):
        for dr in (-1, 0, 1):
            if dt == 0 and dr == 0:
                continue
            nb = a[1 + dt : a.shape[0] - 1 + dt, 1 + dr : a.shape[1] - 1 + dr]
            if (dt, dr) < (0, 0):
                keep &= c > nb
            else:
                keep &= c >= nb
    return keep


def _theta_ok(theta, cfg: DetectionConfig):
    lo, hi = cfg.theta_limits
    ok = (theta >= lo) & (theta <= hi)
    if cfg.theta_exclude is not None:
        xlo, xhi = cfg.theta_exclude
        ok = ok & ~((theta > xlo) & (theta < xhi))
    return ok


def _sort_key(s: ScoredLine):
    return (-s.score, s.line.rho, s.line.theta)


def hough_lines(binary: np.ndarray, cfg: DetectionConfig) -> list[ScoredLine]:
    acc, space = hough_accumulator(binary, cfg)
    peaks = _peak_mask(acc) & (acc > cfg.accumulator_threshold)
    ti, ri = np.nonzero(peaks)
    thetas = space.thetas[ti]
    rhos = space.rho(ri)
    rlo, rhi = cfg.rho_limits
    ok = _theta_ok(thetas, cfg) & (rhos >= rlo) & (rhos <= rhi)
    out = [
        ScoredLine(LineParam(float(r), float(t)), int(v))
        for r, t, v in zip(rhos[ok], thetas[ok], acc[ti[ok], ri[ok]])
    ]
    out.sort(key=_sort_key)
    return out


# -- consolidation --------------------------------------------------------------


def _distances(pts: np.ndarray, line: LineParam) -> np.ndarray:
    t = math.radians(line.theta)
    return np.abs(pts[:, 0] * math.cos(t) + pts[:, 1] * math.sin(t) - line.rho)


def _angle_gap(a: float, b: float) -> float:
    d = abs(a - b) % 180.0
    return min(d, 180.0 - d)


def refit_line(pts: np.ndarray, line: LineParam, band: float, weights=None, iters: int = 3):
    """Refit ``line`` to the edge points within ``band`` by regressing x on y.

    Scan-line edge points scatter horizontally only, so x-on-y least squares is
    unbiased where a total-least-squares fit would tilt toward the x-axis.
    ``weights`` (e.g. gradient magnitudes) make the per-row band centers
    sub-pixel. Returns the refitted line and its inlier count.
    """
    if weights is None:
        weights = np.ones(len(pts))
    sel = _distances(pts, line) <= band
    for _ in range(iters):
        p, w = pts[sel], weights[sel]
        if len(np.unique(p[:, 1])) < 2:
            break
        A = np.column_stack([np.ones(len(p)), p[:, 1]]) * np.sqrt(w)[:, None]
        (a, b), *_ = np.linalg.lstsq(A, p[:, 0] * np.sqrt(w), rcond=None)
        norm = math.hypot(1.0, b)
        cand = LineParam(a / norm, math.degrees(math.atan2(-b, 1.0)))
        if _angle_gap(cand.theta, line.theta) > 45.0:
            break
        line = cand
        sel = _distances(pts, line) <= band
    return line, int(sel.sum())


def consolidate(
    binary: np.ndarray, candidates: list[ScoredLine], cfg: DetectionConfig, gradients=None
) -> list[ScoredLine]:
    """Merge Hough peaks that belong to the same painted stripe and refit each
    survivor to the center of its edge band.

    The score of a consolidated line is its edge-point support within
    ``refine_band``; lines whose support falls to the accumulator threshold
    or below are dropped.
    """
    ys, xs = np.nonzero(binary)
    pts = np.column_stack([xs, ys]).astype(float)
    weights = None if gradients is None else np.abs(np.asarray(gradients)[ys, xs])
    kept: list[tuple[ScoredLine, np.ndarray]] = []
    for cand in candidates:
        line, support = refit_line(pts, cand.line, cfg.refine_band, weights)
        own = pts[_distances(pts, line) <= cfg.refine_band]
        if any(
            _angle_gap(k.line.theta, line.theta) <= cfg.merge_theta
            and (len(own) == 0 or np.median(_distances(own, k.line)) <= cfg.merge_px)
            for k, _ in kept
        ):
            continue
        kept.append((ScoredLine(line, support), own))
    rlo, rhi = cfg.rho_limits
    out = [
        s
        for s, _ in kept
        if s.score > cfg.accumulator_threshold and _theta_ok(s.line.theta, cfg) and rlo <= s.line.rho <= rhi
    ]
    out.sort(key=_sort_key)
    return out


def detect(frame: np.ndarray, cfg: DetectionConfig, debug: dict | None = None) -> list[ScoredLine]:
    """Run the full pipeline on an RGB frame; returns candidates best first.

    If ``debug`` is a dict, the binary edge map is stored under ``"edges"``.
    """
    hsv = rgb_to_hsv(frame)
    small = downscale(hsv, cfg.downscale_to)
    grads = gradient_image(small, cfg)
    binary = edge_binarize(grads, cfg)
    if debug is not None:
        debug["edges"] = binary
    return consolidate(binary, hough_lines(binary, cfg), cfg, grads)
