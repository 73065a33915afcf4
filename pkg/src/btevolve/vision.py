"""Synthetic stereo sensing: ray-cast depth rendering of the two-room scene,
depth to disparity conversion, summed-area tables, sliding-window detection
of the low-disparity window, and blackboard feature extraction.

The camera is a 128 x 96 pinhole with a 60 x 45 degree field of view, flying
at a fixed height. Rendering is column-separable: one 2D raycast per image
column against the room walls, then per-pixel resolution against floor,
ceiling and the window cutout. Only one camera is rendered; the stereo
baseline enters through the depth-to-disparity conversion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
from numba import njit

from . import bt

if TYPE_CHECKING:
    from .sim import RoomConfig

IMAGE_WIDTH = 128
IMAGE_HEIGHT = 96
FOV_HORIZONTAL = math.radians(60.0)
FOV_VERTICAL = math.radians(45.0)
FOCAL_X = (IMAGE_WIDTH / 2) / math.tan(FOV_HORIZONTAL / 2)
FOCAL_Y = (IMAGE_HEIGHT / 2) / math.tan(FOV_VERTICAL / 2)
BASELINE = 0.06
DISPARITY_COEFF = FOCAL_X * BASELINE
# Disparity at the closest credible range; normalizes the Sigma feature.
CLOSEST_RANGE = 0.25
DISPARITY_MAX = DISPARITY_COEFF / CLOSEST_RANGE

DEFAULT_SCALES = (16, 24, 32, 48, 64)
DEFAULT_STRIDE = 4
EPSILON = 1e-6

# Per-column tangent of the horizontal ray angle (positive to the right) and
# per-pixel slope/length factors. Pixel (u=64, v=48) lies exactly on the
# optical axis.
_TAN_U = (np.arange(IMAGE_WIDTH) - IMAGE_WIDTH / 2) / FOCAL_X
_TAN_V = (IMAGE_HEIGHT / 2 - np.arange(IMAGE_HEIGHT)) / FOCAL_Y
_COL_NORM = np.sqrt(1.0 + _TAN_U * _TAN_U)
_SLOPE = _TAN_V[:, None] / _COL_NORM[None, :]
_RAY_LEN = np.sqrt(1.0 + _SLOPE * _SLOPE)


@dataclass
class VisionParams:
    """Detector settings: candidate square sides, scan stride, and the
    denominator guard used in the response and Delta ratios."""

    scales: tuple[int, ...] = DEFAULT_SCALES
    stride: int = DEFAULT_STRIDE
    epsilon: float = EPSILON

    def validate(self) -> None:
        if not self.scales or any(s < 2 for s in self.scales):
            raise ValueError("scales must be square sides of at least 2 px")
        if self.stride < 1:
            raise ValueError("stride must be at least 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


@dataclass
class WindowDetection:
    """Best low-disparity rectangle: normalized horizontal centre x in
    [-1, 1], response sigma in [0, 100] (lower is stronger evidence), and
    the winning pixel rectangle as (x, y, side)."""

    x: float
    sigma: float
    rect: tuple[int, int, int]


@njit(cache=True)
def _render_kernel(px, py, psi, cam_z, width, length, height,
                   wx0, wx1, wz0, wz1, tan_u, col_norm, slope, ray_len, out):
    n_cols = tan_u.shape[0]
    n_rows = slope.shape[0]
    cos_h = math.cos(psi)
    sin_h = math.sin(psi)
    far = 1e30
    for u in range(n_cols):
        hx = (cos_h + tan_u[u] * sin_h) / col_norm[u]
        hy = (sin_h - tan_u[u] * cos_h) / col_norm[u]
        t_wall = far
        window_column = False
        if hx < 0.0:
            t = -px / hx
            hit = py + t * hy
            if 0.0 <= hit <= length and t < t_wall:
                t_wall = t
        elif hx > 0.0:
            t = (width - px) / hx
            hit = py + t * hy
            if 0.0 <= hit <= length and t < t_wall:
                t_wall = t
        if hy < 0.0:
            t = -py / hy
            hit = px + t * hx
            if 0.0 <= hit <= width and t < t_wall:
                t_wall = t
        elif hy > 0.0:
            t = (length - py) / hy
            hit = px + t * hx
            if 0.0 <= hit <= width and t < t_wall:
                t_wall = t
                window_column = wx0 <= hit <= wx1
        t_back = far
        if window_column:
            if hx < 0.0:
                t = -px / hx
                hit = py + t * hy
                if length <= hit <= 2.0 * length and t < t_back:
                    t_back = t
            elif hx > 0.0:
                t = (width - px) / hx
                hit = py + t * hy
                if length <= hit <= 2.0 * length and t < t_back:
                    t_back = t
            t = (2.0 * length - py) / hy
            hit = px + t * hx
            if 0.0 <= hit <= width and t < t_back:
                t_back = t
        for v in range(n_rows):
            sl = slope[v, u]
            if sl > 0.0:
                t_fc = (height - cam_z) / sl
            elif sl < 0.0:
                t_fc = -cam_z / sl
            else:
                t_fc = far
            t_solid = t_wall
            if window_column:
                z_wall = cam_z + t_wall * sl
                if wz0 <= z_wall <= wz1:
                    t_solid = t_back
            t_hit = t_fc if t_fc < t_solid else t_solid
            out[v, u] = t_hit * ray_len[v, u]
    return out


@njit(cache=True)
def _integral_kernel(image):
    h, w = image.shape
    table = np.zeros((h + 1, w + 1))
    for y in range(h):
        acc = 0.0
        for x in range(w):
            acc += image[y, x]
            table[y + 1, x + 1] = table[y, x + 1] + acc
    return table


@njit(cache=True)
def _detect_kernel(table, scales, stride, eps):
    h = table.shape[0] - 1
    w = table.shape[1] - 1
    best = 1e300
    best_x = -1
    best_y = 0
    best_side = 0
    for si in range(scales.shape[0]):
        side = int(scales[si])
        if side > h or side > w:
            continue
        margin = side // 2
        area_in = float(side * side)
        y = 0
        while y + side <= h:
            x = 0
            while x + side <= w:
                sum_in = (table[y + side, x + side] + table[y, x]
                          - table[y, x + side] - table[y + side, x])
                ox0 = x - margin if x - margin > 0 else 0
                oy0 = y - margin if y - margin > 0 else 0
                ox1 = x + side + margin if x + side + margin < w else w
                oy1 = y + side + margin if y + side + margin < h else h
                sum_out = (table[oy1, ox1] + table[oy0, ox0]
                           - table[oy0, ox1] - table[oy1, ox0])
                border_area = float((ox1 - ox0) * (oy1 - oy0)) - area_in
                if border_area > 0.0:
                    score = (100.0 * (sum_in / area_in)
                             / ((sum_out - sum_in) / border_area + eps))
                    if score < best:
                        best = score
                        best_x = x
                        best_y = y
                        best_side = side
                x += stride
            y += stride
    return best, best_x, best_y, best_side


@njit(cache=True)
def _sense_kernel(px, py, psi, cam_z, width, length, height,
                  wx0, wx1, wz0, wz1, tan_u, col_norm, slope, ray_len,
                  disp_coeff, scales, stride, eps, depth_buf):
    _render_kernel(px, py, psi, cam_z, width, length, height,
                   wx0, wx1, wz0, wz1, tan_u, col_norm, slope, ray_len,
                   depth_buf)
    h, w = depth_buf.shape
    disp = np.empty((h, w))
    for v in range(h):
        for u in range(w):
            disp[v, u] = disp_coeff / depth_buf[v, u]
    table = _integral_kernel(disp)
    best, bx, by, bside = _detect_kernel(table, scales, stride, eps)
    # These three sums mirror rect_sum() exactly so that the fused path and
    # the step-by-step one produce bit-identical features.
    half = w // 2
    total = table[h, w] + table[0, 0] - table[0, w] - table[h, 0]
    left = table[h, half] + table[0, 0] - table[0, half] - table[h, 0]
    right = table[h, w] + table[0, half] - table[0, w] - table[h, half]
    return best, bx, by, bside, total, left, right


def _canonical_geometry(position, heading: float, room: "RoomConfig"):
    """Pose and window extents in a frame where the window wall is the far
    wall y = length; handedness is preserved so images are not mirrored."""
    x, y = position
    w, l = room.width, room.length
    off = room.window_offset
    wall = room.window_wall
    if wall == "north":
        cx, cy, ch, cw, cl, coff = x, y, heading, w, l, off
    elif wall == "south":
        cx, cy, ch, cw, cl, coff = w - x, l - y, heading + math.pi, w, l, -off
    elif wall == "east":
        cx, cy, ch, cw, cl, coff = l - y, x, heading + math.pi / 2, l, w, -off
    elif wall == "west":
        cx, cy, ch, cw, cl, coff = y, w - x, heading - math.pi / 2, l, w, off
    else:
        raise ValueError(f"unknown window wall {wall!r}")
    centre = cw / 2 + coff
    return (cx, cy, ch, cw, cl, room.height,
            centre - room.window_width / 2, centre + room.window_width / 2,
            room.window_centre_z - room.window_height / 2,
            room.window_centre_z + room.window_height / 2)


def render_depth(position, heading: float, room: "RoomConfig",
                 camera_height: float = 1.5) -> np.ndarray:
    """Per-pixel Euclidean ray length (metres) from the camera pose to the
    nearest surface of the two-room scene. Shape (96, 128), all finite."""
    cx, cy, ch, cw, cl, hgt, wx0, wx1, wz0, wz1 = _canonical_geometry(
        position, heading, room)
    out = np.empty((IMAGE_HEIGHT, IMAGE_WIDTH))
    _render_kernel(cx, cy, ch, camera_height, cw, cl, hgt,
                   wx0, wx1, wz0, wz1, _TAN_U, _COL_NORM, _SLOPE, _RAY_LEN, out)
    return out


def to_disparity(depth_image: np.ndarray) -> np.ndarray:
    """Stereo disparity in pixels: focal_px * baseline / depth."""
    return DISPARITY_COEFF / np.asarray(depth_image, dtype=np.float64)


def integral_image(image: np.ndarray) -> np.ndarray:
    """Summed-area table with an exclusive zero first row and column, so
    table[y, x] is the sum of all pixels above and left of (x, y) and the
    bottom-right corner holds the total."""
    img = np.ascontiguousarray(image, dtype=np.float64)
    return _integral_kernel(img)


def rect_sum(table: np.ndarray, x: int, y: int, w: int, h: int) -> float:
    """Sum of pixels in [x, x + w) x [y, y + h) from a summed-area table."""
    height = table.shape[0] - 1
    width = table.shape[1] - 1
    if x < 0 or y < 0 or w < 0 or h < 0 or x + w > width or y + h > height:
        raise ValueError(
            f"rectangle ({x}, {y}, {w}, {h}) out of bounds for a "
            f"{width} x {height} image")
    return table[y + h, x + w] + table[y, x] - table[y, x + w] - table[y + h, x]


def _detection_from(best, bx, by, bside, image_width):
    if bx < 0:
        return WindowDetection(x=0.0, sigma=100.0, rect=(0, 0, 0))
    half = image_width / 2
    x_norm = (bx + bside / 2 - half) / half
    sigma = min(max(best, 0.0), 100.0)
    return WindowDetection(x=x_norm, sigma=sigma, rect=(int(bx), int(by), int(bside)))


def detect_window(disparity: np.ndarray,
                  params: VisionParams | None = None) -> WindowDetection:
    """Multi-scale sliding-window search for the lowest-response rectangle.

    Each candidate square is scored 100 * mean_inside / (mean_border + eps)
    where the border is the surrounding ring half the square's side wide,
    clipped to the image. The minimum wins; ties keep the earliest candidate
    in scan order (scales in listed order, then rows, then columns).
    """
    params = params or VisionParams()
    table = integral_image(disparity)
    best, bx, by, bside = _detect_kernel(
        table, np.asarray(params.scales, dtype=np.int64),
        params.stride, params.epsilon)
    return _detection_from(best, bx, by, bside, disparity.shape[1])


def extract_features(disparity: np.ndarray, detection: WindowDetection,
                     epsilon: float = EPSILON) -> bt.Blackboard:
    """Blackboard inputs from a disparity map and its window detection.

    Sigma is the total disparity normalized by the all-pixels-at-closest-
    range value and clamped to [0, 1]; Delta is the left-half minus
    right-half sum over the total, clamped to [-1, 1]. The returned r is 0
    and carries no meaning; callers keep their own rudder state.
    """
    table = integral_image(disparity)
    h, w = disparity.shape
    total = rect_sum(table, 0, 0, w, h)
    left = rect_sum(table, 0, 0, w // 2, h)
    right = rect_sum(table, w // 2, 0, w - w // 2, h)
    return bt.Blackboard(
        x=detection.x,
        sigma=detection.sigma,
        Sigma=_normalized_sum(total, h * w),
        Delta=_normalized_difference(left, right, total, epsilon),
    )


def _normalized_sum(total, n_pixels):
    return min(max(total / (n_pixels * DISPARITY_MAX), 0.0), 1.0)


def _normalized_difference(left, right, total, epsilon):
    return min(max((left - right) / (total + epsilon), -1.0), 1.0)


def sense(position, heading: float, room: "RoomConfig", camera_height: float,
          params: VisionParams | None = None) -> bt.Blackboard:
    """Render, detect and extract in one fused call; bit-identical to the
    render_depth / to_disparity / detect_window / extract_features chain."""
    params = params or VisionParams()
    cx, cy, ch, cw, cl, hgt, wx0, wx1, wz0, wz1 = _canonical_geometry(
        position, heading, room)
    depth_buf = np.empty((IMAGE_HEIGHT, IMAGE_WIDTH))
    best, bx, by, bside, total, left, right = _sense_kernel(
        cx, cy, ch, camera_height, cw, cl, hgt, wx0, wx1, wz0, wz1,
        _TAN_U, _COL_NORM, _SLOPE, _RAY_LEN, DISPARITY_COEFF,
        np.asarray(params.scales, dtype=np.int64), params.stride,
        params.epsilon, depth_buf)
    detection = _detection_from(best, bx, by, bside, IMAGE_WIDTH)
    return bt.Blackboard(
        x=detection.x,
        sigma=detection.sigma,
        Sigma=_normalized_sum(total, IMAGE_HEIGHT * IMAGE_WIDTH),
        Delta=_normalized_difference(left, right, total, params.epsilon),
    )


def write_pgm(image: np.ndarray, path, scale: float = 1.0) -> None:
    """Debug dump as plain-text PGM (P2); values are pixel * scale, rounded
    and floored at zero. Disparity maps are conventionally dumped with
    scale=10."""
    img = np.asarray(image, dtype=np.float64)
    values = np.rint(img * scale).astype(np.int64)
    values[values < 0] = 0
    maxval = max(int(values.max()), 1)
    lines = ["P2", f"{img.shape[1]} {img.shape[0]}", str(maxval)]
    lines.extend(" ".join(str(v) for v in row) for row in values)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
