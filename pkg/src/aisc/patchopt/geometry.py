"""Geometric machinery for patch placement: masked compositing, the pinhole
zoom factor, bilinear resize with its adjoint, perspective warping, and
separable Gaussian smoothing."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..patchcheck import BinaryMask

Box = tuple[int, int, int, int]  # (x1, y1, x2, y2), exclusive on the far side


@dataclass
class PinholeModel:
    """Constant-speed pinhole geometry for one video.

    The target reaches the camera at frame `vanish_frame`, so the distance at
    frame i is proportional to (vanish_frame - i) and patch sizes between
    frames scale by the zoom factor below. `base_box` is the target's box in
    frame 0.
    """

    vanish_frame: int
    base_box: Box = (0, 0, 1, 1)

    def __post_init__(self) -> None:
        if self.vanish_frame < 1:
            raise ValueError("vanish_frame must be >= 1")
        x1, y1, x2, y2 = self.base_box
        if x2 <= x1 or y2 <= y1:
            raise ValueError("base_box must have positive extent")


def zoom_factor(model: PinholeModel, i: int, j: int) -> float:
    """Size ratio h_i / h_j = (N - j) / (N - i) between two frames."""
    n = model.vanish_frame
    if i >= n or j >= n:
        raise ValueError(f"frame index must be below vanish_frame {n}")
    if i < 0 or j < 0:
        raise ValueError("frame index must be non-negative")
    return (n - j) / (n - i)


def scaled_box(model: PinholeModel, j: int) -> Box:
    """`base_box` grown by 1/zoom_factor(0, j) about its center (frame-j box)."""
    scale = 1.0 / zoom_factor(model, 0, j)
    x1, y1, x2, y2 = model.base_box
    cx, cy = (x1 + x2) / 2.0, (y1 + y2) / 2.0
    hw, hh = (x2 - x1) * scale / 2.0, (y2 - y1) * scale / 2.0
    return (int(round(cx - hw)), int(round(cy - hh)), int(round(cx + hw)), int(round(cy + hh)))


def composite(frame: np.ndarray, mask: BinaryMask, patch: np.ndarray) -> np.ndarray:
    """M * patch + (1 - M) * frame: masked pixels come from the patch."""
    frame = np.asarray(frame, dtype=np.float64)
    patch = np.asarray(patch, dtype=np.float64)
    if frame.shape != patch.shape:
        raise ValueError(f"frame {frame.shape} and patch {patch.shape} differ in shape")
    if mask.bits.shape != frame.shape[:2]:
        raise ValueError(f"mask {mask.bits.shape} does not match frame {frame.shape[:2]}")
    bits = mask.bits if frame.ndim == 2 else mask.bits[:, :, None]
    return np.where(bits, patch, frame)


def _axis_weights(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Align-corners source indices (i0, i1) and fractions for one axis."""
    if n_in == 1 or n_out == 1:
        src = np.zeros(n_out)  # degenerate axis: sample the first line
    else:
        src = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
    i0 = np.minimum(np.floor(src).astype(np.int64), max(n_in - 2, 0))
    frac = src - i0
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, frac


def resize_bilinear(
    texture: np.ndarray,
    size: tuple[int, int] | None = None,
    scale: float | None = None,
) -> np.ndarray:
    """Bilinear resize (align-corners). `scale=1` and same-size targets are exact copies."""
    texture = np.asarray(texture, dtype=np.float64)
    if texture.ndim not in (2, 3):
        raise ValueError("texture must be (H, W) or (H, W, C)")
    h, w = texture.shape[:2]
    if (size is None) == (scale is None):
        raise ValueError("give exactly one of size or scale")
    if scale is not None:
        if scale <= 0.0:
            raise ValueError("scale must be positive")
        size = (max(1, round(h * scale)), max(1, round(w * scale)))
    assert size is not None
    out_h, out_w = size
    if out_h < 1 or out_w < 1:
        raise ValueError("target size must be at least 1x1")
    iy0, iy1, fy = _axis_weights(h, out_h)
    ix0, ix1, fx = _axis_weights(w, out_w)
    fy = fy.reshape(-1, *([1] * (texture.ndim - 1)))
    rows = (1.0 - fy) * texture[iy0] + fy * texture[iy1]  # (out_h, w[, C])
    fx = fx.reshape(1, -1, *([1] * (texture.ndim - 2)))
    return (1.0 - fx) * rows[:, ix0] + fx * rows[:, ix1]


def resize_bilinear_vjp(grad_out: np.ndarray, src_shape: tuple[int, ...]) -> np.ndarray:
    """Adjoint of `resize_bilinear` onto a source of shape `src_shape`.

    Exact transpose of the forward map, so chained gradients through a resize
    are analytic.
    """
    grad_out = np.asarray(grad_out, dtype=np.float64)
    h, w = src_shape[:2]
    out_h, out_w = grad_out.shape[:2]
    iy0, iy1, fy = _axis_weights(h, out_h)
    ix0, ix1, fx = _axis_weights(w, out_w)
    fx_b = fx.reshape(1, -1, *([1] * (grad_out.ndim - 2)))
    rows_g = np.zeros((out_h, w) + grad_out.shape[2:], dtype=np.float64)
    row_idx = np.arange(out_h)[:, None]
    np.add.at(rows_g, (row_idx, ix0[None, :]), (1.0 - fx_b) * grad_out)
    np.add.at(rows_g, (row_idx, ix1[None, :]), fx_b * grad_out)
    fy_b = fy.reshape(-1, *([1] * (grad_out.ndim - 1)))
    grad_src = np.zeros(src_shape, dtype=np.float64)
    np.add.at(grad_src, iy0, (1.0 - fy_b) * rows_g)
    np.add.at(grad_src, iy1, fy_b * rows_g)
    return grad_src


def perspective_warp(texture: np.ndarray, homography: np.ndarray) -> np.ndarray:
    """Warp by a 3x3 homography via inverse-mapped bilinear sampling.

    Destination pixels whose preimage falls outside the source read as 0.
    """
    texture = np.asarray(texture, dtype=np.float64)
    if texture.ndim not in (2, 3):
        raise ValueError("texture must be (H, W) or (H, W, C)")
    hom = np.asarray(homography, dtype=np.float64)
    if hom.shape != (3, 3):
        raise ValueError("homography must be 3x3")
    try:
        inv = np.linalg.inv(hom)
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular homography") from exc
    h, w = texture.shape[:2]
    ys, xs = np.mgrid[0:h, 0:w]
    ones = np.ones_like(xs, dtype=np.float64)
    dest = np.stack([xs.astype(np.float64), ys.astype(np.float64), ones])
    src = np.einsum("ij,jhw->ihw", inv, dest)
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = src[0] / src[2]
        sy = src[1] / src[2]
    finite = np.isfinite(sx) & np.isfinite(sy)
    sx = np.where(finite, sx, -2.0)
    sy = np.where(finite, sy, -2.0)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0
    out_shape = texture.shape
    out = np.zeros(out_shape, dtype=np.float64)
    for dy, dx, weight in (
        (0, 0, (1 - fy) * (1 - fx)),
        (0, 1, (1 - fy) * fx),
        (1, 0, fy * (1 - fx)),
        (1, 1, fy * fx),
    ):
        yy = y0 + dy
        xx = x0 + dx
        inside = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        yc = np.clip(yy, 0, h - 1)
        xc = np.clip(xx, 0, w - 1)
        contrib = texture[yc, xc]
        w_eff = np.where(inside, weight, 0.0)
        out += w_eff[..., None] * contrib if texture.ndim == 3 else w_eff * contrib
    return out


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian taps with radius ceil(3*sigma)."""
    if sigma < 0.0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0.0:
        return np.ones(1)
    radius = math.ceil(3.0 * sigma)
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(k * k) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def _convolve_axis(arr: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    radius = kernel.size // 2
    moved = np.moveaxis(arr, axis, 0)
    padded = np.pad(moved, [(radius, radius)] + [(0, 0)] * (moved.ndim - 1), mode="edge")
    out = np.zeros_like(moved)
    for tap, weight in enumerate(kernel):
        out += weight * padded[tap : tap + moved.shape[0]]
    return np.moveaxis(out, 0, axis)


def gaussian_smooth(texture: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with edge clamping; sigma=0 is the identity."""
    texture = np.asarray(texture, dtype=np.float64)
    if texture.ndim not in (2, 3):
        raise ValueError("texture must be (H, W) or (H, W, C)")
    if sigma < 0.0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0.0:
        return texture.copy()
    kernel = gaussian_kernel(sigma)
    return _convolve_axis(_convolve_axis(texture, kernel, 0), kernel, 1)
