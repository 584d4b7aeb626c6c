"""Pinhole camera projection and tile-parallel software rasterization.

Each mesh layer is rasterized independently into a G-buffer holding, per
pixel, the nearest covering triangle's id, camera-space depth, and
perspective-correct interpolated uv. Pixels are sampled at their centers
(ix + 0.5, iy + 0.5); shared edges are resolved with a top-left fill rule and
equal-depth ties go to the lower face id, so output is deterministic and
independent of tile size or worker count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np
from numba import njit, prange

from .errors import ValidationError

TILE = 32


def set_worker_count(n: int) -> int:
    """Cap the rasterizer thread pool; returns the count actually in effect."""
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


def get_worker_count() -> int:
    return numba.get_num_threads()


@dataclass
class Camera:
    """Pinhole camera: world-to-camera rigid transform plus intrinsics in pixels.

    Camera space has +z forward; screen x = fx * x/z + cx, y = fy * y/z + cy
    with pixel rows growing along +y.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray     # (3, 3) world -> camera
    translation: np.ndarray  # (3,) meters
    near: float = 0.01
    far: float = 100.0

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)

    def validate(self) -> "Camera":
        if self.fx <= 0 or self.fy <= 0:
            raise ValidationError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not 0 < self.near < self.far:
            raise ValidationError(f"need 0 < near < far, got near={self.near}, far={self.far}")
        gram = self.rotation @ self.rotation.T
        if np.max(np.abs(gram - np.eye(3))) > 1e-6:
            raise ValidationError("rotation is not orthonormal within 1e-6")
        return self

    @classmethod
    def look_at(cls, eye, target, up, fx: float, fy: float, width: int, height: int,
                near: float = 0.01, far: float = 100.0) -> "Camera":
        """Camera at `eye` looking toward `target`, upright w.r.t. world `up`."""
        eye = np.asarray(eye, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - eye
        forward = forward / np.linalg.norm(forward)
        right = np.cross(np.asarray(up, dtype=np.float64), forward)
        right = right / np.linalg.norm(right)
        down = np.cross(right, forward)
        rotation = np.stack([right, down, forward])
        return cls(fx=fx, fy=fy, cx=width / 2.0, cy=height / 2.0,
                   width=width, height=height, rotation=rotation,
                   translation=-rotation @ eye, near=near, far=far)


@dataclass
class LayerGBuffer:
    """Per-pixel nearest-hit record for one rasterized layer."""

    hit: np.ndarray      # (H, W) bool
    face_id: np.ndarray  # (H, W) int32, -1 where no hit
    depth: np.ndarray    # (H, W) camera-space z, +inf where no hit
    uv: np.ndarray       # (H, W, 2)

    @property
    def image_size(self) -> tuple[int, int]:
        return self.hit.shape


def project(cam: Camera, points: np.ndarray):
    """Project world points to screen pixels.

    Returns (screen_xy, z_cam, behind) where `behind` flags points at
    z <= near whose screen coordinates are unreliable.
    """
    points = np.asarray(points, dtype=np.float64)
    single = points.ndim == 1
    pts = np.atleast_2d(points)
    cam_pts = pts @ cam.rotation.T + cam.translation
    z = cam_pts[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = cam.fx * cam_pts[:, 0] / z + cam.cx
        sy = cam.fy * cam_pts[:, 1] / z + cam.cy
    screen = np.stack([sx, sy], axis=-1)
    behind = z <= cam.near
    if single:
        return screen[0], float(z[0]), bool(behind[0])
    return screen, z, behind


def _clip_triangle_near(pts: np.ndarray, uvs: np.ndarray, near: float):
    """Sutherland-Hodgman clip of one camera-space triangle against z = near."""
    out_p, out_uv = [], []
    for i in range(3):
        a, b = pts[i], pts[(i + 1) % 3]
        ua, ub = uvs[i], uvs[(i + 1) % 3]
        a_in, b_in = a[2] > near, b[2] > near
        if a_in:
            out_p.append(a)
            out_uv.append(ua)
        if a_in != b_in:
            s = (near - a[2]) / (b[2] - a[2])
            out_p.append(a + s * (b - a))
            out_uv.append(ua + s * (ub - ua))
    if len(out_p) < 3:
        return []
    tris = [(0, 1, 2)] if len(out_p) == 3 else [(0, 1, 2), (0, 2, 3)]
    return [(np.stack([out_p[i] for i in tri]), np.stack([out_uv[i] for i in tri]))
            for tri in tris]


@njit(inline="always")
def _boundary_accept(sgn, dx, dy):
    # top-left rule: a pixel exactly on an edge belongs to the triangle whose
    # interior lies to the right of (or, for horizontal edges, below) it
    if -sgn * dy > 0.0:
        return True
    return dy == 0.0 and sgn * dx > 0.0


@njit(cache=True, parallel=True)
def _raster_kernel(xy, z, uv, fids, height, width, near, far,
                   z_buf, face_buf, uv_buf, hit_buf):
    n_tx = (width + TILE - 1) // TILE
    n_ty = (height + TILE - 1) // TILE
    num_tris = xy.shape[0]
    for tid in prange(n_tx * n_ty):
        ty = tid // n_tx
        tx = tid - ty * n_tx
        px_lo = tx * TILE
        px_hi = min(width, px_lo + TILE)
        py_lo = ty * TILE
        py_hi = min(height, py_lo + TILE)
        for t in range(num_tris):
            ax, ay = xy[t, 0, 0], xy[t, 0, 1]
            bx, by = xy[t, 1, 0], xy[t, 1, 1]
            cx, cy = xy[t, 2, 0], xy[t, 2, 1]
            minx = min(ax, min(bx, cx))
            maxx = max(ax, max(bx, cx))
            miny = min(ay, min(by, cy))
            maxy = max(ay, max(by, cy))
            ix0 = max(px_lo, int(np.ceil(minx - 0.5)))
            ix1 = min(px_hi - 1, int(np.floor(maxx - 0.5)))
            iy0 = max(py_lo, int(np.ceil(miny - 0.5)))
            iy1 = min(py_hi - 1, int(np.floor(maxy - 0.5)))
            if ix1 < ix0 or iy1 < iy0:
                continue
            area2 = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
            if area2 == 0.0:
                continue
            sgn = 1.0 if area2 > 0.0 else -1.0
            acc0 = _boundary_accept(sgn, cx - bx, cy - by)
            acc1 = _boundary_accept(sgn, ax - cx, ay - cy)
            acc2 = _boundary_accept(sgn, bx - ax, by - ay)
            inv_z0 = 1.0 / z[t, 0]
            inv_z1 = 1.0 / z[t, 1]
            inv_z2 = 1.0 / z[t, 2]
            for iy in range(iy0, iy1 + 1):
                py = iy + 0.5
                for ix in range(ix0, ix1 + 1):
                    px = ix + 0.5
                    e0 = (cx - bx) * (py - by) - (cy - by) * (px - bx)
                    e1 = (ax - cx) * (py - cy) - (ay - cy) * (px - cx)
                    e2 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
                    s0 = sgn * e0
                    s1 = sgn * e1
                    s2 = sgn * e2
                    if not ((s0 > 0.0 or (s0 == 0.0 and acc0))
                            and (s1 > 0.0 or (s1 == 0.0 and acc1))
                            and (s2 > 0.0 or (s2 == 0.0 and acc2))):
                        continue
                    l0 = e0 / area2
                    l1 = e1 / area2
                    l2 = e2 / area2
                    inv_zp = l0 * inv_z0 + l1 * inv_z1 + l2 * inv_z2
                    zp = 1.0 / inv_zp
                    if zp <= near or zp >= far:
                        continue
                    zb = z_buf[iy, ix]
                    if zp < zb or (zp == zb and fids[t] < face_buf[iy, ix]):
                        z_buf[iy, ix] = zp
                        face_buf[iy, ix] = fids[t]
                        hit_buf[iy, ix] = True
                        scale = zp
                        uv_buf[iy, ix, 0] = (l0 * uv[t, 0, 0] * inv_z0
                                             + l1 * uv[t, 1, 0] * inv_z1
                                             + l2 * uv[t, 2, 0] * inv_z2) * scale
                        uv_buf[iy, ix, 1] = (l0 * uv[t, 0, 1] * inv_z0
                                             + l1 * uv[t, 1, 1] * inv_z1
                                             + l2 * uv[t, 2, 1] * inv_z2) * scale


def rasterize_layer(cam: Camera, posed_verts: np.ndarray, faces: np.ndarray,
                    uv_coords: np.ndarray, image_size: tuple[int, int] | None = None
                    ) -> LayerGBuffer:
    """Rasterize one layer into a nearest-hit G-buffer.

    Triangles crossing the near plane are clipped against it before
    projection; no backface culling is applied (shrunk shells are routinely
    seen from inside). `image_size` is (height, width) and defaults to the
    camera's.
    """
    cam.validate()
    height, width = image_size if image_size is not None else (cam.height, cam.width)
    posed_verts = np.asarray(posed_verts, dtype=np.float64)
    cam_verts = posed_verts @ cam.rotation.T + cam.translation
    tri_p = cam_verts[faces]                                   # (F, 3, 3)
    tri_uv = np.asarray(uv_coords, dtype=np.float64)           # (F, 3, 2)
    z_front = tri_p[:, :, 2] > cam.near
    n_front = z_front.sum(axis=1)
    full = n_front == 3
    parts_p = [tri_p[full]]
    parts_uv = [tri_uv[full]]
    parts_id = [np.flatnonzero(full)]
    for f in np.flatnonzero((n_front > 0) & (n_front < 3)):
        for clipped_p, clipped_uv in _clip_triangle_near(tri_p[f], tri_uv[f], cam.near):
            parts_p.append(clipped_p[None])
            parts_uv.append(clipped_uv[None])
            parts_id.append(np.array([f]))
    tri_p = np.concatenate(parts_p, axis=0)
    tri_uv = np.concatenate(parts_uv, axis=0)
    tri_id = np.concatenate(parts_id, axis=0).astype(np.int32)

    z_buf = np.full((height, width), np.inf)
    face_buf = np.full((height, width), -1, dtype=np.int32)
    uv_buf = np.zeros((height, width, 2))
    hit_buf = np.zeros((height, width), dtype=np.bool_)

    if len(tri_p):
        z = tri_p[:, :, 2]
        xy = np.empty((len(tri_p), 3, 2))
        xy[:, :, 0] = cam.fx * tri_p[:, :, 0] / z + cam.cx
        xy[:, :, 1] = cam.fy * tri_p[:, :, 1] / z + cam.cy
        # conservative screen-bounds cull
        keep = ((xy[:, :, 0].min(axis=1) < width) & (xy[:, :, 0].max(axis=1) > 0.0)
                & (xy[:, :, 1].min(axis=1) < height) & (xy[:, :, 1].max(axis=1) > 0.0))
        if keep.any():
            _raster_kernel(np.ascontiguousarray(xy[keep]),
                           np.ascontiguousarray(z[keep]),
                           np.ascontiguousarray(tri_uv[keep]),
                           np.ascontiguousarray(tri_id[keep]),
                           height, width, cam.near, cam.far,
                           z_buf, face_buf, uv_buf, hit_buf)
    return LayerGBuffer(hit=hit_buf, face_id=face_buf, depth=z_buf, uv=uv_buf)
