"""Pinhole camera rigs, depth-bin discretization, frustum rays, and BEV grids.

Conventions:
  * Intrinsics K act in the optical frame: +x right, +y down, +z forward
    (the optical axis). Pixel (u, v) back-projects along K^-1 (u, v, 1).
  * Extrinsic rotations map the camera *body* frame (+x forward, +y left,
    +z up) into the ego frame, so a camera with identity rotation looks
    down ego +x. The fixed optical-to-body permutation is applied
    internally.
  * Depth bins measure the planar (forward-axis) depth of a point, not its
    Euclidean range.
  * BEV cells are half-open rectangles [x0, x1) x [y0, y1); the flattened
    cell index is row-major with y selecting the row: h_b * w_cells + w_b.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GeometryError, ShapeError

__all__ = [
    "Camera",
    "CameraRig",
    "DepthBins",
    "BevGrid",
    "FrustumGeometry",
    "Scene",
    "make_depth_bins",
    "make_bev_grid",
    "generate_frustum",
    "project_to_pixel",
    "load_scene",
    "scene_to_dict",
    "scene_digest",
    "synthetic_scene_dict",
]

# optical (right, down, forward) -> body (forward, left, up)
_OPT_TO_BODY = np.array(
    [[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]]
)

_ORTHO_TOL = 1e-6


def _readonly(a, dtype=np.float64):
    out = np.ascontiguousarray(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Camera:
    """One pinhole camera: intrinsics plus body-to-ego pose.

    Args:
        intrinsics: 3x3 pixel matrix; bottom row must be (0, 0, 1) and the
            focal entries positive.
        rotation: 3x3 orthonormal matrix, camera body frame -> ego frame.
        translation: camera center in the ego frame, meters.
    """

    intrinsics: np.ndarray
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        k = _readonly(self.intrinsics)
        r = _readonly(self.rotation)
        t = _readonly(self.translation)
        if k.shape != (3, 3) or r.shape != (3, 3) or t.shape != (3,):
            raise GeometryError(
                f"camera parameter shapes {k.shape}, {r.shape}, {t.shape} "
                "must be (3,3), (3,3), (3,)"
            )
        if not np.allclose(k[2], [0.0, 0.0, 1.0], atol=_ORTHO_TOL):
            raise GeometryError(f"intrinsics bottom row must be (0,0,1), got {k[2]}")
        if k[0, 0] <= 0 or k[1, 1] <= 0:
            raise GeometryError("intrinsics focal entries must be positive")
        if not np.allclose(r.T @ r, np.eye(3), atol=_ORTHO_TOL):
            raise GeometryError("rotation is not orthonormal within 1e-6")
        object.__setattr__(self, "intrinsics", k)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)


@dataclass(frozen=True)
class CameraRig:
    """All cameras of one scene plus the shared feature-grid metadata."""

    cameras: tuple
    feature_width: int
    feature_height: int
    image_stride: int

    def __post_init__(self):
        object.__setattr__(self, "cameras", tuple(self.cameras))
        if not self.cameras:
            raise GeometryError("rig needs at least one camera")
        if self.feature_width < 1 or self.feature_height < 1 or self.image_stride < 1:
            raise GeometryError("feature extents and stride must be positive")

    @property
    def n_cameras(self):
        return len(self.cameras)


@dataclass(frozen=True)
class DepthBins:
    """Uniformly spaced categorical depth bin centers, in meters."""

    d_min: float
    d_max: float
    count: int
    centers: np.ndarray

    def __post_init__(self):
        c = _readonly(self.centers)
        if c.shape != (self.count,):
            raise ShapeError(f"centers shape {c.shape} != ({self.count},)")
        if self.count < 1 or not self.d_min < self.d_max:
            raise GeometryError("need d_min < d_max and count >= 1")
        if np.any(np.diff(c) <= 0):
            raise GeometryError("centers must be strictly increasing")
        if c[0] < self.d_min or c[-1] > self.d_max:
            raise GeometryError("centers must lie inside [d_min, d_max]")
        if self.count > 1:
            gaps = np.diff(c)
            if np.abs(gaps - gaps[0]).max() > 1e-9:
                raise GeometryError("centers must be uniformly spaced")
        object.__setattr__(self, "centers", c)


def make_depth_bins(d_min, d_max, n):
    """n uniform bins over [d_min, d_max]; center i is d_min + (i+0.5)*step."""
    n = int(n)
    if n < 1:
        raise GeometryError(f"bin count must be >= 1, got {n}")
    if not d_min < d_max:
        raise GeometryError(f"need d_min < d_max, got [{d_min}, {d_max}]")
    step = (d_max - d_min) / n
    centers = d_min + (np.arange(n) + 0.5) * step
    return DepthBins(float(d_min), float(d_max), n, centers)


@dataclass(frozen=True)
class BevGrid:
    """Regular grid of half-open square cells on the ground plane."""

    h_cells: int
    w_cells: int
    x_min: float
    y_min: float
    cell_size: float

    def __post_init__(self):
        if self.h_cells < 1 or self.w_cells < 1:
            raise GeometryError("cell counts must be positive")
        if not self.cell_size > 0:
            raise GeometryError("cell_size must be positive")
        x_edges = self.x_min + np.arange(self.w_cells + 1) * self.cell_size
        y_edges = self.y_min + np.arange(self.h_cells + 1) * self.cell_size
        object.__setattr__(self, "_x_edges", _readonly(x_edges))
        object.__setattr__(self, "_y_edges", _readonly(y_edges))

    @property
    def n_cells(self):
        return self.h_cells * self.w_cells

    @property
    def x_max(self):
        return float(self._x_edges[-1])

    @property
    def y_max(self):
        return float(self._y_edges[-1])

    def cell_rect(self, index):
        """(x0, y0, x1, y1) of the flattened cell index."""
        h_b, w_b = divmod(int(index), self.w_cells)
        if not (0 <= h_b < self.h_cells):
            raise IndexError(f"cell index {index} out of range")
        return (
            float(self._x_edges[w_b]),
            float(self._y_edges[h_b]),
            float(self._x_edges[w_b + 1]),
            float(self._y_edges[h_b + 1]),
        )

    def locate(self, x, y):
        """Flattened index of the cell containing (x, y), or None if outside.

        Points exactly on an interior boundary belong to the cell on the
        positive side (half-open convention).
        """
        idx = self.locate_many(np.array([[x, y]], dtype=np.float64))[0]
        return int(idx) if idx >= 0 else None

    def locate_many(self, xy):
        """Vectorized locate; returns int64 indices with -1 for outside."""
        xy = np.asarray(xy, dtype=np.float64)
        if xy.ndim != 2 or xy.shape[1] != 2:
            raise ShapeError(f"locate_many: expected (p, 2) points, got {xy.shape}")
        ix = np.searchsorted(self._x_edges, xy[:, 0], side="right") - 1
        iy = np.searchsorted(self._y_edges, xy[:, 1], side="right") - 1
        ok = (ix >= 0) & (ix < self.w_cells) & (iy >= 0) & (iy < self.h_cells)
        return np.where(ok, iy * self.w_cells + ix, -1)


def make_bev_grid(extent, h_cells, w_cells):
    """Symmetric grid around the ego origin.

    `extent` is the half-width in meters along x; cells are square with
    cell_size = 2*extent / w_cells, and the y span is h_cells cells centered
    on the origin (identical to [-extent, extent) when h_cells == w_cells).
    """
    h_cells = int(h_cells)
    w_cells = int(w_cells)
    if h_cells < 1 or w_cells < 1:
        raise GeometryError("cell counts must be positive")
    if not extent > 0:
        raise GeometryError(f"extent must be positive, got {extent}")
    cell_size = 2.0 * float(extent) / w_cells
    y_half = cell_size * h_cells / 2.0
    return BevGrid(h_cells, w_cells, -float(extent), -y_half, cell_size)


@dataclass(frozen=True)
class FrustumGeometry:
    """Ego-frame ground coordinates of every (camera, column, depth) sample."""

    points_xyz: np.ndarray  # (N_c, W_I, N_d, 3)

    def __post_init__(self):
        p = _readonly(self.points_xyz)
        if p.ndim != 4 or p.shape[3] != 3:
            raise ShapeError(f"points_xyz must be (N_c, W_I, N_d, 3), got {p.shape}")
        object.__setattr__(self, "points_xyz", p)

    @property
    def points(self):
        """Ground-plane (x, y) samples, shape (N_c, W_I, N_d, 2)."""
        return self.points_xyz[..., :2]

    @property
    def n_cameras(self):
        return self.points_xyz.shape[0]

    @property
    def n_columns(self):
        return self.points_xyz.shape[1]

    @property
    def n_depths(self):
        return self.points_xyz.shape[2]


def generate_frustum(rig, bins, reference_row=None):
    """Back-project one pixel row of every camera through all depth bins.

    For camera n and feature column w, the source pixel is
    u = (w + 0.5) * stride, v = (reference_row + 0.5) * stride. The pixel ray
    K^-1 (u, v, 1) is scaled so its forward (optical-axis) component equals
    each bin center, then moved to the ego frame.

    Args:
        rig: CameraRig.
        bins: DepthBins.
        reference_row: feature row defining each column's ground ray;
            defaults to the middle row floor(H_I / 2).

    Returns:
        FrustumGeometry with points of shape (N_c, W_I, N_d, 3).
    """
    if reference_row is None:
        reference_row = rig.feature_height // 2
    reference_row = int(reference_row)
    if not 0 <= reference_row < rig.feature_height:
        raise GeometryError(
            f"reference_row {reference_row} out of range "
            f"[0, {rig.feature_height})"
        )
    w_i = rig.feature_width
    n_d = bins.count
    u = (np.arange(w_i) + 0.5) * rig.image_stride
    v = (reference_row + 0.5) * rig.image_stride
    pixels = np.stack([u, np.full(w_i, v), np.ones(w_i)])  # (3, W_I)

    points = np.empty((rig.n_cameras, w_i, n_d, 3))
    for n, cam in enumerate(rig.cameras):
        if abs(np.linalg.det(cam.intrinsics)) < 1e-12:
            raise GeometryError(f"camera {n}: singular intrinsics")
        rays = np.linalg.solve(cam.intrinsics, pixels)  # optical frame, z == 1
        rays /= rays[2]
        rays_body = _OPT_TO_BODY @ rays  # (3, W_I), forward component == 1
        # (W_I, N_d, 3): scale each unit-forward ray by the bin centers
        pts_body = rays_body.T[:, None, :] * bins.centers[None, :, None]
        points[n] = pts_body @ cam.rotation.T + cam.translation
    return FrustumGeometry(points)


def project_to_pixel(cam, points_ego):
    """Forward pinhole projection of ego-frame points to pixel coordinates.

    Args:
        cam: Camera.
        points_ego: (..., 3) ego-frame points.

    Returns:
        (pixels, forward): (..., 2) pixel coordinates and the (...,) planar
        depth of each point along the optical axis.
    """
    p = np.asarray(points_ego, dtype=np.float64)
    body = (p - cam.translation) @ cam.rotation
    optical = body @ _OPT_TO_BODY  # inverse permutation (orthonormal)
    uvw = optical @ cam.intrinsics.T
    return uvw[..., :2] / uvw[..., 2:3], optical[..., 2]


@dataclass(frozen=True)
class Scene:
    """A camera rig plus the depth and BEV discretizations used with it."""

    rig: CameraRig
    bins: DepthBins
    grid: BevGrid


def _require(mapping, key, where):
    if key not in mapping:
        raise ConfigError(f"{where}: missing field '{key}'")
    return mapping[key]


def load_scene(source):
    """Load a Scene from a config path, file object, or parsed dict.

    The document layout is::

        {"cameras": [{"intrinsics": [9 floats], "rotation": [9 floats],
                      "translation": [3 floats]}, ...],
         "feature_width": int, "feature_height": int, "image_stride": int,
         "depth": {"min": m, "max": m, "count": n},
         "bev": {"extent": m, "h_cells": n, "w_cells": n}}
    """
    if isinstance(source, dict):
        doc = source
    elif hasattr(source, "read"):
        doc = json.load(source)
    else:
        with open(source, "r", encoding="utf-8") as f:
            doc = json.load(f)
    if not isinstance(doc, dict):
        raise ConfigError("scene config must be a JSON object")

    cam_docs = _require(doc, "cameras", "scene config")
    if not isinstance(cam_docs, list) or not cam_docs:
        raise ConfigError("scene config: 'cameras' must be a non-empty list")
    cameras = []
    for i, cd in enumerate(cam_docs):
        where = f"cameras[{i}]"
        k = np.asarray(_require(cd, "intrinsics", where), dtype=np.float64)
        r = np.asarray(_require(cd, "rotation", where), dtype=np.float64)
        t = np.asarray(_require(cd, "translation", where), dtype=np.float64)
        if k.size != 9 or r.size != 9 or t.size != 3:
            raise ConfigError(f"{where}: expected 9+9+3 numbers")
        try:
            cameras.append(Camera(k.reshape(3, 3), r.reshape(3, 3), t))
        except GeometryError as exc:
            raise ConfigError(f"{where}: {exc}") from exc

    try:
        rig = CameraRig(
            tuple(cameras),
            int(_require(doc, "feature_width", "scene config")),
            int(_require(doc, "feature_height", "scene config")),
            int(_require(doc, "image_stride", "scene config")),
        )
        depth = _require(doc, "depth", "scene config")
        bins = make_depth_bins(
            float(_require(depth, "min", "depth")),
            float(_require(depth, "max", "depth")),
            int(_require(depth, "count", "depth")),
        )
        bev = _require(doc, "bev", "scene config")
        grid = make_bev_grid(
            float(_require(bev, "extent", "bev")),
            int(_require(bev, "h_cells", "bev")),
            int(_require(bev, "w_cells", "bev")),
        )
    except GeometryError as exc:
        raise ConfigError(str(exc)) from exc
    return Scene(rig, bins, grid)


def scene_to_dict(scene):
    """Inverse of load_scene, suitable for json.dump."""
    return {
        "cameras": [
            {
                "intrinsics": [float(x) for x in cam.intrinsics.ravel()],
                "rotation": [float(x) for x in cam.rotation.ravel()],
                "translation": [float(x) for x in cam.translation],
            }
            for cam in scene.rig.cameras
        ],
        "feature_width": scene.rig.feature_width,
        "feature_height": scene.rig.feature_height,
        "image_stride": scene.rig.image_stride,
        "depth": {
            "min": scene.bins.d_min,
            "max": scene.bins.d_max,
            "count": scene.bins.count,
        },
        "bev": {
            "extent": -scene.grid.x_min,
            "h_cells": scene.grid.h_cells,
            "w_cells": scene.grid.w_cells,
        },
    }


def scene_digest(scene_or_dict):
    """Stable SHA-256 of a scene config; used to detect stale matrix caches."""
    doc = (
        scene_to_dict(scene_or_dict)
        if isinstance(scene_or_dict, Scene)
        else scene_or_dict
    )
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def synthetic_scene_dict(
    n_cameras=6,
    feature_width=44,
    feature_height=16,
    image_stride=16,
    hfov_deg=70.0,
    radius=1.0,
    d_min=2.0,
    d_max=58.0,
    n_bins=112,
    bev_extent=51.2,
    bev_cells=128,
):
    """Config dict for an outward-facing ring of identical cameras."""
    img_w = feature_width * image_stride
    img_h = feature_height * image_stride
    fx = (img_w / 2.0) / np.tan(np.radians(hfov_deg) / 2.0)
    intrinsics = [fx, 0.0, img_w / 2.0, 0.0, fx, img_h / 2.0, 0.0, 0.0, 1.0]
    cameras = []
    for n in range(n_cameras):
        yaw = 2.0 * np.pi * n / n_cameras
        c, s = np.cos(yaw), np.sin(yaw)
        cameras.append(
            {
                "intrinsics": intrinsics,
                "rotation": [c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0],
                "translation": [radius * c, radius * s, 1.5],
            }
        )
    return {
        "cameras": cameras,
        "feature_width": feature_width,
        "feature_height": feature_height,
        "image_stride": image_stride,
        "depth": {"min": d_min, "max": d_max, "count": n_bins},
        "bev": {"extent": bev_extent, "h_cells": bev_cells, "w_cells": bev_cells},
    }
