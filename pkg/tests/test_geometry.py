import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from bevx import (
    Camera,
    CameraRig,
    ConfigError,
    DepthBins,
    GeometryError,
    Scene,
    generate_frustum,
    load_scene,
    make_bev_grid,
    make_depth_bins,
    scene_digest,
    scene_to_dict,
    synthetic_scene_dict,
)
from bevx.geometry import project_to_pixel
from oracles import locate_scan, locate_scan_pure, random_scene


def simple_camera(f=10.0, cx=2.0, cy=2.0, rotation=None, translation=(0, 0, 0)):
    k = np.array([[f, 0.0, cx], [0.0, f, cy], [0.0, 0.0, 1.0]])
    r = np.eye(3) if rotation is None else rotation
    return Camera(k, r, np.asarray(translation, dtype=float))


def yaw(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


class TestDepthBins:
    def test_default_rig_range(self):
        bins = make_depth_bins(2, 58, 112)
        assert bins.centers[0] == pytest.approx(2.25)
        assert np.diff(bins.centers) == pytest.approx(0.5)
        assert bins.centers[111] == pytest.approx(57.75)

    def test_single_bin_midpoint(self):
        assert make_depth_bins(0, 1, 1).centers.tolist() == [0.5]

    def test_errors(self):
        with pytest.raises(GeometryError):
            make_depth_bins(2, 58, 0)
        with pytest.raises(GeometryError):
            make_depth_bins(58, 2, 4)

    def test_invariants_enforced(self):
        with pytest.raises(GeometryError, match="uniform"):
            DepthBins(0.0, 10.0, 3, np.array([1.0, 2.0, 9.0]))
        with pytest.raises(GeometryError, match="increasing"):
            DepthBins(0.0, 10.0, 2, np.array([5.0, 4.0]))
        with pytest.raises(GeometryError, match="inside"):
            DepthBins(5.0, 10.0, 2, np.array([1.0, 6.0]))


class TestCamera:
    def test_valid(self):
        cam = simple_camera()
        assert cam.intrinsics[0, 0] == 10.0

    def test_rejects_non_orthonormal_rotation(self):
        with pytest.raises(GeometryError, match="orthonormal"):
            simple_camera(rotation=np.eye(3) * 1.001)

    def test_rejects_bad_bottom_row(self):
        k = np.array([[10.0, 0, 2], [0, 10.0, 2], [0, 0.1, 1]])
        with pytest.raises(GeometryError, match="bottom row"):
            Camera(k, np.eye(3), np.zeros(3))

    def test_rejects_non_positive_focal(self):
        k = np.array([[-10.0, 0, 2], [0, 10.0, 2], [0, 0, 1]])
        with pytest.raises(GeometryError, match="focal"):
            Camera(k, np.eye(3), np.zeros(3))

    def test_rejects_bad_shapes(self):
        with pytest.raises(GeometryError):
            Camera(np.eye(2), np.eye(3), np.zeros(3))

    def test_rig_validation(self):
        with pytest.raises(GeometryError, match="at least one"):
            CameraRig((), 4, 4, 8)
        with pytest.raises(GeometryError, match="positive"):
            CameraRig((simple_camera(),), 0, 4, 8)


class TestGenerateFrustum:
    def test_principal_column_maps_to_forward_axis(self):
        # principal point at the column-0 center: u = 0.5 * stride = cx
        stride = 4
        cam = simple_camera(cx=0.5 * stride, cy=0.5 * stride)
        rig = CameraRig((cam,), 1, 1, stride)
        bins = make_depth_bins(1, 9, 4)
        pts = generate_frustum(rig, bins, 0).points_xyz[0, 0]
        np.testing.assert_allclose(pts[:, 0], bins.centers, atol=1e-12)
        np.testing.assert_allclose(pts[:, 1], 0.0, atol=1e-12)

    def test_yaw_90_maps_to_lateral_axis(self):
        stride = 4
        cam = simple_camera(
            cx=0.5 * stride, cy=0.5 * stride, rotation=yaw(np.pi / 2)
        )
        rig = CameraRig((cam,), 1, 1, stride)
        bins = make_depth_bins(1, 9, 4)
        pts = generate_frustum(rig, bins, 0).points_xyz[0, 0]
        np.testing.assert_allclose(pts[:, 0], 0.0, atol=1e-12)
        np.testing.assert_allclose(pts[:, 1], bins.centers, atol=1e-12)

    def test_default_reference_row_is_middle(self):
        rig = CameraRig((simple_camera(cx=8, cy=8),), 4, 5, 4)
        bins = make_depth_bins(1, 5, 3)
        default = generate_frustum(rig, bins)
        explicit = generate_frustum(rig, bins, 2)
        np.testing.assert_array_equal(default.points_xyz, explicit.points_xyz)

    def test_reference_row_out_of_range(self):
        rig = CameraRig((simple_camera(),), 4, 4, 4)
        bins = make_depth_bins(1, 5, 3)
        with pytest.raises(GeometryError, match="reference_row"):
            generate_frustum(rig, bins, 4)

    def test_singular_intrinsics(self):
        # positive focals but linearly dependent first two rows
        k = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        cam = Camera(k, np.eye(3), np.zeros(3))
        rig = CameraRig((cam,), 2, 2, 4)
        with pytest.raises(GeometryError, match="singular"):
            generate_frustum(rig, make_depth_bins(1, 5, 2))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_reprojection_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        stride = 8
        w_i, h_i, n_d = 6, 4, 5
        img_w, img_h = w_i * stride, h_i * stride
        k = np.array(
            [
                [rng.uniform(40, 200), 0.0, img_w / 2 + rng.uniform(-3, 3)],
                [0.0, rng.uniform(40, 200), img_h / 2 + rng.uniform(-3, 3)],
                [0.0, 0.0, 1.0],
            ]
        )
        r = Rotation.random(random_state=int(seed)).as_matrix()
        t = rng.uniform(-3, 3, size=3)
        cam = Camera(k, r, t)
        rig = CameraRig((cam,), w_i, h_i, stride)
        bins = make_depth_bins(rng.uniform(1, 3), rng.uniform(10, 40), n_d)
        row = int(rng.integers(0, h_i))
        fr = generate_frustum(rig, bins, row)
        pixels, forward = project_to_pixel(cam, fr.points_xyz[0])
        u = (np.arange(w_i) + 0.5) * stride
        v = (row + 0.5) * stride
        assert np.abs(pixels[..., 0] - u[:, None]).max() < 1e-4
        assert np.abs(pixels[..., 1] - v).max() < 1e-4
        np.testing.assert_allclose(forward, np.broadcast_to(bins.centers, (w_i, n_d)), rtol=1e-9)

    def test_collinearity_per_column(self, rng):
        scene = random_scene(rng, n_cameras=3, w_i=6, h_i=4, n_d=12)
        fr = generate_frustum(scene.rig, scene.bins)
        pts = fr.points_xyz
        for n in range(3):
            for w in range(6):
                p = pts[n, w]
                d0 = p[-1] - p[0]
                d0 /= np.linalg.norm(d0)
                rel = p[1:] - p[0]
                cross = np.linalg.norm(np.cross(rel, d0), axis=-1)
                assert cross.max() < 1e-6

    def test_range_non_decreasing_for_origin_camera(self):
        cam = simple_camera(f=8.0, cx=6.0, cy=6.0)
        rig = CameraRig((cam,), 3, 3, 4)
        bins = make_depth_bins(1, 20, 10)
        fr = generate_frustum(rig, bins)
        norms = np.linalg.norm(fr.points, axis=-1)
        assert (np.diff(norms, axis=-1) >= -1e-12).all()


class TestBevGrid:
    def test_default_rig_cell_size(self):
        grid = make_bev_grid(51.2, 128, 128)
        assert grid.cell_size == pytest.approx(0.8)
        assert grid.n_cells == 128 * 128

    def test_tiny_grid_tiles_extent(self):
        grid = make_bev_grid(1, 2, 2)
        assert grid.cell_size == 1.0 and grid.n_cells == 4
        rects = [grid.cell_rect(i) for i in range(4)]
        assert rects[0] == (-1.0, -1.0, 0.0, 0.0)
        assert rects[3] == (0.0, 0.0, 1.0, 1.0)

    def test_origin_cell_on_even_grid(self):
        for cells in (2, 4, 128):
            grid = make_bev_grid(5.0, cells, cells)
            x0, y0, _, _ = grid.cell_rect(grid.locate(0.0, 0.0))
            assert x0 == 0.0 and y0 == 0.0

    def test_non_square_grid_tiles_exactly(self):
        grid = make_bev_grid(8.0, 6, 4)
        assert grid.cell_size == pytest.approx(4.0)
        assert grid.x_max - grid.x_min == pytest.approx(grid.w_cells * grid.cell_size)
        assert grid.y_max - grid.y_min == pytest.approx(grid.h_cells * grid.cell_size)

    def test_zero_cells_rejected(self):
        with pytest.raises(GeometryError):
            make_bev_grid(1.0, 0, 4)
        with pytest.raises(GeometryError):
            make_bev_grid(0.0, 4, 4)

    def test_locate_outside_is_absent(self):
        grid = make_bev_grid(2.0, 4, 4)
        assert grid.locate(3.0, 0.0) is None
        assert grid.locate(0.0, -2.5) is None
        assert grid.locate(2.0, 0.0) is None  # right edge is exclusive

    def test_locate_boundary_goes_to_positive_side(self):
        grid = make_bev_grid(2.0, 4, 4)
        s = grid.locate(0.0, -1.0)
        x0, y0, _, _ = grid.cell_rect(s)
        assert x0 == 0.0 and y0 == -1.0

    def test_locate_matches_scan_oracle(self, rng):
        grid = make_bev_grid(3.5, 7, 5)
        pts = rng.uniform(-5, 5, size=(10_000, 2))
        got = grid.locate_many(pts)
        for (x, y), s in zip(pts, got):
            assert (None if s < 0 else int(s)) == locate_scan(grid, x, y)

    def test_scan_oracle_matches_pure_python(self, rng):
        grid = make_bev_grid(2.0, 3, 4)
        for x, y in rng.uniform(-3, 3, size=(200, 2)):
            assert locate_scan(grid, x, y) == locate_scan_pure(grid, x, y)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-10, 10), st.floats(-10, 10))
    def test_partition_property(self, x, y):
        grid = make_bev_grid(6.0, 5, 8)
        inside = grid.x_min <= x < grid.x_max and grid.y_min <= y < grid.y_max
        s = grid.locate(x, y)
        if inside:
            x0, y0, x1, y1 = grid.cell_rect(s)
            assert x0 <= x < x1 and y0 <= y < y1
        else:
            assert s is None

    def test_cell_rect_bad_index(self):
        grid = make_bev_grid(1.0, 2, 2)
        with pytest.raises(IndexError):
            grid.cell_rect(4)


class TestSceneConfig:
    def test_round_trip(self, small_scene):
        doc = scene_to_dict(small_scene)
        again = load_scene(doc)
        assert scene_to_dict(again) == doc
        assert scene_digest(again) == scene_digest(small_scene)

    def test_load_from_file_object(self):
        doc = synthetic_scene_dict(n_cameras=1, feature_width=4, feature_height=2)
        scene = load_scene(io.StringIO(json.dumps(doc)))
        assert scene.rig.n_cameras == 1

    def test_digest_changes_with_content(self):
        a = synthetic_scene_dict(n_cameras=2)
        b = synthetic_scene_dict(n_cameras=3)
        assert scene_digest(a) != scene_digest(b)

    def test_missing_field(self):
        doc = synthetic_scene_dict(n_cameras=1)
        del doc["depth"]
        with pytest.raises(ConfigError, match="depth"):
            load_scene(doc)

    def test_bad_camera_wrapped(self):
        doc = synthetic_scene_dict(n_cameras=1)
        doc["cameras"][0]["rotation"] = [2.0, 0, 0, 0, 2.0, 0, 0, 0, 2.0]
        with pytest.raises(ConfigError, match=r"cameras\[0\]"):
            load_scene(doc)

    def test_cameras_must_be_nonempty(self):
        doc = synthetic_scene_dict(n_cameras=1)
        doc["cameras"] = []
        with pytest.raises(ConfigError):
            load_scene(doc)

    def test_non_object_document(self):
        with pytest.raises(ConfigError):
            load_scene(io.StringIO("[1, 2, 3]"))

    def test_scene_fields(self, small_scene):
        assert isinstance(small_scene, Scene)
        assert small_scene.rig.feature_width == 8
        assert small_scene.bins.count == 16
        assert small_scene.grid.h_cells == 24
