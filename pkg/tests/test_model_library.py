"""Tests for surface sampling, voxel downsampling, ray casting and model crops."""

from dataclasses import replace

import numpy as np
import pytest

from multipose.concurrency.worker import WorkerPool
from multipose.core.exceptions import EmptyCropError, EmptyMeshError, GeometryError
from multipose.core.geometry import PointCloud
from multipose.core.models import PipelineConfig
from multipose.formats import load_mesh, save_mesh
from multipose.library.crops import (
    CropCache,
    CropRenderer,
    build_object_model,
    fibonacci_directions,
    generate_crops,
)
from multipose.library.mesh import MeshModel
from multipose.library.primitives import SHAPES, box, make_shape, plate, sphere
from multipose.library.raycast import RayCaster, intersect, look_at
from multipose.library.sampling import sample_surface, voxel_downsample

SMALL = replace(PipelineConfig(), n_crops=6, model_sample_count=4000)


def brute_force_voxels(points: np.ndarray, leaf: float) -> np.ndarray:
    """Centroids per voxel key, keys ascending."""
    bins: dict[tuple[int, int, int], list[np.ndarray]] = {}
    for p in points:
        bins.setdefault(tuple(int(k) for k in np.floor(p / leaf)), []).append(p)
    return np.array([np.mean(bins[key], axis=0) for key in sorted(bins)])


def test_unit_cube_mesh_file(tmp_path):
    """Test that a saved unit cube loads back with 8 vertices and 12 triangles."""
    path = tmp_path / "cube.ply"
    save_mesh(box(), str(path))
    mesh = load_mesh(str(path))
    assert mesh.vertices.shape == (8, 3)
    assert mesh.triangle_count == 12


def test_samples_on_single_triangle():
    """Test that samples of one triangle lie in its plane."""
    mesh = MeshModel([[0.0, 0.0, 0.3], [0.1, 0.0, 0.3], [0.0, 0.1, 0.3]], [[0, 1, 2]])
    cloud = sample_surface(mesh, 100, seed=0)
    assert len(cloud) == 100
    assert np.allclose(cloud.points[:, 2], 0.3, atol=1e-9)
    assert np.all(cloud.points[:, :2].sum(axis=1) <= 0.1 + 1e-12)


def test_sampling_is_area_weighted():
    """Test per-face counts on a unit cube stay within 3 sigma of uniform."""
    points = sample_surface(box(), 6000, seed=5).points
    # each point sits on the face whose coordinate reaches +-0.5
    axis = np.argmax(np.abs(points), axis=1)
    face = axis * 2 + (points[np.arange(len(points)), axis] > 0)
    counts = np.bincount(face, minlength=6)
    sigma = np.sqrt(6000 * (1 / 6) * (5 / 6))
    assert np.all(np.abs(counts - 1000) <= 3 * sigma)


def test_sampling_is_deterministic_per_seed():
    """Test that one seed always draws the same cloud."""
    mesh = sphere(0.05)
    assert np.array_equal(sample_surface(mesh, 500, 3).points, sample_surface(mesh, 500, 3).points)
    assert not np.array_equal(sample_surface(mesh, 500, 3).points, sample_surface(mesh, 500, 4).points)


def test_sampling_errors():
    """Test empty meshes and non-positive counts."""
    with pytest.raises(EmptyMeshError):
        sample_surface(MeshModel(np.zeros((3, 3)), np.zeros((0, 3))), 10, 0)
    with pytest.raises(GeometryError):
        sample_surface(box(), 0, 0)


def test_voxel_downsample_large_leaf():
    """Test that a leaf wider than the cloud leaves one point at the centroid."""
    pts = np.random.default_rng(0).uniform(0.0, 0.5, size=(100, 3))
    out = voxel_downsample(PointCloud(pts), 10.0)
    assert len(out) == 1
    assert np.allclose(out.points[0], pts.mean(axis=0))


def test_voxel_downsample_keeps_distant_points():
    """Test that points 1 m apart survive a 1 cm leaf."""
    out = voxel_downsample(PointCloud(np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])), 0.01)
    assert len(out) == 2


def test_voxel_downsample_matches_binning_oracle():
    """Test output order and centroids against dictionary binning."""
    pts = np.random.default_rng(4).normal(scale=0.05, size=(2000, 3))
    out = voxel_downsample(PointCloud(pts), 0.01)
    expected = brute_force_voxels(pts, 0.01)
    assert out.points.shape == expected.shape
    assert np.allclose(out.points, expected, atol=1e-12)
    keys = np.floor(out.points / 0.01).astype(np.int64)
    assert len({tuple(k) for k in keys}) == len(keys)


def test_voxel_leaf_must_be_positive():
    """Test that a zero leaf is rejected."""
    with pytest.raises(GeometryError):
        voxel_downsample(PointCloud(np.zeros((2, 3))), 0.0)


def test_look_at_optical_frame():
    """Test that the target lands on the optical axis and world +z points up in the image."""
    eye = np.array([1.0, 0.0, 0.0])
    rotation = look_at(eye, np.zeros(3))
    assert np.allclose(rotation @ (np.zeros(3) - eye), [0.0, 0.0, 1.0])
    assert rotation @ np.array([0.0, 0.0, 1.0]) @ np.array([0.0, 1.0, 0.0]) < 0.0
    assert np.allclose(rotation @ rotation.T, np.eye(3))


def test_ray_caster_matches_brute_force():
    """Test binned casting against testing every triangle."""
    rng = np.random.default_rng(8)
    centers = np.column_stack([rng.uniform(-0.5, 0.5, (300, 2)), rng.uniform(1.0, 2.0, 300)])
    corners = centers[:, None, :] + rng.normal(scale=0.05, size=(300, 3, 3))
    directions = np.column_stack([rng.uniform(-0.4, 0.4, (2000, 2)), np.ones(2000)])
    caster = RayCaster(corners, np.zeros(3), np.eye(3))
    t_binned, tri_binned = caster.cast(directions)
    t_all, tri_all = intersect(directions, corners)
    assert np.array_equal(np.isfinite(t_binned), np.isfinite(t_all))
    hit = np.isfinite(t_all)
    assert hit.any()
    assert np.allclose(t_binned[hit], t_all[hit], rtol=1e-12)
    assert np.array_equal(tri_binned[hit], tri_all[hit])


def test_ray_caster_rejects_triangles_behind_eye():
    """Test that geometry behind the eye is refused."""
    tri = np.array([[[0.0, 0.0, -1.0], [1.0, 0.0, -1.0], [0.0, 1.0, -1.0]]])
    with pytest.raises(GeometryError):
        RayCaster(tri, np.zeros(3), np.eye(3))


def test_fibonacci_directions_are_unit():
    """Test view directions lie on the unit sphere and cover both hemispheres."""
    d = fibonacci_directions(30)
    assert d.shape == (30, 3)
    assert np.allclose(np.linalg.norm(d, axis=1), 1.0)
    assert d[:, 2].max() > 0.9 and d[:, 2].min() < -0.9
    with pytest.raises(GeometryError):
        fibonacci_directions(0)


def test_thirty_crops_are_subsets_of_the_model_cloud():
    """Test crop count, ids and the subset property."""
    mesh = make_shape("mug", 2)
    cfg = replace(SMALL, n_crops=30)
    model = build_object_model(mesh, cfg)
    assert len(model.crops) == 30
    assert [c.crop_id for c in model.crops] == list(range(30))
    cloud = {tuple(p) for p in model.cloud.points}
    for crop in model.crops:
        assert len(crop) > 0
        assert crop.source_class == 2
        assert all(tuple(p) in cloud for p in crop.points.points)


def test_sphere_crop_is_a_hemisphere():
    """Test that a distant view of a sphere sees about half its cloud."""
    renderer = CropRenderer(sphere(0.05), 20000, 0.005, seed=0, camera_distance_factor=100.0)
    for i, direction in enumerate(fibonacci_directions(4)):
        crop = renderer.render(i, direction)
        assert len(crop) / len(renderer.cloud) == pytest.approx(0.5, abs=0.05)


def test_plate_front_and_back():
    """Test a one-sided plate: full crop from the front, nothing from behind."""
    renderer = CropRenderer(plate(0.12, 0.08), 5000, 0.005, seed=0)
    front = renderer.render(0, np.array([0.0, 0.0, 1.0]))
    assert len(front) == len(renderer.cloud)
    with pytest.raises(EmptyCropError) as info:
        renderer.render(1, np.array([0.0, 0.0, -1.0]))
    assert info.value.crop_id == 1


def test_crops_cover_a_convex_mesh():
    """Test that the union of 30 crops of a box covers at least 95% of its cloud."""
    renderer = CropRenderer(box(0.08, 0.08, 0.08), 8000, 0.005, seed=1)
    seen = np.zeros(len(renderer.cloud), dtype=bool)
    for direction in fibonacci_directions(30):
        mask, _ = renderer.visible_voxels(direction)
        seen |= mask
    assert seen.mean() >= 0.95


def test_crop_generation_is_deterministic_across_pools():
    """Test identical crops with and without a worker pool."""
    mesh = make_shape("lblock", 1)
    serial = generate_crops(mesh, 8, 3000, 0.005, seed=2)
    with WorkerPool(4) as pool:
        parallel = generate_crops(mesh, 8, 3000, 0.005, seed=2, pool=pool)
    for a, b in zip(serial, parallel):
        assert a.crop_id == b.crop_id
        assert np.array_equal(a.points.points, b.points.points)
        assert a.view_rotation.to_tuple() == b.view_rotation.to_tuple()


def test_crop_cache_round_trip(tmp_path):
    """Test that a cache entry reloads to the same crops."""
    mesh = make_shape("bottle", 3)
    cache = CropCache(tmp_path)
    built = cache.get_or_create(mesh, SMALL)
    entry = cache.entry_dir(mesh, SMALL)
    assert len(list(entry.glob("crop_*.ply"))) == SMALL.n_crops
    loaded = cache.load(entry, mesh)
    assert np.array_equal(loaded.cloud.points, built.cloud.points)
    for a, b in zip(built.crops, loaded.crops):
        assert np.array_equal(a.points.points, b.points.points)
        assert a.azimuth == b.azimuth and a.elevation == b.elevation


def test_crop_cache_files_are_byte_identical(tmp_path):
    """Test that two builds write the same bytes."""
    mesh = make_shape("box", 1)
    a, b = CropCache(tmp_path / "a"), CropCache(tmp_path / "b")
    a.get_or_create(mesh, SMALL)
    b.get_or_create(mesh, SMALL)
    da, db = a.entry_dir(mesh, SMALL), b.entry_dir(mesh, SMALL)
    assert da.name == db.name
    for f in sorted(da.iterdir()):
        assert f.read_bytes() == (db / f.name).read_bytes()


def test_crop_cache_rebuilds_corrupt_entry(tmp_path):
    """Test that a tampered crop file is detected and regenerated."""
    mesh = make_shape("box", 1)
    cache = CropCache(tmp_path)
    cache.get_or_create(mesh, SMALL)
    entry = cache.entry_dir(mesh, SMALL)
    target = entry / "crop_000.ply"
    original = target.read_bytes()
    target.write_bytes(original[:-8])
    cache.get_or_create(mesh, SMALL)
    assert target.read_bytes() == original


def test_cache_key_depends_on_parameters(tmp_path):
    """Test that changing the crop count gives a different entry."""
    mesh = make_shape("box", 1)
    cache = CropCache(tmp_path)
    assert cache.entry_dir(mesh, SMALL) != cache.entry_dir(mesh, replace(SMALL, n_crops=7))


def test_named_shapes():
    """Test that every named shape builds a small non-empty mesh."""
    for name in SHAPES:
        mesh = make_shape(name, 5)
        assert mesh.class_id == 5
        assert mesh.triangle_count > 0
        _, radius = mesh.bounding_sphere()
        assert 0.0 < radius < 0.3
    with pytest.raises(KeyError):
        make_shape("teapot")
