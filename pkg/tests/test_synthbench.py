import logging

import numpy as np
import pytest

from flowpriors.camera import CameraParams, project_points, unproject, unproject_depth
from flowpriors.errors import CorruptionError, ValidationError
from flowpriors.fields.clip import validate_clip
from flowpriors.fields.dense import BACKGROUND_TRIANGLE, Grid
from flowpriors.kinematics import JointAngles, Pose, forward_kinematics
from flowpriors.synthbench import (
    GROUND_Y,
    GarmentParams,
    GarmentState,
    MotionScript,
    advance_garment,
    build_humanoid,
    dump_flow_ppms,
    generate_scene,
    orbit_camera,
    pixel_flow_gt,
    preset_script,
    rasterize_frame,
    skin_vertices,
)

GRID = Grid(32, 32)
CAMERA = CameraParams.identity(GRID, (1.0, 1.0, 0.5, 0.5))


def _lift(pixels, depths, camera=CAMERA):
    return np.array([unproject(p, d, camera) for p, d in zip(pixels, depths)])


def _brute_force(vertices, triangles, camera, grid):
    """Per-pixel loop over all triangles, nearest perspective-correct hit."""
    uv, z = project_points(vertices, camera)
    ids = np.full(grid.shape, BACKGROUND_TRIANGLE, dtype=np.int64)
    depth = np.full(grid.shape, np.inf)
    for v in range(grid.height):
        for u in range(grid.width):
            for t, (a, b, c) in enumerate(triangles):
                (ax, ay), (bx, by), (cx, cy) = uv[a], uv[b], uv[c]
                area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
                wa = ((cx - bx) * (v - by) - (cy - by) * (u - bx)) / area
                wb = ((ax - cx) * (v - cy) - (ay - cy) * (u - cx)) / area
                wc = 1.0 - wa - wb
                if min(wa, wb, wc) < 0:
                    continue
                hit = 1.0 / (wa / z[a] + wb / z[b] + wc / z[c])
                if hit < depth[v, u]:
                    depth[v, u], ids[v, u] = hit, t
    return ids, depth


def test_rasterizer_matches_brute_force(rng):
    vertices = np.concatenate(
        [_lift(rng.uniform(-4, 36, size=(3, 2)), rng.uniform(1.0, 4.0, size=3)) for _ in range(12)]
    )
    triangles = np.arange(36).reshape(12, 3)
    buffers = rasterize_frame(vertices, triangles, CAMERA, GRID)
    ids, depth = _brute_force(vertices, triangles, CAMERA, GRID)

    # centers on edges may resolve differently; they are rare for random corners
    agree = buffers.triangle_ids.astype(np.int64) == ids
    assert agree.mean() > 0.99
    both = agree & (ids != BACKGROUND_TRIANGLE)
    assert np.allclose(buffers.depth[both], depth[both], rtol=1e-9)


def test_single_triangle_by_hand():
    vertices = _lift([(4, 4), (20, 4), (4, 20)], [2.0, 2.0, 2.0])
    buffers = rasterize_frame(vertices, np.array([[0, 1, 2]]), CAMERA, GRID)
    assert buffers.triangle_ids[8, 8] == 0
    assert buffers.depth[8, 8] == pytest.approx(2.0)
    assert np.allclose(buffers.barycentrics[8, 8], [0.5, 0.25, 0.25])
    # row 8 is v = 8, column 12 is u = 12
    assert np.allclose(buffers.barycentrics[8, 12], [0.25, 0.5, 0.25])
    assert buffers.triangle_ids[25, 25] == BACKGROUND_TRIANGLE
    assert np.isinf(buffers.depth[25, 25])
    assert not np.any(buffers.barycentrics[25, 25])


def test_winding_does_not_change_barycentric_slots():
    vertices = _lift([(4, 4), (4, 20), (20, 4)], [2.0, 2.0, 2.0])
    buffers = rasterize_frame(vertices, np.array([[0, 1, 2]]), CAMERA, GRID)
    assert np.allclose(buffers.barycentrics[12, 8], [0.25, 0.5, 0.25])


def test_shared_edge_leaves_no_holes():
    vertices = _lift([(4, 4), (20, 4), (20, 20), (4, 20)], [2.0] * 4)
    buffers = rasterize_frame(vertices, np.array([[0, 1, 2], [0, 2, 3]]), CAMERA, GRID)
    square = buffers.triangle_ids[5:20, 5:20]
    assert np.all(square != BACKGROUND_TRIANGLE)
    assert set(np.unique(square)) == {0, 1}


def test_nearest_surface_wins_and_ties_go_to_lower_id():
    far = _lift([(2, 2), (30, 2), (2, 30)], [3.0] * 3)
    near = _lift([(2, 2), (30, 2), (2, 30)], [1.5] * 3)
    vertices = np.concatenate([far, near, near])
    buffers = rasterize_frame(vertices, np.arange(9).reshape(3, 3), CAMERA, GRID)
    assert buffers.triangle_ids[6, 6] == 1
    assert buffers.depth[6, 6] == pytest.approx(1.5)


def test_perspective_correct_barycentrics_hit_the_surface():
    vertices = _lift([(2, 3), (29, 6), (8, 28)], [1.0, 2.5, 4.0])
    triangles = np.array([[0, 1, 2]])
    buffers = rasterize_frame(vertices, triangles, CAMERA, GRID)
    for v, u in zip(*np.nonzero(buffers.foreground)):
        surface = buffers.barycentrics[v, u] @ vertices
        assert np.allclose(unproject((u, v), buffers.depth[v, u], CAMERA), surface, atol=1e-9)


def test_behind_camera_is_empty(caplog):
    vertices = np.array([[-1.0, -1.0, -2.0], [1.0, -1.0, -2.0], [0.0, 1.0, -2.0]])
    with caplog.at_level(logging.WARNING):
        buffers = rasterize_frame(vertices, np.array([[0, 1, 2]]), CAMERA, GRID)
    assert buffers.empty
    assert "no foreground" in caplog.text


def test_flow_from_vertex_motion():
    vertices = _lift([(4, 4), (28, 4), (16, 28)], [2.0, 2.5, 3.0])
    triangles = np.array([[0, 1, 2]])
    buffers = rasterize_frame(vertices, triangles, CAMERA, GRID)

    static = pixel_flow_gt(buffers, vertices, vertices, triangles)
    assert not np.any(static.values)

    shift = np.array([0.01, -0.02, 0.03])
    moved = pixel_flow_gt(buffers, vertices, vertices + shift, triangles)
    assert np.allclose(moved.values[buffers.foreground], shift)
    assert not np.any(moved.values[~buffers.foreground])


def test_flow_advects_surface_points(rng):
    vertices = _lift([(4, 4), (28, 4), (16, 28)], [2.0, 2.5, 3.0])
    triangles = np.array([[0, 1, 2]])
    following = vertices + rng.normal(scale=0.02, size=vertices.shape)
    buffers = rasterize_frame(vertices, triangles, CAMERA, GRID)
    flow = pixel_flow_gt(buffers, vertices, following, triangles)
    for v, u in zip(*np.nonzero(buffers.foreground)):
        start = unproject((u, v), buffers.depth[v, u], CAMERA)
        target = buffers.barycentrics[v, u] @ following
        assert np.linalg.norm(start + flow.values[v, u] - target) <= 1e-6


def test_flow_rejects_unknown_triangle():
    vertices = _lift([(4, 4), (28, 4), (16, 28)], [2.0] * 3)
    buffers = rasterize_frame(vertices, np.array([[0, 1, 2]]), CAMERA, GRID)
    with pytest.raises(CorruptionError) as error:
        pixel_flow_gt(buffers, vertices, vertices, np.zeros((0, 3), dtype=np.int64))
    assert error.value.tag == "TRID"


def test_humanoid_invariants(skeleton):
    h = build_humanoid(skeleton)
    h.check()
    assert np.allclose(h.skin_weights.sum(axis=1), 1.0)
    assert h.triangles.max() < h.vertex_count
    tagged = h.garment_tagged
    assert tagged.any() and not tagged.all()
    assert np.all((h.garment_gain[tagged] >= 0.5) & (h.garment_gain[tagged] <= 1.0))
    assert not np.any(h.garment_gain[~tagged])


def test_humanoid_seed_only_changes_garment_gains(skeleton):
    a, b, c = build_humanoid(skeleton, seed=3), build_humanoid(skeleton, seed=3), build_humanoid(skeleton, seed=4)
    assert np.array_equal(a.vertices, c.vertices)
    assert np.array_equal(a.garment_gain, b.garment_gain)
    assert not np.array_equal(a.garment_gain, c.garment_gain)


def test_humanoid_needs_subdivisions(skeleton):
    with pytest.raises(ValidationError):
        build_humanoid(skeleton, subdivisions=3)


def test_rest_skinning_is_identity(skeleton):
    h = build_humanoid(skeleton, subdivisions=4)
    posed = skin_vertices(h, JointAngles.rest(skeleton), GarmentState.zeros(skeleton))
    assert np.allclose(posed, h.vertices, atol=1e-12)


def test_root_translation_moves_every_vertex(skeleton):
    h = build_humanoid(skeleton, subdivisions=4)
    rest = JointAngles.rest(skeleton)
    shifted = rest.replace(root=rest.root + np.array([0.1, 0.2, -0.3]))
    assert np.allclose(skin_vertices(h, shifted) - h.vertices, [0.1, 0.2, -0.3])


def test_garment_offset_is_capped_and_perpendicular(skeleton, rng):
    params = GarmentParams()
    state = GarmentState.zeros(skeleton)
    rest = skeleton.rest_pose()
    previous = rest
    for _ in range(30):
        current = Pose(rest.joints + rng.normal(scale=0.01, size=rest.joints.shape))
        state = advance_garment(state, previous, current, skeleton, params, 1.0 / 30.0)
        bones = current.joints[1:] - current.joints[skeleton.bone_parents]
        bones /= np.linalg.norm(bones, axis=1, keepdims=True)
        assert np.all(np.linalg.norm(state.offsets, axis=1) <= params.max_offset + 1e-12)
        assert np.allclose(np.einsum("bk,bk->b", state.offsets, bones), 0.0, atol=1e-12)
        previous = current


def test_garment_settles_when_still(skeleton):
    pose = skeleton.rest_pose()
    state = GarmentState(np.full((skeleton.bone_count, 3), 0.005))
    for _ in range(60):
        state = advance_garment(state, pose, pose, skeleton, GarmentParams(), 1.0 / 30.0)
    assert np.max(np.abs(state.offsets)) < 1e-4


def test_motion_script_validation(skeleton):
    q = JointAngles.rest(skeleton)
    with pytest.raises(ValidationError):
        MotionScript(((5, q), (5, q)))
    with pytest.raises(ValidationError):
        MotionScript(((0, q),), GarmentParams(max_offset=0.02))
    with pytest.raises(ValidationError):
        preset_script("dance", 10, skeleton, GROUND_Y)


def test_walk_keyposes_plant_both_feet(skeleton):
    script = preset_script("walk", 16, skeleton, GROUND_Y)
    assert script.frames == [0, 5, 10, 15]
    assert script.windows() == [(0, 5), (5, 10), (10, 15)]
    feet = [skeleton.index("left_foot"), skeleton.index("right_foot")]
    for frame in script.frames:
        heights = forward_kinematics(script.angles_at(frame), skeleton).joints[feet, 1] - GROUND_Y
        assert np.allclose(heights, 0.03, atol=1e-9)
    assert script.angles_at(40) == script.angles_at(15)


def test_generated_clip_is_valid(walk_clip, skeleton):
    assert len(walk_clip) == 16
    assert validate_clip(walk_clip, skeleton) == []
    assert not np.any(walk_clip[-1].flow.values)
    for frame in walk_clip:
        assert frame.mask.count > 0
        foreground = frame.mask.foreground
        assert np.array_equal(frame.depth.values[foreground], frame.raster.depth[foreground])


def test_idle_clip_has_zero_flow(idle_clip):
    for frame in idle_clip:
        assert not np.any(frame.flow.values)


def test_generation_is_deterministic():
    grid = Grid(40, 40)
    a = generate_scene("swing", grid, 3, seed=2, threads=1)
    b = generate_scene("swing", grid, 3, seed=2, threads=4)
    assert a == b


def test_orbit_keeps_world_flow():
    grid = Grid(48, 48)
    still = generate_scene("walk", grid, 3, seed=5)
    orbit = generate_scene("walk", grid, 3, seed=5, orbit=True)
    assert orbit[0].flow == still[0].flow
    # the camera has barely moved by frame 1: depth changes before any silhouette pixel does
    assert np.max(np.abs(orbit[1].depth.values - still[1].depth.values)) > 1e-3
    assert orbit[1].camera != still[1].camera
    assert all(a.pose == b.pose for a, b in zip(orbit, still))


def test_orbit_camera_turns_about_subject():
    camera = orbit_camera(10, GRID)
    assert camera.is_valid()
    assert np.linalg.norm(camera.translation - np.array([0.0, 0.0, 3.5])) == pytest.approx(3.5)


def test_generation_rejects_bad_arguments():
    with pytest.raises(ValidationError):
        generate_scene("walk", GRID, 1)
    with pytest.raises(ValidationError):
        generate_scene("walk", Grid(4, 4), 3)
    with pytest.raises(ValidationError):
        generate_scene("walk", GRID, 3, dt=0.0)


def test_coarse_mesh_is_rejected_at_high_resolution():
    with pytest.raises(ValidationError):
        generate_scene("idle", Grid(512, 512), 2, subdivisions=4)


def test_flow_images(small_walk_clip, tmp_path):
    paths = dump_flow_ppms(small_walk_clip, tmp_path / "ppm")
    assert len(paths) == len(small_walk_clip)
    data = paths[0].read_bytes()
    header = b"P6\n48 48\n255\n"
    assert data.startswith(header)
    assert len(data) == len(header) + 48 * 48 * 3


def _replay_vertices(clip, preset, skeleton):
    """Skinned vertices of every frame, replaying the generator's garment loop."""
    h = build_humanoid(skeleton, seed=clip.meta.seed)
    script = preset_script(preset, len(clip), skeleton, GROUND_Y)
    garment = GarmentState.zeros(skeleton)
    vertices = []
    for i, frame in enumerate(clip):
        if i:
            garment = advance_garment(garment, clip[i - 1].pose, frame.pose, skeleton, script.garment, clip.meta.dt_seconds)
        vertices.append(skin_vertices(h, script.angles_at(i), garment))
    return h, vertices


@pytest.mark.parametrize("preset", ["idle", "walk", "swing"])
def test_generated_flow_advects_surface_points(preset, request, skeleton):
    clip = request.getfixturevalue(f"{preset}_clip")
    h, vertices = _replay_vertices(clip, preset, skeleton)
    for i in range(len(clip) - 1):
        frame = clip[i]
        foreground = frame.mask.foreground
        points = unproject_depth(frame.depth.values, frame.camera)[foreground]
        ids = frame.raster.triangle_ids[foreground].astype(np.int64)
        corners = vertices[i + 1][h.triangles[ids]]
        targets = np.einsum("nk,nkc->nc", frame.raster.barycentrics[foreground], corners)
        error = np.linalg.norm(points + frame.flow.values[foreground] - targets, axis=1)
        assert error.max() <= 1e-6
