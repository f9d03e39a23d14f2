import dataclasses
import io
import struct
import warnings

import numpy as np
import pytest

from flowpriors.errors import ClipIOError, CorruptionError, FormatError, ValidationError
from flowpriors.fields.clip import FORMAT_VERSION, validate_clip
from flowpriors.fields.container import (
    MAGIC,
    UnknownChunkWarning,
    append_raw_chunk,
    decode_clip,
    encode_clip,
    load_clip,
    save_clip,
    write_clip,
)
from flowpriors.fields.dense import BACKGROUND_TRIANGLE, DepthField, FlowField, Grid, MaskField, RasterBuffers
from flowpriors.kinematics import Pose


def test_grid_parse():
    assert Grid.parse("128x96") == Grid(128, 96)
    assert Grid(128, 96).shape == (96, 128)
    with pytest.raises(ValidationError):
        Grid.parse("128by96")


def test_grid_minimum_size():
    assert Grid(8, 8).is_valid()
    assert not Grid(7, 64).is_valid()


def test_fields_reject_wrong_shapes():
    grid = Grid(16, 8)
    with pytest.raises(ValidationError):
        DepthField(grid, np.ones((16, 8)))
    with pytest.raises(ValidationError):
        FlowField(grid, np.zeros((8, 16)))
    with pytest.raises(ValidationError):
        MaskField(grid, np.zeros((8, 15)))


def test_fields_are_read_only():
    depth = DepthField(Grid(8, 8), np.ones((8, 8)))
    with pytest.raises(ValueError):
        depth.values[0, 0] = 2.0


def test_mask_foreground_count():
    values = np.zeros((8, 8), dtype=np.uint8)
    values[2:4, 3:6] = 1
    mask = MaskField(Grid(8, 8), values)
    assert mask.count == 6
    assert mask.foreground.dtype == bool


def test_raster_buffers_background():
    ids = np.full((8, 8), BACKGROUND_TRIANGLE, dtype=np.uint32)
    ids[0, 0] = 3
    buffers = RasterBuffers(ids, np.zeros((8, 8, 3)), np.full((8, 8), np.inf))
    assert buffers.foreground.sum() == 1
    assert buffers.grid == Grid(8, 8)


def test_generated_clip_is_valid(walk_clip):
    assert validate_clip(walk_clip) == []


def _with_frame(clip, index, frame):
    frames = list(clip.frames)
    frames[index] = frame
    return clip.with_frames(frames)


def _negative_depth(frame):
    depth = frame.depth.values.copy()
    depth[0, 0] = -1.0
    return frame.replace(depth=DepthField(frame.grid, depth))


def _nan_depth(frame):
    depth = frame.depth.values.copy()
    depth[0, 0] = np.nan
    return frame.replace(depth=DepthField(frame.grid, depth))


def _nan_flow(frame):
    flow = frame.flow.values.copy()
    flow[0, 0, 1] = np.nan
    return frame.replace(flow=FlowField(frame.grid, flow))


def _mask_value_two(frame):
    mask = frame.mask.values.copy()
    row, col = np.argwhere(mask)[0]
    mask[row, col] = 2
    return frame.replace(mask=MaskField(frame.grid, mask))


def _stretched_bone(frame):
    joints = frame.pose.joints.copy()
    joints[-1] += [5.0, 0.0, 0.0]
    return frame.replace(pose=Pose(joints))


def _negative_focal(frame):
    intrinsics = frame.camera.intrinsics.copy()
    intrinsics[0] = -intrinsics[0]
    return frame.replace(camera=dataclasses.replace(frame.camera, intrinsics=intrinsics))


def _scaled_rotation(frame):
    return frame.replace(camera=dataclasses.replace(frame.camera, rotation=1.01 * frame.camera.rotation))


@pytest.mark.parametrize(
    "breaker, rule",
    [
        (_negative_depth, "depth > 0"),
        (_nan_depth, "depth finite"),
        (_nan_flow, "flow finite"),
        (_mask_value_two, "mask in {0, 1}"),
        (_stretched_bone, "bone length in (0.01, 1.0)"),
        (_negative_focal, "fx/W > 0 and fy/H > 0"),
        (_scaled_rotation, "rotation orthonormal with det 1"),
    ],
)
def test_single_broken_rule_is_reported_alone(small_walk_clip, breaker, rule):
    broken = _with_frame(small_walk_clip, 1, breaker(small_walk_clip[1]))
    assert {(v.frame, v.rule) for v in validate_clip(broken)} == {(1, rule)}


def test_moved_first_camera_is_not_the_world_anchor(small_walk_clip):
    first = small_walk_clip[0]
    moved = first.replace(camera=dataclasses.replace(first.camera, translation=np.array([0.0, 0.0, 0.1])))
    rules = [(v.frame, v.rule) for v in validate_clip(_with_frame(small_walk_clip, 0, moved))]
    assert rules == [(0, "frame 0 camera is the world anchor")]


def test_validate_last_flow_and_length(small_walk_clip):
    last = small_walk_clip[len(small_walk_clip) - 1]
    moved = last.replace(flow=FlowField(last.grid, np.full(last.grid.shape + (3,), 0.01)))
    clip = small_walk_clip.with_frames(list(small_walk_clip.frames[:-1]) + [moved])
    assert [v.rule for v in validate_clip(clip)] == ["last frame flow is zero"]

    single = small_walk_clip.with_frames(small_walk_clip.frames[:1])
    assert "clip has at least 2 frames" in [v.rule for v in validate_clip(single)]


def test_container_round_trip(small_walk_clip):
    data = encode_clip(small_walk_clip)
    assert data[:4] == MAGIC
    decoded = decode_clip(data)
    assert decoded == small_walk_clip.quantized()
    assert encode_clip(decoded) == data


def test_container_file_round_trip(tmp_path, small_walk_clip):
    path = tmp_path / "clip.hfsf"
    written = save_clip(small_walk_clip, path)
    assert written == path.stat().st_size
    assert load_clip(path) == small_walk_clip.quantized()


def test_bad_magic():
    with pytest.raises(FormatError):
        decode_clip(b"NOPE" + bytes(16))


def test_truncated_chunk_names_tag(small_walk_clip):
    data = encode_clip(small_walk_clip)
    with pytest.raises(CorruptionError) as info:
        decode_clip(data[:-10])
    assert info.value.tag == "BARY"
    assert info.value.offset is not None


def _container(*chunks):
    header = MAGIC + struct.pack("<II", FORMAT_VERSION, len(chunks))
    return header + b"".join(chunks)


def test_meta_that_is_not_utf8_is_corruption():
    payload = np.frombuffer(b"\xff\xfe", dtype=np.uint8)
    meta = struct.pack("<4sIBB", b"META", 0xFFFFFFFF, 2, 1) + struct.pack("<I", payload.size) + payload.tobytes()
    with pytest.raises(CorruptionError) as info:
        decode_clip(_container(meta))
    assert info.value.tag == "META"
    assert info.value.offset == 12
    assert info.value.exit_code == 2


def test_truncated_chunk_header_has_no_tag():
    with pytest.raises(CorruptionError) as info:
        decode_clip(_container(b"MET"))
    assert info.value.tag is None
    assert info.value.offset == 12


def test_unknown_chunk_is_skipped_with_warning(small_walk_clip):
    data = append_raw_chunk(encode_clip(small_walk_clip), "XTRA", 0, np.arange(4, dtype=np.uint8))
    with pytest.warns(UnknownChunkWarning):
        decoded = decode_clip(data)
    assert decoded == small_walk_clip.quantized()


def test_wrong_version(small_walk_clip):
    data = bytearray(encode_clip(small_walk_clip))
    data[4] = 9
    with pytest.raises(FormatError):
        decode_clip(bytes(data))


class _FailingSink(io.RawIOBase):
    def __init__(self, limit):
        self.limit = limit
        self.taken = 0

    def writable(self):
        return True

    def write(self, data):
        room = self.limit - self.taken
        if room <= 0:
            raise OSError("disk full")
        count = min(room, len(data))
        self.taken += count
        return count


def test_write_failure_reports_offset(small_walk_clip):
    with pytest.raises(ClipIOError) as info:
        write_clip(small_walk_clip, _FailingSink(100))
    assert info.value.offset == 100


def test_missing_file_is_io_error(tmp_path):
    with pytest.raises(ClipIOError):
        load_clip(tmp_path / "absent.hfsf")


def test_quantized_clip_reads_without_warnings(small_walk_clip):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        decode_clip(encode_clip(small_walk_clip))
