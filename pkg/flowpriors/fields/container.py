"""
HFSF container codec.

Layout, little-endian throughout::

    "HFSF" | version u32 | chunk count u32 | chunk*
    chunk = tag[4] | frame u32 | dtype u8 | ndim u8 | dims u32*ndim | payload

Writers emit META first, then per frame DPTH, FLOW, MASK, POSE, CAMI, CAMX and,
when raster buffers are present, TRID and BARY. Readers skip unknown tags.
"""

import io
import logging
import struct
import warnings
from pathlib import Path
from typing import BinaryIO, Dict, List, Optional, Tuple, Union

import numpy as np

from ..camera import CameraParams
from ..errors import ClipIOError, CorruptionError, FormatError, ValidationError
from ..kinematics import Pose
from .clip import FORMAT_VERSION, ClipMeta, FrameRecord, SceneClip
from .dense import DepthField, FlowField, Grid, MaskField, RasterBuffers

logger = logging.getLogger(__name__)

MAGIC = b"HFSF"
GLOBAL_FRAME = 0xFFFFFFFF

DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<u4"), 2: np.dtype("u1")}
DTYPE_CODES = {dtype: code for code, dtype in DTYPES.items()}

FRAME_TAGS = ("DPTH", "FLOW", "MASK", "POSE", "CAMI", "CAMX")
RASTER_TAGS = ("TRID", "BARY")
KNOWN_TAGS = frozenset(FRAME_TAGS + RASTER_TAGS + ("META",))
META_KEYS = ("width", "height", "frames", "joints", "seed", "dt_seconds")


class UnknownChunkWarning(UserWarning):
    """A chunk with an unrecognized tag was skipped."""


def _encode_chunk(tag: str, frame: int, array: np.ndarray) -> bytes:
    code = DTYPE_CODES[array.dtype]
    header = struct.pack("<4sIBB", tag.encode("ascii"), frame, code, array.ndim)
    dims = struct.pack(f"<{array.ndim}I", *array.shape)
    return header + dims + np.ascontiguousarray(array).tobytes()


def _meta_payload(clip: SceneClip) -> np.ndarray:
    grid = clip.grid
    values = {
        "width": grid.width,
        "height": grid.height,
        "frames": len(clip),
        "joints": clip.frames[0].pose.joints.shape[0],
        "seed": clip.meta.seed,
        "dt_seconds": repr(float(clip.meta.dt_seconds)),
    }
    text = "".join(f"{key}={values[key]}\n" for key in META_KEYS)
    return np.frombuffer(text.encode("utf-8"), dtype=np.uint8)


def _frame_chunks(index: int, frame: FrameRecord) -> List[bytes]:
    f32 = DTYPES[0]
    camera = frame.camera
    extrinsics = np.concatenate([camera.rotation.reshape(9), camera.translation])
    chunks = [
        _encode_chunk("DPTH", index, frame.depth.values.astype(f32)),
        _encode_chunk("FLOW", index, frame.flow.values.astype(f32)),
        _encode_chunk("MASK", index, frame.mask.values.astype(DTYPES[2])),
        _encode_chunk("POSE", index, frame.pose.joints.astype(f32)),
        _encode_chunk("CAMI", index, camera.intrinsics.astype(f32)),
        _encode_chunk("CAMX", index, extrinsics.astype(f32)),
    ]
    if frame.raster is not None:
        chunks.append(_encode_chunk("TRID", index, frame.raster.triangle_ids.astype(DTYPES[1])))
        chunks.append(_encode_chunk("BARY", index, frame.raster.barycentrics.astype(f32)))
    return chunks


def encode_clip(clip: SceneClip) -> bytes:
    """Serialize a clip to container bytes."""
    chunks = [_encode_chunk("META", GLOBAL_FRAME, _meta_payload(clip))]
    for index, frame in enumerate(clip.frames):
        chunks.extend(_frame_chunks(index, frame))
    header = MAGIC + struct.pack("<II", clip.meta.format_version, len(chunks))
    return header + b"".join(chunks)


def write_clip(clip: SceneClip, destination: BinaryIO) -> int:
    """
    Write a clip to a binary sink.

    Returns:
        Number of bytes written

    Raises:
        ClipIOError: if the sink fails, with the offset reached
    """
    data = encode_clip(clip)
    written = 0
    view = memoryview(data)
    try:
        while written < len(data):
            count = destination.write(view[written:])
            written += len(data) - written if count is None else count
            if count == 0:
                raise OSError("sink accepted no bytes")
    except OSError as e:
        raise ClipIOError(f"failed to write clip: {e}", offset=written)
    logger.info(f"Wrote clip with {len(clip)} frames ({written} bytes)")
    return written


def save_clip(clip: SceneClip, path: Union[str, Path]) -> int:
    try:
        with open(path, "wb") as sink:
            return write_clip(clip, sink)
    except OSError as e:
        raise ClipIOError(f"cannot open {path} for writing: {e}")


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, count: int, tag: Optional[str]) -> bytes:
        if self.offset + count > len(self.data):
            raise CorruptionError(
                f"truncated: needed {count} bytes, {len(self.data) - self.offset} left", tag=tag, offset=self.offset
            )
        chunk = self.data[self.offset : self.offset + count]
        self.offset += count
        return chunk


def _read_chunk(reader: _Reader) -> Tuple[str, int, np.ndarray]:
    start = reader.offset
    raw_tag, frame, code, ndim = struct.unpack("<4sIBB", reader.take(10, None))
    tag = raw_tag.decode("ascii", errors="replace")
    dims = struct.unpack(f"<{ndim}I", reader.take(4 * ndim, tag))
    if code not in DTYPES:
        raise CorruptionError(f"unknown dtype code {code}", tag=tag, offset=start)
    dtype = DTYPES[code]
    count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
    payload = reader.take(count * dtype.itemsize, tag)
    return tag, frame, np.frombuffer(payload, dtype=dtype).reshape(dims)


def _parse_meta(array: np.ndarray, offset: int) -> Dict[str, str]:
    try:
        text = array.tobytes().decode("utf-8")
    except UnicodeDecodeError as e:
        raise CorruptionError(f"payload is not UTF-8 text: {e.reason}", tag="META", offset=offset)
    meta = {}
    for line in text.splitlines():
        if "=" in line:
            key, value = line.split("=", 1)
            meta[key.strip()] = value.strip()
    missing = [key for key in META_KEYS if key not in meta]
    if missing:
        raise FormatError(f"META chunk lacks keys {missing}")
    return meta


def _expect_shape(tag: str, frame: int, array: np.ndarray, shape: tuple) -> None:
    if array.shape != shape:
        raise ValidationError(f"frame {frame}: {tag} has shape {array.shape}, expected {shape}")


def _build_frame(index: int, chunks: Dict[str, np.ndarray], grid: Grid, joints: int) -> FrameRecord:
    missing = [tag for tag in FRAME_TAGS if tag not in chunks]
    if missing:
        raise FormatError(f"frame {index} lacks chunks {missing}")
    if ("TRID" in chunks) != ("BARY" in chunks):
        raise FormatError(f"frame {index} has only one of TRID/BARY")
    shape = grid.shape
    _expect_shape("DPTH", index, chunks["DPTH"], shape)
    _expect_shape("FLOW", index, chunks["FLOW"], shape + (3,))
    _expect_shape("MASK", index, chunks["MASK"], shape)
    _expect_shape("POSE", index, chunks["POSE"], (joints, 3))
    _expect_shape("CAMI", index, chunks["CAMI"], (4,))
    _expect_shape("CAMX", index, chunks["CAMX"], (12,))

    depth = chunks["DPTH"].astype(np.float64)
    extrinsics = chunks["CAMX"].astype(np.float64)
    camera = CameraParams(extrinsics[:9].reshape(3, 3), extrinsics[9:], chunks["CAMI"].astype(np.float64), grid)
    raster = None
    if "TRID" in chunks:
        _expect_shape("TRID", index, chunks["TRID"], shape)
        _expect_shape("BARY", index, chunks["BARY"], shape + (3,))
        triangle_ids = chunks["TRID"].astype(np.uint32)
        valid = triangle_ids != 0xFFFFFFFF
        raster = RasterBuffers(
            triangle_ids,
            chunks["BARY"].astype(np.float64),
            np.where(valid, depth, np.inf),
            empty=not bool(valid.any()),
        )
    return FrameRecord(
        DepthField(grid, depth),
        FlowField(grid, chunks["FLOW"].astype(np.float64)),
        MaskField(grid, chunks["MASK"]),
        Pose(chunks["POSE"].astype(np.float64)),
        camera,
        raster,
    )


def decode_clip(data: bytes) -> SceneClip:
    """Parse container bytes."""
    reader = _Reader(data)
    if len(data) < 4 or data[:4] != MAGIC:
        raise FormatError(f"bad magic {bytes(data[:4])!r}, expected {MAGIC!r}", offset=0)
    reader.offset = 4
    version, chunk_count = struct.unpack("<II", reader.take(8, "HFSF"))
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported container version {version}", offset=4)

    meta = None
    per_frame: Dict[int, Dict[str, np.ndarray]] = {}
    for _ in range(chunk_count):
        start = reader.offset
        tag, frame, array = _read_chunk(reader)
        if tag not in KNOWN_TAGS:
            message = f"skipping unknown chunk {tag!r} at byte offset {start}"
            logger.warning(message)
            warnings.warn(message, UnknownChunkWarning, stacklevel=3)
            continue
        if tag == "META":
            meta = _parse_meta(array, start)
            continue
        slots = per_frame.setdefault(frame, {})
        if tag in slots:
            raise CorruptionError(f"duplicate chunk for frame {frame}", tag=tag, offset=start)
        slots[tag] = array

    if meta is None:
        raise FormatError("container has no META chunk")
    try:
        grid = Grid(int(meta["width"]), int(meta["height"]))
        frame_count = int(meta["frames"])
        joints = int(meta["joints"])
        clip_meta = ClipMeta(int(meta["seed"]), float(meta["dt_seconds"]), version)
    except ValueError as e:
        raise FormatError(f"malformed META value: {e}")
    unexpected = sorted(set(per_frame) - set(range(frame_count)))
    if unexpected:
        raise FormatError(f"chunks reference frames {unexpected} beyond the declared {frame_count}")

    frames = [_build_frame(index, per_frame.get(index, {}), grid, joints) for index in range(frame_count)]
    clip = SceneClip(tuple(frames), clip_meta)
    logger.info(f"Read clip with {frame_count} frames at {grid.width}x{grid.height}")
    return clip


def read_clip(source: BinaryIO) -> SceneClip:
    """
    Read a clip from a binary stream.

    Raises:
        FormatError: bad magic, version or missing chunks
        CorruptionError: truncated chunk, naming its tag and offset
        ValidationError: chunk dimensions disagree within a frame
    """
    try:
        data = source.read()
    except OSError as e:
        raise ClipIOError(f"failed to read clip: {e}", offset=0)
    return decode_clip(data)


def load_clip(path: Union[str, Path]) -> SceneClip:
    try:
        with open(path, "rb") as source:
            return read_clip(source)
    except OSError as e:
        raise ClipIOError(f"cannot open {path}: {e}")


def append_raw_chunk(data: bytes, tag: str, frame: int, array: np.ndarray) -> bytes:
    """Append one chunk to existing container bytes, updating the chunk count."""
    if data[:4] != MAGIC:
        raise FormatError("not an HFSF container", offset=0)
    version, chunk_count = struct.unpack("<II", data[4:12])
    buffer = io.BytesIO()
    buffer.write(MAGIC + struct.pack("<II", version, chunk_count + 1))
    buffer.write(data[12:])
    buffer.write(_encode_chunk(tag, frame, array))
    return buffer.getvalue()
