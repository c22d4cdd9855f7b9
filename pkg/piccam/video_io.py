"""
Reading, writing, sampling and cropping of 8-bit 4:2:0 planar video.

Y4M files are read frame by frame; headers are written in canonical form
("Ip A1:1 C420"), so a file produced by `write_y4m` survives a read/write round
trip byte for byte.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterator, Sequence, Tuple

import numpy as np

from piccam.errors import (
    ClipTooShort,
    DimensionMismatch,
    EmptyClip,
    MalformedHeader,
    OddGeometry,
    OutOfBounds,
    TruncatedFrame,
    UnsupportedChroma,
)

logger = logging.getLogger(__name__)

Y4M_MAGIC = b"YUV4MPEG2"
FRAME_MAGIC = b"FRAME"
SUPPORTED_CHROMA = {"420", "420jpeg", "420paldv", "420mpeg2"}
DEFAULT_FPS = (25, 1)
MAX_HEADER_LENGTH = 4096


def _check_even_geometry(width: int, height: int) -> None:
    if width < 2 or height < 2 or width % 2 != 0 or height % 2 != 0:
        raise OddGeometry(
            f"4:2:0 frames need even dimensions >= 2, got {width}x{height}"
        )


def _frozen_plane(plane: np.ndarray) -> np.ndarray:
    result = np.array(plane, dtype=np.uint8, copy=True, order="C")
    result.setflags(write=False)
    return result


@dataclass(frozen=True, eq=False)
class Frame:
    y_plane: np.ndarray
    u_plane: np.ndarray
    v_plane: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        _check_even_geometry(self.width, self.height)
        expected_shapes = (
            (self.height, self.width),
            (self.height // 2, self.width // 2),
            (self.height // 2, self.width // 2),
        )
        for name, expected in zip(("y_plane", "u_plane", "v_plane"), expected_shapes):
            plane = getattr(self, name)
            if np.shape(plane) != expected:
                raise DimensionMismatch(
                    f"{name} has shape {np.shape(plane)}, expected {expected}"
                )
            object.__setattr__(self, name, _frozen_plane(plane))

    @classmethod
    def from_planes(cls, y_plane, u_plane, v_plane) -> "Frame":
        height, width = np.shape(y_plane)
        return cls(y_plane, u_plane, v_plane, width, height)

    @classmethod
    def from_bytes(cls, data: bytes, width: int, height: int) -> "Frame":
        _check_even_geometry(width, height)
        luma_size = width * height
        chroma_size = luma_size // 4
        if len(data) != frame_size(width, height):
            raise TruncatedFrame(
                f"Expected {frame_size(width, height)} bytes, got {len(data)}"
            )
        samples = np.frombuffer(data, dtype=np.uint8)
        y_plane = samples[:luma_size].reshape(height, width)
        u_plane = samples[luma_size : luma_size + chroma_size].reshape(
            height // 2, width // 2
        )
        v_plane = samples[luma_size + chroma_size :].reshape(height // 2, width // 2)
        return cls(y_plane, u_plane, v_plane, width, height)

    @classmethod
    def from_real_planes(cls, planes: Sequence[np.ndarray]) -> "Frame":
        """Clamp-rounds real-valued planes to 8 bits (half rounds up)."""
        y_plane, u_plane, v_plane = (
            np.clip(np.floor(np.asarray(p, dtype=np.float64) + 0.5), 0, 255)
            for p in planes
        )
        return cls.from_planes(y_plane, u_plane, v_plane)

    @property
    def planes(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.y_plane, self.u_plane, self.v_plane

    @property
    def dims(self) -> Tuple[int, int]:
        return self.width, self.height

    def to_bytes(self) -> bytes:
        return b"".join(plane.tobytes() for plane in self.planes)

    def as_float(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(plane.astype(np.float64) for plane in self.planes)

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return self.dims == other.dims and all(
            np.array_equal(a, b) for a, b in zip(self.planes, other.planes)
        )

    __hash__ = None

    def __repr__(self):
        return f"Frame({self.width}x{self.height})"


def frame_size(width: int, height: int) -> int:
    return width * height * 3 // 2


@dataclass(frozen=True, eq=False)
class VideoClip:
    frames: Tuple[Frame, ...]
    fps_num: int = DEFAULT_FPS[0]
    fps_den: int = DEFAULT_FPS[1]

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if len(self.frames) == 0:
            raise EmptyClip("A video clip needs at least one frame")
        dims = self.frames[0].dims
        for i, frame in enumerate(self.frames):
            if frame.dims != dims:
                raise DimensionMismatch(
                    f"Frame {i} is {frame.width}x{frame.height}, expected {dims[0]}x{dims[1]}"
                )
        if self.fps_num <= 0 or self.fps_den <= 0:
            raise MalformedHeader(f"Invalid frame rate {self.fps_num}:{self.fps_den}")

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def height(self) -> int:
        return self.frames[0].height

    @property
    def dims(self) -> Tuple[int, int]:
        return self.frames[0].dims

    def with_frames(self, frames: Sequence[Frame]) -> "VideoClip":
        return VideoClip(tuple(frames), self.fps_num, self.fps_den)

    def __len__(self):
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    def __getitem__(self, index):
        return self.frames[index]

    def __repr__(self):
        return (
            f"VideoClip({len(self)} frames, {self.width}x{self.height}, "
            f"{self.fps_num}:{self.fps_den})"
        )


#########
## Y4M ##
#########
@dataclass
class Y4MHeader:
    width: int
    height: int
    fps_num: int
    fps_den: int

    def to_bytes(self) -> bytes:
        return (
            f"YUV4MPEG2 W{self.width} H{self.height} "
            f"F{self.fps_num}:{self.fps_den} Ip A1:1 C420\n"
        ).encode("ascii")


def parse_y4m_header(line: bytes) -> Y4MHeader:
    """
    Interlace (I), aspect (A) and extension (X) tags are accepted and ignored.
    """
    if not line.endswith(b"\n"):
        raise MalformedHeader("Y4M header is not newline-terminated")
    tokens = line.rstrip(b"\n").split(b" ")
    if tokens[0] != Y4M_MAGIC:
        raise MalformedHeader(f"Missing {Y4M_MAGIC.decode()} magic")
    width = height = None
    fps = None
    for token in tokens[1:]:
        if token == b"":
            continue
        tag, value = chr(token[0]), token[1:].decode("ascii", errors="replace")
        if tag == "C" and value not in SUPPORTED_CHROMA:
            raise UnsupportedChroma(f"Chroma format C{value} is not 4:2:0")
        try:
            if tag == "W":
                width = int(value)
            elif tag == "H":
                height = int(value)
            elif tag == "F":
                num, den = value.split(":")
                fps = (int(num), int(den))
        except ValueError as error:
            raise MalformedHeader(f"Cannot parse header tag '{tag}{value}'") from error
    if width is None or height is None:
        raise MalformedHeader("Y4M header lacks a W or H tag")
    if width < 2 or height < 2 or width % 2 or height % 2:
        raise MalformedHeader(f"4:2:0 needs even dimensions, got {width}x{height}")
    if fps is None:
        logger.warning(
            f"Y4M header has no frame rate, assuming {DEFAULT_FPS[0]}:{DEFAULT_FPS[1]}"
        )
        fps = DEFAULT_FPS
    if fps[0] <= 0 or fps[1] <= 0:
        raise MalformedHeader(f"Invalid frame rate {fps[0]}:{fps[1]}")
    return Y4MHeader(width, height, fps[0], fps[1])


def read_y4m_header(stream: BinaryIO) -> Y4MHeader:
    return parse_y4m_header(stream.readline(MAX_HEADER_LENGTH))


def iter_y4m_frames(stream: BinaryIO, header: Y4MHeader) -> Iterator[Frame]:
    num_bytes = frame_size(header.width, header.height)
    frame_index = 0
    while True:
        frame_line = stream.readline(MAX_HEADER_LENGTH)
        if frame_line == b"":
            return
        if not frame_line.endswith(b"\n"):
            raise TruncatedFrame(f"Frame {frame_index} header is truncated")
        if not frame_line.startswith(FRAME_MAGIC):
            raise MalformedHeader(f"Frame {frame_index} does not start with FRAME")
        data = stream.read(num_bytes)
        if len(data) != num_bytes:
            raise TruncatedFrame(
                f"Frame {frame_index} has {len(data)} of {num_bytes} bytes"
            )
        yield Frame.from_bytes(data, header.width, header.height)
        frame_index += 1


def read_y4m(stream: BinaryIO) -> VideoClip:
    header = read_y4m_header(stream)
    frames = list(iter_y4m_frames(stream, header))
    if len(frames) == 0:
        raise EmptyClip("Y4M stream contains no frames")
    return VideoClip(tuple(frames), header.fps_num, header.fps_den)


def write_y4m(clip: VideoClip, sink: BinaryIO) -> None:
    if clip is None or len(clip.frames) == 0:
        raise EmptyClip("Cannot write an empty clip")
    header = Y4MHeader(clip.width, clip.height, clip.fps_num, clip.fps_den)
    sink.write(header.to_bytes())
    for frame in clip:
        sink.write(FRAME_MAGIC + b"\n")
        sink.write(frame.to_bytes())


def load_y4m(fname) -> VideoClip:
    with Path(fname).open("rb") as istream:
        return read_y4m(istream)


def save_y4m(clip: VideoClip, fname) -> None:
    with Path(fname).open("wb") as ostream:
        write_y4m(clip, ostream)


##############
## Raw .yuv ##
##############
def read_raw_yuv(
    stream: BinaryIO,
    width: int,
    height: int,
    fps_num: int = DEFAULT_FPS[0],
    fps_den: int = DEFAULT_FPS[1],
) -> VideoClip:
    """
    Headerless planar 4:2:0: geometry and frame rate come from the caller.
    """
    _check_even_geometry(width, height)
    num_bytes = frame_size(width, height)
    frames = []
    while True:
        data = stream.read(num_bytes)
        if len(data) == 0:
            break
        if len(data) != num_bytes:
            raise TruncatedFrame(
                f"Frame {len(frames)} has {len(data)} of {num_bytes} bytes"
            )
        frames.append(Frame.from_bytes(data, width, height))
    if len(frames) == 0:
        raise EmptyClip("Raw YUV stream contains no frames")
    return VideoClip(tuple(frames), fps_num, fps_den)


def write_raw_yuv(clip: VideoClip, sink: BinaryIO) -> None:
    for frame in clip:
        sink.write(frame.to_bytes())


def load_video(
    fname, width: int = None, height: int = None, fps: Tuple[int, int] = DEFAULT_FPS
) -> VideoClip:
    """
    Dispatches on suffix: '.y4m' is self-describing, anything else is raw planar
    and needs explicit geometry.
    """
    fname = Path(fname)
    if fname.suffix.lower() == ".y4m":
        return load_y4m(fname)
    if width is None or height is None:
        raise MalformedHeader(
            f"{fname} is not a Y4M file: raw planar input needs a width and height"
        )
    with fname.open("rb") as istream:
        return read_raw_yuv(istream, width, height, *fps)


#######################
## Sampling/cropping ##
#######################
def sample_clip(clip: VideoClip, length: int, seed: int) -> VideoClip:
    """
    Contiguous window of `length` frames; the start index is uniform on
    [0, len(clip) - length].
    """
    if length < 1:
        raise ClipTooShort(f"Cannot sample a window of {length} frames")
    if len(clip) < length:
        raise ClipTooShort(f"Clip has {len(clip)} frames, {length} requested")
    rng = np.random.default_rng(seed)
    start = int(rng.integers(0, len(clip) - length + 1))
    return clip.with_frames(clip.frames[start : start + length])


def crop(frame: Frame, x: int, y: int, w: int, h: int) -> Frame:
    if any(value % 2 != 0 for value in (x, y, w, h)):
        raise OddGeometry(f"Crop rectangle ({x},{y},{w},{h}) must be all even")
    if w < 2 or h < 2:
        raise OddGeometry(f"Crop rectangle must be at least 2x2, got {w}x{h}")
    if x < 0 or y < 0 or x + w > frame.width or y + h > frame.height:
        raise OutOfBounds(
            f"Crop rectangle ({x},{y},{w},{h}) exceeds {frame.width}x{frame.height}"
        )
    cx, cy, cw, ch = x // 2, y // 2, w // 2, h // 2
    return Frame(
        frame.y_plane[y : y + h, x : x + w],
        frame.u_plane[cy : cy + ch, cx : cx + cw],
        frame.v_plane[cy : cy + ch, cx : cx + cw],
        w,
        h,
    )


def crop_clip(clip: VideoClip, x: int, y: int, w: int, h: int) -> VideoClip:
    return clip.with_frames([crop(frame, x, y, w, h) for frame in clip])


def random_crop_origin(
    width: int, height: int, crop_width: int, crop_height: int, seed: int
) -> Tuple[int, int]:
    """Seeded, even-aligned top-left corner for a crop_width x crop_height window."""
    if crop_width > width or crop_height > height:
        raise OutOfBounds(
            f"Crop {crop_width}x{crop_height} does not fit in {width}x{height}"
        )
    rng = np.random.default_rng(seed)
    x = 2 * int(rng.integers(0, (width - crop_width) // 2 + 1))
    y = 2 * int(rng.integers(0, (height - crop_height) // 2 + 1))
    return x, y
