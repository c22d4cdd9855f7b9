"""
The learned scene prior: background planes, per-block mixing logits and
per-block entropy log-scales, plus its sidecar file format and content digest.

Parameters are held at float32 precision so a saved and reloaded model predicts
bit-identically to the in-memory one.
"""

import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

from piccam import BLOCK_SIZE, CHROMA_BLOCK_SIZE
from piccam.errors import BadBitstream, GeometryMismatch

MODEL_MAGIC = b"PICM"
MODEL_VERSION = 1
MODEL_HEADER = struct.Struct("<4sBIIH")
TRAIN_STEP = struct.Struct("<Q")
FNV_OFFSET_BASIS = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
FNV_MASK = (1 << 64) - 1
LOG_SCALE_CLASSES = ("luma", "chroma")
GROUP_NAMES = ("background_y", "background_u", "background_v", "mix_logits", "log_scales")

ParamGroups = Dict[str, np.ndarray]


def grid_shape(width: int, height: int) -> Tuple[int, int]:
    return math.ceil(height / BLOCK_SIZE), math.ceil(width / BLOCK_SIZE)


def expand_grid(grid: np.ndarray, block_size: int, shape: Tuple[int, int]) -> np.ndarray:
    """Per-block values spread uniformly over a plane of `shape`."""
    expanded = np.repeat(np.repeat(grid, block_size, axis=0), block_size, axis=1)
    return expanded[: shape[0], : shape[1]]


def reduce_to_grid(
    plane: np.ndarray, block_size: int, grid: Tuple[int, int]
) -> np.ndarray:
    """Per-block sums of a plane; adjoint of `expand_grid`."""
    padded = np.zeros((grid[0] * block_size, grid[1] * block_size))
    padded[: plane.shape[0], : plane.shape[1]] = plane
    return padded.reshape(grid[0], block_size, grid[1], block_size).sum(axis=(1, 3))


def fnv1a_64(data: bytes) -> int:
    digest = FNV_OFFSET_BASIS
    for byte in data:
        digest = ((digest ^ byte) * FNV_PRIME) & FNV_MASK
    return digest


def _as_float32(array) -> np.ndarray:
    result = np.array(array, dtype=np.float32, copy=True, order="C")
    result.setflags(write=False)
    return result


@dataclass(frozen=True, eq=False)
class ModelParams:
    """
    background: Y, U, V planes (unclamped reals)
    mix_logits: one value per 16x16 luma block, shared with co-located 8x8 chroma
    log_scales: shape (2, *grid): index 0 for Y, index 1 shared by U and V
    """

    background: Tuple[np.ndarray, np.ndarray, np.ndarray]
    mix_logits: np.ndarray
    log_scales: np.ndarray
    scene_id: str = ""
    train_step: int = 0
    width: int = field(init=False)
    height: int = field(init=False)

    def __post_init__(self):
        background = tuple(_as_float32(p) for p in self.background)
        height, width = background[0].shape
        object.__setattr__(self, "background", background)
        object.__setattr__(self, "width", width)
        object.__setattr__(self, "height", height)
        object.__setattr__(self, "mix_logits", _as_float32(self.mix_logits))
        object.__setattr__(self, "log_scales", _as_float32(self.log_scales))
        chroma_shape = (height // 2, width // 2)
        if background[1].shape != chroma_shape or background[2].shape != chroma_shape:
            raise GeometryMismatch(
                f"Chroma background planes must be {chroma_shape} for a {width}x{height} model"
            )
        grid = grid_shape(width, height)
        if self.mix_logits.shape != grid:
            raise GeometryMismatch(
                f"mix_logits grid is {self.mix_logits.shape}, expected {grid}"
            )
        if self.log_scales.shape != (len(LOG_SCALE_CLASSES),) + grid:
            raise GeometryMismatch(
                f"log_scales grid is {self.log_scales.shape}, expected {(2,) + grid}"
            )

    @property
    def dims(self) -> Tuple[int, int]:
        return self.width, self.height

    @property
    def grid(self) -> Tuple[int, int]:
        return self.mix_logits.shape

    def check_geometry(self, width: int, height: int) -> None:
        if (width, height) != self.dims:
            raise GeometryMismatch(
                f"Model is {self.width}x{self.height}, video is {width}x{height}"
            )

    def parameter_bytes(self) -> bytes:
        """Canonical little-endian float32 serialization, in declared order."""
        arrays = list(self.background) + [self.mix_logits, self.log_scales]
        return b"".join(a.astype("<f4").tobytes() for a in arrays)

    @cached_property
    def digest(self) -> int:
        return fnv1a_64(self.parameter_bytes())

    ###########
    ## Views ##
    ###########
    def mix_planes(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-sample sigmoid(mix_logit) for Y, U, V."""
        weights = 1 / (1 + np.exp(-self.mix_logits.astype(np.float64)))
        return expand_planes(weights, self.width, self.height)

    def scale_planes(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-sample Laplacian scale exp(log_scale) for Y, U, V."""
        luma = expand_grid(
            np.exp(self.log_scales[0].astype(np.float64)),
            BLOCK_SIZE,
            (self.height, self.width),
        )
        chroma = expand_grid(
            np.exp(self.log_scales[1].astype(np.float64)),
            CHROMA_BLOCK_SIZE,
            (self.height // 2, self.width // 2),
        )
        return luma, chroma, chroma

    def to_groups(self) -> ParamGroups:
        return dict(
            background_y=self.background[0].astype(np.float64),
            background_u=self.background[1].astype(np.float64),
            background_v=self.background[2].astype(np.float64),
            mix_logits=self.mix_logits.astype(np.float64),
            log_scales=self.log_scales.astype(np.float64),
        )

    @classmethod
    def from_groups(
        cls, groups: ParamGroups, scene_id: str = "", train_step: int = 0
    ) -> "ModelParams":
        return cls(
            background=(
                groups["background_y"],
                groups["background_u"],
                groups["background_v"],
            ),
            mix_logits=groups["mix_logits"],
            log_scales=groups["log_scales"],
            scene_id=scene_id,
            train_step=train_step,
        )

    def with_zeroed_background(self) -> "ModelParams":
        return ModelParams(
            background=tuple(np.zeros_like(p) for p in self.background),
            mix_logits=self.mix_logits,
            log_scales=self.log_scales,
            scene_id=self.scene_id,
            train_step=self.train_step,
        )

    ##################
    ## Sidecar file ##
    ##################
    def to_bytes(self) -> bytes:
        scene_id = self.scene_id.encode("utf-8")
        return (
            MODEL_HEADER.pack(
                MODEL_MAGIC, MODEL_VERSION, self.width, self.height, len(scene_id)
            )
            + scene_id
            + TRAIN_STEP.pack(self.train_step)
            + self.parameter_bytes()
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "ModelParams":
        if len(data) < MODEL_HEADER.size:
            raise BadBitstream("Model file is shorter than its header")
        magic, version, width, height, id_length = MODEL_HEADER.unpack_from(data)
        if magic != MODEL_MAGIC:
            raise BadBitstream(f"Not a model file (magic {magic!r})")
        if version != MODEL_VERSION:
            raise BadBitstream(f"Unsupported model file version {version}")
        offset = MODEL_HEADER.size
        scene_id = data[offset : offset + id_length].decode("utf-8")
        offset += id_length
        (train_step,) = TRAIN_STEP.unpack_from(data, offset)
        offset += TRAIN_STEP.size
        grid = grid_shape(width, height)
        shapes = [
            (height, width),
            (height // 2, width // 2),
            (height // 2, width // 2),
            grid,
            (len(LOG_SCALE_CLASSES),) + grid,
        ]
        arrays = []
        for shape in shapes:
            num_bytes = 4 * int(np.prod(shape))
            if offset + num_bytes > len(data):
                raise BadBitstream("Model file is truncated")
            arrays.append(
                np.frombuffer(data, dtype="<f4", count=int(np.prod(shape)), offset=offset)
                .reshape(shape)
                .astype(np.float32)
            )
            offset += num_bytes
        if offset != len(data):
            raise BadBitstream(f"Model file has {len(data) - offset} trailing bytes")
        return cls(
            background=tuple(arrays[:3]),
            mix_logits=arrays[3],
            log_scales=arrays[4],
            scene_id=scene_id,
            train_step=train_step,
        )

    def __repr__(self):
        return (
            f"ModelParams({self.width}x{self.height}, scene_id='{self.scene_id}', "
            f"train_step={self.train_step}, digest={self.digest:016x})"
        )


def expand_planes(
    grid_values: np.ndarray, width: int, height: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    luma = expand_grid(grid_values, BLOCK_SIZE, (height, width))
    chroma = expand_grid(grid_values, CHROMA_BLOCK_SIZE, (height // 2, width // 2))
    return luma, chroma, chroma


def save_model(params: ModelParams, fname) -> None:
    Path(fname).write_bytes(params.to_bytes())


def load_model(fname) -> ModelParams:
    return ModelParams.from_bytes(Path(fname).read_bytes())
