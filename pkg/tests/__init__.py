from pathlib import Path
from tempfile import TemporaryDirectory

import numpy as np

from piccam.video_io import Frame, VideoClip


class ClassWithTempDir:
    @classmethod
    def setup_class(cls):
        cls.temp_dir = TemporaryDirectory()
        cls.temp_path = Path(cls.temp_dir.name)

    @classmethod
    def teardown_class(cls):
        cls.temp_dir.cleanup()

    @classmethod
    def temp_file(cls, name: str) -> Path:
        return cls.temp_path / name


def flat_frame(width: int, height: int, y: int = 0, u: int = 128, v: int = 128) -> Frame:
    return Frame.from_planes(
        np.full((height, width), y, dtype=np.uint8),
        np.full((height // 2, width // 2), u, dtype=np.uint8),
        np.full((height // 2, width // 2), v, dtype=np.uint8),
    )


def random_frame(width: int, height: int, rng: np.random.Generator) -> Frame:
    return Frame.from_planes(
        rng.integers(0, 256, size=(height, width), dtype=np.uint8),
        rng.integers(0, 256, size=(height // 2, width // 2), dtype=np.uint8),
        rng.integers(0, 256, size=(height // 2, width // 2), dtype=np.uint8),
    )


def random_clip(width: int, height: int, n_frames: int, seed: int = 0, **kwargs) -> VideoClip:
    rng = np.random.default_rng(seed)
    return VideoClip(
        tuple(random_frame(width, height, rng) for _ in range(n_frames)), **kwargs
    )
