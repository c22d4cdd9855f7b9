"""
Procedural surveillance-like scenes: a fixed textured background, a few
bouncing rectangular sprites and Gaussian sensor noise.
"""

import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from piccam import PEAK_VALUE
from piccam.errors import BadParameter
from piccam.video_io import DEFAULT_FPS, Frame, VideoClip

logger = logging.getLogger(__name__)

MAX_SPRITES = 3
MAX_SPRITE_AREA = 0.05
MIN_SPRITE_AREA = 0.01
MAX_SPEED = 4.0


def _texture(width: int, height: int, rng: np.random.Generator, base: float, amplitude: float):
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    periods = rng.uniform(8, 64, size=4)
    phases = rng.uniform(0, 2 * np.pi, size=4)
    plane = np.full((height, width), float(base), dtype=np.float64)
    plane += amplitude * np.sin(2 * np.pi * xx / periods[0] + phases[0]) * np.cos(
        2 * np.pi * yy / periods[1] + phases[1]
    )
    plane += 0.5 * amplitude * np.sin(2 * np.pi * (xx + yy) / periods[2] + phases[2])
    plane += 0.5 * amplitude * np.cos(2 * np.pi * (xx - yy) / periods[3] + phases[3])
    return plane


def background_planes(width: int, height: int, seed: int) -> Tuple[np.ndarray, ...]:
    rng = np.random.default_rng(seed)
    return (
        _texture(width, height, rng, base=120, amplitude=40),
        _texture(width // 2, height // 2, rng, base=128, amplitude=12),
        _texture(width // 2, height // 2, rng, base=128, amplitude=12),
    )


def background_frame(width: int, height: int, seed: int = 0) -> Frame:
    """The scene without sprites or noise."""
    return Frame.from_real_planes(background_planes(width, height, seed))


@dataclass
class Sprite:
    x: float
    y: float
    vx: float
    vy: float
    width: int
    height: int
    colour: Tuple[float, float, float]

    def advance(self, frame_width: int, frame_height: int) -> None:
        self.x += self.vx
        self.y += self.vy
        if self.x < 0 or self.x + self.width > frame_width:
            self.vx = -self.vx
            self.x = min(max(self.x, 0), frame_width - self.width)
        if self.y < 0 or self.y + self.height > frame_height:
            self.vy = -self.vy
            self.y = min(max(self.y, 0), frame_height - self.height)

    def paint(self, planes: List[np.ndarray]) -> None:
        x0 = 2 * (int(self.x) // 2)
        y0 = 2 * (int(self.y) // 2)
        planes[0][y0 : y0 + self.height, x0 : x0 + self.width] = self.colour[0]
        for k in (1, 2):
            planes[k][
                y0 // 2 : (y0 + self.height) // 2, x0 // 2 : (x0 + self.width) // 2
            ] = self.colour[k]


def random_sprite(width: int, height: int, rng: np.random.Generator) -> Sprite:
    area = rng.uniform(MIN_SPRITE_AREA, MAX_SPRITE_AREA) * width * height
    aspect = rng.uniform(0.5, 2.0)
    sprite_w = max(2, 2 * int(np.sqrt(area * aspect) / 2))
    sprite_h = max(2, 2 * int(area / sprite_w / 2))
    sprite_w = min(sprite_w, width)
    sprite_h = min(sprite_h, height)
    while sprite_w * sprite_h > MAX_SPRITE_AREA * width * height and sprite_h > 2:
        sprite_h -= 2
    speed = rng.uniform(1.0, MAX_SPEED, size=2) * rng.choice([-1, 1], size=2)
    return Sprite(
        x=rng.uniform(0, width - sprite_w),
        y=rng.uniform(0, height - sprite_h),
        vx=float(speed[0]),
        vy=float(speed[1]),
        width=sprite_w,
        height=sprite_h,
        colour=tuple(float(c) for c in rng.uniform(16, 240, size=3)),
    )


def generate_static_scene(
    width: int,
    height: int,
    n_frames: int,
    n_sprites: int = 2,
    noise_sigma: float = 2.0,
    seed: int = 0,
    fps: Tuple[int, int] = DEFAULT_FPS,
) -> VideoClip:
    """
    Fixed camera over a fixed background. `seed` fixes the background as well as
    the sprites and the noise, so two calls differing only in n_frames agree on
    their common prefix.
    """
    if not 0 <= n_sprites <= MAX_SPRITES:
        raise BadParameter(f"Scenes hold 0 to {MAX_SPRITES} sprites, got {n_sprites}")
    if n_frames < 1:
        raise BadParameter(f"n_frames must be >= 1, got {n_frames}")
    if noise_sigma < 0:
        raise BadParameter(f"noise_sigma must be >= 0, got {noise_sigma}")
    background = background_planes(width, height, seed)
    rng = np.random.default_rng([seed, 1])
    sprites = [random_sprite(width, height, rng) for _ in range(n_sprites)]
    noise_rng = np.random.default_rng([seed, 2])
    frames = []
    for _ in range(n_frames):
        planes = [p.copy() for p in background]
        for sprite in sprites:
            sprite.paint(planes)
            sprite.advance(width, height)
        if noise_sigma > 0:
            planes = [p + noise_rng.normal(0, noise_sigma, size=p.shape) for p in planes]
        frames.append(Frame.from_real_planes(planes))
    logger.debug(
        f"Generated {n_frames} frames of a {width}x{height} scene with {n_sprites} sprites"
    )
    return VideoClip(tuple(frames), *fps)


def generate_noise_clip(
    width: int, height: int, n_frames: int, seed: int = 0
) -> VideoClip:
    """Every frame independently uniform over 8-bit values."""
    rng = np.random.default_rng(seed)
    frames = [
        Frame.from_planes(
            rng.integers(0, PEAK_VALUE + 1, size=(height, width), dtype=np.uint8),
            rng.integers(0, PEAK_VALUE + 1, size=(height // 2, width // 2), dtype=np.uint8),
            rng.integers(0, PEAK_VALUE + 1, size=(height // 2, width // 2), dtype=np.uint8),
        )
        for _ in range(n_frames)
    ]
    return VideoClip(tuple(frames))
