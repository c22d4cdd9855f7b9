import numpy as np
import pytest

from piccam.errors import BadParameter
from piccam.synthetic import (
    MAX_SPRITE_AREA,
    background_frame,
    generate_noise_clip,
    generate_static_scene,
    random_sprite,
)


class TestStaticScene:
    def test_planes_are_8_bit(self):
        clip = generate_static_scene(32, 32, 6)
        assert len(clip) == 6
        for frame in clip:
            assert [plane.dtype for plane in frame.planes] == [np.uint8] * 3
            assert frame.y_plane.shape == (32, 32)
        assert background_frame(32, 32).y_plane.dtype == np.uint8

    def test_fixed_seed_is_reproducible(self):
        a = generate_static_scene(32, 32, 5, seed=7)
        b = generate_static_scene(32, 32, 5, seed=7)
        assert a.frames == b.frames
        assert generate_static_scene(32, 32, 5, seed=8).frames != a.frames

    def test_longer_clip_extends_shorter_one(self):
        short = generate_static_scene(32, 16, 4, n_sprites=3, seed=2)
        long = generate_static_scene(32, 16, 9, n_sprites=3, seed=2)
        assert long.frames[:4] == short.frames

    def test_empty_noiseless_scene_is_the_background(self):
        clip = generate_static_scene(48, 32, 3, n_sprites=0, noise_sigma=0, seed=4)
        assert all(frame == background_frame(48, 32, seed=4) for frame in clip)

    def test_sprites_change_a_small_area(self):
        clip = generate_static_scene(64, 64, 2, n_sprites=1, noise_sigma=0, seed=1)
        background = background_frame(64, 64, seed=1)
        changed = clip[0].y_plane != background.y_plane
        assert 0 < changed.mean() <= MAX_SPRITE_AREA

    @pytest.mark.parametrize(
        "kwargs", [dict(n_sprites=4), dict(n_sprites=-1), dict(noise_sigma=-1)]
    )
    def test_bad_parameters_fail(self, kwargs):
        with pytest.raises(BadParameter):
            generate_static_scene(16, 16, 2, **kwargs)

    def test_no_frames_fails(self):
        with pytest.raises(BadParameter):
            generate_static_scene(16, 16, 0)


class TestSprites:
    def test_sprites_are_even_and_small(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            sprite = random_sprite(96, 64, rng)
            assert sprite.width % 2 == 0 and sprite.height % 2 == 0
            assert sprite.width * sprite.height <= MAX_SPRITE_AREA * 96 * 64

    def test_sprites_stay_in_frame(self):
        rng = np.random.default_rng(1)
        sprite = random_sprite(32, 32, rng)
        for _ in range(500):
            sprite.advance(32, 32)
            assert 0 <= sprite.x <= 32 - sprite.width
            assert 0 <= sprite.y <= 32 - sprite.height


class TestNoiseClip:
    def test_frames_are_independent(self):
        clip = generate_noise_clip(16, 16, 3, seed=1)
        assert clip[0] != clip[1]
        assert clip.dims == (16, 16)
