"""
Distortion, quality, rate and scene-change measurements.

Two weighted quantities coexist and are not interchangeable:
    - `weighted_mse`: the training distortion, a 6:1:1 weighted mean of plane MSEs
    - `weighted_yuv_psnr`: the reported quality, a 6:1:1 weighted mean of plane PSNRs
"""

import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from piccam import PEAK_VALUE, RAW_BITS_PER_PIXEL, SceneClass
from piccam.errors import BadParameter, ClipTooShort, DimensionMismatch, ZeroDenominator
from piccam.video_io import Frame, VideoClip

DEFAULT_STATIC_THRESHOLD = 0.01


@dataclass(frozen=True)
class DistortionWeights:
    w_y: float = 6.0
    w_u: float = 1.0
    w_v: float = 1.0

    def __post_init__(self):
        if min(self.as_tuple()) < 0 or sum(self.as_tuple()) <= 0:
            raise BadParameter(
                f"Distortion weights must be >= 0 with a positive sum, got {self.as_tuple()}"
            )

    def as_tuple(self):
        return (self.w_y, self.w_u, self.w_v)

    @property
    def total(self) -> float:
        return sum(self.as_tuple())


DEFAULT_WEIGHTS = DistortionWeights()


@dataclass
class QualityReport:
    psnr_y: float
    psnr_u: float
    psnr_v: float
    psnr_weighted: float
    mse_weighted: float
    bpp: Optional[float] = None

    def to_json(self) -> dict:
        return asdict(self)


def _check_same_dims(a: Frame, b: Frame) -> None:
    if a.dims != b.dims:
        raise DimensionMismatch(
            f"Cannot compare {a.width}x{a.height} with {b.width}x{b.height}"
        )


def plane_mse(a: np.ndarray, b: np.ndarray) -> float:
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.mean(diff * diff))


def plane_mses(a: Frame, b: Frame) -> List[float]:
    _check_same_dims(a, b)
    return [plane_mse(pa, pb) for pa, pb in zip(a.planes, b.planes)]


def combine_planes(values: Sequence[float], w: DistortionWeights) -> float:
    return sum(wi * vi for wi, vi in zip(w.as_tuple(), values)) / w.total


def weighted_mse(a: Frame, b: Frame, w: DistortionWeights = DEFAULT_WEIGHTS) -> float:
    return combine_planes(plane_mses(a, b), w)


def psnr_from_mse(mse: float) -> float:
    if mse == 0:
        return math.inf
    return 10 * math.log10(PEAK_VALUE**2 / mse)


def combine_psnrs(psnrs: Sequence[float], w: DistortionWeights) -> float:
    """
    Weighted mean of plane PSNRs. Any infinite plane with positive weight makes
    the combination infinite.
    """
    if any(math.isinf(p) and wi > 0 for wi, p in zip(w.as_tuple(), psnrs)):
        return math.inf
    return sum(wi * p for wi, p in zip(w.as_tuple(), psnrs) if wi > 0) / w.total


def weighted_yuv_psnr(
    a: Frame, b: Frame, w: DistortionWeights = DEFAULT_WEIGHTS
) -> QualityReport:
    mses = plane_mses(a, b)
    psnrs = [psnr_from_mse(mse) for mse in mses]
    return QualityReport(
        psnr_y=psnrs[0],
        psnr_u=psnrs[1],
        psnr_v=psnrs[2],
        psnr_weighted=combine_psnrs(psnrs, w),
        mse_weighted=combine_planes(mses, w),
    )


def bpp(total_bits: int, width: int, height: int, n_frames: int) -> float:
    """Bits per luma sample; chroma samples are not counted."""
    denominator = width * height * n_frames
    if denominator <= 0:
        raise ZeroDenominator(
            f"No luma samples to divide by ({width}x{height}, {n_frames} frames)"
        )
    return total_bits / denominator


def compression_rate_percent(bits_per_pixel: float) -> float:
    """Coded size as a percentage of the raw 8-bit 4:2:0 size."""
    return 100 * bits_per_pixel / RAW_BITS_PER_PIXEL


def evaluate_clip(
    source: VideoClip,
    recon: VideoClip,
    total_bits: int,
    w: DistortionWeights = DEFAULT_WEIGHTS,
) -> QualityReport:
    """
    Sequence-level quality: per-frame PSNRs and MSEs averaged over all frames,
    rate over all frames.
    """
    if len(source) != len(recon):
        raise DimensionMismatch(
            f"Source has {len(source)} frames, reconstruction has {len(recon)}"
        )
    reports = [weighted_yuv_psnr(a, b, w) for a, b in zip(source, recon)]
    return QualityReport(
        psnr_y=float(np.mean([r.psnr_y for r in reports])),
        psnr_u=float(np.mean([r.psnr_u for r in reports])),
        psnr_v=float(np.mean([r.psnr_v for r in reports])),
        psnr_weighted=float(np.mean([r.psnr_weighted for r in reports])),
        mse_weighted=float(np.mean([r.mse_weighted for r in reports])),
        bpp=bpp(total_bits, source.width, source.height, len(source)),
    )


##########################
## Scene classification ##
##########################
def change_intensity(clip: VideoClip) -> float:
    """
    Mean absolute consecutive-frame luma difference, on a [0, 1] scale.
    """
    if len(clip) < 2:
        raise ClipTooShort("Change intensity needs at least 2 frames")
    diffs = [
        np.mean(
            np.abs(
                clip[i + 1].y_plane.astype(np.int16) - clip[i].y_plane.astype(np.int16)
            )
        )
        for i in range(len(clip) - 1)
    ]
    return float(np.mean(diffs)) / PEAK_VALUE


def classify_static(
    clip: VideoClip, threshold: float = DEFAULT_STATIC_THRESHOLD
) -> SceneClass:
    if change_intensity(clip) < threshold:
        return SceneClass.Static
    return SceneClass.Dynamic


@dataclass
class WindowClass:
    start: int
    end: int
    intensity: float
    scene_class: SceneClass = field(default=SceneClass.Static)

    def to_json(self) -> dict:
        return dict(
            start=self.start,
            end=self.end,
            intensity=self.intensity,
            scene_class=str(self.scene_class),
        )


def classify_windows(
    clip: VideoClip, window: int, threshold: float = DEFAULT_STATIC_THRESHOLD
) -> List[WindowClass]:
    """
    Non-overlapping windows of `window` frames ([start, end) indices). A window
    larger than the clip yields a single window; a trailing one-frame remainder is
    merged into the previous window since it has no frame pair of its own.
    """
    if window < 2:
        raise BadParameter(f"Classification windows need >= 2 frames, got {window}")
    if len(clip) < 2:
        raise ClipTooShort("Classification needs at least 2 frames")
    bounds = [[start, min(start + window, len(clip))] for start in range(0, len(clip), window)]
    if len(bounds) > 1 and bounds[-1][1] - bounds[-1][0] < 2:
        last = bounds.pop()
        bounds[-1][1] = last[1]
    result = []
    for start, end in bounds:
        intensity = change_intensity(clip.with_frames(clip.frames[start:end]))
        scene_class = SceneClass.Static if intensity < threshold else SceneClass.Dynamic
        result.append(WindowClass(start, end, intensity, scene_class))
    return result
