"""
Baseline RD curves from external encoders, driven as subprocesses through
user-supplied command templates.
"""

import itertools as it
import logging
import shlex
import string
import subprocess
from dataclasses import dataclass
from multiprocessing.pool import ThreadPool
from pathlib import Path
from typing import List, Sequence, Tuple

from piccam.bd_metrics import MIN_CURVE_POINTS, RDCurve, RDPoint
from piccam.errors import (
    BinaryNotFound,
    CurveNotMonotone,
    GeometryMismatch,
    NonMonotoneCurve,
    NonZeroExit,
    TemplateError,
    TimedOut,
    TooFewPoints,
)
from piccam.metrics import DEFAULT_WEIGHTS, DistortionWeights, bpp, evaluate_clip
from piccam.video_io import VideoClip, load_y4m

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 600
ENCODE_PLACEHOLDERS = ("input", "output", "quality")
DECODE_PLACEHOLDERS = ("input", "output")


def template_fields(template: str) -> List[str]:
    try:
        return [
            name for _, name, _, _ in string.Formatter().parse(template) if name is not None
        ]
    except ValueError as error:
        raise TemplateError(f"Cannot parse command template '{template}': {error}")


def check_template(template: str, placeholders: Sequence[str]) -> None:
    fields = template_fields(template)
    for placeholder in placeholders:
        if fields.count(placeholder) != 1:
            raise TemplateError(
                f"Template '{template}' must contain {{{placeholder}}} exactly once"
            )
    unknown = set(fields) - set(placeholders)
    if len(unknown) > 0:
        raise TemplateError(
            f"Template '{template}' has unknown placeholders: {sorted(unknown)}"
        )


@dataclass(frozen=True)
class CodecCommand:
    name: str
    encode_template: str
    decode_template: str
    quality_values: Tuple[str, ...]
    bitstream_suffix: str = ".bin"

    def __post_init__(self):
        object.__setattr__(
            self, "quality_values", tuple(str(q) for q in self.quality_values)
        )
        check_template(self.encode_template, ENCODE_PLACEHOLDERS)
        check_template(self.decode_template, DECODE_PLACEHOLDERS)

    def encode_args(self, input_path: Path, output_path: Path, quality: str) -> List[str]:
        return shlex.split(
            self.encode_template.format(
                input=shlex.quote(str(input_path)),
                output=shlex.quote(str(output_path)),
                quality=shlex.quote(quality),
            )
        )

    def decode_args(self, input_path: Path, output_path: Path) -> List[str]:
        return shlex.split(
            self.decode_template.format(
                input=shlex.quote(str(input_path)),
                output=shlex.quote(str(output_path)),
            )
        )


def run_command(args: List[str], timeout: float) -> None:
    command = shlex.join(args)
    logger.debug(f"Running: {command}")
    try:
        completed = subprocess.run(args, capture_output=True, timeout=timeout)
    except FileNotFoundError as error:
        raise BinaryNotFound(f"Cannot run '{args[0]}': not found") from error
    except subprocess.TimeoutExpired as error:
        raise TimedOut(f"Command '{command}' exceeded {timeout} s") from error
    if completed.returncode != 0:
        raise NonZeroExit(
            command, completed.returncode, completed.stderr.decode(errors="replace")
        )


def measure_quality_point(
    source_path: Path,
    source: VideoClip,
    cmd: CodecCommand,
    quality_index: int,
    work_dir: Path,
    weights: DistortionWeights,
    timeout: float,
) -> Tuple[float, float]:
    """Returns (bpp, weighted PSNR); bpp comes from the bitstream file size."""
    quality = cmd.quality_values[quality_index]
    stem = f"{cmd.name}_q{quality_index}"
    bitstream_path = work_dir / f"{stem}{cmd.bitstream_suffix}"
    decoded_path = work_dir / f"{stem}_decoded.y4m"
    logger.info(f"{cmd.name}: encoding at quality {quality}")
    run_command(cmd.encode_args(source_path, bitstream_path, quality), timeout)
    run_command(cmd.decode_args(bitstream_path, decoded_path), timeout)
    total_bits = 8 * bitstream_path.stat().st_size
    decoded = load_y4m(decoded_path)
    if decoded.dims != source.dims or len(decoded) != len(source):
        raise GeometryMismatch(
            f"{cmd.name} decoded {len(decoded)} frames of {decoded.width}x{decoded.height}, "
            f"source has {len(source)} frames of {source.width}x{source.height}"
        )
    report = evaluate_clip(source, decoded, total_bits, weights)
    return bpp(total_bits, source.width, source.height, len(source)), report.psnr_weighted


def run_baseline(
    video_path,
    cmd: CodecCommand,
    work_dir,
    weights: DistortionWeights = DEFAULT_WEIGHTS,
    threads: int = 1,
    timeout: float = DEFAULT_TIMEOUT,
) -> RDCurve:
    """
    Encodes and decodes the video once per quality value, all files under
    work_dir. Quality points run as up to `threads` concurrent subprocess chains.
    """
    if len(cmd.quality_values) < MIN_CURVE_POINTS:
        raise TooFewPoints(
            f"{cmd.name} needs at least {MIN_CURVE_POINTS} quality values, "
            f"got {len(cmd.quality_values)}"
        )
    video_path = Path(video_path)
    work_dir = Path(work_dir)
    work_dir.mkdir(parents=True, exist_ok=True)
    source = load_y4m(video_path)
    with ThreadPool(processes=max(threads, 1)) as pool:
        measurements = pool.starmap(
            measure_quality_point,
            zip(
                it.repeat(video_path),
                it.repeat(source),
                it.repeat(cmd),
                range(len(cmd.quality_values)),
                it.repeat(work_dir),
                it.repeat(weights),
                it.repeat(timeout),
            ),
        )
    points = [RDPoint(rate, psnr) for rate, psnr in measurements]
    try:
        return RDCurve(points)
    except NonMonotoneCurve as error:
        raise CurveNotMonotone(f"{cmd.name}: {error}", points) from error
