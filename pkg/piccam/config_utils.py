"""
Experiment configuration: a flat `key = value` file with dotted sections.

    paths.dataset_dir = scenes/lobby
    train.learning_rate = 0.01
    quality.qp_offsets = 0, 1, 0, 2, 0, 2, 0, 2
    baseline.x264.encode_template = ffmpeg -y -i {input} -c:v libx264 -crf {quality} {output}

`#` starts a comment. Unknown keys are errors.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Tuple

from piccam import LIST_DELIM, NoiseMode, parse_number_list
from piccam.codec_core import QualityConfig
from piccam.errors import BadConfigValue, MissingPath, PiccamError, UnknownConfigKey
from piccam.extern_codecs import CodecCommand
from piccam.metrics import DEFAULT_STATIC_THRESHOLD, DistortionWeights
from piccam.pic_trainer import TrainConfig

logger = logging.getLogger(__name__)

COMMENT_CHAR = "#"
VIDEO_SUFFIXES = (".y4m", ".yuv")


def _int_list(value: str) -> Tuple[int, ...]:
    return tuple(parse_number_list(value, cast=int))


def _float_list(value: str) -> Tuple[float, ...]:
    return tuple(parse_number_list(value, cast=float))


def _str_list(value: str) -> Tuple[str, ...]:
    return tuple(e.strip() for e in value.split(LIST_DELIM) if e.strip() != "")


SECTION_KEYS: Dict[str, Dict[str, Callable]] = {
    "paths": dict(dataset_dir=Path, model_file=Path, output_dir=Path),
    "data": dict(
        warmup_frames=int,
        width=int,
        height=int,
        fps_num=int,
        fps_den=int,
        crop_width=int,
        crop_height=int,
        crop_seed=int,
    ),
    "train": dict(
        clip_len=int,
        learning_rate=float,
        scale_group_lr=float,
        beta1=float,
        beta2=float,
        epsilon=float,
        plateau_factor=float,
        plateau_patience=int,
        qp_list=_int_list,
        lambda_list=_float_list,
        epochs=int,
        seed=int,
        val_fraction=float,
        noise_mode=NoiseMode,
    ),
    "quality": dict(
        base_qp=int,
        qp_offsets=_int_list,
        lambda_min=float,
        lambda_max=float,
        reset_period=int,
        step_ref=float,
    ),
    "metrics": dict(w_y=float, w_u=float, w_v=float, static_threshold=float),
}
BASELINE_KEYS: Dict[str, Callable] = dict(
    encode_template=str,
    decode_template=str,
    quality_values=_str_list,
    bitstream_suffix=str,
)


@dataclass(frozen=True)
class DataConfig:
    """Raw planar sources need width and height; crops are seeded and even-aligned."""

    warmup_frames: int = 8
    width: Optional[int] = None
    height: Optional[int] = None
    fps_num: int = 25
    fps_den: int = 1
    crop_width: Optional[int] = None
    crop_height: Optional[int] = None
    crop_seed: int = 0

    def __post_init__(self):
        if self.warmup_frames < 1:
            raise BadConfigValue(f"warmup_frames must be >= 1, got {self.warmup_frames}")
        if (self.crop_width is None) != (self.crop_height is None):
            raise BadConfigValue("data.crop_width and data.crop_height go together")


@dataclass
class ExperimentConfig:
    dataset_dir: Optional[Path] = None
    model_file: Optional[Path] = None
    output_dir: Path = Path(".")
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    quality: QualityConfig = field(default_factory=QualityConfig)
    weights: DistortionWeights = field(default_factory=DistortionWeights)
    static_threshold: float = DEFAULT_STATIC_THRESHOLD
    baselines: Dict[str, CodecCommand] = field(default_factory=dict)

    def dataset_files(self) -> List[Path]:
        if self.dataset_dir is None:
            raise MissingPath("No paths.dataset_dir configured")
        return sorted(
            p for p in self.dataset_dir.iterdir() if p.suffix.lower() in VIDEO_SUFFIXES
        )


def read_config_lines(lines: Iterable[str]) -> Dict[str, str]:
    entries = {}
    for line_number, line in enumerate(lines, start=1):
        line = line.split(COMMENT_CHAR, 1)[0].strip()
        if line == "":
            continue
        if "=" not in line:
            raise BadConfigValue(f"Line {line_number}: expected 'key = value', got '{line}'")
        key, value = (e.strip() for e in line.split("=", 1))
        if key in entries:
            raise BadConfigValue(f"Line {line_number}: key '{key}' set twice")
        entries[key] = value
    return entries


def _convert(key: str, converter: Callable, value: str):
    try:
        return converter(value)
    except (TypeError, ValueError) as error:
        if isinstance(error, PiccamError):
            raise
        raise BadConfigValue(f"Invalid value '{value}' for {key}: {error}") from error


def sort_entries(entries: Dict[str, str]):
    """Splits raw entries into typed per-section dicts and per-baseline dicts."""
    sections = {name: {} for name in SECTION_KEYS}
    baselines: Dict[str, Dict[str, object]] = {}
    for key, value in entries.items():
        parts = key.split(".")
        if parts[0] == "baseline" and len(parts) == 3 and parts[2] in BASELINE_KEYS:
            baselines.setdefault(parts[1], {})[parts[2]] = _convert(
                key, BASELINE_KEYS[parts[2]], value
            )
        elif len(parts) == 2 and parts[1] in SECTION_KEYS.get(parts[0], {}):
            sections[parts[0]][parts[1]] = _convert(
                key, SECTION_KEYS[parts[0]][parts[1]], value
            )
        else:
            raise UnknownConfigKey(f"Unknown configuration key '{key}'")
    return sections, baselines


def build_config(
    entries: Dict[str, str], preset: Optional[str] = None, base_dir: Path = Path(".")
) -> ExperimentConfig:
    """
    The preset applies first and configured train.* keys override it. Relative
    paths resolve against base_dir; input paths must exist.
    """
    sections, baseline_entries = sort_entries(entries)
    paths = {key: base_dir / value for key, value in sections["paths"].items()}
    for key in ("dataset_dir", "model_file"):
        if key in paths and not paths[key].exists():
            raise MissingPath(f"paths.{key} does not exist: {paths[key]}")
    metrics = dict(sections["metrics"])
    static_threshold = metrics.pop("static_threshold", DEFAULT_STATIC_THRESHOLD)
    baselines = {}
    for name, values in baseline_entries.items():
        missing = {"encode_template", "decode_template", "quality_values"} - set(values)
        if len(missing) > 0:
            raise BadConfigValue(f"baseline.{name} lacks {sorted(missing)}")
        baselines[name] = CodecCommand(name=name, **values)
    return ExperimentConfig(
        dataset_dir=paths.get("dataset_dir"),
        model_file=paths.get("model_file"),
        output_dir=paths.get("output_dir", base_dir),
        data=DataConfig(**sections["data"]),
        train=TrainConfig.from_preset(preset, **sections["train"]),
        quality=QualityConfig(**sections["quality"]),
        weights=DistortionWeights(**metrics),
        static_threshold=static_threshold,
        baselines=baselines,
    )


def load_config(fname, preset: Optional[str] = None) -> ExperimentConfig:
    fname = Path(fname)
    if not fname.exists():
        raise MissingPath(f"Config file does not exist: {fname}")
    with fname.open() as istream:
        entries = read_config_lines(istream)
    logger.debug(f"Read {len(entries)} configuration keys from {fname}")
    return build_config(entries, preset=preset, base_dir=fname.parent)
