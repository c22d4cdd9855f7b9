import functools
import itertools as it
import json
import logging
import math
import multiprocessing as mp
import sys
from pathlib import Path

import rich_click as click
from rich.console import Console
from rich.logging import RichHandler

from piccam import (
    Interpolation,
    __version__,
    all_interpolations,
    parse_number_list,
)
from piccam.bd_metrics import (
    RDCurve,
    RDPoint,
    bd_psnr,
    bd_rate,
    load_curve,
    read_curve_points,
    save_curve,
    upper_envelope,
)
from piccam.codec_core import Bitstream, QualityConfig, decode_video, encode_video
from piccam.config_utils import ExperimentConfig, load_config
from piccam.errors import (
    BadConfigValue,
    EmptyDataset,
    EmptyInput,
    NonMonotoneCurve,
    PiccamError,
    TooFewPoints,
)
from piccam.extern_codecs import run_baseline
from piccam.metrics import classify_windows, compression_rate_percent, evaluate_clip
from piccam.model_params import ModelParams, load_model, save_model
from piccam.pic_trainer import PRESETS, finetune, init_params, save_train_log
from piccam.report_utils import write_report
from piccam.synthetic import background_frame, generate_static_scene
from piccam.video_io import (
    DEFAULT_FPS,
    VideoClip,
    crop_clip,
    load_video,
    random_crop_origin,
    sample_clip,
    save_y4m,
    write_raw_yuv,
)

logger = logging.getLogger("piccam")

MODEL_FNAME = "model.picm"
TRAIN_LOG_FNAME = "train_log.json"
DEFAULT_QP_LIST = "8,24,40,56"

click.rich_click.OPTION_GROUPS = {
    "piccam eval": [
        {"name": "Generic", "options": ["--help", "--threads", "--config"]},
        {
            "name": "Operating points",
            "options": ["--qp-list", "--envelope", "--clip-len", "--seed"],
        },
        {"name": "Raw input", "options": ["--width", "--height", "--fps"]},
    ],
    "piccam finetune": [
        {"name": "Generic", "options": ["--help", "--threads"]},
        {"name": "Training", "options": ["--preset"]},
    ],
    "piccam synth": [
        {"name": "Generic", "options": ["--help", "--seed"]},
        {
            "name": "Scene",
            "options": ["--width", "--height", "--frames", "--sprites", "--noise-sigma"],
        },
    ],
}


def setup_logging(verbose: bool) -> None:
    handler = RichHandler(console=Console(stderr=True), show_path=False)
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        handlers=[handler],
        force=True,
    )


def finite_or_null(value):
    """Infinite PSNRs (lossless points) have no strict-JSON form; they become null."""
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {key: finite_or_null(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [finite_or_null(item) for item in value]
    return value


def emit(record: dict) -> None:
    click.echo(json.dumps(finite_or_null(record), allow_nan=False))


def exits_on_error(command):
    """Maps library errors to the exit-code table; stdout stays JSON-only."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except PiccamError as error:
            logger.error(f"{type(error).__name__}: {error}")
            sys.exit(error.exit_code)
        except OSError as error:
            logger.error(f"{type(error).__name__}: {error}")
            sys.exit(2)

    return wrapper


def parse_fps(fps: str):
    try:
        num, den = (int(e) for e in fps.split(":"))
    except ValueError:
        raise BadConfigValue(f"Frame rate must look like 'num:den', got '{fps}'")
    if num <= 0 or den <= 0:
        raise BadConfigValue(f"Frame rate must be positive, got '{fps}'")
    return num, den


def parse_list_option(value: str, option: str, cast=float) -> list:
    try:
        return parse_number_list(value, cast=cast)
    except ValueError:
        raise BadConfigValue(f"{option} takes comma-separated numbers, got '{value}'")


def raw_video_options(command):
    command = click.option(
        "--fps",
        type=str,
        default=f"{DEFAULT_FPS[0]}:{DEFAULT_FPS[1]}",
        help="Frame rate of raw planar input, as num:den",
        show_default=True,
    )(command)
    command = click.option(
        "--height", type=int, help="Luma height of raw planar (.yuv) input"
    )(command)
    command = click.option(
        "--width", type=int, help="Luma width of raw planar (.yuv) input"
    )(command)
    return command


def config_option(command):
    return click.option(
        "--config",
        "config_fname",
        type=click.Path(),
        help="Experiment config file (quality.* and metrics.* keys are used)",
    )(command)


def experiment_config(config_fname) -> ExperimentConfig:
    if config_fname is None:
        return ExperimentConfig()
    return load_config(config_fname)


def quality_config(cfg: ExperimentConfig, base_qp: int) -> QualityConfig:
    return QualityConfig(
        base_qp=base_qp,
        qp_offsets=cfg.quality.qp_offsets,
        lambda_min=cfg.quality.lambda_min,
        lambda_max=cfg.quality.lambda_max,
        reset_period=cfg.quality.reset_period,
        step_ref=cfg.quality.step_ref,
    )


def write_video(clip: VideoClip, fname) -> None:
    fname = Path(fname)
    if fname.suffix.lower() == ".y4m":
        save_y4m(clip, fname)
    else:
        with fname.open("wb") as ostream:
            write_raw_yuv(clip, ostream)


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Log per-frame details")
@click.help_option("--help", "-h")
@click.version_option(__version__, "--version", "-V")
def main(verbose):
    """
    Scene-prior video coding: encode, decode, finetune and evaluate a codec whose
    parameters carry a static scene's background.

    Exit codes: 2=IO, 3=format, 4=digest mismatch, 5=configuration.
    """
    setup_logging(verbose)


@main.command()
@click.argument("input_fname", type=click.Path())
@click.argument("model_fname", type=click.Path())
@click.argument("output_fname", type=click.Path())
@click.option("--qp", type=int, default=32, help="Base quality parameter", show_default=True)
@config_option
@raw_video_options
@exits_on_error
def encode(input_fname, model_fname, output_fname, qp, config_fname, width, height, fps):
    """Encodes a video into a bitstream; prints per-frame stats as JSON lines."""
    cfg = experiment_config(config_fname)
    qcfg = quality_config(cfg, qp)
    clip = load_video(input_fname, width, height, parse_fps(fps))
    if clip_len is not None:
        clip = sample_clip(clip, clip_len, seed)
        logger.info(f"Evaluating frames {clip.frames[0] is not None and ''}")
    params = load_model(model_fname)
    bitstream = encode_video(clip, params, qcfg)
    Path(output_fname).write_bytes(bitstream.to_bytes())
    for stats in bitstream.frame_stats:
        emit(stats.to_json())
    emit(
        dict(
            frames=bitstream.frame_count,
            bytes=bitstream.num_bytes,
            bpp=bitstream.bpp,
            compression_rate_percent=compression_rate_percent(bitstream.bpp),
        )
    )


@main.command()
@click.argument("input_fname", type=click.Path())
@click.argument("model_fname", type=click.Path())
@click.argument("output_fname", type=click.Path())
@click.option("--fps", type=str, default="25:1", help="Frame rate to write", show_default=True)
@config_option
@exits_on_error
def decode(input_fname, model_fname, output_fname, fps, config_fname):
    """Decodes a bitstream to .y4m (or raw planar for any other suffix)."""
    cfg = experiment_config(config_fname)
    bitstream = Bitstream.from_bytes(Path(input_fname).read_bytes())
    params = load_model(model_fname)
    clip = decode_video(
        bitstream, params, quality_config(cfg, bitstream.base_qp), parse_fps(fps)
    )
    write_video(clip, output_fname)
    emit(dict(frames=len(clip), width=clip.width, height=clip.height))


def load_sources(cfg: ExperimentConfig):
    data = cfg.data
    sources = [
        load_video(fname, data.width, data.height, (data.fps_num, data.fps_den))
        for fname in cfg.dataset_files()
    ]
    if len(sources) == 0:
        raise EmptyDataset(f"No .y4m or .yuv files in {cfg.dataset_dir}")
    if data.crop_width is not None:
        cropped = []
        for i, clip in enumerate(sources):
            x, y = random_crop_origin(
                clip.width, clip.height, data.crop_width, data.crop_height, data.crop_seed + i
            )
            cropped.append(crop_clip(clip, x, y, data.crop_width, data.crop_height))
        sources = cropped
    return sources


@main.command(name="finetune")
@click.argument("config_fname", type=click.Path())
@click.option(
    "--preset",
    type=click.Choice(list(PRESETS)),
    help="Training preset, applied before the config file's train.* keys",
)
@click.option("--threads", type=int, default=1, show_default=True)
@exits_on_error
def finetune_command(config_fname, preset, threads):
    """Finetunes the scene prior; writes model.picm and train_log.json to paths.output_dir."""
    cfg = load_config(config_fname, preset=preset)
    sources = load_sources(cfg)
    if cfg.model_file is not None:
        initial = load_model(cfg.model_file)
    else:
        warmup = [f for clip in sources for f in clip.frames[: cfg.data.warmup_frames]]
        initial = init_params(warmup, scene_id=cfg.dataset_dir.name)
    params, train_log = finetune(
        sources, initial, cfg.train, cfg.quality, cfg.weights, threads=max(threads, 1)
    )
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    save_model(params, cfg.output_dir / MODEL_FNAME)
    save_train_log(train_log, cfg.output_dir / TRAIN_LOG_FNAME)
    emit(
        dict(
            model=str(cfg.output_dir / MODEL_FNAME),
            digest=f"{params.digest:016x}",
            epochs=len(train_log.epochs),
            initial_val_loss=train_log.initial_val_loss,
            final_val_loss=(
                train_log.epochs[-1].val_loss if len(train_log.epochs) > 0 else None
            ),
        )
    )


def evaluate_qp(clip: VideoClip, params: ModelParams, qcfg: QualityConfig) -> dict:
    bitstream = encode_video(clip, params, qcfg)
    recon = decode_video(bitstream, params, qcfg)
    report = evaluate_clip(clip, recon, 8 * bitstream.num_bytes)
    return dict(qp=qcfg.base_qp, **report.to_json())


def run_rd_sweep(clip: VideoClip, params: ModelParams, qcfgs, threads: int):
    if threads > 1:
        with mp.Pool(processes=threads) as pool:
            return pool.starmap(evaluate_qp, zip(it.repeat(clip), it.repeat(params), qcfgs))
    return [evaluate_qp(clip, params, qcfg) for qcfg in qcfgs]


@main.command(name="eval")
@click.argument("input_fname", type=click.Path())
@click.argument("model_fname", type=click.Path())
@click.option(
    "--qp-list", type=str, default=DEFAULT_QP_LIST, help="Comma-separated base qps", show_default=True
)
@click.option("--output", "-o", type=click.Path(), help="Where to write the RD curve JSON")
@click.option("--envelope", is_flag=True, help="Keep only the monotone upper envelope of the points")
@click.option("--clip-len", type=int, help="Evaluate a random window of this many frames")
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for the --clip-len window")
@click.option("--threads", type=int, default=1, show_default=True)
@config_option
@raw_video_options
@exits_on_error
def eval_command(
    input_fname,
    model_fname,
    qp_list,
    output,
    envelope,
    clip_len,
    seed,
    threads,
    config_fname,
    width,
    height,
    fps,
):
    """Sweeps base qps, printing one JSON line per RD point, then the curve."""
    cfg = experiment_config(config_fname)
    qcfgs = [quality_config(cfg, qp) for qp in parse_list_option(qp_list, "--qp-list", cast=int)]
    if len(qcfgs) == 0:
        raise EmptyInput("--qp-list holds no qp")
    clip = load_video(input_fname, width, height, parse_fps(fps))
    if clip_len is not None:
        clip = sample_clip(clip, clip_len, seed)
        logger.info(f"Evaluating a {clip_len}-frame window drawn with seed {seed}")
    params = load_model(model_fname)
    results = run_rd_sweep(clip, params, qcfgs, threads)
    points = []
    for result in results:
        emit(result)
        if result["psnr_weighted"] == float("inf"):
            logger.warning(f"qp {result['qp']} is lossless; it cannot sit on an RD curve")
            continue
        points.append(RDPoint(result["bpp"], result["psnr_weighted"]))
    if envelope:
        points = upper_envelope(points)
    try:
        curve = RDCurve(points)
    except (TooFewPoints, NonMonotoneCurve) as error:
        logger.warning(f"No RD curve written: {error}")
        return
    if output is not None:
        save_curve(curve, output)
    emit(dict(curve=curve.to_json()))


@main.command(name="bdrate")
@click.argument("anchor_fname", type=click.Path())
@click.argument("test_fname", type=click.Path())
@click.option(
    "--interp",
    type=click.Choice(list(map(str, all_interpolations))),
    default=str(Interpolation.MonotonePCHIP),
    show_default=True,
)
@click.option("--window", type=str, help="Explicit PSNR window 'lo,hi' in dB")
@click.option("--bd-psnr", "with_bd_psnr", is_flag=True, help="Also report BD-PSNR")
@exits_on_error
def bdrate_command(anchor_fname, test_fname, interp, window, with_bd_psnr):
    """BD-rate of the test curve against the anchor, in percent."""
    anchor = load_curve(anchor_fname)
    test = load_curve(test_fname)
    interp = Interpolation(interp)
    if window is not None:
        window = parse_list_option(window, "--window")
        if len(window) != 2:
            raise BadConfigValue(f"--window takes 'lo,hi', got {window}")
    record = dict(bd_rate=bd_rate(anchor, test, interp, window=window))
    if with_bd_psnr:
        record["bd_psnr"] = bd_psnr(anchor, test, interp)
    emit(record)


@main.command(name="classify")
@click.argument("input_fname", type=click.Path())
@click.option("--threshold", type=float, help="Static/dynamic change-intensity threshold")
@click.option("--window", type=int, help="Frames per window; the whole clip by default")
@config_option
@raw_video_options
@exits_on_error
def classify_command(input_fname, threshold, window, config_fname, width, height, fps):
    """Per-window Static/Dynamic classification as JSON lines."""
    cfg = experiment_config(config_fname)
    threshold = cfg.static_threshold if threshold is None else threshold
    clip = load_video(input_fname, width, height, parse_fps(fps))
    window = len(clip) if window is None else window
    for window_class in classify_windows(clip, window, threshold):
        emit(window_class.to_json())


@main.command(name="report")
@click.argument("curve_fnames", nargs=-1, type=click.Path())
@click.option("--svg", "svg_fname", type=click.Path(), default="rd.svg", show_default=True)
@click.option(
    "--table",
    "table_fname",
    type=click.Path(),
    default="rd.tsv",
    help="Tab-separated table of RD points (curve, bpp, psnr, compression rate)",
    show_default=True,
)
@exits_on_error
def report_command(curve_fnames, svg_fname, table_fname):
    """Plots RD curve files into one SVG and tabulates their points as TSV."""
    if len(curve_fnames) == 0:
        raise EmptyInput("No curve files given")
    curves = {}
    for fname in curve_fnames:
        curves[Path(fname).stem] = read_curve_points(fname)
    write_report(curves, svg_fname, table_fname)
    emit(dict(svg=str(svg_fname), table=str(table_fname), curves=len(curves)))


@main.command(name="baseline")
@click.argument("input_fname", type=click.Path())
@click.argument("config_fname", type=click.Path())
@click.option("--name", "names", multiple=True, help="Baselines to run; all configured by default")
@click.option("--work-dir", type=click.Path(), default="baseline_work", show_default=True)
@click.option("--threads", type=int, default=1, show_default=True)
@exits_on_error
def baseline_command(input_fname, config_fname, names, work_dir, threads):
    """Runs external codecs from baseline.<name>.* templates; writes <name>.json curves."""
    cfg = load_config(config_fname)
    names = list(names) or list(cfg.baselines)
    if len(names) == 0:
        raise EmptyInput("No baseline.<name>.* entries configured")
    unknown = [n for n in names if n not in cfg.baselines]
    if len(unknown) > 0:
        raise BadConfigValue(f"Baselines not configured: {unknown}")
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    for name in names:
        curve = run_baseline(
            input_fname,
            cfg.baselines[name],
            Path(work_dir) / name,
            weights=cfg.weights,
            threads=threads,
        )
        curve_fname = cfg.output_dir / f"{name}.json"
        save_curve(curve, curve_fname)
        emit(dict(baseline=name, curve_file=str(curve_fname), curve=curve.to_json()))


@main.command(name="synth")
@click.argument("output_fname", type=click.Path())
@click.option("--width", type=int, default=256, show_default=True)
@click.option("--height", type=int, default=256, show_default=True)
@click.option("--frames", type=int, default=2000, show_default=True)
@click.option("--sprites", type=int, default=2, show_default=True)
@click.option("--noise-sigma", type=float, default=2.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--background", "background_fname", type=click.Path(), help="Also write the clean background frame")
@exits_on_error
def synth_command(output_fname, width, height, frames, sprites, noise_sigma, seed, background_fname):
    """Generates a static synthetic scene with moving sprites and sensor noise."""
    clip = generate_static_scene(width, height, frames, sprites, noise_sigma, seed)
    write_video(clip, output_fname)
    if background_fname is not None:
        write_video(VideoClip((background_frame(width, height, seed),)), background_fname)
    emit(dict(output=str(output_fname), frames=len(clip), width=width, height=height))


if __name__ == "__main__":
    main()
