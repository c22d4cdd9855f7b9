"""
Finetuning of the scene prior by minimizing the rate-distortion Lagrangian
rate + lambda * distortion over randomly sampled clips.

The forward pass stands in uniform noise for quantization and scores residuals
under the continuous Laplacian integrated over each quantization cell. Gradients
are closed-form; the previous training reconstruction is treated as a constant.
"""

import itertools as it
import json
import logging
import math
import multiprocessing as mp
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from piccam import BLOCK_SIZE, CHROMA_BLOCK_SIZE, NoiseMode
from piccam.codec_core import (
    QualityConfig,
    check_qp,
    k_max_of_step,
    lambda_of_qp,
    qp_of_frame,
    quantize,
    step_of_lambda,
    step_of_qp,
)
from piccam.errors import BadConfigValue, EmptyDataset, EmptyWarmup, GeometryMismatch
from piccam.metrics import DEFAULT_WEIGHTS, DistortionWeights, combine_planes, plane_mse
from piccam.model_params import (
    GROUP_NAMES,
    ModelParams,
    ParamGroups,
    expand_grid,
    expand_planes,
    grid_shape,
    reduce_to_grid,
)
from piccam.optim_utils import Adam, ReduceLROnPlateau
from piccam.video_io import Frame, VideoClip, sample_clip

logger = logging.getLogger(__name__)

LN2 = math.log(2)
INITIAL_SCALE = 4.0
SCALE_GROUP = "log_scales"

PRESETS = {
    "dcvc": dict(clip_len=32, learning_rate=1e-6),
    "ssf": dict(
        clip_len=20,
        learning_rate=2e-5,
        scale_group_lr=1e-3,
        lambda_list=(0.0018, 0.013, 0.0483, 0.0932, 0.18),
    ),
}


@dataclass(frozen=True)
class TrainConfig:
    clip_len: int = 8
    learning_rate: float = 1e-2
    scale_group_lr: Optional[float] = None
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    plateau_factor: float = 0.5
    plateau_patience: int = 5
    qp_list: Tuple[int, ...] = (8, 24, 40, 56)
    lambda_list: Tuple[float, ...] = ()
    epochs: int = 100
    seed: int = 0
    val_fraction: float = 0.1
    noise_mode: NoiseMode = NoiseMode.uniform

    def __post_init__(self):
        object.__setattr__(self, "qp_list", tuple(int(q) for q in self.qp_list))
        object.__setattr__(self, "lambda_list", tuple(float(l) for l in self.lambda_list))
        object.__setattr__(self, "noise_mode", NoiseMode(self.noise_mode))
        if self.clip_len < 2:
            raise BadConfigValue(f"clip_len must be >= 2, got {self.clip_len}")
        if not self.learning_rate > 0:
            raise BadConfigValue(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.scale_group_lr is not None and not self.scale_group_lr > 0:
            raise BadConfigValue(f"scale_group_lr must be > 0, got {self.scale_group_lr}")
        if not 0 < self.plateau_factor < 1:
            raise BadConfigValue(
                f"plateau_factor must lie in (0, 1), got {self.plateau_factor}"
            )
        if self.epochs < 0:
            raise BadConfigValue(f"epochs must be >= 0, got {self.epochs}")
        if not 0 < self.val_fraction < 1:
            raise BadConfigValue(f"val_fraction must lie in (0, 1), got {self.val_fraction}")
        if len(self.qp_list) == 0 and len(self.lambda_list) == 0:
            raise BadConfigValue("Training needs at least one qp or lambda")
        for qp in self.qp_list:
            check_qp(qp)
        if any(not l > 0 for l in self.lambda_list):
            raise BadConfigValue(f"Lambdas must be > 0, got {self.lambda_list}")

    @classmethod
    def from_preset(cls, name: Optional[str], **overrides) -> "TrainConfig":
        if name is not None and name not in PRESETS:
            raise BadConfigValue(f"Unknown preset '{name}', choose from {list(PRESETS)}")
        values = dict(PRESETS.get(name, {}))
        values.update(overrides)
        return cls(**values)

    def to_json(self) -> dict:
        result = asdict(self)
        result["noise_mode"] = self.noise_mode.value
        return result


@dataclass(frozen=True)
class OperatingPoint:
    """
    A training quality point. Points built from a qp follow the per-frame qp
    offsets the codec applies; points built from a lambda hold it on every frame.
    """

    lam: float
    step: float
    base_qp: Optional[int] = None

    def at_frame(self, frame_index: int, qcfg: QualityConfig) -> Tuple[float, float]:
        if self.base_qp is None:
            return self.lam, self.step
        qp = qp_of_frame(self.base_qp, frame_index, qcfg)
        return lambda_of_qp(qp, qcfg), step_of_qp(qp, qcfg)


def operating_points(cfg: TrainConfig, qcfg: QualityConfig) -> List[OperatingPoint]:
    if len(cfg.lambda_list) > 0:
        return [OperatingPoint(lam, step_of_lambda(lam, qcfg)) for lam in cfg.lambda_list]
    return [
        OperatingPoint(lambda_of_qp(qp, qcfg), step_of_qp(qp, qcfg), base_qp=qp)
        for qp in cfg.qp_list
    ]


def rd_loss(distortion: float, rate_bpp_est: float, lam: float) -> float:
    return rate_bpp_est + lam * distortion


##################
## Forward pass ##
##################
def laplace_interval_nll(
    a: np.ndarray, d: float, b: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    N = -ln[F(a + d) - F(a - d)] for a Laplacian of scale b, a = |residual| and
    d half a quantization step, with dN/da and dN/db.
    """
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        ratio = 2 * d / b
        n_outer = (a - d) / b + LN2 - np.log1p(-np.exp(-ratio))
        da_outer = 1 / b
        db_outer = -(a - d) / b**2 + (ratio / b) / np.expm1(ratio)

        a_inner = np.minimum(a, d)
        e1 = np.exp(-(d - a_inner) / b)
        e2 = np.exp(-(d + a_inner) / b)
        p = 1 - 0.5 * (e1 + e2)
        n_inner = -np.log(p)
        da_inner = (e1 - e2) / (2 * b * p)
        db_inner = (e1 * (d - a_inner) + e2 * (d + a_inner)) / (2 * b * b * p)
    outer = a >= d
    return (
        np.where(outer, n_outer, n_inner),
        np.where(outer, da_outer, da_inner),
        np.where(outer, db_outer, db_inner),
    )


@dataclass
class FrameForward:
    reset: bool
    lam: float
    step: float
    prediction: Tuple[np.ndarray, ...]
    residual: Tuple[np.ndarray, ...]
    bits: float
    rate_bpp_est: float
    distortion: float

    @property
    def loss(self) -> float:
        return rd_loss(self.distortion, self.rate_bpp_est, self.lam)


@dataclass
class SurrogateResult:
    rate_bpp_est: float
    distortion: float
    loss: float
    frames: List[FrameForward] = field(default_factory=list, repr=False)


def _scale_planes(groups: ParamGroups, width: int, height: int):
    luma = expand_grid(np.exp(groups[SCALE_GROUP][0]), BLOCK_SIZE, (height, width))
    chroma = expand_grid(
        np.exp(groups[SCALE_GROUP][1]), CHROMA_BLOCK_SIZE, (height // 2, width // 2)
    )
    return luma, chroma, chroma


def _check_groups(frames: Sequence[Frame], groups: ParamGroups) -> Tuple[int, int]:
    height, width = groups["background_y"].shape
    if groups["mix_logits"].shape != grid_shape(width, height):
        raise GeometryMismatch("mix_logits grid does not match the background")
    for frame in frames:
        if frame.dims != (width, height):
            raise GeometryMismatch(
                f"Frame is {frame.width}x{frame.height}, model is {width}x{height}"
            )
    return width, height


def _forward(
    frames: Sequence[Frame],
    groups: ParamGroups,
    point: OperatingPoint,
    qcfg: QualityConfig,
    weights: DistortionWeights,
    noise_mode: NoiseMode,
    noise_seed: int,
    with_grads: bool,
) -> Tuple[SurrogateResult, Optional[ParamGroups]]:
    width, height = _check_groups(frames, groups)
    grid = groups["mix_logits"].shape
    background = tuple(groups[name] for name in GROUP_NAMES[:3])
    mix = 1 / (1 + np.exp(-groups["mix_logits"]))
    mix_planes = expand_planes(mix, width, height)
    scales = _scale_planes(groups, width, height)
    block_sizes = (BLOCK_SIZE, CHROMA_BLOCK_SIZE, CHROMA_BLOCK_SIZE)
    rng = np.random.default_rng(noise_seed)
    grads = {name: np.zeros_like(value) for name, value in groups.items()}
    # d(loss)/d(nll) for every sample: loss averages per-frame bits per luma sample
    coef = 1 / (len(frames) * width * height * LN2)

    prev = None
    forwards = []
    for t, frame in enumerate(frames):
        lam, step = point.at_frame(t, qcfg)
        reset = prev is None or t % qcfg.reset_period == 0
        if reset:
            prediction = background
        else:
            prediction = tuple(
                m * p + (1 - m) * bg for m, p, bg in zip(mix_planes, prev, background)
            )
        source = frame.as_float()
        residuals = []
        bits = 0.0
        for k, (x, pred) in enumerate(zip(source, prediction)):
            r = x - pred
            if noise_mode is NoiseMode.uniform:
                r = r + rng.uniform(-step / 2, step / 2, size=r.shape)
            elif noise_mode is NoiseMode.quantize:
                r = step * quantize(r, step, k_max_of_step(step))
            residuals.append(r)
            nll, dn_da, dn_db = laplace_interval_nll(np.abs(r), step / 2, scales[k])
            bits += float(nll.sum()) / LN2
            if not with_grads:
                continue
            g_pred = -np.sign(r) * dn_da * coef
            g_log_scale = dn_db * scales[k] * coef
            grads[SCALE_GROUP][min(k, 1)] += reduce_to_grid(
                g_log_scale, block_sizes[k], grid
            )
            if reset:
                grads[GROUP_NAMES[k]] += g_pred
            else:
                m = mix_planes[k]
                grads[GROUP_NAMES[k]] += g_pred * (1 - m)
                g_mix = g_pred * (prev[k] - background[k]) * m * (1 - m)
                grads["mix_logits"] += reduce_to_grid(g_mix, block_sizes[k], grid)
        recon = tuple(p + r for p, r in zip(prediction, residuals))
        distortion = combine_planes(
            [plane_mse(x, y) for x, y in zip(source, recon)], weights
        )
        forwards.append(
            FrameForward(
                reset=reset,
                lam=lam,
                step=step,
                prediction=prediction,
                residual=tuple(residuals),
                bits=bits,
                rate_bpp_est=bits / (width * height),
                distortion=distortion,
            )
        )
        prev = recon

    result = SurrogateResult(
        rate_bpp_est=float(np.mean([f.rate_bpp_est for f in forwards])),
        distortion=float(np.mean([f.distortion for f in forwards])),
        loss=float(np.mean([f.loss for f in forwards])),
        frames=forwards,
    )
    return result, (grads if with_grads else None)


def surrogate_rate_and_distortion(
    frames: Sequence[Frame],
    groups: ParamGroups,
    point: OperatingPoint,
    qcfg: QualityConfig,
    weights: DistortionWeights = DEFAULT_WEIGHTS,
    noise_mode: NoiseMode = NoiseMode.uniform,
    noise_seed: int = 0,
) -> SurrogateResult:
    result, _ = _forward(
        frames, groups, point, qcfg, weights, noise_mode, noise_seed, with_grads=False
    )
    return result


def gradients(
    frames: Sequence[Frame],
    groups: ParamGroups,
    point: OperatingPoint,
    qcfg: QualityConfig,
    weights: DistortionWeights = DEFAULT_WEIGHTS,
    noise_mode: NoiseMode = NoiseMode.uniform,
    noise_seed: int = 0,
) -> Tuple[SurrogateResult, ParamGroups]:
    """
    Gradients of the clip's mean RD loss. The distortion term carries no
    parameter gradient: the training reconstruction is the source plus noise.
    """
    return _forward(
        frames, groups, point, qcfg, weights, noise_mode, noise_seed, with_grads=True
    )


################
## Finetuning ##
################
def init_params(warmup_frames: Sequence[Frame], scene_id: str = "") -> ModelParams:
    if len(warmup_frames) == 0:
        raise EmptyWarmup("Initialization needs at least one warmup frame")
    background = tuple(
        np.mean([frame.planes[k].astype(np.float64) for frame in warmup_frames], axis=0)
        for k in range(3)
    )
    width, height = warmup_frames[0].dims
    grid = grid_shape(width, height)
    return ModelParams(
        background=background,
        mix_logits=np.zeros(grid),
        log_scales=np.full((2,) + grid, math.log(INITIAL_SCALE)),
        scene_id=scene_id,
    )


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float
    learning_rate: float
    bpp_est: float
    distortion: float


@dataclass
class TrainLog:
    initial_val_loss: Optional[float] = None
    epochs: List[EpochLog] = field(default_factory=list)

    def to_json(self) -> dict:
        return dict(
            initial_val_loss=self.initial_val_loss,
            epochs=[asdict(e) for e in self.epochs],
        )

    def learning_rates(self) -> List[float]:
        return [e.learning_rate for e in self.epochs]


def save_train_log(log: TrainLog, fname) -> None:
    with Path(fname).open("w") as ostream:
        json.dump(log.to_json(), ostream, indent=1)


def derive_seed(*keys: int) -> int:
    return int(np.random.SeedSequence(list(keys)).generate_state(1, dtype=np.uint64)[0])


@dataclass
class SourceSplit:
    train: VideoClip
    validation: VideoClip


def split_source(clip: VideoClip, clip_len: int, val_fraction: float) -> SourceSplit:
    """The last val_fraction of the timeline is held out for validation."""
    n_val = max(1, int(round(len(clip) * val_fraction)))
    train_frames = clip.frames[: len(clip) - n_val]
    val_frames = clip.frames[len(clip) - n_val :][:clip_len]
    if len(train_frames) == 0:
        raise BadConfigValue(
            f"Source of {len(clip)} frames leaves nothing to train on at val_fraction {val_fraction}"
        )
    return SourceSplit(clip.with_frames(train_frames), clip.with_frames(val_frames))


def source_gradients(
    frames: Sequence[Frame],
    groups: ParamGroups,
    point: OperatingPoint,
    qcfg: QualityConfig,
    weights: DistortionWeights,
    noise_mode: NoiseMode,
    noise_seed: int,
) -> Tuple[SurrogateResult, ParamGroups]:
    result, grads = gradients(
        frames, groups, point, qcfg, weights, noise_mode, noise_seed
    )
    # Per-frame planes are not needed across process boundaries
    return replace(result, frames=[]), grads


def validation_loss(
    splits: Sequence[SourceSplit],
    groups: ParamGroups,
    points: Sequence[OperatingPoint],
    qcfg: QualityConfig,
    weights: DistortionWeights,
    seed: int,
) -> SurrogateResult:
    """Mean over sources and quality points, with a fixed noise draw per source."""
    results = [
        surrogate_rate_and_distortion(
            split.validation.frames,
            groups,
            point,
            qcfg,
            weights,
            NoiseMode.uniform,
            derive_seed(seed, 1, i),
        )
        for i, split in enumerate(splits)
        for point in points
    ]
    return SurrogateResult(
        rate_bpp_est=float(np.mean([r.rate_bpp_est for r in results])),
        distortion=float(np.mean([r.distortion for r in results])),
        loss=float(np.mean([r.loss for r in results])),
    )


def finetune(
    dataset: Sequence[VideoClip],
    initial: ModelParams,
    cfg: TrainConfig,
    qcfg: QualityConfig = QualityConfig(),
    weights: DistortionWeights = DEFAULT_WEIGHTS,
    threads: int = 1,
) -> Tuple[ModelParams, TrainLog]:
    if len(dataset) == 0:
        raise EmptyDataset("Finetuning needs at least one source video")
    for clip in dataset:
        initial.check_geometry(clip.width, clip.height)
    log = TrainLog()
    if cfg.epochs == 0:
        return initial, log

    splits = [split_source(clip, cfg.clip_len, cfg.val_fraction) for clip in dataset]
    points = operating_points(cfg, qcfg)
    params = initial.to_groups()
    group_lrs = {} if cfg.scale_group_lr is None else {SCALE_GROUP: cfg.scale_group_lr}
    optimizer = Adam(
        params,
        lr=cfg.learning_rate,
        betas=(cfg.beta1, cfg.beta2),
        eps=cfg.epsilon,
        group_lrs=group_lrs,
    )
    scheduler = ReduceLROnPlateau(factor=cfg.plateau_factor, patience=cfg.plateau_patience)
    log.initial_val_loss = validation_loss(
        splits, params, points, qcfg, weights, cfg.seed
    ).loss
    logger.info(
        f"Finetuning on {len(dataset)} sources, {len(points)} quality points: "
        f"initial validation loss {log.initial_val_loss:.5f}"
    )

    pool = mp.Pool(processes=threads) if threads > 1 else None
    try:
        for epoch in range(1, cfg.epochs + 1):
            jobs = []
            for i, split in enumerate(splits):
                point_rng = np.random.default_rng(derive_seed(cfg.seed, 0, epoch, i, 0))
                point = points[int(point_rng.integers(len(points)))]
                clip = sample_clip(
                    split.train, cfg.clip_len, derive_seed(cfg.seed, 0, epoch, i, 1)
                )
                jobs.append(
                    (clip.frames, point, derive_seed(cfg.seed, 0, epoch, i, 2))
                )
            job_args = [
                (frames, params, point, qcfg, weights, cfg.noise_mode, noise_seed)
                for frames, point, noise_seed in jobs
            ]
            if pool is None:
                pooled_results = list(it.starmap(source_gradients, job_args))
            else:
                pooled_results = pool.starmap(source_gradients, job_args)
            grads = {name: np.zeros_like(value) for name, value in params.items()}
            for _, source_grads in pooled_results:
                for name in grads:
                    grads[name] += source_grads[name]
            grads = {name: g / len(splits) for name, g in grads.items()}
            train_loss = float(np.mean([r.loss for r, _ in pooled_results]))

            learning_rate = optimizer.lr
            params = optimizer.step(params, grads)
            val = validation_loss(splits, params, points, qcfg, weights, cfg.seed)
            scheduler.step(val.loss, optimizer)
            log.epochs.append(
                EpochLog(
                    epoch=epoch,
                    train_loss=train_loss,
                    val_loss=val.loss,
                    learning_rate=learning_rate,
                    bpp_est=val.rate_bpp_est,
                    distortion=val.distortion,
                )
            )
            logger.info(
                f"Epoch {epoch}/{cfg.epochs}: train loss {train_loss:.5f}, "
                f"validation loss {val.loss:.5f}, lr {learning_rate:.3g}"
            )
    finally:
        if pool is not None:
            pool.close()
            pool.join()

    result = ModelParams.from_groups(
        params, scene_id=initial.scene_id, train_step=initial.train_step + cfg.epochs
    )
    return result, log
