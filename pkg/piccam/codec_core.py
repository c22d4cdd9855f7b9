"""
Frame and video coding with a scene prior held in `ModelParams`.

Per frame: predict from the background (and, between resets, the previous
reconstruction), quantize the residual with a qp-dependent step, and range code
the symbols per block under the block's Laplacian model. Only residuals are
signalled; the background travels with the model.
"""

import logging
import math
import struct
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from piccam import BLOCK_SIZE, CHROMA_BLOCK_SIZE, MAX_QP, QP_OFFSET_PERIOD
from piccam.entropy_coding import (
    PROB_TOTAL,
    LaplaceModel,
    RangeDecoder,
    RangeEncoder,
    laplace_model,
)
from piccam.errors import (
    BadBitstream,
    BadConfigValue,
    DigestMismatch,
    GeometryMismatch,
    QpOutOfRange,
    TruncatedPayload,
    TruncatedStream,
)
from piccam.metrics import weighted_yuv_psnr
from piccam.model_params import ModelParams
from piccam.video_io import DEFAULT_FPS, Frame, VideoClip

logger = logging.getLogger(__name__)

Planes = Tuple[np.ndarray, np.ndarray, np.ndarray]

BITSTREAM_MAGIC = 0x50494331
BITSTREAM_VERSION = 1
BITSTREAM_HEADER = struct.Struct(">IBIIIBQ")
PAYLOAD_LENGTH = struct.Struct(">I")


@dataclass(frozen=True)
class QualityConfig:
    base_qp: int = 32
    qp_offsets: Tuple[int, ...] = (0, 1, 0, 2, 0, 2, 0, 2)
    lambda_min: float = 2e-5
    lambda_max: float = 1.8e-3
    reset_period: int = 32
    step_ref: float = 12.0

    def __post_init__(self):
        object.__setattr__(self, "qp_offsets", tuple(int(o) for o in self.qp_offsets))
        check_qp(self.base_qp)
        if len(self.qp_offsets) != QP_OFFSET_PERIOD:
            raise BadConfigValue(
                f"qp_offsets needs {QP_OFFSET_PERIOD} entries, got {len(self.qp_offsets)}"
            )
        if self.reset_period < 1:
            raise BadConfigValue(f"reset_period must be >= 1, got {self.reset_period}")
        if not 0 < self.lambda_min < self.lambda_max:
            raise BadConfigValue(
                f"Need 0 < lambda_min < lambda_max, got {self.lambda_min}, {self.lambda_max}"
            )
        if not self.step_ref > 0:
            raise BadConfigValue(f"step_ref must be > 0, got {self.step_ref}")


def check_qp(qp: int) -> None:
    if not (isinstance(qp, (int, np.integer)) and 0 <= qp <= MAX_QP):
        raise QpOutOfRange(f"qp must be an integer in [0, {MAX_QP}], got {qp}")


def lambda_of_qp(qp: int, cfg: QualityConfig) -> float:
    """Log-linear between lambda_min (qp 0) and lambda_max (qp 63)."""
    check_qp(qp)
    return cfg.lambda_min * (cfg.lambda_max / cfg.lambda_min) ** (qp / MAX_QP)


def step_of_lambda(lam: float, cfg: QualityConfig) -> float:
    """
    At high rate D ~ step^2 / 12, so matching RD slopes gives step ~ sqrt(lambda).
    """
    return cfg.step_ref * math.sqrt(lam / cfg.lambda_max)


def step_of_qp(qp: int, cfg: QualityConfig) -> float:
    return step_of_lambda(lambda_of_qp(qp, cfg), cfg)


def qp_of_frame(base_qp: int, frame_index: int, cfg: QualityConfig) -> int:
    qp = base_qp + cfg.qp_offsets[frame_index % QP_OFFSET_PERIOD]
    return min(max(qp, 0), MAX_QP)


def k_max_of_step(step: float) -> int:
    return max(math.ceil(255 / step), 1)


def quantize(residual: np.ndarray, step: float, k_max: int) -> np.ndarray:
    """Rounds half away from zero, then clamps to [-k_max, k_max]."""
    scaled = residual / step
    q = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
    return np.clip(q, -k_max, k_max).astype(np.int64)


@dataclass
class CodecState:
    prev_recon: Optional[Planes] = None
    frame_index: int = 0

    def advance(self, recon: Planes) -> None:
        self.prev_recon = recon
        self.frame_index += 1


def is_reset_frame(state: CodecState, cfg: QualityConfig) -> bool:
    return state.prev_recon is None or state.frame_index % cfg.reset_period == 0


def predict(params: ModelParams, state: CodecState, cfg: QualityConfig) -> Planes:
    """
    Background alone on reset frames; otherwise, per block,
    sigmoid(mix_logit) * prev_recon + (1 - sigmoid(mix_logit)) * background.
    """
    background = tuple(p.astype(np.float64) for p in params.background)
    if is_reset_frame(state, cfg):
        return background
    for plane, bg in zip(state.prev_recon, background):
        if np.shape(plane) != bg.shape:
            raise GeometryMismatch(
                f"Previous reconstruction plane {np.shape(plane)} does not match model {bg.shape}"
            )
    return tuple(
        m * prev + (1 - m) * bg
        for m, prev, bg in zip(params.mix_planes(), state.prev_recon, background)
    )


@dataclass
class FrameStats:
    frame_index: int
    qp: int
    step: float
    estimated_bits: float
    payload_bits: int
    psnr_weighted: float

    def to_json(self) -> dict:
        return dict(
            frame_index=self.frame_index,
            qp=self.qp,
            step=self.step,
            estimated_bits=self.estimated_bits,
            payload_bits=self.payload_bits,
            psnr_weighted=self.psnr_weighted,
        )


def block_models(
    params: ModelParams, step: float, k_max: int
) -> Tuple[List[List[LaplaceModel]], List[List[LaplaceModel]]]:
    """Luma and chroma models per block; block scale is exp(log_scale) pixels."""
    result = []
    for scale_class in range(2):
        scales = np.exp(params.log_scales[scale_class].astype(np.float64))
        result.append(
            [[laplace_model(float(b), step, k_max) for b in row] for row in scales]
        )
    return result[0], result[1]


def _iter_blocks(plane_index: int, shape: Tuple[int, int], grid: Tuple[int, int]):
    block = BLOCK_SIZE if plane_index == 0 else CHROMA_BLOCK_SIZE
    for by in range(grid[0]):
        for bx in range(grid[1]):
            yield by, bx, (
                slice(by * block, min((by + 1) * block, shape[0])),
                slice(bx * block, min((bx + 1) * block, shape[1])),
            )


def _check_frame(frame: Frame, params: ModelParams) -> None:
    if frame.dims != params.dims:
        raise GeometryMismatch(
            f"Frame is {frame.width}x{frame.height}, model is {params.width}x{params.height}"
        )


def encode_frame(
    frame: Frame, params: ModelParams, cfg: QualityConfig, state: CodecState
) -> Tuple[bytes, Planes, FrameStats]:
    _check_frame(frame, params)
    qp = qp_of_frame(cfg.base_qp, state.frame_index, cfg)
    step = step_of_qp(qp, cfg)
    k_max = k_max_of_step(step)
    prediction = predict(params, state, cfg)
    models = block_models(params, step, k_max)
    encoder = RangeEncoder()
    recon = []
    estimated_bits = 0.0
    for plane_index, (source, pred) in enumerate(zip(frame.as_float(), prediction)):
        q = quantize(source - pred, step, k_max)
        plane_models = models[0] if plane_index == 0 else models[1]
        for by, bx, region in _iter_blocks(plane_index, q.shape, params.grid):
            model = plane_models[by][bx]
            symbols = q[region].ravel().tolist()
            value_counts = model.value_counts
            estimated_bits -= float(
                np.log2(value_counts[np.asarray(symbols) + k_max] / PROB_TOTAL).sum()
            )
            for value in symbols:
                encoder.encode_symbol(model, model.index_of(value))
        recon.append(pred + step * q)
    payload = encoder.finish()
    recon = tuple(recon)
    stats = FrameStats(
        frame_index=state.frame_index,
        qp=qp,
        step=step,
        estimated_bits=estimated_bits,
        payload_bits=8 * len(payload),
        psnr_weighted=weighted_yuv_psnr(frame, Frame.from_real_planes(recon)).psnr_weighted,
    )
    logger.debug(
        f"Encoded frame {state.frame_index} (qp {qp}): {len(payload)} bytes, "
        f"{estimated_bits:.1f} estimated bits"
    )
    state.advance(recon)
    return payload, recon, stats


def decode_frame(
    payload: bytes, params: ModelParams, cfg: QualityConfig, state: CodecState
) -> Planes:
    qp = qp_of_frame(cfg.base_qp, state.frame_index, cfg)
    step = step_of_qp(qp, cfg)
    k_max = k_max_of_step(step)
    prediction = predict(params, state, cfg)
    models = block_models(params, step, k_max)
    try:
        decoder = RangeDecoder(payload)
        recon = []
        for plane_index, pred in enumerate(prediction):
            q = np.zeros(pred.shape, dtype=np.int64)
            plane_models = models[0] if plane_index == 0 else models[1]
            for by, bx, region in _iter_blocks(plane_index, q.shape, params.grid):
                model = plane_models[by][bx]
                block = q[region]
                values = [
                    model.value_of(decoder.decode_symbol(model))
                    for _ in range(block.size)
                ]
                q[region] = np.array(values, dtype=np.int64).reshape(block.shape)
            recon.append(pred + step * q)
        decoder.finish()
    except TruncatedStream as error:
        raise TruncatedPayload(
            f"Payload of frame {state.frame_index} is truncated: {error}"
        ) from error
    recon = tuple(recon)
    state.advance(recon)
    return recon


###############
## Bitstream ##
###############
@dataclass
class Bitstream:
    width: int
    height: int
    base_qp: int
    model_digest: int
    payloads: List[bytes] = field(default_factory=list)
    frame_stats: List[FrameStats] = field(default_factory=list, compare=False)

    @property
    def frame_count(self) -> int:
        return len(self.payloads)

    def to_bytes(self) -> bytes:
        parts = [
            BITSTREAM_HEADER.pack(
                BITSTREAM_MAGIC,
                BITSTREAM_VERSION,
                self.width,
                self.height,
                self.frame_count,
                self.base_qp,
                self.model_digest,
            )
        ]
        for payload in self.payloads:
            parts.append(PAYLOAD_LENGTH.pack(len(payload)))
            parts.append(payload)
        return b"".join(parts)

    @property
    def num_bytes(self) -> int:
        return BITSTREAM_HEADER.size + sum(
            PAYLOAD_LENGTH.size + len(p) for p in self.payloads
        )

    @property
    def bpp(self) -> float:
        """Bits of the whole container per luma sample."""
        return 8 * self.num_bytes / (self.width * self.height * self.frame_count)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Bitstream":
        if len(data) < BITSTREAM_HEADER.size:
            raise BadBitstream("Bitstream is shorter than its header")
        magic, version, width, height, frame_count, base_qp, digest = (
            BITSTREAM_HEADER.unpack_from(data)
        )
        if magic != BITSTREAM_MAGIC:
            raise BadBitstream(f"Not a piccam bitstream (magic {magic:#010x})")
        if version != BITSTREAM_VERSION:
            raise BadBitstream(f"Unsupported bitstream version {version}")
        if base_qp > MAX_QP:
            raise BadBitstream(f"Bitstream header holds base qp {base_qp}")
        offset = BITSTREAM_HEADER.size
        payloads = []
        for i in range(frame_count):
            if offset + PAYLOAD_LENGTH.size > len(data):
                raise TruncatedPayload(f"Bitstream ends before frame {i}")
            (length,) = PAYLOAD_LENGTH.unpack_from(data, offset)
            offset += PAYLOAD_LENGTH.size
            if offset + length > len(data):
                raise TruncatedPayload(f"Payload of frame {i} is truncated")
            payloads.append(data[offset : offset + length])
            offset += length
        if offset != len(data):
            raise BadBitstream(f"Bitstream has {len(data) - offset} trailing bytes")
        return cls(width, height, base_qp, digest, payloads)


def encode_video(clip: VideoClip, params: ModelParams, cfg: QualityConfig) -> Bitstream:
    params.check_geometry(clip.width, clip.height)
    state = CodecState()
    bitstream = Bitstream(clip.width, clip.height, cfg.base_qp, params.digest)
    for frame in clip:
        payload, _, stats = encode_frame(frame, params, cfg, state)
        bitstream.payloads.append(payload)
        bitstream.frame_stats.append(stats)
    logger.info(
        f"Encoded {len(clip)} frames at base qp {cfg.base_qp}: "
        f"{bitstream.num_bytes} bytes, {bitstream.bpp:.5f} bpp"
    )
    return bitstream


def decoding_config(bitstream: Bitstream, cfg: Optional[QualityConfig]) -> QualityConfig:
    if cfg is None:
        return QualityConfig(base_qp=bitstream.base_qp)
    if cfg.base_qp != bitstream.base_qp:
        raise BadBitstream(
            f"Bitstream was coded at base qp {bitstream.base_qp}, config says {cfg.base_qp}"
        )
    return cfg


def check_model(bitstream: Bitstream, params: ModelParams) -> None:
    params.check_geometry(bitstream.width, bitstream.height)
    if params.digest != bitstream.model_digest:
        raise DigestMismatch(
            f"Bitstream needs model {bitstream.model_digest:016x}, got {params.digest:016x}"
        )


def decode_frames(
    bitstream: Bitstream,
    params: ModelParams,
    cfg: Optional[QualityConfig] = None,
    state: Optional[CodecState] = None,
):
    """Yields reconstructions frame by frame, sharing `state` with the caller."""
    check_model(bitstream, params)
    cfg = decoding_config(bitstream, cfg)
    state = CodecState() if state is None else state
    for payload in bitstream.payloads:
        yield decode_frame(payload, params, cfg, state)


def decode_video(
    bitstream: Bitstream,
    params: ModelParams,
    cfg: Optional[QualityConfig] = None,
    fps: Tuple[int, int] = DEFAULT_FPS,
) -> VideoClip:
    frames = [
        Frame.from_real_planes(recon)
        for recon in decode_frames(bitstream, params, cfg)
    ]
    return VideoClip(tuple(frames), *fps)
