from enum import Enum
from importlib import metadata

__version__ = metadata.version("piccam")

PEAK_VALUE = 255
BLOCK_SIZE = 16
CHROMA_BLOCK_SIZE = BLOCK_SIZE // 2
MAX_QP = 63
QP_OFFSET_PERIOD = 8
# Raw 8-bit 4:2:0 costs 8 + 2 * 8 / 4 bits per luma sample
RAW_BITS_PER_PIXEL = 12
LIST_DELIM = ","


class SceneClass(Enum):
    """
    Static: mean inter-frame luma change below the classification threshold
    Dynamic: everything else
    """

    Static = "Static"
    Dynamic = "Dynamic"

    def __str__(self):
        return f"{self.name}"


class Interpolation(Enum):
    CubicSpline = "cubic"
    MonotonePCHIP = "pchip"

    def __str__(self):
        return f"{self.value}"


all_interpolations = list(Interpolation)


class NoiseMode(Enum):
    """
    How the quantizer is stood in for during training-time forward passes.
    uniform: additive Uniform(-step/2, step/2) noise
    none: no perturbation
    quantize: hard rounding, mirrors the coding path
    """

    uniform = "uniform"
    none = "none"
    quantize = "quantize"


def parse_number_list(list_string: str, cast=float) -> list:
    return [cast(e.strip()) for e in list_string.split(LIST_DELIM) if e.strip() != ""]
