import logging
import struct
from pathlib import Path
from typing import Tuple, Union

import numpy as np
import torch

from m3rnet.config import ModelConfig
from m3rnet.engine import Standardizer
from m3rnet.model import M3RNet
from utils.errors import FormatError

logger = logging.getLogger(__name__)

MAGIC = b"M3RC"
VERSION = 1

_HEADER = struct.Struct("<4sI")
_N_CONFIG = len(ModelConfig.field_names())
_CONFIG = struct.Struct(f"<{_N_CONFIG}I")


def save_checkpoint(model: M3RNet, standardizer: Standardizer, path: Union[str, Path]) -> str:
    """Write config, every named parameter (float32, row-major) and the standardization stats."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    params = list(model.named_parameters())

    with open(p, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION))
        f.write(_CONFIG.pack(*model.config.encode()))
        f.write(struct.pack("<I", len(params)))
        for name, tensor in params:
            encoded = name.encode("utf-8")
            array = tensor.detach().cpu().numpy().astype("<f4")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", array.ndim))
            f.write(struct.pack(f"<{array.ndim}I", *array.shape))
            f.write(np.ascontiguousarray(array).tobytes())
        f.write(np.asarray(standardizer.mean, dtype="<f4").tobytes())
        f.write(np.asarray(standardizer.std, dtype="<f4").tobytes())

    logger.info(f"Saved checkpoint with {len(params)} parameter array(s) to {p}")
    return str(p)


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.offset = 0
        self.path = path

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.data):
            raise FormatError("Truncated checkpoint", path=self.path)
        values = struct.unpack_from(fmt, self.data, self.offset)
        self.offset += size
        return values

    def array(self, count: int) -> np.ndarray:
        if self.offset + 4 * count > len(self.data):
            raise FormatError("Truncated checkpoint array data", path=self.path)
        out = np.frombuffer(self.data, dtype="<f4", count=count, offset=self.offset)
        self.offset += 4 * count
        return out.astype(np.float32)


def load_checkpoint(path: Union[str, Path]) -> Tuple[M3RNet, Standardizer]:
    reader = _Reader(Path(path).read_bytes(), path)
    magic, version = reader.take("<4sI")
    if magic != MAGIC:
        raise FormatError(f"Bad magic {magic!r}, expected {MAGIC!r}", path=path)
    if version != VERSION:
        raise FormatError(f"Unsupported checkpoint version {version}", path=path)

    try:
        config = ModelConfig.decode(list(reader.take(f"<{_N_CONFIG}I")))
    except (IndexError, ValueError) as e:
        raise FormatError(f"Invalid model configuration in checkpoint: {e}", path=path) from e

    model = M3RNet(config)
    expected = dict(model.named_parameters())
    (n_arrays,) = reader.take("<I")
    if n_arrays != len(expected):
        raise FormatError(f"Checkpoint holds {n_arrays} arrays, model has {len(expected)}", path=path)

    with torch.no_grad():
        for _ in range(n_arrays):
            (name_len,) = reader.take("<H")
            name = reader.take(f"<{name_len}s")[0].decode("utf-8")
            (rank,) = reader.take("<B")
            shape = reader.take(f"<{rank}I") if rank else ()
            if name not in expected:
                raise FormatError(f"Unknown parameter {name!r}", path=path)
            if tuple(expected[name].shape) != tuple(shape):
                raise FormatError(f"Parameter {name} has shape {shape}, expected {tuple(expected[name].shape)}",
                                  path=path)
            values = reader.array(int(np.prod(shape, dtype=np.int64)))
            expected[name].copy_(torch.from_numpy(values.reshape(shape)))

    mean = reader.array(config.n_features)
    std = reader.array(config.n_features)
    if reader.offset != len(reader.data):
        raise FormatError(f"{len(reader.data) - reader.offset} trailing byte(s) after checkpoint", path=path)

    logger.debug(f"Loaded {config.variant} checkpoint from {path}")
    return model, Standardizer(mean=mean, std=std)
