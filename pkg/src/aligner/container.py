import logging
import struct
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np

from aligner.dataset import MATCH_TOLERANCE_SECONDS, DatasetSplit, EventSequence
from aligner.events import WINDOW_LENGTH
from aligner.quantize import is_valid_code
from stationproc.series import VARIABLES
from utils.errors import FormatError

logger = logging.getLogger(__name__)

MAGIC = b"M3RD"
# version 1 fixes frames at 100x100; version 2 records the frame size after the split point
VERSION_FIXED = 1
VERSION_SIZED = 2
FIXED_SIZE = (100, 100)

_HEADER = struct.Struct("<4sIII")
_SIZE = struct.Struct("<II")
N_FEATURES = len(VARIABLES)


def _record_size(ny: int, nx: int) -> int:
    return 8 * WINDOW_LENGTH * 2 + WINDOW_LENGTH * ny * nx + 4 * WINDOW_LENGTH * N_FEATURES + 4 * WINDOW_LENGTH


def write_container(split: DatasetSplit, path: Union[str, Path]) -> str:
    sequences = split.sequences
    ny, nx = sequences[0].frames.shape[1:] if sequences else FIXED_SIZE
    version = VERSION_FIXED if (ny, nx) == FIXED_SIZE else VERSION_SIZED

    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "wb") as f:
        f.write(_HEADER.pack(MAGIC, version, len(sequences), split.split_point))
        if version == VERSION_SIZED:
            f.write(_SIZE.pack(ny, nx))
        for seq in sequences:
            if seq.frames.shape != (WINDOW_LENGTH, ny, nx):
                raise FormatError(f"Sequence frames {seq.frames.shape} differ from container size {(ny, nx)}", path=p)
            f.write(np.asarray(seq.radar_timestamps, dtype="<i8").tobytes())
            f.write(np.asarray(seq.pws_timestamps, dtype="<i8").tobytes())
            f.write(np.asarray(seq.frames, dtype=np.uint8).tobytes())
            f.write(np.asarray(seq.pws_rows, dtype="<f4").tobytes())
            f.write(np.asarray(seq.target, dtype="<f4").tobytes())

    logger.info(f"Wrote {len(sequences)} sequence(s) ({split.split_point} train) to {p}")
    return str(p)


def _read_header(data: bytes, path) -> Tuple[int, int, int, int, int]:
    if len(data) < _HEADER.size:
        raise FormatError("Truncated container header", path=path)
    magic, version, n_seq, split_point = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"Bad magic {magic!r}, expected {MAGIC!r}", path=path)

    offset = _HEADER.size
    if version == VERSION_FIXED:
        ny, nx = FIXED_SIZE
    elif version == VERSION_SIZED:
        ny, nx = _SIZE.unpack_from(data, offset)
        offset += _SIZE.size
    else:
        raise FormatError(f"Unsupported container version {version}", path=path)

    if split_point > n_seq:
        raise FormatError(f"Split point {split_point} exceeds sequence count {n_seq}", path=path)
    expected = offset + n_seq * _record_size(ny, nx)
    if len(data) != expected:
        raise FormatError(f"Container is {len(data)} bytes, expected {expected}", path=path)
    return n_seq, split_point, ny, nx, offset


def read_container(path: Union[str, Path]) -> DatasetSplit:
    data = Path(path).read_bytes()
    n_seq, split_point, ny, nx, offset = _read_header(data, path)

    sequences = []
    for _ in range(n_seq):
        radar_ts = np.frombuffer(data, dtype="<i8", count=WINDOW_LENGTH, offset=offset)
        offset += 8 * WINDOW_LENGTH
        pws_ts = np.frombuffer(data, dtype="<i8", count=WINDOW_LENGTH, offset=offset)
        offset += 8 * WINDOW_LENGTH
        frames = np.frombuffer(data, dtype=np.uint8, count=WINDOW_LENGTH * ny * nx, offset=offset)
        offset += WINDOW_LENGTH * ny * nx
        pws = np.frombuffer(data, dtype="<f4", count=WINDOW_LENGTH * N_FEATURES, offset=offset)
        offset += 4 * WINDOW_LENGTH * N_FEATURES
        target = np.frombuffer(data, dtype="<f4", count=WINDOW_LENGTH, offset=offset)
        offset += 4 * WINDOW_LENGTH
        sequences.append(EventSequence(
            frames=frames.reshape(WINDOW_LENGTH, ny, nx).copy(),
            pws_rows=pws.reshape(WINDOW_LENGTH, N_FEATURES).astype(np.float32),
            pws_timestamps=pws_ts.astype(np.int64),
            radar_timestamps=radar_ts.astype(np.int64),
            target=target.astype(np.float32),
        ))

    return DatasetSplit(train=sequences[:split_point], test=sequences[split_point:])


def audit_container(path: Union[str, Path], tolerance: int = MATCH_TOLERANCE_SECONDS) -> Dict[str, Any]:
    """Re-check alignment, code validity and chronology of a stored dataset."""
    split = read_container(path)
    issues = []

    for k, seq in enumerate(split.sequences):
        gap = np.abs(seq.radar_timestamps - seq.pws_timestamps)
        if np.any(gap > tolerance):
            issues.append(f"sequence {k}: |radar_ts - pws_ts| up to {int(gap.max())}s exceeds {tolerance}s")
        if not np.all(is_valid_code(seq.frames)):
            issues.append(f"sequence {k}: invalid quantization codes")
        if np.any(np.diff(seq.radar_timestamps) <= 0):
            issues.append(f"sequence {k}: radar timestamps not increasing")

    if split.train and split.test:
        last_train = max(s.center_timestamp for s in split.train)
        first_test = min(s.center_timestamp for s in split.test)
        if last_train >= first_test:
            issues.append(f"train sequence at {last_train} does not precede test sequence at {first_test}")

    n = len(split.sequences)
    expected_split = (n * 85) // 100
    return {
        'path': str(path),
        'sequences': n,
        'train': len(split.train),
        'test': len(split.test),
        'max_time_offset': max((int(np.abs(s.radar_timestamps - s.pws_timestamps).max()) for s in split.sequences),
                               default=0),
        'split_matches_default_fraction': len(split.train) == expected_split,
        'issues': issues,
        'ok': not issues,
    }
