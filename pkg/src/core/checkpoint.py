"""
Flat binary parameter container

Layout (all little-endian):
    header   magic b"IIDSU1", precision tag (u8: 0 float32, 1 float64), record count (u32)
    record   name length (u16), UTF-8 name, rank (u8), extents (u32 each), raw values
"""

from collections import OrderedDict
from pathlib import Path
from typing import Dict, Mapping, Tuple, Union
import logging
import struct
import numpy as np

from .tensor import resolve_dtype
from ..utils.errors import ContractError, DataIOError

logger = logging.getLogger(__name__)

MAGIC = b"IIDSU1"
PRECISION_TAGS = {"float32": 0, "float64": 1}
_TAG_NAMES = {v: k for k, v in PRECISION_TAGS.items()}
_WIRE = {"float32": "<f4", "float64": "<f8"}


def encode_checkpoint(records: Mapping[str, np.ndarray], precision: str) -> bytes:
    """Serialize named arrays at one precision"""
    if precision not in PRECISION_TAGS:
        raise ContractError(f"unsupported checkpoint precision {precision!r}")
    wire = _WIRE[precision]
    chunks = [MAGIC, struct.pack("<BI", PRECISION_TAGS[precision], len(records))]
    for name, array in records.items():
        array = np.asarray(array)
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise ContractError(f"record name too long: {name[:40]}...")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}I", *array.shape))
        chunks.append(np.ascontiguousarray(array, dtype=wire).tobytes())
    return b"".join(chunks)


def decode_checkpoint(blob: bytes, source: str = "<bytes>") -> Tuple[str, "OrderedDict[str, np.ndarray]"]:
    """Parse a checkpoint; truncated or malformed input raises DataIOError"""
    if blob[:len(MAGIC)] != MAGIC:
        raise DataIOError(f"{source}: not a checkpoint (bad magic)")
    offset = len(MAGIC)
    records: "OrderedDict[str, np.ndarray]" = OrderedDict()
    try:
        tag, count = struct.unpack_from("<BI", blob, offset)
        offset += 5
        if tag not in _TAG_NAMES:
            raise DataIOError(f"{source}: unknown precision tag {tag}")
        precision = _TAG_NAMES[tag]
        dtype = resolve_dtype(precision)
        wire = np.dtype(_WIRE[precision])
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<B", blob, offset)
            offset += 1
            shape = struct.unpack_from(f"<{rank}I", blob, offset)
            offset += 4 * rank
            n = int(np.prod(shape)) if rank else 1
            nbytes = n * wire.itemsize
            if offset + nbytes > len(blob):
                raise DataIOError(f"{source}: record {name!r} truncated")
            values = np.frombuffer(blob, dtype=wire, count=n, offset=offset)
            offset += nbytes
            records[name] = values.astype(dtype).reshape(shape)
    except (struct.error, UnicodeDecodeError) as exc:
        raise DataIOError(f"{source}: malformed checkpoint ({exc})") from None
    if offset != len(blob):
        raise DataIOError(f"{source}: {len(blob) - offset} trailing bytes after last record")
    return precision, records


def save_checkpoint(path: Union[str, Path], records: Mapping[str, np.ndarray], precision: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_checkpoint(records, precision))
    except OSError as exc:
        raise DataIOError(f"cannot write checkpoint {path}: {exc}") from None
    logger.info(f"Saved {len(records)} records to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[str, Dict[str, np.ndarray]]:
    path = Path(path)
    if not path.is_file():
        raise DataIOError(f"checkpoint not found: {path}")
    return decode_checkpoint(path.read_bytes(), source=str(path))
