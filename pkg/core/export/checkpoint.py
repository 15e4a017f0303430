"""
LAESCKPT binary checkpoints.

    magic      8 bytes  b"LAESCKPT"
    version    u32 LE
    count      u32 LE
    entries    count x (name_len u16 LE, UTF-8 name, rows u64 LE, cols u64 LE,
                        rows * cols float64 LE, row-major)
    crc32      u32 LE over every preceding byte

Entry names are "<group>.<tensor>"; the group says what the checkpoint holds:
a recurrent kind (rnn, lmn, lstm, linear_rnn), "laes", or a LAES head
("linear", "svm", "ff").
"""
import logging
import os
import struct
import zlib
from collections import OrderedDict
from typing import Dict, Tuple, Union

import numpy as np

from core.exceptions import CheckpointError, ShapeError
from core.laes import LaesModel
from core.models import RECURRENT_KINDS
from core.networks import ArchitectureRegistry, ParamBundle
from core.training.heads import FeedForwardHead, LaesClassifier

logger = logging.getLogger(__name__)

MAGIC = b"LAESCKPT"
VERSION = 1
HEAD_GROUPS = ("linear", "svm", "ff")

Checkpointable = Union[ParamBundle, LaesModel, LaesClassifier]


def _as_matrix(name: str, value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ShapeError(f"checkpoint entry {name} must be a vector or matrix, got {arr.shape}")
    return arr


def encode_checkpoint(tensors: Dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, value in tensors.items():
        arr = _as_matrix(name, value)
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<QQ", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def decode_checkpoint(raw: bytes, source: str = "<bytes>") -> Dict[str, np.ndarray]:
    if len(raw) < len(MAGIC) + 12:
        raise CheckpointError(f"{source}: too short to be a checkpoint")
    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{source}: bad magic {raw[:len(MAGIC)]!r}")
    body, (crc,) = raw[:-4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise CheckpointError(f"{source}: CRC mismatch")

    version, count = struct.unpack_from("<II", body, len(MAGIC))
    if version != VERSION:
        raise CheckpointError(f"{source}: unsupported version {version}")
    offset = len(MAGIC) + 8
    tensors: Dict[str, np.ndarray] = OrderedDict()
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", body, offset)
            offset += 2
            name = body[offset : offset + name_len].decode("utf-8")
            offset += name_len
            rows, cols = struct.unpack_from("<QQ", body, offset)
            offset += 16
            size = rows * cols * 8
            if offset + size > len(body):
                raise CheckpointError(f"{source}: entry {name} runs past the end of the file")
            data = np.frombuffer(body, dtype="<f8", count=rows * cols, offset=offset)
            offset += size
            if name in tensors:
                raise CheckpointError(f"{source}: duplicate entry {name}")
            tensors[name] = data.reshape(rows, cols).astype(np.float64)
    except (struct.error, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{source}: malformed entry table ({exc})") from exc
    if offset != len(body):
        raise CheckpointError(f"{source}: {len(body) - offset} unexpected trailing bytes")
    return tensors


def save_checkpoint(path: str, tensors: Dict[str, np.ndarray]) -> int:
    """Writes the container and returns its CRC32."""
    raw = encode_checkpoint(tensors)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "wb") as handle:
        handle.write(raw)
    crc = struct.unpack("<I", raw[-4:])[0]
    logger.info("💾 Saved checkpoint %s (%d tensors, crc %08x)", path, len(tensors), crc)
    return crc


def load_checkpoint(path: str) -> Dict[str, np.ndarray]:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, "rb") as handle:
        return decode_checkpoint(handle.read(), path)


def checkpoint_tensors(model: Checkpointable) -> Dict[str, np.ndarray]:
    """Flattens a model into named checkpoint entries."""
    if isinstance(model, ParamBundle) and model.KIND in RECURRENT_KINDS:
        return OrderedDict((f"{model.KIND}.{k}", v) for k, v in model.tensors().items())
    if isinstance(model, LaesModel):
        out = OrderedDict([("laes.a", model.a), ("laes.b", model.b)])
        if model.mean is not None:
            out["laes.mean"] = model.mean
        return out
    if isinstance(model, LaesClassifier):
        out = checkpoint_tensors(model.laes)
        if model.head == "ff":
            out.update((f"ff.{k}", v) for k, v in model.ff.tensors().items())
        else:
            out[f"{model.head}.w"] = model.w
        return out
    raise TypeError(f"cannot checkpoint {type(model).__name__}")


def _group(tensors: Dict[str, np.ndarray], group: str) -> Dict[str, np.ndarray]:
    prefix = group + "."
    return {name[len(prefix) :]: arr for name, arr in tensors.items() if name.startswith(prefix)}


def _laes_from(tensors: Dict[str, np.ndarray]) -> LaesModel:
    part = _group(tensors, "laes")
    if "a" not in part or "b" not in part:
        raise CheckpointError("checkpoint has no complete LAES (laes.a, laes.b)")
    return LaesModel(a=part["a"], b=part["b"], mean=part.get("mean"))


def model_from_checkpoint(tensors: Dict[str, np.ndarray]) -> Tuple[str, Checkpointable]:
    """
    Rebuilds the model a checkpoint holds.

    Returns (kind, model) where kind is a recurrent kind, "laes", or
    "laes_linear" / "laes_svm" / "laes_ff".
    """
    groups = {name.split(".", 1)[0] for name in tensors}
    recurrent = groups.intersection(RECURRENT_KINDS)
    if len(recurrent) > 1:
        raise CheckpointError(f"checkpoint mixes recurrent kinds {sorted(recurrent)}")
    try:
        if recurrent:
            kind = recurrent.pop()
            params_class = ArchitectureRegistry.get(kind).params_class
            return kind, params_class.from_tensors(_group(tensors, kind))
        laes = _laes_from(tensors)
        heads = groups.intersection(HEAD_GROUPS)
        if not heads:
            return "laes", laes
        if len(heads) > 1:
            raise CheckpointError(f"checkpoint holds several heads {sorted(heads)}")
        head = heads.pop()
        if head == "ff":
            ff = FeedForwardHead.from_tensors(_group(tensors, "ff"))
            return "laes_ff", LaesClassifier(laes=laes, head="ff", ff=ff)
        weights = _group(tensors, head)
        if "w" not in weights:
            raise CheckpointError(f"checkpoint is missing {head}.w")
        return f"laes_{head}", LaesClassifier(laes=laes, head=head, w=weights["w"])
    except ShapeError as exc:
        raise CheckpointError(f"checkpoint entries are incomplete or inconsistent: {exc}") from exc


def save_model(path: str, model: Checkpointable) -> int:
    return save_checkpoint(path, checkpoint_tensors(model))


def load_model(path: str) -> Tuple[str, Checkpointable]:
    return model_from_checkpoint(load_checkpoint(path))
