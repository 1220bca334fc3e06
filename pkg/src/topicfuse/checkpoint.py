"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"TFUS"  u32 version  u32 n_tensors
    n_tensors x { u16 name_len, name (utf-8), u8 dtype, u8 ndim, u32 dims[ndim], u64 offset }
    u64 config_len, config JSON (utf-8, sorted keys)
    payload: float32 tensors, offsets relative to the payload start
    u32 CRC32 of every preceding byte
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import encoder as enc
from . import fusion
from .corpus import SequenceVocabulary, Vocabulary
from .exceptions import CheckpointError
from .numkernel import Tensor
from .nvdm import NvdmParams
from .trainer import BaselineModel, TopicFusedModel, TrainConfig

MAGIC = b"TFUS"
VERSION = 1
DTYPE_F32 = 1


@dataclass
class Checkpoint:
    tensors: dict[str, np.ndarray]
    config: dict


def dumps(tensors: dict, config: dict) -> bytes:
    arrays = {}
    for name, t in tensors.items():
        data = getattr(t, "data", t)
        arrays[name] = np.asarray(data, dtype="<f4", order="C")
    head = [MAGIC, struct.pack("<II", VERSION, len(arrays))]
    offset = 0
    for name, arr in arrays.items():
        raw = name.encode("utf-8")
        head.append(struct.pack("<H", len(raw)) + raw)
        head.append(struct.pack("<BB", DTYPE_F32, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        head.append(struct.pack("<Q", offset))
        offset += arr.nbytes
    echo = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    head.append(struct.pack("<Q", len(echo)) + echo)
    body = b"".join(head) + b"".join(a.tobytes() for a in arrays.values())
    return body + struct.pack("<I", zlib.crc32(body))


def loads(blob: bytes) -> Checkpoint:
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError("checksum mismatch: checkpoint is corrupt")
    try:
        version, n = struct.unpack_from("<II", body, 4)
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        pos = 12
        table = []
        for _ in range(n):
            (name_len,) = struct.unpack_from("<H", body, pos)
            pos += 2
            name = body[pos : pos + name_len].decode("utf-8")
            pos += name_len
            dtype, ndim = struct.unpack_from("<BB", body, pos)
            pos += 2
            shape = struct.unpack_from(f"<{ndim}I", body, pos)
            pos += 4 * ndim
            (offset,) = struct.unpack_from("<Q", body, pos)
            pos += 8
            if dtype != DTYPE_F32:
                raise CheckpointError(f"{name}: unsupported dtype code {dtype}")
            table.append((name, shape, offset))
        (cfg_len,) = struct.unpack_from("<Q", body, pos)
        pos += 8
        config = json.loads(body[pos : pos + cfg_len].decode("utf-8"))
        payload = body[pos + cfg_len :]
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"truncated or malformed checkpoint: {exc}") from exc
    tensors = {}
    for name, shape, offset in table:
        if name in tensors:
            raise CheckpointError(f"tensor {name} stored twice")
        count = int(np.prod(shape)) if shape else 1
        end = offset + 4 * count
        if end > len(payload):
            raise CheckpointError(f"{name}: payload out of range")
        tensors[name] = np.frombuffer(payload[offset:end], dtype="<f4").reshape(shape).astype(np.float64)
    return Checkpoint(tensors, config)


def save(path: str | Path, tensors: dict, config: dict) -> bytes:
    blob = dumps(tensors, config)
    Path(path).write_bytes(blob)
    return blob


def load(path: str | Path) -> Checkpoint:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except FileNotFoundError as exc:
        raise FileNotFoundError(f"checkpoint not found: {path}") from exc
    return loads(blob)


# ---- model bundles ----------------------------------------------------------------


def _vocab_echo(model) -> dict:
    out = {"seq_vocab": {"words": list(model.seq_vocab.words), "min_count": model.seq_vocab.min_count}}
    out["vocab"] = model.vocab.dumps() if model.vocab is not None else None
    return out


def _vocabs(config: dict):
    vocab = Vocabulary.loads(config["vocab"]) if config.get("vocab") else None
    sv = config["seq_vocab"]
    return vocab, SequenceVocabulary(list(sv["words"]), sv["min_count"])


def save_model(path: str | Path, model, extra: dict | None = None) -> bytes:
    """Persist a trained classifier with its vocabularies and training config."""
    config = {
        "kind": "baseline" if isinstance(model, BaselineModel) else "topicfused",
        "train": asdict(model.config),
        "n_labels": model.n_labels,
        "n_heads": model.encoder.n_heads,
        "has_nvdm": model.nvdm is not None,
        **_vocab_echo(model),
    }
    if extra:
        config["extra"] = extra
    return save(path, model.parameters(), config)


def load_model(path: str | Path):
    ckpt = load(path)
    cfg = ckpt.config
    try:
        tc = TrainConfig(**cfg["train"])
        vocab, seq_vocab = _vocabs(cfg)
        arrays = ckpt.tensors
        encoder = enc.EncoderParams.from_named(arrays, cfg["n_heads"], tc.dropout)
        nv = NvdmParams.from_named(arrays) if cfg["has_nvdm"] else None
        if cfg["kind"] == "baseline":
            encoder.dropout = 0.0
            return BaselineModel(tc, vocab, seq_vocab, encoder, nv, Tensor(arrays["logit.w"], True),
                                 Tensor(arrays["logit.b"], True), cfg["n_labels"])
        head = fusion.FusionParams.from_named(arrays, tc.alpha)
        return TopicFusedModel(tc, vocab, seq_vocab, encoder, head, nv, cfg["n_labels"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: checkpoint does not describe a model: {exc}") from exc


def save_nvdm(path: str | Path, params, vocab, config: dict | None = None) -> bytes:
    echo = {"kind": "nvdm", "vocab": vocab.dumps(), "train": config or {}}
    return save(path, params.named(), echo)


def load_nvdm(path: str | Path):
    """Returns ``(NvdmParams, Vocabulary)``."""
    ckpt = load(path)
    if ckpt.config.get("kind") != "nvdm":
        raise CheckpointError(f"{path}: not an NVDM checkpoint")
    try:
        params = NvdmParams.from_named(ckpt.tensors)
        params.validate()
    except KeyError as exc:
        raise CheckpointError(f"{path}: missing tensor {exc}") from exc
    return params, Vocabulary.loads(ckpt.config["vocab"])
