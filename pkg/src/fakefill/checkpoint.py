"""Single-file checkpoint container.

Layout: one line of compact JSON (format version, model config, step,
RNG state, optimizer step counts, a block index of name/offset/shape
triples, and a sha256 of the data section), a newline, then the raw
little-endian float32 blocks back to back.  Serialization is canonical
(sorted keys, fixed separators), so save -> load -> save is
byte-identical.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ModelConfig
from .errors import CheckpointError

FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    model: ModelConfig
    step: int
    rng_state: dict
    opt_steps: dict[str, int]
    tensors: dict[str, np.ndarray]  # float32, named


def _encode_header(ckpt: Checkpoint, index, data_sha256: str) -> bytes:
    header = {
        "format_version": FORMAT_VERSION,
        "model": dataclasses.asdict(ckpt.model),
        "step": ckpt.step,
        "rng_state": ckpt.rng_state,
        "opt_steps": ckpt.opt_steps,
        "index": index,
        "data_sha256": data_sha256,
    }
    return (json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    blocks = []
    index = []
    offset = 0
    for name in sorted(ckpt.tensors):
        arr = np.ascontiguousarray(ckpt.tensors[name], dtype="<f4")
        raw = arr.tobytes()
        index.append({"name": name, "offset": offset, "shape": list(arr.shape)})
        blocks.append(raw)
        offset += len(raw)
    data = b"".join(blocks)
    header = _encode_header(ckpt, index, hashlib.sha256(data).hexdigest())
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(data)
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        with open(path, "rb") as fh:
            header_line = fh.readline()
            data = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc

    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header in {path}: {exc}") from exc

    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version!r} in {path}")

    digest = hashlib.sha256(data).hexdigest()
    if digest != header.get("data_sha256"):
        raise CheckpointError(
            f"checkpoint data corrupted in {path}: sha256 {digest} != recorded {header.get('data_sha256')}"
        )

    tensors: dict[str, np.ndarray] = {}
    for entry in header["index"]:
        name, offset, shape = entry["name"], entry["offset"], tuple(entry["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * 4 if shape else 4
        if offset + nbytes > len(data):
            raise CheckpointError(
                f"checkpoint block {name!r} overruns data section in {path} "
                f"(offset {offset} + {nbytes} > {len(data)})"
            )
        tensors[name] = np.frombuffer(data, dtype="<f4", count=nbytes // 4, offset=offset).reshape(shape).copy()

    try:
        model = ModelConfig(**{
            k: tuple(v) if isinstance(v, list) else v for k, v in header["model"].items()
        })
    except TypeError as exc:
        raise CheckpointError(f"checkpoint model config does not match this version: {exc}") from exc

    return Checkpoint(
        model=model,
        step=int(header["step"]),
        rng_state=header["rng_state"],
        opt_steps={k: int(v) for k, v in header["opt_steps"].items()},
        tensors=tensors,
    )
