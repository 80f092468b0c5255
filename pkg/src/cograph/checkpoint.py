"""Checkpoint persistence: a human-readable key-value manifest followed by
raw little-endian float64 blobs, one per tensor.

The blob section is protected by a sha256 digest recorded in the manifest;
a corrupted file refuses to load. Loading then saving reproduces the file
byte for byte.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .encoders import EncoderParams, EncoderSpec
from .errors import DataFormatError, UsageError
from .optim import AdamState
from .trainer import TrainerState

FORMAT_VERSION = 1
_MAGIC = "cograph-checkpoint"

_SPEC_TYPES = {f.name: f.type for f in fields(EncoderSpec)}
_PARSERS = {"str": str, "int": int, "float": float}


def _spec_line(index: int, spec: EncoderSpec) -> str:
    parts = " ".join(f"{name}={getattr(spec, name)}" for name in _SPEC_TYPES)
    return f"encoder {index} {parts}"


def _parse_spec(line: str) -> EncoderSpec:
    kwargs = {}
    for token in line.split(" ")[2:]:
        key, _, value = token.partition("=")
        if key not in _SPEC_TYPES:
            raise DataFormatError(f"unknown encoder spec field '{key}' in checkpoint")
        kwargs[key] = _PARSERS[_SPEC_TYPES[key]](value)
    return EncoderSpec(**kwargs)


@dataclass
class Checkpoint:
    mode: str
    seed: int
    epoch: int
    config_digest: str
    specs: list[EncoderSpec]
    params: list[EncoderParams]
    adam: list[AdamState]

    @classmethod
    def from_trainer_state(cls, state: TrainerState, mode: str, seed: int,
                           config_digest: str,
                           params_override=None, epoch=None) -> "Checkpoint":
        params = params_override if params_override is not None else state.params
        return cls(mode=mode, seed=seed,
                   epoch=state.epoch if epoch is None else epoch,
                   config_digest=config_digest,
                   specs=[p.spec for p in params],
                   params=params, adam=state.adam)

    def trainer_state(self) -> TrainerState:
        return TrainerState(params=self.params, adam=self.adam, epoch=self.epoch)

    # -- serialization ------------------------------------------------------

    def _named_blobs(self) -> list[tuple[str, np.ndarray]]:
        blobs = []
        for i, p in enumerate(self.params):
            for name, t in p.named():
                blobs.append((f"enc{i}/{name}", t.data))
        for i, a in enumerate(self.adam):
            for name in a.m:
                blobs.append((f"adam{i}/m/{name}", a.m[name]))
            for name in a.v:
                blobs.append((f"adam{i}/v/{name}", a.v[name]))
        return blobs

    def save(self, path) -> None:
        blobs = self._named_blobs()
        body = io.BytesIO()
        for name, arr in blobs:
            body.write(f"{name} {arr.shape[0]} {arr.shape[1]}\n".encode())
            body.write(arr.astype("<f8", copy=False).tobytes())
        body_bytes = body.getvalue()
        digest = hashlib.sha256(body_bytes).hexdigest()
        lines = [
            f"{_MAGIC} {FORMAT_VERSION}",
            f"mode {self.mode}",
            f"seed {self.seed}",
            f"epoch {self.epoch}",
            f"config_digest {self.config_digest}",
            f"adam_t {' '.join(str(a.t) for a in self.adam)}",
            f"blob_digest {digest}",
            f"encoders {len(self.specs)}",
        ]
        lines.extend(_spec_line(i, s) for i, s in enumerate(self.specs))
        lines.append(f"tensors {len(blobs)}")
        manifest = "\n".join(lines) + "\n\n"
        Path(path).write_bytes(manifest.encode() + body_bytes)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        raw = Path(path).read_bytes()
        sep = raw.find(b"\n\n")
        if sep < 0:
            raise DataFormatError(f"{path}: not a checkpoint (missing manifest)")
        manifest = raw[:sep].decode()
        body = raw[sep + 2:]
        lines = manifest.splitlines()
        magic = lines[0].split(" ")
        if magic[0] != _MAGIC:
            raise DataFormatError(f"{path}: not a checkpoint file")
        if int(magic[1]) != FORMAT_VERSION:
            raise UsageError(f"{path}: checkpoint format version {magic[1]} "
                             f"unsupported (expected {FORMAT_VERSION})")
        head = {}
        specs: list[EncoderSpec] = []
        for line in lines[1:]:
            key = line.split(" ", 1)[0]
            if key == "encoder":
                specs.append(_parse_spec(line))
            else:
                head[key] = line.split(" ", 1)[1] if " " in line else ""
        digest = hashlib.sha256(body).hexdigest()
        if digest != head["blob_digest"]:
            raise DataFormatError(f"{path}: blob digest mismatch, file corrupted "
                                  f"(manifest {head['blob_digest'][:12]}..., "
                                  f"actual {digest[:12]}...)")

        stream = io.BytesIO(body)
        blobs: dict[str, np.ndarray] = {}
        for _ in range(int(head["tensors"])):
            header = b""
            while not header.endswith(b"\n"):
                ch = stream.read(1)
                if not ch:
                    raise DataFormatError(f"{path}: truncated blob header")
                header += ch
            name, rows, cols = header.decode().split(" ")
            rows, cols = int(rows), int(cols)
            data = stream.read(rows * cols * 8)
            if len(data) != rows * cols * 8:
                raise DataFormatError(f"{path}: truncated blob '{name}'")
            blobs[name] = np.frombuffer(data, dtype="<f8").reshape(rows, cols).copy()

        params = []
        adam = []
        adam_t = [int(t) for t in head["adam_t"].split(" ")] if head["adam_t"] else []
        for i, spec in enumerate(specs):
            tensors = {}
            prefix = f"enc{i}/"
            for name, arr in blobs.items():
                if name.startswith(prefix):
                    tensors[name[len(prefix):]] = Tensor(arr, requires_grad=True)
            params.append(EncoderParams(spec, tensors))
            state = AdamState(t=adam_t[i] if i < len(adam_t) else 0)
            for pname in tensors:
                state.m[pname] = blobs[f"adam{i}/m/{pname}"]
                state.v[pname] = blobs[f"adam{i}/v/{pname}"]
            adam.append(state)
        return cls(mode=head["mode"], seed=int(head["seed"]), epoch=int(head["epoch"]),
                   config_digest=head["config_digest"], specs=specs, params=params,
                   adam=adam)
