"""Binary model file.

Layout (little-endian)::

    b"LNSM" | u32 version
    config: u32 c_m, c_1, c_2, u32 n_branches, n_branches x (u32 dilation, u32 channels),
            u8 padding (0 zeros, 1 replicate),
            f64 lam, epsilon, beta, phi, epsilon_div, learning_rate,
            u32 n, max_epochs, feature_epochs, u8 gal, gbl, reset_moments,
            u8 color-space length + ascii, u64 seed
    u32 record count, then records: u16 name length, name, u8 rank, rank x u32 extents,
            float32 payload
    u64 tasks_seen, u64 adam steps, u32 count, count x (u16 name length, name, u64 steps)

Records hold the parameters (``param/<name>``), the channel memory
(``memory/m``) and Adam moments (``adam1/<name>``, ``adam2/<name>``).
"""

from __future__ import annotations

import io
import os
import struct

import numpy as np

from . import grm
from .errors import ModelFormatError, ModelTruncatedError, ModelVersionError
from .fem import FemConfig
from .gradcore import PADDING_MODES
from .loss import LossConfig
from .trainer import AdamState, ModelState, Schedule, TrainConfig

MAGIC = b"LNSM"
VERSION = 1


class _Reader:
    def __init__(self, data: bytes):
        self.buf = io.BytesIO(data)

    def read(self, n):
        chunk = self.buf.read(n)
        if len(chunk) != n:
            raise ModelTruncatedError(f"model file truncated: wanted {n} bytes, got {len(chunk)}")
        return chunk

    def unpack(self, fmt):
        return struct.unpack("<" + fmt, self.read(struct.calcsize("<" + fmt)))

    def name(self, width="H"):
        (n,) = self.unpack(width)
        try:
            return self.read(n).decode("ascii")
        except UnicodeDecodeError:
            raise ModelFormatError("non-ascii record name") from None


def _name(s: str, width="H") -> bytes:
    raw = s.encode("ascii")
    return struct.pack("<" + width, len(raw)) + raw


def _record(name: str, arr) -> bytes:
    arr = np.asarray(arr)
    head = _name(name) + struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def serialize(state: ModelState) -> bytes:
    cfg = state.config
    out = [MAGIC, struct.pack("<I", VERSION)]
    f = cfg.fem
    out.append(struct.pack("<4I", f.c_m, f.c_1, f.c_2, len(f.dilations)))
    for d, c in zip(f.dilations, f.aspp_split):
        out.append(struct.pack("<2I", d, c))
    out.append(struct.pack("<B", PADDING_MODES.index(f.padding_mode)))
    out.append(struct.pack("<6d", cfg.lam, cfg.epsilon, cfg.loss.beta, cfg.loss.phi,
                           cfg.loss.epsilon_div, cfg.schedule.learning_rate))
    out.append(struct.pack("<3I3B", cfg.loss.n, cfg.schedule.max_epochs,
                           cfg.schedule.feature_epochs, cfg.gal, cfg.gbl, cfg.reset_moments))
    out.append(_name(cfg.color_space, "B"))
    out.append(struct.pack("<Q", cfg.seed))

    records = [(f"param/{k}", v) for k, v in state.params.items()]
    records.append(("memory/m", state.memory.m))
    for k in state.adam.first:
        records.append((f"adam1/{k}", state.adam.first[k]))
        records.append((f"adam2/{k}", state.adam.second[k]))
    out.append(struct.pack("<I", len(records)))
    out.extend(_record(n, a) for n, a in records)

    out.append(struct.pack("<QQI", state.tasks_seen, state.adam.steps, len(state.adam.param_steps)))
    for k, t in state.adam.param_steps.items():
        out.append(_name(k) + struct.pack("<Q", t))
    return b"".join(out)


def deserialize(data: bytes) -> ModelState:
    if data[:4] != MAGIC:
        raise ModelFormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    r = _Reader(data[4:])
    (version,) = r.unpack("I")
    if version != VERSION:
        raise ModelVersionError(f"unsupported model version {version} (expected {VERSION})")
    c_m, c_1, c_2, nb = r.unpack("4I")
    branches = [r.unpack("2I") for _ in range(nb)]
    (padding,) = r.unpack("B")
    if padding >= len(PADDING_MODES):
        raise ModelFormatError(f"unknown padding code {padding}")
    lam, eps, beta, phi, eps_div, lr = r.unpack("6d")
    n, max_epochs, feature_epochs, gal, gbl, reset = r.unpack("3I3B")
    color_space = r.name("B")
    (seed,) = r.unpack("Q")
    try:
        cfg = TrainConfig(
            fem=FemConfig(c_m=c_m, c_1=c_1, c_2=c_2, dilations=tuple(d for d, _ in branches),
                          aspp_split=tuple(c for _, c in branches),
                          padding_mode=PADDING_MODES[padding]),
            loss=LossConfig(beta=beta, phi=phi, n=n, epsilon_div=eps_div),
            schedule=Schedule(max_epochs=max_epochs, feature_epochs=feature_epochs,
                              learning_rate=lr),
            lam=lam, epsilon=eps, gal=bool(gal), gbl=bool(gbl), color_space=color_space,
            seed=seed, reset_moments=bool(reset))
    except ValueError as exc:
        raise ModelFormatError(f"invalid config block: {exc}") from exc

    (count,) = r.unpack("I")
    params, first, second, memory = {}, {}, {}, None
    for _ in range(count):
        name = r.name()
        (rank,) = r.unpack("B")
        shape = r.unpack(f"{rank}I")
        size = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(r.read(4 * size), dtype="<f4").astype(np.float64).reshape(shape)
        kind, _, key = name.partition("/")
        if kind == "param":
            params[key] = arr
        elif kind == "adam1":
            first[key] = arr
        elif kind == "adam2":
            second[key] = arr
        elif name == "memory/m":
            memory = arr
        else:
            raise ModelFormatError(f"unknown record {name!r}")
    if memory is None:
        raise ModelFormatError("model file has no channel memory record")
    tasks_seen, steps, nsteps = r.unpack("QQI")
    param_steps = {}
    for _ in range(nsteps):
        key = r.name()
        (param_steps[key],) = r.unpack("Q")
    if r.buf.read(1):
        raise ModelFormatError("trailing bytes after model payload")
    adam = AdamState(first=first, second=second, param_steps=param_steps, steps=steps)
    return ModelState(params=params, memory=grm.ChannelMemory(memory, lam), adam=adam,
                      config=cfg, tasks_seen=tasks_seen)


def save_model(state: ModelState, path) -> None:
    data = serialize(state)
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def load_model(path) -> ModelState:
    with open(path, "rb") as fh:
        return deserialize(fh.read())
