"""Binary persistence of complete trainer state.

File layout: magic "CGCK", a format version, an entry count, then named
float32 arrays (name length, UTF-8 name, rank, dims, raw values), all
integers and floats little-endian regardless of host byte order. Text
payloads (config snapshot, layer notation) ride in the same framing as
byte-valued arrays, and counters as 16-bit limb arrays, so one reader
handles the whole file. Writes land in a temp file that is renamed into
place, so a crash never leaves a half-written checkpoint behind.

A restored state continues exactly where the saved run stopped: every
stochastic draw is counter-keyed, so persisting the counters is enough
to reproduce the remaining stream.
"""

from __future__ import annotations

import dataclasses
import os
import struct
from dataclasses import dataclass, replace

import numpy as np

from .networks import (
    LayerParseError,
    ModelState,
    NetworkSpec,
    build_discriminator,
    param_shapes,
    parse_layer_spec,
)
from .tensor import ShapeError, Tensor
from .trainer import TrainerState, TrainingConfig, init_state

MAGIC = b"CGCK"
VERSION = 1

_LIMBS = 4  # 16-bit limbs per stored counter; covers the full 64-bit range

_ROLES = (("g", "generator"), ("f", "generator"),
          ("dx", "discriminator"), ("dy", "discriminator"))


class CheckpointError(RuntimeError):
    """The file is not a readable checkpoint of the supported version."""


# --- low-level entry framing ---

def _pack_entries(entries: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(entries))]
    for name, arr in entries.items():
        data = np.ascontiguousarray(arr, dtype="<f4")
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<I", data.ndim))
        if data.ndim:
            parts.append(struct.pack(f"<{data.ndim}I", *data.shape))
        parts.append(data.tobytes())
    return b"".join(parts)


def _read_entries(blob: bytes) -> dict[str, np.ndarray]:
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise CheckpointError(f"truncated checkpoint: needed {n} bytes for {what} at offset {pos}")
        out = blob[pos:pos + n]
        pos += n
        return out

    if take(4, "magic") != MAGIC:
        raise CheckpointError("bad magic; not a checkpoint file")
    (version,) = struct.unpack("<I", take(4, "format version"))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}, expected {VERSION}")
    (count,) = struct.unpack("<I", take(4, "entry count"))
    entries: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4, "name length"))
        try:
            name = take(name_len, "entry name").decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointError(f"entry name at offset {pos} is not UTF-8") from None
        (rank,) = struct.unpack("<I", take(4, f"rank of {name!r}"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, f"dims of {name!r}"))
        n = 1
        for d in dims:
            n *= d
        raw = take(4 * n, f"data of {name!r}")
        # astype gives a native-order writable copy whatever the host is
        arr = np.frombuffer(raw, dtype="<f4").reshape(dims).astype(np.float32)
        if name in entries:
            raise CheckpointError(f"duplicate entry {name!r}")
        entries[name] = arr
    if pos != len(blob):
        raise CheckpointError(f"{len(blob) - pos} trailing bytes after the last entry")
    return entries


def _write_atomic(path, blob: bytes):
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(blob)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


# --- payload codecs: text and counters as float32 arrays ---

def _text_array(text: str) -> np.ndarray:
    return np.frombuffer(text.encode("utf-8"), dtype=np.uint8).astype(np.float32)


def _array_text(name: str, arr: np.ndarray) -> str:
    vals = np.asarray(arr, dtype=np.float64).ravel()
    if vals.size and (np.any(vals < 0) or np.any(vals > 255) or np.any(vals != np.rint(vals))):
        raise CheckpointError(f"entry {name!r} does not decode as text")
    try:
        return bytes(vals.astype(np.uint8)).decode("utf-8")
    except UnicodeDecodeError:
        raise CheckpointError(f"entry {name!r} does not decode as text") from None


def _int_array(n: int) -> np.ndarray:
    if not 0 <= n < 1 << (16 * _LIMBS):
        raise ValueError(f"counter out of storable range: {n}")
    return np.array([(n >> (16 * i)) & 0xFFFF for i in range(_LIMBS)], dtype=np.float32)


def _array_int(name: str, arr: np.ndarray) -> int:
    vals = np.asarray(arr, dtype=np.float64).ravel()
    if vals.size != _LIMBS or np.any(vals < 0) or np.any(vals > 0xFFFF) or np.any(vals != np.rint(vals)):
        raise CheckpointError(f"entry {name!r} does not decode as a counter")
    return sum(int(v) << (16 * i) for i, v in enumerate(vals))


# --- config and architecture snapshots ---

def _config_text(cfg: TrainingConfig) -> str:
    lines = []
    for f in dataclasses.fields(TrainingConfig):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name} = {'none' if v is None else v}")
    return "\n".join(lines) + "\n"


def _config_from_text(text: str) -> TrainingConfig:
    types = {f.name: str(f.type) for f in dataclasses.fields(TrainingConfig)}
    kw = {}
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep or key not in types:
            raise CheckpointError(f"config snapshot has an unknown line {line!r}")
        t = types[key]
        try:
            if raw == "none" and "None" in t:
                kw[key] = None
            elif t.startswith("float"):
                kw[key] = float(raw)
            elif t.startswith("int"):
                kw[key] = int(raw)
            else:
                kw[key] = raw
        except ValueError:
            raise CheckpointError(f"config snapshot value unreadable in line {line!r}") from None
    try:
        return TrainingConfig(**kw)
    except (TypeError, ValueError) as e:
        raise CheckpointError(f"config snapshot rejected: {e}") from None


def _spec_from_tokens(role: str, text: str, channels: int) -> NetworkSpec:
    tokens = [t for t in text.split(",") if t]
    if not tokens:
        raise CheckpointError("empty layer list in checkpoint")
    try:
        if role == "discriminator":
            # the trailing C1 token is the raw 1-channel output conv
            if tokens[-1] != "C1":
                raise CheckpointError(f"discriminator notation must end in C1, got {tokens[-1]!r}")
            return build_discriminator(input_channels=channels, tokens=tokens[:-1])
        layers = [parse_layer_spec(t) for t in tokens]
        layers[-1] = replace(layers[-1], norm="none", activation="tanh")
        return NetworkSpec(tuple(layers), channels, "generator")
    except LayerParseError as e:
        raise CheckpointError(f"bad layer notation: {e}") from None


# --- record assembly ---

@dataclass
class OptimizerSnapshot:
    t: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]


@dataclass
class BufferSnapshot:
    counter: int
    images: list[np.ndarray]


@dataclass
class CheckpointRecord:
    """Everything a checkpoint file carries, decoded but not yet live."""

    version: int
    config: TrainingConfig
    epoch: int
    step: int
    model_seed: int
    specs: dict[str, NetworkSpec]
    params: dict[str, np.ndarray]
    optimizers: dict[str, OptimizerSnapshot]
    buffers: dict[str, BufferSnapshot]


def _opt_param_names(model: ModelState) -> dict[str, list[str]]:
    # mirrors the parameter order each optimizer was constructed with
    return {
        "g": [f"g.{k}" for k in model.g_params] + [f"f.{k}" for k in model.f_params],
        "dx": [f"dx.{k}" for k in model.dx_params],
        "dy": [f"dy.{k}" for k in model.dy_params],
    }


def record_from_state(state: TrainerState) -> CheckpointRecord:
    model = state.model
    names = _opt_param_names(model)
    optimizers = {}
    for key, opt in (("g", state.opt_g), ("dx", state.opt_dx), ("dy", state.opt_dy)):
        optimizers[key] = OptimizerSnapshot(
            t=opt.t,
            m=dict(zip(names[key], opt.m)),
            v=dict(zip(names[key], opt.v)),
        )
    return CheckpointRecord(
        version=VERSION,
        config=state.cfg,
        epoch=state.epoch,
        step=state.step,
        model_seed=model.seed,
        specs={"g": model.g_spec, "f": model.f_spec, "dx": model.dx_spec, "dy": model.dy_spec},
        params={name: p.data for name, p in model.named_parameters()},
        optimizers=optimizers,
        buffers={"x": BufferSnapshot(state.buf_x.counter, list(state.buf_x.stored)),
                 "y": BufferSnapshot(state.buf_y.counter, list(state.buf_y.stored))},
    )


def _entries_from_record(rec: CheckpointRecord) -> dict[str, np.ndarray]:
    e: dict[str, np.ndarray] = {}
    e["config"] = _text_array(_config_text(rec.config))
    e["progress/epoch"] = _int_array(rec.epoch)
    e["progress/step"] = _int_array(rec.step)
    e["model/seed"] = _int_array(rec.model_seed)
    for key, _ in _ROLES:
        spec = rec.specs[key]
        e[f"spec/{key}"] = _text_array(",".join(spec.tokens()))
        e[f"spec/{key}/channels"] = _int_array(spec.input_channels)
    for name, arr in rec.params.items():
        e[f"param/{name}"] = arr
    for key in ("g", "dx", "dy"):
        snap = rec.optimizers[key]
        e[f"opt/{key}/t"] = _int_array(snap.t)
        for n, arr in snap.m.items():
            e[f"opt/{key}/m/{n}"] = arr
        for n, arr in snap.v.items():
            e[f"opt/{key}/v/{n}"] = arr
    for key in ("x", "y"):
        snap = rec.buffers[key]
        e[f"buffer/{key}/counter"] = _int_array(snap.counter)
        e[f"buffer/{key}/size"] = _int_array(len(snap.images))
        for i, img in enumerate(snap.images):
            e[f"buffer/{key}/{i:04d}"] = img
    return e


def _record_from_entries(entries: dict[str, np.ndarray]) -> CheckpointRecord:
    used = set()

    def need(name: str) -> np.ndarray:
        if name not in entries:
            raise CheckpointError(f"missing entry {name!r}")
        used.add(name)
        return entries[name]

    cfg = _config_from_text(_array_text("config", need("config")))
    epoch = _array_int("progress/epoch", need("progress/epoch"))
    step = _array_int("progress/step", need("progress/step"))
    seed = _array_int("model/seed", need("model/seed"))

    specs = {}
    for key, role in _ROLES:
        text = _array_text(f"spec/{key}", need(f"spec/{key}"))
        channels = _array_int(f"spec/{key}/channels", need(f"spec/{key}/channels"))
        specs[key] = _spec_from_tokens(role, text, channels)

    try:
        shapes = {key: [(f"{key}.{n}", shape) for n, shape in param_shapes(specs[key])]
                  for key, _ in _ROLES}
    except ShapeError as e:
        raise CheckpointError(f"inconsistent architecture in checkpoint: {e}") from None

    params = {}
    for key, _ in _ROLES:
        for full, shape in shapes[key]:
            arr = need(f"param/{full}")
            if tuple(arr.shape) != tuple(shape):
                raise CheckpointError(
                    f"entry param/{full} has shape {tuple(arr.shape)}, architecture requires {tuple(shape)}")
            params[full] = arr

    opt_names = {"g": [n for n, _ in shapes["g"]] + [n for n, _ in shapes["f"]],
                 "dx": [n for n, _ in shapes["dx"]],
                 "dy": [n for n, _ in shapes["dy"]]}
    optimizers = {}
    for key, pnames in opt_names.items():
        t = _array_int(f"opt/{key}/t", need(f"opt/{key}/t"))
        m = {}
        v = {}
        for n in pnames:
            m[n] = need(f"opt/{key}/m/{n}")
            v[n] = need(f"opt/{key}/v/{n}")
            if m[n].shape != params[n].shape or v[n].shape != params[n].shape:
                raise CheckpointError(f"optimizer state for {n} does not match its parameter shape")
        optimizers[key] = OptimizerSnapshot(t, m, v)

    buffers = {}
    for key in ("x", "y"):
        counter = _array_int(f"buffer/{key}/counter", need(f"buffer/{key}/counter"))
        size = _array_int(f"buffer/{key}/size", need(f"buffer/{key}/size"))
        images = [need(f"buffer/{key}/{i:04d}") for i in range(size)]
        buffers[key] = BufferSnapshot(counter, images)

    extra = sorted(set(entries) - used)
    if extra:
        raise CheckpointError(f"unexpected entries: {extra[:5]}")
    return CheckpointRecord(VERSION, cfg, epoch, step, seed, specs, params, optimizers, buffers)


# --- public surface ---

def save_checkpoint(state: TrainerState, path) -> None:
    """Write the state to path atomically in the binary entry format."""
    blob = _pack_entries(_entries_from_record(record_from_state(state)))
    _write_atomic(path, blob)


def load_checkpoint(path) -> CheckpointRecord:
    """Read and validate a checkpoint file; raises CheckpointError when
    the content is not a complete, self-consistent record."""
    with open(path, "rb") as f:
        blob = f.read()
    return _record_from_entries(_read_entries(blob))


def restore_state(rec: CheckpointRecord) -> TrainerState:
    """Wire a decoded record into live model, optimizer and buffer objects."""
    cfg = rec.config
    model = ModelState(g_spec=rec.specs["g"], f_spec=rec.specs["f"],
                       dx_spec=rec.specs["dx"], dy_spec=rec.specs["dy"], seed=rec.model_seed)
    for key, attr in (("g", "g_params"), ("f", "f_params"), ("dx", "dx_params"), ("dy", "dy_params")):
        spec = rec.specs[key]
        setattr(model, attr, {
            name: Tensor(rec.params[f"{key}.{name}"].copy(), requires_grad=True)
            for name, _ in param_shapes(spec)
        })
    state = init_state(cfg, model=model)
    names = _opt_param_names(model)
    try:
        for key, opt in (("g", state.opt_g), ("dx", state.opt_dx), ("dy", state.opt_dy)):
            snap = rec.optimizers[key]
            opt.t = snap.t
            opt.m = [snap.m[n].copy() for n in names[key]]
            opt.v = [snap.v[n].copy() for n in names[key]]
    except KeyError as e:
        raise CheckpointError(f"optimizer state missing for parameter {e.args[0]!r}") from None
    for key, buf in (("x", state.buf_x), ("y", state.buf_y)):
        snap = rec.buffers[key]
        if len(snap.images) > buf.capacity:
            raise CheckpointError(
                f"buffer {key} holds {len(snap.images)} images, capacity is {buf.capacity}")
        buf.counter = snap.counter
        buf.stored = [img.copy() for img in snap.images]
    state.epoch = rec.epoch
    state.step = rec.step
    return state


def load_state(path) -> TrainerState:
    return restore_state(load_checkpoint(path))
