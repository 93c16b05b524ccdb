"""Binary checkpoint format for named float32 arrays.

Layout (all integers little-endian)::

    b"CDN1" | version u32 | entry count u32 |
    per entry: name length u16 | utf-8 name | rank u8 | dims u32 x rank | float32 data

Network architecture and optimizer state travel as ordinary entries under
reserved prefixes (``__arch__.``, ``__cfg__.``, ``adam.``).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .compression_net import KINDS, BlockSpec, Network
from .discriminator import Discriminator
from .optim import AdamState

MAGIC = b"CDN1"
VERSION = 1
HEADER_SIZE = 12
ENTRY_OVERHEAD = 3  # u16 name length + u8 rank

GATES = ("sigmoid", "identity")


class CheckpointError(ValueError):
    pass


def entry_size(name: str, shape: tuple[int, ...]) -> int:
    return ENTRY_OVERHEAD + len(name.encode("utf-8")) + 4 * len(shape) + 4 * int(np.prod(shape, dtype=np.int64))


def write_entries(path: str | Path, entries: dict[str, np.ndarray]) -> None:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(entries))]
    for name, arr in entries.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr)
        if arr.ndim > 255:
            raise CheckpointError(f"{name}: rank {arr.ndim} too large")
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def read_entries(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < HEADER_SIZE:
        raise CheckpointError(f"{path}: truncated header ({len(data)} bytes)")
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {data[:4]!r}, expected {MAGIC!r}")
    version, count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    pos = HEADER_SIZE
    entries: dict[str, np.ndarray] = {}

    def need(n: int, what: str):
        if pos + n > len(data):
            raise CheckpointError(f"{path}: truncated while reading {what} at byte {pos}")

    for index in range(count):
        need(2, f"entry {index} name length")
        (name_len,) = struct.unpack_from("<H", data, pos)
        pos += 2
        need(name_len, f"entry {index} name")
        try:
            name = data[pos : pos + name_len].decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointError(f"{path}: entry {index} name is not valid utf-8") from None
        pos += name_len
        need(1, f"{name} rank")
        rank = data[pos]
        pos += 1
        need(4 * rank, f"{name} dims")
        shape = struct.unpack_from(f"<{rank}I", data, pos)
        pos += 4 * rank
        nbytes = 4 * int(np.prod(shape, dtype=np.int64))
        need(nbytes, f"{name} data")
        if name in entries:
            raise CheckpointError(f"{path}: duplicate entry {name!r}")
        entries[name] = np.frombuffer(data, dtype="<f4", count=nbytes // 4, offset=pos).astype(np.float32).reshape(shape)
        pos += nbytes
    if pos != len(data):
        raise CheckpointError(f"{path}: {len(data) - pos} trailing bytes after {count} entries")
    return entries


def _arch_entries(net: Network) -> dict[str, np.ndarray]:
    out = {}
    for b in net.specs:
        k, c, s = b.layers[0]
        out[f"__arch__.{b.name}"] = np.array([KINDS.index(b.kind), k, c, s, len(b.layers)], np.float32)
    out["__cfg__.gate"] = np.array(GATES.index(net.gate), np.float32)
    out["__cfg__.slope"] = np.array(net.slope, np.float32)
    return out


def _adam_entries(prefix: str, state: AdamState) -> dict[str, np.ndarray]:
    out = {
        f"{prefix}.t": np.array(state.t, np.float32),
        f"{prefix}.lr": np.array(state.lr, np.float32),
        f"{prefix}.beta1": np.array(state.beta1, np.float32),
        f"{prefix}.beta2": np.array(state.beta2, np.float32),
        f"{prefix}.epsilon": np.array(state.epsilon, np.float32),
    }
    for name in state.m:
        out[f"{prefix}.m.{name}"] = state.m[name]
        out[f"{prefix}.v.{name}"] = state.v[name]
    return out


def save_checkpoint(
    path: str | Path,
    net: Network,
    opt: AdamState | None = None,
    disc: Discriminator | None = None,
    disc_opt: AdamState | None = None,
) -> None:
    entries = _arch_entries(net)
    entries.update(net.state_dict())
    if opt is not None:
        entries.update(_adam_entries("adam", opt))
    if disc is not None:
        entries["__cfg__.disc_channels"] = np.array([p.out_channels for p in disc.convs[:-1]], np.float32)
        entries.update(disc.state_dict())
        if disc_opt is not None:
            entries.update(_adam_entries("adam_disc", disc_opt))
    write_entries(path, entries)


def _restore_adam(prefix: str, entries: dict[str, np.ndarray], valid: set[str]) -> AdamState | None:
    if f"{prefix}.t" not in entries:
        return None
    state = AdamState(
        lr=float(entries.pop(f"{prefix}.lr")),
        beta1=float(entries.pop(f"{prefix}.beta1")),
        beta2=float(entries.pop(f"{prefix}.beta2")),
        epsilon=float(entries.pop(f"{prefix}.epsilon")),
        t=int(entries.pop(f"{prefix}.t")),
    )
    for key in [k for k in entries if k.startswith(f"{prefix}.m.") or k.startswith(f"{prefix}.v.")]:
        kind, name = key[len(prefix) + 1 :].split(".", 1)
        if name not in valid:
            raise CheckpointError(f"optimizer state for unknown parameter {name!r}")
        getattr(state, kind)[name] = entries.pop(key).copy()
    return state


def load_checkpoint(path: str | Path):
    """Return ``(net, opt, disc, disc_opt)``; absent components are ``None``."""
    entries = read_entries(path)
    specs = []
    for key in [k for k in entries if k.startswith("__arch__.")]:
        kind, k, c, s, count = (int(v) for v in entries.pop(key))
        if not 0 <= kind < len(KINDS):
            raise CheckpointError(f"{key}: invalid block kind code {kind}")
        specs.append(BlockSpec.from_row(key[len("__arch__.") :], KINDS[kind], k, c, s, count))
    if not specs:
        raise CheckpointError(f"{path}: no architecture entries")
    gate = GATES[int(entries.pop("__cfg__.gate", np.array(0)))]
    slope = float(entries.pop("__cfg__.slope", np.array(0.2, np.float32)))
    net = Network(specs, gate=gate, slope=slope)

    disc = None
    if "__cfg__.disc_channels" in entries:
        channels = tuple(int(c) for c in entries.pop("__cfg__.disc_channels"))
        disc = Discriminator(channels, slope=slope)
        disc_state = {k: entries.pop(k) for k in list(disc.state_dict()) if k in entries}
        try:
            disc.load_state_dict(disc_state)
        except KeyError as exc:
            raise CheckpointError(str(exc)) from None

    opt = _restore_adam("adam", entries, set(net.parameters()))
    disc_opt = _restore_adam("adam_disc", entries, set(disc.parameters()) if disc else set())
    try:
        net.load_state_dict(entries)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: {exc}") from None
    return net, opt, disc, disc_opt
