"""Execution traces: parsing, serialization, summaries and corpus manifests.

Two on-disk containers are supported:

* text: one address per line, ``0x``-prefixed hex or decimal, ``\\n`` terminated;
* binary: ``b"RAGE"`` magic, ``u16`` version (1), ``u64`` count, then ``count``
  little-endian ``u64`` addresses.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CfaError, EmptyTraceError, ParseError, WriteError

MAGIC = b"RAGE"
VERSION = 1
_HEADER = struct.Struct("<4sHQ")
_MAX_ADDR = (1 << 64) - 1

FORMATS = ("text", "binary")
ROLES = ("train", "validation", "attest", "attack")
LABELS = ("benign", "rop", "dop", "unknown")


@dataclass(frozen=True, eq=False)
class Trace:
    """Ordered basic-block addresses of one execution."""

    steps: np.ndarray
    source_id: str = ""

    def __post_init__(self):
        steps = np.ascontiguousarray(self.steps, dtype=np.uint64)
        steps.setflags(write=False)
        object.__setattr__(self, "steps", steps)

    def __len__(self):
        return len(self.steps)

    def __eq__(self, other):
        if not isinstance(other, Trace):
            return NotImplemented
        return np.array_equal(self.steps, other.steps)

    def __hash__(self):
        return hash(self.steps.tobytes())

    def __repr__(self):
        return f"Trace(len={len(self)}, source_id={self.source_id!r})"


def _parse_int(token: bytes) -> int:
    if token[:2] in (b"0x", b"0X"):
        if len(token) == 2:
            raise ValueError("bare 0x prefix")
        value = int(token[2:], 16)
    else:
        value = int(token, 10)
    if value < 0 or value > _MAX_ADDR:
        raise ValueError("address does not fit in 64 bits")
    return value


def _parse_text(data: bytes) -> np.ndarray:
    lines = data.split(b"\n")
    if lines[-1] == b"":
        lines.pop()
    try:
        if any(not line for line in lines):
            raise ValueError("blank line")
        values = [_parse_int(line) for line in lines]
    except ValueError:
        offset = 0
        for line in lines:
            try:
                if not line:
                    raise ValueError("blank line")
                _parse_int(line)
            except ValueError as exc:
                raise ParseError(f"malformed line {line[:32]!r}: {exc}", offset) from None
            offset += len(line) + 1
        raise  # pragma: no cover
    if not values:
        raise EmptyTraceError("trace contains no steps")
    return np.array(values, dtype=np.uint64)


def _parse_binary(data: bytes) -> np.ndarray:
    if len(data) < _HEADER.size:
        if data[: len(MAGIC)] != MAGIC[: len(data)]:
            raise ParseError("bad magic", 0)
        raise ParseError("truncated header", len(data))
    magic, version, count = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ParseError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise ParseError(f"unsupported version {version}", 4)
    if count == 0:
        raise EmptyTraceError("binary header declares zero records")
    body = len(data) - _HEADER.size
    if body < 8 * count:
        raise ParseError(
            f"truncated record {body // 8} of {count}", _HEADER.size + 8 * (body // 8)
        )
    if body > 8 * count:
        raise ParseError("trailing bytes after last record", _HEADER.size + 8 * count)
    return np.frombuffer(data, dtype="<u8", count=count, offset=_HEADER.size).astype(np.uint64)


def parse_trace(data: bytes, fmt: str = "text", source_id: str = "") -> Trace:
    """Decode raw file content into a :class:`Trace`, preserving step order."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown trace format {fmt!r}")
    if len(data) == 0:
        raise EmptyTraceError("empty file")
    steps = _parse_text(data) if fmt == "text" else _parse_binary(data)
    return Trace(steps, source_id)


def write_trace(trace: Trace, fmt: str = "text") -> bytes:
    if fmt not in FORMATS:
        raise ValueError(f"unknown trace format {fmt!r}")
    if len(trace) == 0:
        raise EmptyTraceError("cannot serialize an empty trace")
    if fmt == "text":
        return "".join([f"0x{a:x}\n" for a in trace.steps.tolist()]).encode("ascii")
    return _HEADER.pack(MAGIC, VERSION, len(trace)) + trace.steps.astype("<u8").tobytes()


def detect_format(data: bytes) -> str:
    return "binary" if data[:4] == MAGIC else "text"


def load_trace(path, fmt: str | None = None) -> Trace:
    path = Path(path)
    data = path.read_bytes()
    return parse_trace(data, fmt or detect_format(data), source_id=path.name)


def save_trace(path, trace: Trace, fmt: str = "text") -> None:
    data = write_trace(trace, fmt)
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise WriteError(f"cannot write {path}: {exc}") from exc


def trace_stats(trace: Trace) -> dict:
    if len(trace) == 0:
        return {"length": 0, "unique_addresses": 0, "byte_size_text": 0,
                "byte_size_binary": _HEADER.size}
    return {
        "length": len(trace),
        "unique_addresses": int(np.unique(trace.steps).size),
        "byte_size_text": len(write_trace(trace, "text")),
        "byte_size_binary": _HEADER.size + 8 * len(trace),
    }


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    role: str
    label: str = "unknown"


@dataclass
class CorpusManifest:
    """Trace corpus for one experiment: a single ``train`` trace plus validation and test traces."""

    entries: list = field(default_factory=list)
    root: Path = Path(".")

    def __post_init__(self):
        for e in self.entries:
            if e.role not in ROLES:
                raise CfaError(f"unknown role {e.role!r} for {e.path}")
            if e.label not in LABELS:
                raise CfaError(f"unknown label {e.label!r} for {e.path}")
        n_train = sum(e.role == "train" for e in self.entries)
        if n_train != 1:
            raise CfaError(f"manifest needs exactly one train entry, found {n_train}")
        if not any(e.role == "validation" for e in self.entries):
            raise CfaError("manifest needs at least one validation entry")

    def by_role(self, role):
        return [e for e in self.entries if e.role == role]

    def resolve(self, entry: ManifestEntry) -> Path:
        p = Path(entry.path)
        return p if p.is_absolute() else self.root / p

    @property
    def train(self) -> ManifestEntry:
        return self.by_role("train")[0]

    def to_json(self) -> str:
        return json.dumps([{"path": e.path, "role": e.role, "label": e.label}
                           for e in self.entries], indent=1)

    @classmethod
    def from_json(cls, text: str, root=".") -> "CorpusManifest":
        raw = json.loads(text)
        if not isinstance(raw, list):
            raise CfaError("manifest must be a JSON array")
        entries = []
        for item in raw:
            if not isinstance(item, dict) or "path" not in item or "role" not in item:
                raise CfaError(f"bad manifest entry {item!r}")
            entries.append(ManifestEntry(str(item["path"]), item["role"],
                                         item.get("label", "unknown")))
        return cls(entries, Path(root))

    @classmethod
    def load(cls, path) -> "CorpusManifest":
        path = Path(path)
        return cls.from_json(path.read_text(), root=path.parent)

    def save(self, path) -> None:
        try:
            Path(path).write_text(self.to_json() + "\n")
        except OSError as exc:
            raise WriteError(f"cannot write {path}: {exc}") from exc
