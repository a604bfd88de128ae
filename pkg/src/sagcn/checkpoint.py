"""Binary embedding checkpoints.

Layout (all little-endian):

    bytes 0..7    magic "SAGCNCK1"
    bytes 8..19   uint32 M, N, d
    then          M*d float64 user rows, row-major
    then          N*d float64 item rows, row-major
    last 8 bytes  uint64 config hash

Total size is 8 + 12 + 8*d*(M+N) + 8 bytes. A key-value sidecar
``<checkpoint>.cfg`` records the full run configuration in the same flat
format the ``--config`` flag accepts. Save/load round-trips are bitwise
identical.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError
from .io_utils import atomic_write_bytes, atomic_write_text
from .propagation import EmbeddingTable

MAGIC = b"SAGCNCK1"
_HEADER = struct.Struct("<8sIII")
_FOOTER = struct.Struct("<Q")


def sidecar_path(path: str | Path) -> Path:
    return Path(str(path) + ".cfg")


def save_checkpoint(
    path: str | Path,
    table: EmbeddingTable,
    config_hash: int,
    sidecar_text: str | None = None,
) -> None:
    """Write the embedding table and config hash; optionally the sidecar."""
    m, n, d = table.num_users, table.num_items, table.dim
    blob = b"".join(
        [
            _HEADER.pack(MAGIC, m, n, d),
            np.ascontiguousarray(table.users, dtype="<f8").tobytes(),
            np.ascontiguousarray(table.items, dtype="<f8").tobytes(),
            _FOOTER.pack(config_hash & 0xFFFFFFFFFFFFFFFF),
        ]
    )
    atomic_write_bytes(path, blob)
    if sidecar_text is not None:
        atomic_write_text(sidecar_path(path), sidecar_text)


def load_checkpoint(path: str | Path) -> tuple[EmbeddingTable, int]:
    """Read a checkpoint back; validates magic and exact byte length."""
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size + _FOOTER.size:
        raise DataError(f"checkpoint {path} is truncated")
    magic, m, n, d = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise DataError(f"checkpoint {path} has wrong magic {magic!r}")
    expected = _HEADER.size + 8 * d * (m + n) + _FOOTER.size
    if len(blob) != expected:
        raise DataError(f"checkpoint {path}: expected {expected} bytes, found {len(blob)}")
    offset = _HEADER.size
    users = np.frombuffer(blob, dtype="<f8", count=m * d, offset=offset).reshape(m, d)
    offset += 8 * m * d
    items = np.frombuffer(blob, dtype="<f8", count=n * d, offset=offset).reshape(n, d)
    offset += 8 * n * d
    (config_hash,) = _FOOTER.unpack_from(blob, offset)
    return EmbeddingTable(users=users.copy(), items=items.copy()), config_hash
