"""SMW1 named-array container used for weight checkpoints.

Layout: magic 'SMW1', u32 LE count, then per array: u8 name length + ASCII
name, u32 rank, u32 dims, float32 LE data.  Round-trips bit-exactly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np


def save_smw1(path: str | Path, arrays: dict[str, np.ndarray]) -> None:
    with Path(path).open("wb") as fh:
        fh.write(b"SMW1")
        fh.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            a = np.ascontiguousarray(arr, dtype=np.float32)
            enc = name.encode("ascii")
            fh.write(struct.pack("<B", len(enc)))
            fh.write(enc)
            fh.write(struct.pack("<I", a.ndim))
            for d in a.shape:
                fh.write(struct.pack("<I", d))
            fh.write(a.tobytes())


def load_smw1(path: str | Path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:4] != b"SMW1":
        raise ValueError(f"{path}: bad SMW1 magic")
    (count,) = struct.unpack_from("<I", raw, 4)
    pos = 8
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (ln,) = struct.unpack_from("<B", raw, pos)
        pos += 1
        name = raw[pos : pos + ln].decode("ascii")
        pos += ln
        (rank,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}I", raw, pos)
        pos += 4 * rank
        n = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(raw, dtype="<f4", count=n, offset=pos).reshape(dims)
        pos += 4 * n
        out[name] = arr.copy()
    return out
