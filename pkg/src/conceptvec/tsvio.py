"""Plain-text artifact helpers: sorted edge TSVs and atomic writes."""

from __future__ import annotations

import os
import tempfile
from collections.abc import Iterable
from contextlib import contextmanager
from pathlib import Path


@contextmanager
def atomic_write(path: str | Path):
    """Write to a temp file in the target directory, rename on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    fh = os.fdopen(fd, "wb")
    try:
        yield fh
        fh.close()
        os.replace(tmp, path)
    except BaseException:
        fh.close()
        os.unlink(tmp)
        raise


_ESCAPES = ((b"\\", b"\\\\"), (b" ", b"\\s"), (b"\t", b"\\t"),
            (b"\n", b"\\n"), (b"\r", b"\\r"))


def escape_unit(unit: bytes) -> bytes:
    """Escape whitespace so units survive space-separated text formats.

    CHAR n-grams carry the raw pad space byte; escaped forms keep concept
    dumps and pseudocorpus lines unambiguous for whitespace tokenizers.
    """
    for raw, esc in _ESCAPES:
        unit = unit.replace(raw, esc)
    return unit


def unescape_unit(unit: bytes) -> bytes:
    out = bytearray()
    i = 0
    while i < len(unit):
        b = unit[i : i + 1]
        if b == b"\\" and i + 1 < len(unit):
            nxt = unit[i + 1 : i + 2]
            rep = {b"\\": b"\\", b"s": b" ", b"t": b"\t", b"n": b"\n", b"r": b"\r"}.get(nxt)
            if rep is not None:
                out += rep
                i += 2
                continue
        out += b
        i += 1
    return bytes(out)


def format_score(value: float | int) -> bytes:
    """Integer counts stay plain; real scores use 6 significant digits."""
    if isinstance(value, int):
        return str(value).encode("ascii")
    return f"{value:.6g}".encode("ascii")


def write_edge_tsv(path: str | Path, rows: Iterable[tuple[bytes, bytes, float | int]]) -> int:
    """Write ``u<TAB>v<TAB>value`` lines sorted lexicographically (bit-exact)."""
    lines = sorted(u + b"\t" + v + b"\t" + format_score(value) for u, v, value in rows)
    with atomic_write(path) as fh:
        for line in lines:
            fh.write(line + b"\n")
    return len(lines)


def read_edge_tsv(path: str | Path, value_type=int) -> list[tuple[bytes, bytes, float | int]]:
    rows = []
    with open(path, "rb") as fh:
        for raw in fh:
            line = raw.rstrip(b"\n")
            if not line:
                continue
            u, v, value = line.split(b"\t")
            rows.append((u, v, value_type(value)))
    return rows
