"""Line-delimited shadow files.

Line 1 is a header object; each following line is one snapshot, ``{"b": "XZY..",
"o": "0110.."}`` for Pauli shadows or ``{"t": <base64 packed tableau>, "o": ..}``
for Clifford shadows (character ``q`` belongs to qubit ``q``).  The final line
``{"crc64": "<16 hex digits>"}`` covers every byte before it.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

import crc
import numpy as np

from .errors import IntegrityError
from .shadows import BASIS_NAMES, ShadowSet

FORMAT_VERSION = 1
_CRC = crc.Calculator(crc.Crc64.CRC64, optimized=True)


class KindMismatchError(IntegrityError):
    pass


def crc64(data: bytes) -> str:
    return f"{_CRC.checksum(data):016x}"


def dumps_line(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n").encode()


def _pack_tableau(tab: np.ndarray) -> str:
    return base64.b64encode(np.packbits(tab.reshape(-1)).tobytes()).decode()


def _unpack_tableau(s: str, n: int) -> np.ndarray:
    size = 2 * n * (2 * n + 1)
    raw = np.frombuffer(base64.b64decode(s, validate=True), dtype=np.uint8)
    bits = np.unpackbits(raw)[:size]
    if bits.size != size:
        raise IntegrityError("tableau record too short")
    return bits.astype(bool).reshape(2 * n, 2 * n + 1)


def shadow_header(shadow: ShadowSet) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "kind": shadow.kind,
        "n": shadow.n,
        "M": shadow.M,
        "seed": shadow.seed,
        "input_state": shadow.input_state,
        "target": shadow.target,
    }


def encode_shadow(shadow: ShadowSet) -> bytes:
    lines = [dumps_line(shadow_header(shadow))]
    bit_chars = np.array(["0", "1"])
    for m in range(shadow.M):
        o = "".join(bit_chars[shadow.bits[m]])
        if shadow.kind == "pauli":
            b = "".join(BASIS_NAMES[c] for c in shadow.bases[m])
            lines.append(dumps_line({"b": b, "o": o}))
        else:
            lines.append(dumps_line({"o": o, "t": _pack_tableau(shadow.tableaux[m])}))
    body = b"".join(lines)
    return body + dumps_line({"crc64": crc64(body)})


def write_shadow(shadow: ShadowSet, path: str | Path) -> Path:
    path = Path(path)
    path.write_bytes(encode_shadow(shadow))
    return path


def decode_shadow(data: bytes, expect_kind: str | None = None) -> ShadowSet:
    if not data.endswith(b"\n"):
        raise IntegrityError("truncated shadow file (no final newline)")
    cut = data.rfind(b"\n", 0, len(data) - 1) + 1
    body, trailer = data[:cut], data[cut:]
    try:
        stored = json.loads(trailer)["crc64"]
    except (ValueError, KeyError, TypeError):
        raise IntegrityError("missing checksum line (truncated file?)") from None
    if stored != crc64(body):
        raise IntegrityError("checksum mismatch")
    lines = body.decode().splitlines()
    if not lines:
        raise IntegrityError("empty shadow file")
    header = json.loads(lines[0])
    if header.get("format_version") != FORMAT_VERSION:
        raise IntegrityError(f"unsupported format_version {header.get('format_version')!r}")
    kind, n, M = header["kind"], int(header["n"]), int(header["M"])
    if expect_kind is not None and kind != expect_kind:
        raise KindMismatchError(f"expected a {expect_kind} shadow file, found {kind}")
    records = [json.loads(line) for line in lines[1:]]
    if len(records) != M:
        raise IntegrityError(f"header declares M={M} but file has {len(records)} snapshots")
    bits = np.array([[c == "1" for c in r["o"]] for r in records], dtype=np.uint8)
    bases = tableaux = None
    if kind == "pauli":
        bases = np.array([[BASIS_NAMES.index(c) for c in r["b"]] for r in records], dtype=np.uint8)
    else:
        tableaux = np.array([_unpack_tableau(r["t"], n) for r in records])
    return ShadowSet(
        kind, n, bits.reshape(M, n), bases, tableaux, int(header["seed"]),
        header["input_state"], header["target"],
    )


def read_shadow(path: str | Path, expect_kind: str | None = None) -> ShadowSet:
    return decode_shadow(Path(path).read_bytes(), expect_kind)
