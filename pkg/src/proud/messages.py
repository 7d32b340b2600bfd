"""Message kinds and payload codecs for the session protocol.

Payloads are scheme-agnostic: ciphertexts and keys travel as opaque byte
strings produced by the active backend.  Every kind has a traffic class
used by the transcript audit: "public" (keys, parameters, shapes) or
"ciphertext" (encrypted data).  Nothing on the wire is ever class
"plaintext"; that class exists so the audit can prove its absence.
"""

from __future__ import annotations

import struct

from .errors import FrameError
from .model import ACTIVATION_KINDS

HELLO = 1
MODEL_ACK = 2
INPUT_SET = 3
NLNF_REQ = 4
RESULT = 5
ERROR = 6

KIND_NAMES = {
    HELLO: "HELLO",
    MODEL_ACK: "MODEL_ACK",
    INPUT_SET: "INPUT_SET",
    NLNF_REQ: "NLNF_REQ",
    RESULT: "RESULT",
    ERROR: "ERROR",
}

CLASS_PUBLIC = "public"
CLASS_CIPHERTEXT = "ciphertext"
CLASS_PLAINTEXT = "plaintext"  # never legal on the wire

CLASS_BY_KIND = {
    HELLO: CLASS_PUBLIC,
    MODEL_ACK: CLASS_PUBLIC,
    INPUT_SET: CLASS_CIPHERTEXT,
    NLNF_REQ: CLASS_CIPHERTEXT,
    RESULT: CLASS_CIPHERTEXT,
    ERROR: CLASS_PUBLIC,
}

# error codes carried by ERROR frames
E_PROTOCOL = 1
E_DIMENSION = 2
E_CAPACITY = 3
E_PARAMS = 4
E_LEVEL = 5
E_INTERNAL = 6

_ACT_IDS = {kind: i + 1 for i, kind in enumerate(ACTIVATION_KINDS)}
_ACT_NAMES = {i: kind for kind, i in _ACT_IDS.items()}


def _get(data: bytes, off: int, size: int) -> bytes:
    if off + size > len(data):
        raise FrameError("truncated message payload")
    return data[off : off + size]


def encode_hello(params_bytes: bytes, pk_bytes: bytes) -> bytes:
    return (
        struct.pack("<H", len(params_bytes))
        + params_bytes
        + struct.pack("<I", len(pk_bytes))
        + pk_bytes
    )


def decode_hello(data: bytes) -> tuple[bytes, bytes]:
    (plen,) = struct.unpack_from("<H", _get(data, 0, 2), 0)
    params = _get(data, 2, plen)
    off = 2 + plen
    (klen,) = struct.unpack_from("<I", _get(data, off, 4), 0)
    pk = _get(data, off + 4, klen)
    if off + 4 + klen != len(data):
        raise FrameError("trailing bytes in HELLO")
    return params, pk


def encode_model_ack(summary: list[tuple]) -> bytes:
    out = [struct.pack("<H", len(summary))]
    for entry in summary:
        if entry[0] == "linear":
            out.append(struct.pack("<BHH", 1, entry[1], entry[2]))
        elif entry[0] == "activation":
            out.append(struct.pack("<BB", 2, _ACT_IDS[entry[1]]))
        else:
            raise FrameError(f"unknown layer tag {entry[0]!r}")
    return b"".join(out)


def decode_model_ack(data: bytes) -> list[tuple]:
    (count,) = struct.unpack_from("<H", _get(data, 0, 2), 0)
    off = 2
    summary: list[tuple] = []
    for _ in range(count):
        tag = _get(data, off, 1)[0]
        off += 1
        if tag == 1:
            rows, cols = struct.unpack_from("<HH", _get(data, off, 4), 0)
            off += 4
            summary.append(("linear", rows, cols))
        elif tag == 2:
            act = _get(data, off, 1)[0]
            off += 1
            if act not in _ACT_NAMES:
                raise FrameError(f"unknown activation id {act}")
            summary.append(("activation", _ACT_NAMES[act]))
        else:
            raise FrameError(f"unknown layer tag {tag}")
    if off != len(data):
        raise FrameError("trailing bytes in MODEL_ACK")
    return summary


def encode_input_set(layer_idx: int, ct_blobs: list[bytes]) -> bytes:
    out = [struct.pack("<HH", layer_idx, len(ct_blobs))]
    for blob in ct_blobs:
        out.append(struct.pack("<I", len(blob)))
        out.append(blob)
    return b"".join(out)


def decode_input_set(data: bytes) -> tuple[int, list[bytes]]:
    layer_idx, count = struct.unpack_from("<HH", _get(data, 0, 4), 0)
    off = 4
    blobs = []
    for _ in range(count):
        (blen,) = struct.unpack_from("<I", _get(data, off, 4), 0)
        off += 4
        blobs.append(_get(data, off, blen))
        off += blen
    if off != len(data):
        raise FrameError("trailing bytes in INPUT_SET")
    return layer_idx, blobs


def encode_nlnf_req(layer_idx: int, ct_blob: bytes) -> bytes:
    return struct.pack("<HI", layer_idx, len(ct_blob)) + ct_blob


def decode_nlnf_req(data: bytes) -> tuple[int, bytes]:
    layer_idx, blen = struct.unpack_from("<HI", _get(data, 0, 6), 0)
    blob = _get(data, 6, blen)
    if 6 + blen != len(data):
        raise FrameError("trailing bytes in NLNF_REQ")
    return layer_idx, blob


def encode_result(ct_blob: bytes) -> bytes:
    return struct.pack("<I", len(ct_blob)) + ct_blob


def decode_result(data: bytes) -> bytes:
    (blen,) = struct.unpack_from("<I", _get(data, 0, 4), 0)
    blob = _get(data, 4, blen)
    if 4 + blen != len(data):
        raise FrameError("trailing bytes in RESULT")
    return blob


def encode_error(code: int, detail: str) -> bytes:
    raw = detail.encode("utf-8")[:4096]
    return struct.pack("<HH", code, len(raw)) + raw


def decode_error(data: bytes) -> tuple[int, str]:
    code, dlen = struct.unpack_from("<HH", _get(data, 0, 4), 0)
    raw = _get(data, 4, dlen)
    return code, raw.decode("utf-8", errors="replace")
