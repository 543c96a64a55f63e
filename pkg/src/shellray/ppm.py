"""Binary PPM (P6) image I/O.

Linear [0, 1] float images quantize to 8-bit (maxval 255) by scaling and
rounding to nearest, ties to even (IEEE default); a 16-bit variant (maxval
65535, big-endian samples per the format) exists for precision tests.  No
gamma or tonemapping is applied.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError


def write_ppm(path, image: np.ndarray, depth: int = 8) -> None:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise DomainError("image must have shape (height, width, 3)")
    if depth not in (8, 16):
        raise DomainError("depth must be 8 or 16")
    maxval = 255 if depth == 8 else 65535
    q = np.rint(np.clip(image, 0.0, 1.0) * maxval)
    h, w = image.shape[:2]
    header = f"P6\n{w} {h}\n{maxval}\n".encode("ascii")
    payload = q.astype(np.uint8).tobytes() if depth == 8 \
        else q.astype(">u2").tobytes()
    with open(path, "wb") as fh:
        fh.write(header + payload)


def read_ppm(path) -> np.ndarray:
    """Read a binary P6 file back to float64 in [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    fields = []
    pos = 0
    # header: magic, width, height, maxval as whitespace-separated tokens,
    # with '#' comments allowed between them
    while len(fields) < 4:
        while pos < len(data) and data[pos] in b" \t\r\n":
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] not in b"\r\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos] not in b" \t\r\n":
            pos += 1
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    if fields[0] != b"P6":
        raise DomainError(f"not a binary PPM file: magic {fields[0]!r}")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval == 255:
        raw = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=pos)
    elif maxval == 65535:
        raw = np.frombuffer(data, dtype=">u2", count=w * h * 3, offset=pos)
    else:
        raise DomainError(f"unsupported maxval {maxval}")
    return raw.reshape(h, w, 3).astype(np.float64) / maxval
