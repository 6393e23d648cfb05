"""Text-header + raw little-endian float64 array container.

Layout::

    <MAGIC> <version>
    key=value
    ...
    array=<name> <dtype> <d0>x<d1>...
    end
    <concatenated array bytes>

Keys may repeat; readers get them in order. Arrays are stored as ``<f8``
(or ``<c16``) so float64 data round-trips bit-exactly.
"""

from __future__ import annotations

import numpy as np

from .errors import ParseError, UnsupportedVersion

_DTYPES = {"float64": "<f8", "complex128": "<c16"}


def dumps(magic, version, header, arrays):
    lines = [f"{magic} {version}"]
    for key, value in header:
        value = str(value)
        if "\n" in value:
            raise ValueError(f"header value for {key!r} spans lines")
        lines.append(f"{key}={value}")
    blobs = []
    for name, arr in arrays:
        arr = np.asarray(arr)
        kind = "complex128" if np.iscomplexobj(arr) else "float64"
        data = np.ascontiguousarray(arr, dtype=_DTYPES[kind])
        shape = "x".join(str(d) for d in data.shape) or "scalar"
        lines.append(f"array={name} {kind} {shape}")
        blobs.append(data.tobytes())
    lines.append("end")
    return ("\n".join(lines) + "\n").encode("utf-8") + b"".join(blobs)


def loads(raw: bytes, magic, version):
    """Return ``(header pairs, {name: array})``; raise ParseError on any defect."""
    pos = 0
    header = []
    specs = []
    lineno = 0
    while True:
        nl = raw.find(b"\n", pos)
        if nl < 0:
            raise ParseError("header not terminated by 'end'", line=lineno + 1, offset=pos)
        try:
            line = raw[pos:nl].decode("utf-8")
        except UnicodeDecodeError:
            raise ParseError("header is not UTF-8", line=lineno + 1, offset=pos) from None
        lineno += 1
        pos = nl + 1
        if lineno == 1:
            parts = line.split(" ")
            if len(parts) != 2 or parts[0] != magic:
                raise ParseError(f"bad magic, expected {magic!r}", line=1, offset=0)
            if parts[1] != str(version):
                raise UnsupportedVersion(f"unsupported {magic} version {parts[1]!r} (want {version})",
                                         line=1)
            continue
        if line == "end":
            break
        key, sep, value = line.partition("=")
        if not sep:
            raise ParseError(f"malformed header line {line!r}", line=lineno)
        if key == "array":
            bits = value.split(" ")
            if len(bits) != 3 or bits[1] not in _DTYPES:
                raise ParseError(f"malformed array descriptor {value!r}", line=lineno)
            try:
                shape = () if bits[2] == "scalar" else tuple(int(d) for d in bits[2].split("x"))
            except ValueError:
                raise ParseError(f"malformed array shape {bits[2]!r}", line=lineno) from None
            if any(d < 0 for d in shape):
                raise ParseError(f"negative array dimension in {bits[2]!r}", line=lineno)
            specs.append((bits[0], bits[1], shape))
        else:
            header.append((key, value))
    arrays = {}
    for name, kind, shape in specs:
        dt = np.dtype(_DTYPES[kind])
        nbytes = dt.itemsize * int(np.prod(shape, dtype=np.int64))
        if pos + nbytes > len(raw):
            raise ParseError(f"truncated data for array {name!r}: need {nbytes} bytes, "
                             f"have {len(raw) - pos}", offset=pos)
        arrays[name] = np.frombuffer(raw[pos:pos + nbytes], dtype=dt).reshape(shape).astype(dt.newbyteorder("="))
        pos += nbytes
    if pos != len(raw):
        raise ParseError(f"{len(raw) - pos} trailing bytes after last array", offset=pos)
    return header, arrays


def write(path, magic, version, header, arrays):
    data = dumps(magic, version, header, arrays)
    with open(path, "wb") as fh:
        fh.write(data)


def read(path, magic, version):
    with open(path, "rb") as fh:
        raw = fh.read()
    return loads(raw, magic, version)


def header_dict(header, required=()):
    out = {}
    for key, value in header:
        out.setdefault(key, value)
    for key in required:
        if key not in out:
            raise ParseError(f"missing header key {key!r}")
    return out
