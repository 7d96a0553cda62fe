"""Versioned, length-prefixed field encoding.

Every serialized object is a 2-byte big-endian version tag followed by its
fields in declaration order, each prefixed by a 4-byte big-endian length.
"""

import struct

from .errors import SerializationError

_LEN = struct.Struct(">I")
_VERSION = struct.Struct(">H")


def encode_fields(version, fields):
    out = [_VERSION.pack(version)]
    for f in fields:
        f = bytes(f)
        out.append(_LEN.pack(len(f)))
        out.append(f)
    return b"".join(out)


def decode_fields(data, version, count=None):
    """Split ``data`` into its fields, checking the version tag.

    If ``count`` is given the number of fields must match exactly.
    """
    data = bytes(data)
    if len(data) < 2:
        raise SerializationError("truncated version tag")
    (got,) = _VERSION.unpack_from(data, 0)
    if got != version:
        raise SerializationError(f"unsupported version {got:#06x}, expected {version:#06x}")
    pos = 2
    fields = []
    while pos < len(data):
        if pos + 4 > len(data):
            raise SerializationError("truncated length prefix")
        (n,) = _LEN.unpack_from(data, pos)
        pos += 4
        if pos + n > len(data):
            raise SerializationError("field overruns buffer")
        fields.append(data[pos:pos + n])
        pos += n
    if count is not None and len(fields) != count:
        raise SerializationError(f"expected {count} fields, got {len(fields)}")
    return fields


def encode_uint(value, width=8):
    return int(value).to_bytes(width, "big")


def decode_uint(data, width=8):
    if len(data) != width:
        raise SerializationError(f"expected {width}-byte integer, got {len(data)}")
    return int.from_bytes(data, "big")


def encode_text(s):
    return s.encode("utf-8")


def decode_text(b):
    try:
        return bytes(b).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise SerializationError("invalid utf-8 text") from exc


def encode_list(items, version=1):
    """Nested list of byte strings, itself versioned."""
    return encode_fields(version, items)


def decode_list(data, version=1):
    return decode_fields(data, version)
