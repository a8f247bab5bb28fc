"""Flat binary layouts for network parameters and named-blob containers.

MLP format ("FNET"): magic | u16 version | u16 n_layers |
per layer (u32 in, u32 out, u8 act code) | all floats as little-endian f8,
layer by layer: W row-major then b.

Container format ("FEMC"): magic | u16 version | u32 count |
per entry: u16 name length, name utf-8, u64 payload length, payload bytes.
Used by checkpoints to bundle parameter blobs, rng state and metadata.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import SerializationError
from .numeric import ACTIVATIONS, Layer, Mlp

MLP_MAGIC = b"FNET"
MLP_VERSION = 1
CONTAINER_MAGIC = b"FEMC"
CONTAINER_VERSION = 1

_ACT_CODE = {name: i for i, name in enumerate(ACTIVATIONS)}
_CODE_ACT = {i: name for name, i in _ACT_CODE.items()}


def mlp_to_bytes(mlp: Mlp) -> bytes:
    head = [MLP_MAGIC, struct.pack("<HH", MLP_VERSION, len(mlp.layers))]
    body = []
    for layer in mlp.layers:
        out_d, in_d = layer.w.shape
        head.append(struct.pack("<IIB", in_d, out_d, _ACT_CODE[layer.act]))
        body.append(np.ascontiguousarray(layer.w, dtype="<f8").tobytes())
        body.append(np.ascontiguousarray(layer.b, dtype="<f8").tobytes())
    return b"".join(head) + b"".join(body)


def mlp_from_bytes(buf: bytes) -> Mlp:
    if len(buf) < 8 or buf[:4] != MLP_MAGIC:
        raise SerializationError("bad parameter blob: missing FNET magic")
    version, n_layers = struct.unpack_from("<HH", buf, 4)
    if version != MLP_VERSION:
        raise SerializationError(f"unsupported FNET version {version}")
    off = 8
    specs = []
    for _ in range(n_layers):
        if off + 9 > len(buf):
            raise SerializationError("truncated FNET layer table")
        in_d, out_d, code = struct.unpack_from("<IIB", buf, off)
        off += 9
        if code not in _CODE_ACT:
            raise SerializationError(f"unknown activation code {code}")
        specs.append((in_d, out_d, _CODE_ACT[code]))

    layers = []
    for in_d, out_d, act in specs:
        n_w, n_b = in_d * out_d, out_d
        need = (n_w + n_b) * 8
        if off + need > len(buf):
            raise SerializationError("truncated FNET payload")
        w = np.frombuffer(buf, dtype="<f8", count=n_w, offset=off).reshape(out_d, in_d).copy()
        off += n_w * 8
        b = np.frombuffer(buf, dtype="<f8", count=n_b, offset=off).copy()
        off += n_b * 8
        layers.append(Layer(w, b, act))
    if off != len(buf):
        raise SerializationError("trailing bytes after FNET payload")
    return Mlp(layers)


def save_mlp(path, mlp: Mlp):
    with open(path, "wb") as fh:
        fh.write(mlp_to_bytes(mlp))


def load_mlp(path) -> Mlp:
    with open(path, "rb") as fh:
        return mlp_from_bytes(fh.read())


def blobs_to_bytes(blobs: dict) -> bytes:
    parts = [CONTAINER_MAGIC, struct.pack("<HI", CONTAINER_VERSION, len(blobs))]
    for name, payload in blobs.items():
        enc = name.encode("utf-8")
        parts.append(struct.pack("<H", len(enc)))
        parts.append(enc)
        parts.append(struct.pack("<Q", len(payload)))
        parts.append(payload)
    return b"".join(parts)


def blobs_from_bytes(buf: bytes) -> dict:
    if len(buf) < 10 or buf[:4] != CONTAINER_MAGIC:
        raise SerializationError("bad container: missing FEMC magic")
    version, count = struct.unpack_from("<HI", buf, 4)
    if version != CONTAINER_VERSION:
        raise SerializationError(f"unsupported container version {version}")
    off = 10
    out = {}
    for _ in range(count):
        if off + 2 > len(buf):
            raise SerializationError("truncated container entry header")
        (name_len,) = struct.unpack_from("<H", buf, off)
        off += 2
        name = buf[off:off + name_len].decode("utf-8")
        off += name_len
        if off + 8 > len(buf):
            raise SerializationError("truncated container entry size")
        (size,) = struct.unpack_from("<Q", buf, off)
        off += 8
        if off + size > len(buf):
            raise SerializationError(f"truncated container payload for {name!r}")
        if name in out:
            raise SerializationError(f"duplicate container entry {name!r}")
        out[name] = bytes(buf[off:off + size])
        off += size
    if off != len(buf):
        raise SerializationError("trailing bytes after container payload")
    return out


def save_blobs(path, blobs: dict):
    with open(path, "wb") as fh:
        fh.write(blobs_to_bytes(blobs))


def load_blobs(path) -> dict:
    with open(path, "rb") as fh:
        return blobs_from_bytes(fh.read())
