"""Binary field snapshots (AHVX format).

Layout, little-endian: magic ``b"AHVX"``, version u32, rank u32, dims
u32 x rank, spacing f64, origin f64 x rank, kind tag u32, then the f64
payload in row-major order.  Complex payloads are stored as interleaved
(re, im) pairs.
"""

import struct

import numpy as np

MAGIC = b"AHVX"
VERSION = 1

# Field-kind tags.  Bit 0x100 marks a complex payload.
KIND_REAL = 0
KIND_PHI = 0x100 | 1
KIND_PI = 0x100 | 2
KIND_LINK = 10          # + axis
KIND_LINK_RATE = 20     # + axis
KIND_PLAQUETTE = 30
KIND_DENSITY = 40
KIND_METRIC = 50        # + 4*alpha + beta
KIND_COMPLEX = 0x100

KIND_NAMES = {
    KIND_PHI: "phi", KIND_PI: "pi", KIND_PLAQUETTE: "plaquette",
    KIND_DENSITY: "density",
}


def is_complex_kind(kind):
    return bool(kind & 0x100)


def write_snapshot(path, data, spacing, origin, kind):
    """Write one field array to ``path``."""
    data = np.asarray(data)
    rank = data.ndim
    origin = np.broadcast_to(np.asarray(origin, dtype=float), (rank,))
    cplx = is_complex_kind(kind)
    if np.iscomplexobj(data) and not cplx:
        raise ValueError("complex data needs a complex kind tag")
    header = MAGIC + struct.pack("<II", VERSION, rank)
    header += struct.pack("<%dI" % rank, *data.shape)
    header += struct.pack("<d", float(spacing))
    header += struct.pack("<%dd" % rank, *origin)
    header += struct.pack("<I", kind)
    if cplx:
        payload = np.empty(data.shape + (2,), dtype="<f8")
        payload[..., 0] = data.real
        payload[..., 1] = data.imag
    else:
        payload = np.ascontiguousarray(data, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes(order="C"))


def read_snapshot(path):
    """Return (data, spacing, origin, kind) from an AHVX file."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise ValueError("%s: not an AHVX file" % path)
    version, rank = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise ValueError("unsupported AHVX version %d" % version)
    off = 12
    dims = struct.unpack_from("<%dI" % rank, raw, off)
    off += 4 * rank
    (spacing,) = struct.unpack_from("<d", raw, off)
    off += 8
    origin = struct.unpack_from("<%dd" % rank, raw, off)
    off += 8 * rank
    (kind,) = struct.unpack_from("<I", raw, off)
    off += 4
    count = int(np.prod(dims)) * (2 if is_complex_kind(kind) else 1)
    payload = np.frombuffer(raw, dtype="<f8", count=count, offset=off)
    if is_complex_kind(kind):
        payload = payload.reshape(tuple(dims) + (2,))
        data = payload[..., 0] + 1j * payload[..., 1]
    else:
        data = payload.reshape(dims).copy()
    return data, spacing, np.array(origin), kind
