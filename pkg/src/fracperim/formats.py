"""Binary file formats (FPGR grids, FPKT kernel tables) and FNV-1a hashing.

All layouts are little-endian.

FPGR::

    b"FPGR" | u32 version=1 | u8 dtype (0 binary-as-u8, 1 f64) | u8 ndim
    | ndim x u64 extents | f64 cell_size | ndim x f64 origin | payload (C order)

FPKT::

    b"FPKT" | u32 version=1 | u32 dim | f64 sigma | f64 cell_size
    | u32 near_field_radius_cells | f64 quadrature_tol | f64 max_offset
    | u64 count | count x (dim x i32 offset, f64 weight, u8 accuracy)
"""

import struct

import numpy as np

from .errors import FormatError

GRID_MAGIC = b"FPGR"
TABLE_MAGIC = b"FPKT"
VERSION = 1

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def fingerprint(data: bytes) -> str:
    return f"{fnv1a64(data):016x}"


# -- grids ------------------------------------------------------------------

def grid_to_bytes(grid) -> bytes:
    """Serialize an ``IndicatorGrid`` or ``DensityGrid``."""
    from .geometry import IndicatorGrid

    dom = grid.domain
    binary = isinstance(grid, IndicatorGrid)
    head = GRID_MAGIC + struct.pack("<IBB", VERSION, 0 if binary else 1, dom.dim)
    head += struct.pack(f"<{dom.dim}Q", *dom.extents)
    head += struct.pack("<d", dom.cell_size)
    head += struct.pack(f"<{dom.dim}d", *dom.origin)
    if binary:
        payload = np.ascontiguousarray(grid.cells, dtype=np.uint8).tobytes()
    else:
        payload = np.ascontiguousarray(grid.cells, dtype="<f8").tobytes()
    return head + payload


def grid_from_bytes(data: bytes):
    from .geometry import DensityGrid, GridDomain, IndicatorGrid

    if data[:4] != GRID_MAGIC:
        raise FormatError("not an FPGR file (bad magic)")
    if len(data) < 10:
        raise FormatError("truncated FPGR header")
    version, dtype, ndim = struct.unpack_from("<IBB", data, 4)
    if version != VERSION:
        raise FormatError(f"unsupported FPGR version {version}")
    if dtype not in (0, 1):
        raise FormatError(f"unknown FPGR dtype {dtype}")
    pos = 10
    try:
        extents = struct.unpack_from(f"<{ndim}Q", data, pos)
        pos += 8 * ndim
        (cell_size,) = struct.unpack_from("<d", data, pos)
        pos += 8
        origin = struct.unpack_from(f"<{ndim}d", data, pos)
        pos += 8 * ndim
    except struct.error as exc:
        raise FormatError("truncated FPGR header") from exc
    domain = GridDomain(ndim, tuple(int(e) for e in extents), cell_size, origin)
    count = int(np.prod(extents))
    itemsize = 1 if dtype == 0 else 8
    if len(data) - pos != count * itemsize:
        raise FormatError(
            f"FPGR payload has {len(data) - pos} bytes, expected {count * itemsize}")
    if dtype == 0:
        cells = np.frombuffer(data, dtype=np.uint8, offset=pos).reshape(extents)
        if cells.max(initial=0) > 1:
            raise FormatError("binary FPGR payload holds values other than 0/1")
        return IndicatorGrid(domain, cells.astype(bool))
    cells = np.frombuffer(data, dtype="<f8", offset=pos).reshape(extents)
    return DensityGrid(domain, cells.astype(np.float64))


def write_grid(path, grid):
    with open(path, "wb") as fh:
        fh.write(grid_to_bytes(grid))


def read_grid(path):
    with open(path, "rb") as fh:
        return grid_from_bytes(fh.read())


# -- kernel tables ------------------------------------------------------------

def table_to_bytes(table) -> bytes:
    p = table.params
    head = TABLE_MAGIC + struct.pack(
        "<IIddIdd", VERSION, p.dim, p.sigma, p.cell_size,
        p.near_field_radius_cells, p.quadrature_tol, table.max_offset)
    head += struct.pack("<Q", len(table.weights))
    rec = np.dtype([("o", "<i4", (p.dim,)), ("w", "<f8"), ("a", "u1")])
    arr = np.empty(len(table.weights), dtype=rec)
    arr["o"] = table.offsets
    arr["w"] = table.weights
    arr["a"] = table.accuracy
    return head + arr.tobytes()


def table_from_bytes(data: bytes):
    from .kernels import KernelParams, KernelTable

    if data[:4] != TABLE_MAGIC:
        raise FormatError("not an FPKT file (bad magic)")
    try:
        version, dim, sigma, h, nf, tol, max_offset = struct.unpack_from("<IIddIdd", data, 4)
        (count,) = struct.unpack_from("<Q", data, 48)
    except struct.error as exc:
        raise FormatError("truncated FPKT header") from exc
    if version != VERSION:
        raise FormatError(f"unsupported FPKT version {version}")
    rec = np.dtype([("o", "<i4", (dim,)), ("w", "<f8"), ("a", "u1")])
    if len(data) - 56 != count * rec.itemsize:
        raise FormatError("FPKT record block has the wrong size")
    arr = np.frombuffer(data, dtype=rec, offset=56)
    params = KernelParams(dim, sigma, h, nf, tol)
    return KernelTable(params, max_offset, arr["o"].astype(np.int64),
                       arr["w"].astype(np.float64), arr["a"].astype(np.uint8))
