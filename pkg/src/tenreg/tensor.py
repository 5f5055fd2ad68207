"""Dense tensor arithmetic: contraction, matricization, outer products,
Tucker-style projections, and the TNS1 binary file format.

Tensors are plain numpy ``float64`` arrays in C order, i.e. the flat layout
runs with the *last index fastest*.  Every constructor in this package goes
through :func:`as_tensor`, which rejects NaN/Inf and returns a read-only,
contiguous array, so downstream code may treat tensor values as immutable.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import InvalidAxes, ShapeMismatch

__all__ = [
    "as_tensor",
    "inner",
    "matricize",
    "dematricize",
    "outer3",
    "ProjectorTriple",
    "tucker_project",
    "read_tns",
    "write_tns",
]

TNS_MAGIC = b"TNS1"


def as_tensor(data, shape=None):
    """Validate and freeze a tensor value.

    Returns a C-contiguous float64 array flagged read-only.  Raises
    ``ValueError`` on non-finite entries and ``ShapeMismatch`` if `shape`
    is given and the data cannot be viewed with it.
    """
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if shape is not None:
        if arr.size != int(np.prod(shape)):
            raise ShapeMismatch(
                f"data of size {arr.size} cannot fill shape {tuple(shape)}"
            )
        arr = arr.reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor entries must be finite")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


def inner(a, b):
    """Contract `a` against the leading modes of `b`.

    The shape of `a` must be a prefix of the shape of `b`.  Equal shapes
    give the scalar ``sum(a * b)``; otherwise the result has the trailing
    shape of `b`, its entries being the full contraction over the shared
    leading indices.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    m, n = a.ndim, b.ndim
    if m > n or a.shape != b.shape[:m]:
        raise ShapeMismatch(f"shape {a.shape} is not a prefix of {b.shape}")
    out = np.tensordot(a, b, axes=(tuple(range(m)), tuple(range(m))))
    if m == n:
        return float(out)
    return out


def matricize(a, modes):
    """Unfold `a` into a matrix with the given modes as rows.

    Rows are indexed by the `modes` subset (in the order given), columns by
    the remaining axes in increasing order; both multi-indices are flattened
    last-index-fastest.  ``matricize(a, [k])`` is the mode-k unfolding whose
    columns are the mode-k fibers.
    """
    a = np.asarray(a, dtype=np.float64)
    modes = list(modes)
    if not modes:
        raise InvalidAxes("modes must be non-empty")
    if len(set(modes)) != len(modes):
        raise InvalidAxes(f"duplicate axes in {modes}")
    if any(k < 0 or k >= a.ndim for k in modes):
        raise InvalidAxes(f"axes {modes} out of range for order-{a.ndim} tensor")
    if len(modes) >= a.ndim:
        raise InvalidAxes("modes must be a proper subset of the axes")
    rest = [k for k in range(a.ndim) if k not in modes]
    rows = int(np.prod([a.shape[k] for k in modes]))
    return np.transpose(a, modes + rest).reshape(rows, -1)


def dematricize(mat, shape, modes):
    """Inverse of :func:`matricize` for the given full `shape`."""
    mat = np.asarray(mat, dtype=np.float64)
    modes = list(modes)
    rest = [k for k in range(len(shape)) if k not in modes]
    inter = [shape[k] for k in modes] + [shape[k] for k in rest]
    inv = np.argsort(modes + rest)
    return np.transpose(mat.reshape(inter), inv)


def outer3(u, v, w):
    """Rank-one order-3 tensor ``u x v x w``."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    return np.einsum("i,j,k->ijk", u, v, w)


def _mode_multiply(a, mat, k):
    """Apply a matrix to mode k of `a`."""
    return np.moveaxis(np.tensordot(mat, a, axes=(1, k)), 0, k)


class ProjectorTriple:
    """Three orthogonal projectors, one per mode, stored as basis factors.

    Each projector ``P_k = U_k @ U_k.T`` is kept through its orthonormal
    column factor ``U_k`` so ranks are explicit and applications cost
    ``d * rank`` instead of ``d**2``.
    """

    def __init__(self, factors, tol=1e-10):
        if len(factors) != 3:
            raise ShapeMismatch("expected exactly three factors")
        self.factors = []
        for u in factors:
            u = np.asarray(u, dtype=np.float64)
            if u.ndim != 2:
                raise ShapeMismatch("factors must be matrices")
            gram = u.T @ u
            if not np.allclose(gram, np.eye(u.shape[1]), atol=tol):
                raise ValueError("factor columns must be orthonormal")
            self.factors.append(u)

    @property
    def ranks(self):
        return tuple(u.shape[1] for u in self.factors)

    @property
    def dims(self):
        return tuple(u.shape[0] for u in self.factors)

    @classmethod
    def random(cls, dims, ranks, rng):
        """Draw Haar-random orthonormal factors of the given ranks."""
        factors = []
        for d, r in zip(dims, ranks):
            q, _ = np.linalg.qr(rng.standard_normal((d, r)))
            factors.append(q)
        return cls(factors)

    def apply_mode(self, a, k, perp=False):
        """Apply ``P_k`` (or ``I - P_k``) to mode k of `a`."""
        u = self.factors[k]
        proj = _mode_multiply(a, u.T, k)
        proj = _mode_multiply(proj, u, k)
        return a - proj if perp else proj

    def apply_pattern(self, a, perp_mask):
        """Apply one sign-pattern term, e.g. ``P1 x P2perp x P3``."""
        out = a
        for k, perp in enumerate(perp_mask):
            out = self.apply_mode(out, k, perp=perp)
        return out


# Sign patterns making up the two complementary Tucker projections: the
# low-perp half (at most one complemented mode) and the rest.
_Q_PATTERNS = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)]
_QPERP_PATTERNS = [(1, 1, 1), (1, 1, 0), (0, 1, 1), (1, 0, 1)]


def tucker_project(a, triple, pattern="full"):
    """Project `a` using a :class:`ProjectorTriple`.

    ``pattern="full"`` applies ``P1 x P2 x P3`` mode-wise.  ``"q"`` applies
    the four-term sum over sign patterns with at most one complemented mode,
    ``"qperp"`` the complementary four-term sum; the two are orthogonal
    projections summing to the identity.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 3:
        raise ShapeMismatch("tucker_project expects an order-3 tensor")
    if a.shape != triple.dims:
        raise ShapeMismatch(f"tensor shape {a.shape} != projector dims {triple.dims}")
    if pattern == "full":
        return triple.apply_pattern(a, (0, 0, 0))
    if pattern == "q":
        masks = _Q_PATTERNS
    elif pattern == "qperp":
        masks = _QPERP_PATTERNS
    else:
        raise ValueError(f"unknown pattern {pattern!r}")
    out = np.zeros_like(a)
    for mask in masks:
        out += triple.apply_pattern(a, mask)
    return out


def write_tns(path, a):
    """Write a tensor in the TNS1 binary format.

    Layout: magic ``b"TNS1"``, u32 order N, N little-endian u64 extents,
    then the entries as little-endian float64 in C order (last index
    fastest).
    """
    a = np.ascontiguousarray(a, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(TNS_MAGIC)
        fh.write(struct.pack("<I", a.ndim))
        fh.write(struct.pack(f"<{a.ndim}Q", *a.shape))
        fh.write(a.tobytes(order="C"))


def read_tns(path):
    """Read a TNS1 file, rejecting bad magic or truncated payloads."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != TNS_MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {TNS_MAGIC!r}")
        (order,) = struct.unpack("<I", fh.read(4))
        shape = struct.unpack(f"<{order}Q", fh.read(8 * order))
        payload = fh.read()
    expected = int(np.prod(shape)) * 8
    if len(payload) != expected:
        raise ValueError(f"payload of {len(payload)} bytes, expected {expected}")
    data = np.frombuffer(payload, dtype="<f8").reshape(shape)
    return as_tensor(data)
