"""
Zero-tail subspace: operators between pilot preimages, FD pilots and TD images.

The occupied-carrier columns W1 of the unitary IDFT matrix are split into head
rows and the last ``t_zero`` rows W21. The right singular vectors of W21 that
its singular values leave unexcited (V0) map any preimage x to an FD pilot
y = V0 x whose time-domain image A x = W1 V0 x ends in ``t_zero`` zeros.

Small subspaces keep A and its pseudo-inverse as dense matrices; large ones
apply A in factored form (V0, scatter onto the carriers, inverse FFT).
"""

from __future__ import annotations

import logging
import struct
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import scipy.fft
import scipy.linalg
from pydantic import BaseModel, ConfigDict, Field

from src.errors import (
    CacheFormatError,
    DegenerateNullspace,
    DimensionMismatch,
    InvalidPlacement,
)
from src.state import SubspaceDims
from src.tools.files import atomic_write_bytes

logger = logging.getLogger(__name__)

DEFAULT_DENSE_BUDGET = 2**6 * 2**6
# a null direction may leak at most this much into the tail rows
NULL_RESIDUAL_TOL = 1e-10

CACHE_MAGIC = b"ZTSS"
CACHE_VERSION = 1
_CACHE_HEADER = struct.Struct("<4sIIIIdII")
_PAYLOAD_DTYPES = {8: np.dtype("<c8"), 16: np.dtype("<c16")}


class ZeroTailSubspace(BaseModel):
    """Immutable operator bundle; safe to share between readers."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    dims: SubspaceDims
    placement: np.ndarray = Field(description="Occupied FFT bins, in preimage column order")
    v0: np.ndarray = Field(description="n_sc x (n_sc - t_zero) nullspace basis")
    a_op: Optional[np.ndarray] = Field(default=None, description="Dense A, if within budget")
    a_pinv: Optional[np.ndarray] = Field(default=None, description="Dense pinv(A), if within budget")
    singular_floor: float
    singular_values: np.ndarray = Field(default_factory=lambda: np.empty(0))
    workers: int = 1

    @property
    def preimage_dim(self) -> int:
        return self.dims.preimage_dim

    @property
    def is_dense(self) -> bool:
        return self.a_op is not None

    def tail_slice(self) -> slice:
        return slice(self.dims.head_len, self.dims.n_fft)


class IfftPartition(BaseModel):
    """Every block of the IDFT partition and the split of V; for validation only."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    w: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    w11: np.ndarray
    w12: np.ndarray
    w21: np.ndarray
    w22: np.ndarray
    v1: np.ndarray
    v0: np.ndarray
    singular_values: np.ndarray


# ---------------------------------------------------------------------------
# Placement and IDFT blocks
# ---------------------------------------------------------------------------

def contiguous_centered(n_fft: int, n_sc: int) -> np.ndarray:
    """Contiguous block around DC, wrapped onto the FFT grid (DC included).

    Bins run from -n_sc//2 to n_sc - n_sc//2 - 1, negative ones mapped to
    n_fft + k as in standard OFDM resource mapping.
    """
    k = np.arange(-(n_sc // 2), n_sc - n_sc // 2)
    return np.mod(k, n_fft)


def validate_placement(dims: SubspaceDims, placement: Sequence[int]) -> np.ndarray:
    idx = np.asarray(placement)
    if idx.ndim != 1 or idx.size != dims.n_sc:
        raise InvalidPlacement(
            f"carrier placement needs exactly {dims.n_sc} indices, got {idx.size}"
        )
    if not np.issubdtype(idx.dtype, np.integer):
        if not np.all(np.mod(idx, 1) == 0):
            raise InvalidPlacement("carrier placement indices must be integers")
    idx = idx.astype(np.int64)
    if idx.min() < 0 or idx.max() >= dims.n_fft:
        raise InvalidPlacement(f"carrier placement indices must lie in [0, {dims.n_fft})")
    if np.unique(idx).size != idx.size:
        raise InvalidPlacement("carrier placement has duplicate indices")
    return idx


def _idft_block(rows: np.ndarray, cols: np.ndarray, n_fft: int) -> np.ndarray:
    # integer phase modulo n_fft keeps the exponent exact at full scale
    phase = np.mod(np.outer(rows, cols), n_fft)
    return np.exp(2j * np.pi * phase / n_fft) / np.sqrt(n_fft)


def _tail_rows(dims: SubspaceDims) -> np.ndarray:
    return np.arange(dims.head_len, dims.n_fft)


def _default_floor(dims: SubspaceDims, s_max: float) -> float:
    return max(dims.t_zero, dims.n_sc) * np.finfo(float).eps * s_max


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def build_subspace(
    dims: SubspaceDims,
    carrier_placement: Optional[Sequence[int]] = None,
    *,
    singular_floor: Optional[float] = None,
    dense_budget: int = DEFAULT_DENSE_BUDGET,
    workers: int = 1,
) -> ZeroTailSubspace:
    """Build V0, and A / pinv(A) when they fit the dense budget.

    Raises:
        InvalidPlacement: duplicate, missing or out-of-range carrier indices.
        DegenerateNullspace: fewer than n_sc - t_zero directions leave a tail
            residual below the singular floor.
    """
    if carrier_placement is None:
        placement = contiguous_centered(dims.n_fft, dims.n_sc)
    else:
        placement = validate_placement(dims, carrier_placement)

    m = dims.preimage_dim
    if dims.t_zero == 0:
        singular_values = np.empty(0)
        floor = singular_floor if singular_floor is not None else _default_floor(dims, 1.0)
        v0 = np.eye(dims.n_sc, dtype=complex)
    else:
        w21 = _idft_block(_tail_rows(dims), placement, dims.n_fft)
        _, singular_values, vh = scipy.linalg.svd(w21, full_matrices=True)
        s_max = float(singular_values[0])
        floor = singular_floor if singular_floor is not None else _default_floor(dims, s_max)
        v0 = vh[dims.t_zero:].conj().T

        # Directions past the T rows have no singular value of their own; the
        # measured residual |W21 v| stands in for it.
        residual = np.linalg.norm(w21 @ v0, axis=0)
        found = int(np.count_nonzero(residual <= max(floor, NULL_RESIDUAL_TOL * s_max)))
        gap = (float(singular_values[-1]), float(residual.max(initial=0.0)))
        if found < m:
            raise DegenerateNullspace(found=found, required=m, gap=gap)
        rank_deficit = int(np.count_nonzero(singular_values < floor))
        if rank_deficit:
            logger.info(
                "W21 is rank deficient by %d; only the trailing %d directions are used",
                rank_deficit, m,
            )
        logger.info(
            "Zero-tail subspace %s: smallest kept singular value %.3e, largest null residual %.3e",
            dims.model_dump(), gap[0], gap[1],
        )

    a_op = a_pinv = None
    if dims.n_fft * m <= dense_budget:
        grid = np.zeros((dims.n_fft, m), dtype=complex)
        grid[placement] = v0
        a_op = scipy.fft.ifft(grid, axis=0, norm="ortho", workers=workers)
        a_pinv = scipy.linalg.pinv(a_op)
    logger.debug("Operator A kept %s", "dense" if a_op is not None else "factored")

    return ZeroTailSubspace(
        dims=dims,
        placement=_frozen(placement),
        v0=_frozen(v0),
        a_op=_frozen(a_op),
        a_pinv=_frozen(a_pinv),
        singular_floor=float(floor),
        singular_values=_frozen(singular_values),
        workers=workers,
    )


def ifft_partition(dims: SubspaceDims, carrier_placement: Optional[Sequence[int]] = None) -> IfftPartition:
    """All W / V blocks at small dims; only W21 and V0 feed the optimizer."""
    if carrier_placement is None:
        placement = contiguous_centered(dims.n_fft, dims.n_sc)
    else:
        placement = validate_placement(dims, carrier_placement)
    unused = np.setdiff1d(np.arange(dims.n_fft), placement)
    rows = np.arange(dims.n_fft)
    w = _idft_block(rows, rows, dims.n_fft)
    w1, w2 = w[:, placement], w[:, unused]
    head = dims.head_len
    w21 = w1[head:]
    if dims.t_zero == 0:
        s = np.empty(0)
        v = np.eye(dims.n_sc, dtype=complex)
    else:
        _, s, vh = scipy.linalg.svd(w21, full_matrices=True)
        v = vh.conj().T
    return IfftPartition(
        w=w, w1=w1, w2=w2,
        w11=w1[:head], w12=w2[:head], w21=w21, w22=w2[head:],
        v1=v[:, : dims.t_zero], v0=v[:, dims.t_zero:],
        singular_values=s,
    )


def _frozen(a: Optional[np.ndarray]) -> Optional[np.ndarray]:
    if a is None:
        return None
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# Domain mappings
# ---------------------------------------------------------------------------

def _check_vector(what: str, v, length: int) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    if v.ndim not in (1, 2) or v.shape[0] != length:
        raise DimensionMismatch(what, (length,), v.shape)
    return v


def to_frequency_domain(sub: ZeroTailSubspace, x) -> np.ndarray:
    """FD pilot on the occupied carriers: y = V0 x."""
    x = _check_vector("preimage", x, sub.preimage_dim)
    return sub.v0 @ x


def to_time_domain(sub: ZeroTailSubspace, x) -> np.ndarray:
    """TD image A x (length n_fft); columns of a 2-D input are mapped independently."""
    x = _check_vector("preimage", x, sub.preimage_dim)
    if sub.a_op is not None:
        return sub.a_op @ x
    grid = np.zeros((sub.dims.n_fft,) + x.shape[1:], dtype=complex)
    grid[sub.placement] = sub.v0 @ x
    return scipy.fft.ifft(grid, axis=0, norm="ortho", workers=sub.workers)


def adjoint_apply(sub: ZeroTailSubspace, y_td) -> np.ndarray:
    """A^H y: FFT, gather the occupied carriers, project with V0^H."""
    y_td = _check_vector("TD vector", y_td, sub.dims.n_fft)
    if sub.a_op is not None:
        return sub.a_op.conj().T @ y_td
    spectrum = scipy.fft.fft(y_td, axis=0, norm="ortho", workers=sub.workers)
    return sub.v0.conj().T @ spectrum[sub.placement]


def pinv_apply(sub: ZeroTailSubspace, y_td) -> np.ndarray:
    """Minimum-norm least-squares preimage of a TD vector.

    A has orthonormal columns (unitary IDFT columns times an orthonormal V0),
    so in factored form its pseudo-inverse is exactly A^H.
    """
    y_td = _check_vector("TD vector", y_td, sub.dims.n_fft)
    if sub.a_pinv is not None:
        return sub.a_pinv @ y_td
    return adjoint_apply(sub, y_td)


def dense_operator(sub: ZeroTailSubspace) -> np.ndarray:
    """Materialize A regardless of the storage mode."""
    if sub.a_op is not None:
        return np.array(sub.a_op)
    return to_time_domain(sub, np.eye(sub.preimage_dim, dtype=complex))


# ---------------------------------------------------------------------------
# Binary cache
# ---------------------------------------------------------------------------

def save_subspace(sub: ZeroTailSubspace, path: Union[str, Path], *, dtype_width: int = 16) -> None:
    """Write the little-endian ZTSS cache (header, placement, V0, optional pinv(A))."""
    if dtype_width not in _PAYLOAD_DTYPES:
        raise ValueError(f"dtype_width must be one of {sorted(_PAYLOAD_DTYPES)}")
    dtype = _PAYLOAD_DTYPES[dtype_width]
    d = sub.dims
    has_pinv = sub.a_pinv is not None
    header = _CACHE_HEADER.pack(
        CACHE_MAGIC, CACHE_VERSION, d.n_fft, d.n_sc, d.t_zero,
        sub.singular_floor, dtype_width, int(has_pinv),
    )
    parts = [header, sub.placement.astype("<i8").tobytes(), sub.v0.astype(dtype).tobytes(order="C")]
    if has_pinv:
        parts.append(sub.a_pinv.astype(dtype).tobytes(order="C"))

    atomic_write_bytes(path, b"".join(parts))
    logger.info("Subspace cache written to %s", path)


def load_subspace(path: Union[str, Path], *, workers: int = 1) -> ZeroTailSubspace:
    raw = Path(path).read_bytes()
    if len(raw) < _CACHE_HEADER.size:
        raise CacheFormatError(f"{path}: truncated header")
    magic, version, n_fft, n_sc, t_zero, floor, width, has_pinv = _CACHE_HEADER.unpack_from(raw)
    if magic != CACHE_MAGIC:
        raise CacheFormatError(f"{path}: not a subspace cache")
    if version != CACHE_VERSION:
        raise CacheFormatError(f"{path}: cache version {version}, expected {CACHE_VERSION}")
    if width not in _PAYLOAD_DTYPES:
        raise CacheFormatError(f"{path}: unknown payload width {width}")

    dims = SubspaceDims(n_fft=n_fft, n_sc=n_sc, t_zero=t_zero)
    m = dims.preimage_dim
    dtype = _PAYLOAD_DTYPES[width]
    offset = _CACHE_HEADER.size
    expected = offset + 8 * n_sc + dtype.itemsize * n_sc * m
    if has_pinv:
        expected += dtype.itemsize * m * n_fft
    if len(raw) != expected:
        raise CacheFormatError(f"{path}: payload is {len(raw)} bytes, expected {expected}")

    placement = np.frombuffer(raw, dtype="<i8", count=n_sc, offset=offset).astype(np.int64)
    offset += 8 * n_sc
    v0 = np.frombuffer(raw, dtype=dtype, count=n_sc * m, offset=offset).reshape(n_sc, m)
    v0 = v0.astype(complex)
    offset += dtype.itemsize * n_sc * m

    a_op = a_pinv = None
    if has_pinv:
        a_pinv = np.frombuffer(raw, dtype=dtype, count=m * n_fft, offset=offset)
        a_pinv = a_pinv.reshape(m, n_fft).astype(complex)
        grid = np.zeros((n_fft, m), dtype=complex)
        grid[placement] = v0
        a_op = scipy.fft.ifft(grid, axis=0, norm="ortho", workers=workers)

    logger.info("Subspace cache loaded from %s (%s)", path, dims.model_dump())
    return ZeroTailSubspace(
        dims=dims,
        placement=_frozen(validate_placement(dims, placement)),
        v0=_frozen(v0),
        a_op=_frozen(a_op),
        a_pinv=_frozen(a_pinv),
        singular_floor=floor,
        workers=workers,
    )
