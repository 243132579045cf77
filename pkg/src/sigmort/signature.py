"""Truncated path signatures of piecewise-linear paths.

Coefficients are stored densely in graded lexicographic order with the empty
multi-index first, i.e. ``(), (1,), ..., (d,), (1, 1), (1, 2), ...``.
"""

from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np

from sigmort.errors import ShapeError, SizeError
from sigmort.kernels import signature as _k

ORDERING_VERSION = 1
_MAX_LENGTH = 2**31 - 1


def sig_length(d: int, m: int) -> int:
    """Number of coefficients of a depth-``m`` signature in ``d`` dimensions."""
    if d < 1 or m < 0:
        raise ValueError(f"need d >= 1 and m >= 0, got d={d}, m={m}")
    n = m + 1 if d == 1 else (d ** (m + 1) - 1) // (d - 1)
    if n > _MAX_LENGTH:
        raise SizeError(f"signature of d={d}, m={m} has {n} coefficients")
    return n


def multi_indices(d: int, m: int) -> list:
    """All multi-indices up to length ``m`` (1-based letters) in storage order."""
    out = []
    for k in range(m + 1):
        out.extend(product(range(1, d + 1), repeat=k))
    return out


def index_of(word: Sequence[int], d: int) -> int:
    """Flat position of a 1-based multi-index."""
    k = len(word)
    pos = 0
    for i in word:
        if not 1 <= i <= d:
            raise ShapeError(f"letter {i} outside 1..{d}")
        pos = pos * d + (i - 1)
    return sig_length(d, k - 1) + pos if k else 0


@dataclass(frozen=True)
class TruncatedSignature:
    d: int
    m: int
    coefficients: np.ndarray

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=np.float64)
        if coef.shape != (sig_length(self.d, self.m),):
            raise ShapeError(
                f"expected {sig_length(self.d, self.m)} coefficients for d={self.d}, "
                f"m={self.m}, got shape {coef.shape}"
            )
        coef.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)

    def __getitem__(self, word):
        if isinstance(word, int):
            word = (word,)
        return self.coefficients[index_of(tuple(word), self.d)]

    def level(self, k: int) -> np.ndarray:
        """Order-``k`` coefficients as a ``(d,)*k`` tensor."""
        lo = sig_length(self.d, k - 1) if k else 0
        return self.coefficients[lo:lo + self.d**k].reshape((self.d,) * k)

    def to_array(self) -> np.ndarray:
        """Flat array with a ``(d, m, ordering version)`` header."""
        return np.concatenate([[self.d, self.m, ORDERING_VERSION], self.coefficients])

    @classmethod
    def from_array(cls, arr) -> "TruncatedSignature":
        arr = np.asarray(arr, dtype=np.float64)
        d, m, version = (int(v) for v in arr[:3])
        if version != ORDERING_VERSION:
            raise ShapeError(f"unsupported ordering version {version}")
        return cls(d, m, arr[3:])


@dataclass(frozen=True)
class AugmentedPath:
    points: np.ndarray
    source_length: int

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 2:
            raise ShapeError(f"path needs shape (N >= 2, d), got {pts.shape}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def d(self) -> int:
        return self.points.shape[1]


def augment_path(series) -> AugmentedPath:
    """Basepoint, time and lead-lag embedding of a scalar series.

    For ``f_1..f_n`` the path is ``0, (f1, f1), (f2, f1), (f2, f2), ...,
    (fn, fn)`` in the (lead, lag) plane, prefixed by a uniform time coordinate
    over all ``2n`` points.
    """
    f = np.asarray(series, dtype=np.float64).ravel()
    n = f.size
    if n < 2:
        raise ShapeError(f"series needs at least 2 observations, got {n}")
    npts = 2 * n
    pts = np.zeros((npts, 3))
    pts[:, 0] = np.arange(npts) / (npts - 1)
    pts[1::2, 1] = f
    pts[1::2, 2] = f
    pts[2::2, 1] = f[1:]
    pts[2::2, 2] = f[:-1]
    return AugmentedPath(pts, n)


def segment_signature(increment, m: int) -> TruncatedSignature:
    """Truncated tensor exponential of a single linear segment."""
    delta = np.atleast_1d(np.asarray(increment, dtype=np.float64))
    sig_length(delta.size, m)
    return TruncatedSignature(delta.size, m, _k.exp_batch(delta[None, :], m)[0])


def chen_concat(a: TruncatedSignature, b: TruncatedSignature) -> TruncatedSignature:
    """Signature of the concatenated path (truncated tensor product)."""
    if a.d != b.d or a.m != b.m:
        raise ShapeError(f"cannot concatenate (d={a.d}, m={a.m}) with (d={b.d}, m={b.m})")
    out = _k.chen_batch(a.coefficients[None, :], b.coefficients[None, :], a.d, a.m)
    return TruncatedSignature(a.d, a.m, out[0])


def _points(path) -> np.ndarray:
    if isinstance(path, AugmentedPath):
        return path.points
    pts = np.asarray(path, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ShapeError(f"path needs shape (N >= 2, d), got {pts.shape}")
    return pts


def path_signature(path, m: int) -> TruncatedSignature:
    """Signature of a piecewise-linear path via Chen's identity."""
    pts = _points(path)
    sig_length(pts.shape[1], m)
    return TruncatedSignature(pts.shape[1], m, _k.path_signature_batch(pts[None], m)[0])


def batch_signatures(paths: np.ndarray, m: int) -> np.ndarray:
    """Signatures of equally-shaped paths stacked as ``(B, N, d)``; returns ``(B, L)``."""
    paths = np.asarray(paths, dtype=np.float64)
    if paths.ndim != 3 or paths.shape[1] < 2:
        raise ShapeError(f"paths need shape (B, N >= 2, d), got {paths.shape}")
    sig_length(paths.shape[2], m)
    return _k.path_signature_batch(paths, m)


def oracle_signature(path, m: int, steps: int = 100_000) -> TruncatedSignature:
    """Reference signature from nested quadrature of the iterated integrals.

    Slow and approximate; meant for checking :func:`path_signature`.
    """
    pts = _points(path)
    return TruncatedSignature(pts.shape[1], m, _k.oracle_signature(pts, m, steps))
