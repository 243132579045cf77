"""Signature kernels on flat graded-lexicographic coefficient vectors.

Level ``k`` of a truncated signature occupies ``d**k`` consecutive entries
starting at ``offsets[k]``; inside a level the multi-index ``(i_1, ..., i_k)``
is stored at the row-major position of a ``(d,)*k`` tensor.
"""

import math

import numpy as np

from sigmort._accel import njit, select


def level_offsets(d: int, m: int) -> np.ndarray:
    offs = np.zeros(m + 2, dtype=np.int64)
    for k in range(m + 1):
        offs[k + 1] = offs[k] + d**k
    return offs


# ---------------------------------------------------------------- numba ----


@njit
def _chen_into(a, b, out, d, m, offs):
    for k in range(m + 1):
        for idx in range(offs[k], offs[k + 1]):
            out[idx] = 0.0
        for j in range(k + 1):
            sb = d ** (k - j)
            for p in range(d**j):
                ap = a[offs[j] + p]
                if ap == 0.0:
                    continue
                base = offs[k] + p * sb
                bo = offs[k - j]
                for s in range(sb):
                    out[base + s] += ap * b[bo + s]


@njit
def _exp_into(delta, out, d, m, offs):
    out[0] = 1.0
    for k in range(1, m + 1):
        prev = offs[k - 1]
        cur = offs[k]
        for p in range(d ** (k - 1)):
            v = out[prev + p] / k
            for i in range(d):
                out[cur + p * d + i] = v * delta[i]


@njit
def _chen_batch_numba(a, b, d, m, offs):
    n = a.shape[0]
    out = np.empty_like(a)
    for r in range(n):
        _chen_into(a[r], b[r], out[r], d, m, offs)
    return out


@njit
def _path_sig_batch_numba(paths, m, offs):
    nb, npts, d = paths.shape
    length = offs[m + 1]
    res = np.zeros((nb, length))
    cur = np.empty(length)
    seg = np.empty(length)
    delta = np.empty(d)
    for r in range(nb):
        cur[:] = 0.0
        cur[0] = 1.0
        for j in range(npts - 1):
            for i in range(d):
                delta[i] = paths[r, j + 1, i] - paths[r, j, i]
            _exp_into(delta, seg, d, m, offs)
            _chen_into(cur, seg, res[r], d, m, offs)
            cur[:] = res[r]
    return res


@njit
def _oracle_numba(fine, m, offs):
    npts, d = fine.shape
    length = offs[m + 1]
    old = np.zeros(length)
    new = np.zeros(length)
    old[0] = 1.0
    new[0] = 1.0
    dx = np.empty(d)
    for j in range(npts - 1):
        for i in range(d):
            dx[i] = fine[j + 1, i] - fine[j, i]
        for k in range(1, m + 1):
            po = offs[k - 1]
            co = offs[k]
            for p in range(d ** (k - 1)):
                avg = 0.5 * (old[po + p] + new[po + p])
                for i in range(d):
                    new[co + p * d + i] = old[co + p * d + i] + avg * dx[i]
        old[:] = new
    return new


# ---------------------------------------------------------------- numpy ----


def _split_levels(x, m, offs):
    return [x[:, offs[k]:offs[k + 1]] for k in range(m + 1)]


def _chen_batch_numpy(a, b, d, m, offs):
    al = _split_levels(a, m, offs)
    bl = _split_levels(b, m, offs)
    n = a.shape[0]
    out = np.empty_like(a)
    for k in range(m + 1):
        acc = np.zeros((n, d**k))
        for j in range(k + 1):
            acc += (al[j][:, :, None] * bl[k - j][:, None, :]).reshape(n, -1)
        out[:, offs[k]:offs[k + 1]] = acc
    return out


def _exp_batch_numpy(delta, m):
    n = delta.shape[0]
    levels = [np.ones((n, 1))]
    for k in range(1, m + 1):
        levels.append((levels[-1][:, :, None] * delta[:, None, :] / k).reshape(n, -1))
    return np.concatenate(levels, axis=1)


def _path_sig_batch_numpy(paths, m, offs):
    nb, npts, d = paths.shape
    cur = np.zeros((nb, int(offs[m + 1])))
    cur[:, 0] = 1.0
    for j in range(npts - 1):
        seg = _exp_batch_numpy(paths[:, j + 1] - paths[:, j], m)
        cur = _chen_batch_numpy(cur, seg, d, m, offs)
    return cur


def _oracle_numpy(fine, m, offs):
    npts, d = fine.shape
    dx = np.diff(fine, axis=0)
    out = [np.ones(1)]
    traj = np.ones((1, npts))
    for k in range(1, m + 1):
        avg = 0.5 * (traj[:, :-1] + traj[:, 1:])
        inc = avg[:, None, :] * dx.T[None, :, :]
        if k == m:
            out.append(inc.sum(axis=-1).reshape(-1))
            break
        nxt = np.zeros((traj.shape[0], d, npts))
        np.cumsum(inc, axis=-1, out=nxt[:, :, 1:])
        traj = nxt.reshape(-1, npts)
        out.append(traj[:, -1].copy())
    return np.concatenate(out)


# ------------------------------------------------------------- dispatch ----


def chen_batch(a: np.ndarray, b: np.ndarray, d: int, m: int) -> np.ndarray:
    offs = level_offsets(d, m)
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    return select(_chen_batch_numba, _chen_batch_numpy)(a, b, d, m, offs)


def exp_batch(delta: np.ndarray, m: int) -> np.ndarray:
    delta = np.ascontiguousarray(delta, dtype=np.float64)
    d = delta.shape[1]
    offs = level_offsets(d, m)
    if select(True, False):
        out = np.empty((delta.shape[0], int(offs[m + 1])))
        for r in range(delta.shape[0]):
            _exp_into(delta[r], out[r], d, m, offs)
        return out
    return _exp_batch_numpy(delta, m)


def path_signature_batch(paths: np.ndarray, m: int) -> np.ndarray:
    """Truncated signatures of a stack of piecewise-linear paths ``(B, N, d)``."""
    paths = np.ascontiguousarray(paths, dtype=np.float64)
    offs = level_offsets(paths.shape[2], m)
    return select(_path_sig_batch_numba, _path_sig_batch_numpy)(paths, m, offs)


def refine_path(points: np.ndarray, steps: int) -> np.ndarray:
    """Linearly interpolate ``points`` so the total partition has >= ``steps`` cells.

    Every original vertex is kept, so kinks fall on partition nodes.
    """
    nseg = points.shape[0] - 1
    per = max(1, math.ceil(steps / nseg))
    w = np.arange(per) / per
    body = points[:-1, None, :] + w[None, :, None] * (points[1:] - points[:-1])[:, None, :]
    return np.concatenate([body.reshape(-1, points.shape[1]), points[-1:]], axis=0)


def oracle_signature(points: np.ndarray, m: int, steps: int) -> np.ndarray:
    """Iterated-integral signature by nested trapezoidal quadrature."""
    fine = np.ascontiguousarray(refine_path(np.asarray(points, dtype=np.float64), steps))
    offs = level_offsets(fine.shape[1], m)
    if m == 0:
        return np.ones(1)
    return select(_oracle_numba, _oracle_numpy)(fine, m, offs)
