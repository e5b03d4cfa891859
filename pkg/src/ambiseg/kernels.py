"""Hot numeric kernels, in numba and pure-numpy flavors.

The numba kernels are straightforward sequential loops (no ``prange``), so
both backends are run-to-run deterministic.  Distance sums accumulate in
neighbor order in every implementation, which keeps the two backends
bit-identical for everything except exp/log-based quantities.

Public names at module level are bound to the active backend (see
:mod:`ambiseg.backend`); both families stay importable through ``IMPLS``
for cross-checking and benchmarks.
"""

import numpy as np

from .backend import ACTIVE_BACKEND, NUMBA_AVAILABLE

# ---------------------------------------------------------------------------
# pure-numpy implementations
# ---------------------------------------------------------------------------

# rows per block when materializing pairwise distance blocks (~32 MB each)
_BLOCK_BYTES = 32 * 1024 * 1024


def _np_knn_all(positions, k):
    """Exact k-nearest-neighbors of every point, anchor always first.

    Returns (idx, d2) of shape (n, k).  Entry 0 of each row is the anchor
    itself at squared distance 0; the remaining k-1 entries are ordered by
    (squared distance, point index) ascending.
    """
    n = positions.shape[0]
    idx = np.empty((n, k), dtype=np.int64)
    d2 = np.empty((n, k), dtype=np.float64)
    block = max(1, _BLOCK_BYTES // (max(n, 1) * 8 * 3))
    for s in range(0, n, block):
        e = min(n, s + block)
        diff = positions[s:e, None, :] - positions[None, :, :]
        dist = (diff * diff).sum(axis=-1)
        # -inf pins the anchor to slot 0 even when duplicates of smaller
        # index sit at distance 0; stable sort keeps ties in index order
        dist[np.arange(e - s), np.arange(s, e)] = -np.inf
        order = np.argsort(dist, axis=1, kind="stable")[:, :k]
        idx[s:e] = order
        d2[s:e] = np.take_along_axis(dist, order, axis=1)
    d2[:, 0] = 0.0
    return idx, d2


def _np_nearest_index(refs, queries):
    """Index of the nearest reference point for each query (ties: smallest)."""
    m = queries.shape[0]
    out = np.empty(m, dtype=np.int64)
    block = max(1, _BLOCK_BYTES // (max(refs.shape[0], 1) * 8 * 3))
    for s in range(0, m, block):
        e = min(m, s + block)
        diff = queries[s:e, None, :] - refs[None, :, :]
        dist = (diff * diff).sum(axis=-1)
        out[s:e] = np.argmin(dist, axis=1)
    return out


def _np_fps_select(positions, target, start):
    """Greedy farthest-point selection, in pick order.

    Argmax ties break toward the smallest index; already-selected points are
    marked with -1 so coincident duplicates cannot re-select them.
    """
    n = positions.shape[0]
    selected = np.empty(target, dtype=np.int64)
    selected[0] = start
    diff = positions - positions[start]
    min_d2 = (diff * diff).sum(axis=-1)
    min_d2[start] = -1.0
    for t in range(1, target):
        nxt = int(np.argmax(min_d2))
        selected[t] = nxt
        diff = positions - positions[nxt]
        d2 = (diff * diff).sum(axis=-1)
        np.minimum(min_d2, d2, out=min_d2)
        min_d2[nxt] = -1.0
    return selected


def _np_partition_sums(nbr_d2, intra_mask):
    """Per-anchor intra counts and squared-distance sums over a neighborhood.

    Accumulates column by column so the summation order matches the scalar
    and numba paths exactly.
    """
    n, k = nbr_d2.shape
    d_plus = np.zeros(n, dtype=np.float64)
    d_minus = np.zeros(n, dtype=np.float64)
    for j in range(k):
        w = nbr_d2[:, j]
        m = intra_mask[:, j]
        d_plus += np.where(m, w, 0.0)
        d_minus += np.where(m, 0.0, w)
    intra_count = intra_mask.sum(axis=1).astype(np.int64)
    return intra_count, d_plus, d_minus


def _np_maxpool_forward(feats, nbr_idx):
    """Channelwise max over each point's neighbor features.

    Returns (pooled, argmax) where argmax holds the winning slot in the
    neighbor list (first occurrence on ties).
    """
    gathered = feats[nbr_idx]                       # (n, k, c)
    argmax = np.argmax(gathered, axis=1)            # (n, c)
    pooled = np.take_along_axis(gathered, argmax[:, None, :], axis=1)[:, 0, :]
    return pooled, argmax


def _np_maxpool_backward(d_pooled, nbr_idx, argmax, n_src):
    rows = np.take_along_axis(nbr_idx, argmax, axis=1)   # (n, c) source rows
    cols = np.broadcast_to(np.arange(d_pooled.shape[1]), rows.shape)
    out = np.zeros((n_src, d_pooled.shape[1]), dtype=np.float64)
    np.add.at(out, (rows, cols), d_pooled)
    return out


def _np_scatter_add_rows(idx, rows, n_out):
    out = np.zeros((n_out, rows.shape[1]), dtype=np.float64)
    np.add.at(out, idx, rows)
    return out


def _np_layer_loss_grad(feats, nbr_idx, intra_mask, margins, tau, eps):
    """Margin-shifted contrastive loss over one layer, with feature gradient.

    Anchors whose neighborhood is entirely intra-class are excluded from the
    mean.  Returns (loss, grad, n_ambiguous); grad accounts for every
    appearance of a point as anchor, intra neighbor, and inter neighbor.
    """
    n, dim = feats.shape
    amb = ~intra_mask.all(axis=1)
    n_amb = int(amb.sum())
    if n_amb == 0:
        return 0.0, np.zeros((n, dim), dtype=np.float64), 0

    norms = np.sqrt(np.einsum("nd,nd->n", feats, feats))
    scale = np.maximum(norms, eps)
    unit = feats / scale[:, None]
    neigh = unit[nbr_idx]                                  # (n, k, dim)
    sims = np.einsum("nd,nkd->nk", unit, neigh)
    np.clip(sims, -1.0, 1.0, out=sims)

    emb = np.where(
        intra_mask,
        np.exp((sims - margins[:, None]) / tau),
        np.exp(sims / tau),
    )
    sum_intra = np.sum(emb * intra_mask, axis=1)
    sum_inter = np.sum(emb * ~intra_mask, axis=1)
    total = sum_intra + sum_inter
    per_point = np.log(total) - np.log(sum_intra)
    loss = float(per_point[amb].sum() / n_amb)

    # d loss_i / d sim_ij, zero for unambiguous anchors
    coef = (emb / tau) * (
        1.0 / total[:, None] - intra_mask * (1.0 / sum_intra[:, None])
    )
    coef[~amb] = 0.0

    # cosine gradient; the norm term drops when the eps guard is active
    live = (norms > eps).astype(np.float64)
    anchor_term = np.einsum("nk,nkd->nd", coef, neigh)
    anchor_term -= (np.sum(coef * sims, axis=1) * live)[:, None] * unit
    grad = anchor_term / scale[:, None]

    live_nbr = live[nbr_idx]
    scale_nbr = scale[nbr_idx]
    contrib = coef[:, :, None] * (
        unit[:, None, :] - (sims * live_nbr)[:, :, None] * neigh
    ) / scale_nbr[:, :, None]
    np.add.at(grad, nbr_idx.reshape(-1), contrib.reshape(-1, dim))

    grad /= n_amb
    return loss, grad, n_amb


_NUMPY_IMPL = {
    "knn_all": _np_knn_all,
    "nearest_index": _np_nearest_index,
    "fps_select": _np_fps_select,
    "partition_sums": _np_partition_sums,
    "maxpool_forward": _np_maxpool_forward,
    "maxpool_backward": _np_maxpool_backward,
    "scatter_add_rows": _np_scatter_add_rows,
    "layer_loss_grad": _np_layer_loss_grad,
}

# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

_NUMBA_IMPL = None

if NUMBA_AVAILABLE:
    from numba import njit

    @njit(cache=True)
    def _nb_knn_all(positions, k):
        n = positions.shape[0]
        idx = np.empty((n, k), dtype=np.int64)
        d2 = np.empty((n, k), dtype=np.float64)
        m = k - 1
        best_d = np.empty(m, dtype=np.float64)
        best_i = np.empty(m, dtype=np.int64)
        for i in range(n):
            xi = positions[i, 0]
            yi = positions[i, 1]
            zi = positions[i, 2]
            count = 0
            for j in range(n):
                if j == i:
                    continue
                dx = positions[j, 0] - xi
                dy = positions[j, 1] - yi
                dz = positions[j, 2] - zi
                d = (dx * dx + dy * dy) + dz * dz
                if count < m:
                    p = count
                    while p > 0 and d < best_d[p - 1]:
                        best_d[p] = best_d[p - 1]
                        best_i[p] = best_i[p - 1]
                        p -= 1
                    best_d[p] = d
                    best_i[p] = j
                    count += 1
                elif m > 0 and d < best_d[m - 1]:
                    p = m - 1
                    while p > 0 and d < best_d[p - 1]:
                        best_d[p] = best_d[p - 1]
                        best_i[p] = best_i[p - 1]
                        p -= 1
                    best_d[p] = d
                    best_i[p] = j
            idx[i, 0] = i
            d2[i, 0] = 0.0
            for t in range(m):
                idx[i, t + 1] = best_i[t]
                d2[i, t + 1] = best_d[t]
        return idx, d2

    @njit(cache=True)
    def _nb_nearest_index(refs, queries):
        m = queries.shape[0]
        n = refs.shape[0]
        out = np.empty(m, dtype=np.int64)
        for q in range(m):
            xq = queries[q, 0]
            yq = queries[q, 1]
            zq = queries[q, 2]
            best = np.inf
            arg = 0
            for j in range(n):
                dx = refs[j, 0] - xq
                dy = refs[j, 1] - yq
                dz = refs[j, 2] - zq
                d = (dx * dx + dy * dy) + dz * dz
                if d < best:
                    best = d
                    arg = j
            out[q] = arg
        return out

    @njit(cache=True)
    def _nb_fps_select(positions, target, start):
        n = positions.shape[0]
        selected = np.empty(target, dtype=np.int64)
        selected[0] = start
        min_d2 = np.empty(n, dtype=np.float64)
        xs = positions[start, 0]
        ys = positions[start, 1]
        zs = positions[start, 2]
        for j in range(n):
            dx = positions[j, 0] - xs
            dy = positions[j, 1] - ys
            dz = positions[j, 2] - zs
            min_d2[j] = (dx * dx + dy * dy) + dz * dz
        min_d2[start] = -1.0
        for t in range(1, target):
            best = -np.inf
            nxt = 0
            for j in range(n):
                if min_d2[j] > best:
                    best = min_d2[j]
                    nxt = j
            selected[t] = nxt
            xs = positions[nxt, 0]
            ys = positions[nxt, 1]
            zs = positions[nxt, 2]
            for j in range(n):
                dx = positions[j, 0] - xs
                dy = positions[j, 1] - ys
                dz = positions[j, 2] - zs
                d = (dx * dx + dy * dy) + dz * dz
                if d < min_d2[j]:
                    min_d2[j] = d
            min_d2[nxt] = -1.0
        return selected

    @njit(cache=True)
    def _nb_partition_sums(nbr_d2, intra_mask):
        n, k = nbr_d2.shape
        intra_count = np.zeros(n, dtype=np.int64)
        d_plus = np.zeros(n, dtype=np.float64)
        d_minus = np.zeros(n, dtype=np.float64)
        for i in range(n):
            for j in range(k):
                if intra_mask[i, j]:
                    intra_count[i] += 1
                    d_plus[i] += nbr_d2[i, j]
                else:
                    d_minus[i] += nbr_d2[i, j]
        return intra_count, d_plus, d_minus

    @njit(cache=True)
    def _nb_maxpool_forward(feats, nbr_idx):
        n, k = nbr_idx.shape
        c = feats.shape[1]
        pooled = np.empty((n, c), dtype=np.float64)
        argmax = np.empty((n, c), dtype=np.int64)
        for i in range(n):
            for ch in range(c):
                best = feats[nbr_idx[i, 0], ch]
                arg = 0
                for j in range(1, k):
                    v = feats[nbr_idx[i, j], ch]
                    if v > best:
                        best = v
                        arg = j
                pooled[i, ch] = best
                argmax[i, ch] = arg
        return pooled, argmax

    @njit(cache=True)
    def _nb_maxpool_backward(d_pooled, nbr_idx, argmax, n_src):
        n, c = d_pooled.shape
        out = np.zeros((n_src, c), dtype=np.float64)
        for i in range(n):
            for ch in range(c):
                out[nbr_idx[i, argmax[i, ch]], ch] += d_pooled[i, ch]
        return out

    @njit(cache=True)
    def _nb_scatter_add_rows(idx, rows, n_out):
        m, c = rows.shape
        out = np.zeros((n_out, c), dtype=np.float64)
        for i in range(m):
            t = idx[i]
            for ch in range(c):
                out[t, ch] += rows[i, ch]
        return out

    @njit(cache=True)
    def _nb_layer_loss_grad(feats, nbr_idx, intra_mask, margins, tau, eps):
        n, dim = feats.shape
        k = nbr_idx.shape[1]
        grad = np.zeros((n, dim), dtype=np.float64)

        norms = np.empty(n, dtype=np.float64)
        scale = np.empty(n, dtype=np.float64)
        unit = np.empty((n, dim), dtype=np.float64)
        for i in range(n):
            s = 0.0
            for d in range(dim):
                s += feats[i, d] * feats[i, d]
            norms[i] = np.sqrt(s)
            scale[i] = norms[i] if norms[i] > eps else eps
            for d in range(dim):
                unit[i, d] = feats[i, d] / scale[i]

        sims = np.empty(k, dtype=np.float64)
        emb = np.empty(k, dtype=np.float64)
        total_loss = 0.0
        n_amb = 0
        for i in range(n):
            n_inter = 0
            for j in range(k):
                if not intra_mask[i, j]:
                    n_inter += 1
            if n_inter == 0:
                continue
            n_amb += 1
            m_i = margins[i]
            for j in range(k):
                o = nbr_idx[i, j]
                s = 0.0
                for d in range(dim):
                    s += unit[i, d] * unit[o, d]
                if s > 1.0:
                    s = 1.0
                elif s < -1.0:
                    s = -1.0
                sims[j] = s
            sum_intra = 0.0
            sum_inter = 0.0
            for j in range(k):
                if intra_mask[i, j]:
                    e = np.exp((sims[j] - m_i) / tau)
                    sum_intra += e
                else:
                    e = np.exp(sims[j] / tau)
                    sum_inter += e
                emb[j] = e
            total = sum_intra + sum_inter
            total_loss += np.log(total) - np.log(sum_intra)
            inv_total = 1.0 / total
            inv_intra = 1.0 / sum_intra
            live_i = 1.0 if norms[i] > eps else 0.0
            for j in range(k):
                o = nbr_idx[i, j]
                if intra_mask[i, j]:
                    g = emb[j] / tau * (inv_total - inv_intra)
                else:
                    g = emb[j] / tau * inv_total
                s = sims[j]
                live_o = 1.0 if norms[o] > eps else 0.0
                for d in range(dim):
                    grad[i, d] += g * (unit[o, d] - s * live_i * unit[i, d]) / scale[i]
                    grad[o, d] += g * (unit[i, d] - s * live_o * unit[o, d]) / scale[o]

        if n_amb == 0:
            return 0.0, grad, 0
        for i in range(n):
            for d in range(dim):
                grad[i, d] /= n_amb
        return total_loss / n_amb, grad, n_amb

    _NUMBA_IMPL = {
        "knn_all": _nb_knn_all,
        "nearest_index": _nb_nearest_index,
        "fps_select": _nb_fps_select,
        "partition_sums": _nb_partition_sums,
        "maxpool_forward": _nb_maxpool_forward,
        "maxpool_backward": _nb_maxpool_backward,
        "scatter_add_rows": _nb_scatter_add_rows,
        "layer_loss_grad": _nb_layer_loss_grad,
    }

# ---------------------------------------------------------------------------
# backend binding
# ---------------------------------------------------------------------------

IMPLS = {"numpy": _NUMPY_IMPL, "numba": _NUMBA_IMPL}

_active = IMPLS[ACTIVE_BACKEND]

knn_all = _active["knn_all"]
nearest_index = _active["nearest_index"]
fps_select = _active["fps_select"]
partition_sums = _active["partition_sums"]
maxpool_forward = _active["maxpool_forward"]
maxpool_backward = _active["maxpool_backward"]
scatter_add_rows = _active["scatter_add_rows"]
layer_loss_grad = _active["layer_loss_grad"]
