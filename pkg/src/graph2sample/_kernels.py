"""Compiled inner loops for MGC.

With binary labels the U-centered label distances take three values and
the label neighbour ranks have a closed form, so the local correlation grid
is filled in one pass over the pairs without sorting. The significant-scale
search is a raster-order flood fill with the same component numbering as
``scipy.ndimage.label``.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def label_local_grid(A, rz, sqrt_dz, labels, hist, de):
    """Local correlation grid for binary labels, written into ``hist``.

    ``hist`` (N x N) and ``de`` (N) are work buffers; fresh allocations are
    slow relative to the O(N^2) fill.
    """
    N = A.shape[0]
    n1 = 0
    for i in range(N):
        n1 += labels[i]
    n0 = N - n1
    if n0 == 0 or n1 == 0:
        return hist, False

    # U-centered label distances: row sums are the size of the other group
    grand = 2.0 * n0 * n1 / ((N - 1.0) * (N - 2.0))
    r0 = n1 / (N - 2.0)
    r1 = n0 / (N - 2.0)
    b00 = -2.0 * r0 + grand
    b11 = -2.0 * r1 + grand
    b01 = 1.0 - r0 - r1 + grand

    before = np.empty(N, dtype=np.int64)
    c0 = 0
    c1 = 0
    for j in range(N):
        if labels[j]:
            before[j] = c1
            c1 += 1
        else:
            before[j] = c0
            c0 += 1

    hist[:, :] = 0.0
    de[:] = 0.0
    for i in range(N):
        li = labels[i]
        n_same = n1 if li else n0
        for j in range(N):
            if i == j:
                continue
            lj = labels[j]
            if li == lj:
                re = 1 + before[j] - (1 if i < j else 0)
                b = b11 if li else b00
            else:
                re = n_same + before[j]
                b = b01
            hist[rz[i, j], re] += A[i, j] * b
            de[re] += b * b

    for l in range(1, N):
        de[l] += de[l - 1]
    for k in range(N):
        acc = 0.0
        for l in range(N):
            acc += hist[k, l]
            if k > 0:
                hist[k, l] = acc + hist[k - 1, l]
            else:
                hist[k, l] = acc
    if de[N - 1] <= 0.0 or sqrt_dz[N - 1] <= 0.0:
        return hist, False

    floor = 1e-14 * sqrt_dz[N - 1] * np.sqrt(de[N - 1])
    for l in range(N):
        de[l] = np.sqrt(de[l])
    for k in range(N):
        for l in range(N):
            den = sqrt_dz[k] * de[l]
            hist[k, l] = hist[k, l] / den if den > floor else 0.0
    return hist, True


@numba.njit(cache=True)
def _find(parent, f):
    root = f
    while parent[root] != root:
        root = parent[root]
    while parent[f] != root:
        nxt = parent[f]
        parent[f] = root
        f = nxt
    return root


@numba.njit(cache=True)
def largest_component_max(c, threshold, parent, size, vmax, arg):
    """Largest 4-connected region of ``c > threshold`` and its maximum.

    Raster-order union-find. Each component is named by its first cell in
    row-major order, matching ``scipy.ndimage.label`` numbering: the earliest
    component wins size ties, and within it the first row-major maximum
    wins. ``parent``, ``size``, ``vmax`` and ``arg`` are work buffers of
    length ``c.size``.

    Returns
    -------
    size, best_value, best_flat_index (index -1 when no cell passes)
    """
    K, L = c.shape
    flat = c.ravel()
    n = K * L
    for f in range(n):
        size[f] = 0
        if not flat[f] > threshold:
            parent[f] = -1
            continue
        up = f - L if f >= L and parent[f - L] >= 0 else -1
        left = f - 1 if f % L and parent[f - 1] >= 0 else -1
        if up < 0 and left < 0:
            parent[f] = f
        elif left < 0:
            parent[f] = _find(parent, up)
        elif up < 0:
            parent[f] = _find(parent, left)
        else:
            ra = _find(parent, up)
            rb = _find(parent, left)
            r = min(ra, rb)
            parent[max(ra, rb)] = r
            parent[f] = r

    for f in range(n):
        if parent[f] < 0:
            continue
        r = _find(parent, f)
        if size[r] == 0 or flat[f] > vmax[r]:
            vmax[r] = flat[f]
            arg[r] = f
        size[r] += 1

    best_size, best_val, best_idx = 0, -np.inf, -1
    for r in range(n):
        if size[r] > best_size:
            best_size, best_val, best_idx = size[r], vmax[r], arg[r]
    return best_size, best_val, best_idx
