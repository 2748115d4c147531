"""Compiled CART kernels used by :mod:`tacoma.forest`.

Trees are stored as flat node arrays in preorder. A node with
``feature == -1`` is a leaf; internal nodes route a row left iff
``x[feature] <= threshold``. Child links are local to each tree.
Features are passed transposed (``XT[feature, row]``) so that scanning one
feature over a node's rows stays within one contiguous row of memory.
"""

import numpy as np
from numba import njit

LEAF = -1
_MIN_DECREASE = 1e-12
_SMALL = 24


@njit(cache=True, nogil=True)
def _grow(XT, y, n_classes, in_bag, mtry, feature, threshold, left, right, hist, importance, base):
    """Grow one tree into the node arrays starting at ``base``; returns its node count.

    Draws split features from numba's (thread-local) global stream, which
    the caller seeds.
    """
    n = in_bag.shape[0]
    p = XT.shape[0]
    cap = 2 * n - 1

    idx = in_bag.copy()
    feats = np.arange(p)
    counts = np.zeros(n_classes, dtype=np.int64)
    lcounts = np.zeros(n_classes, dtype=np.int64)
    vals = np.empty(n, dtype=np.float64)
    labels = np.empty(n, dtype=np.int64)
    svals = np.empty(n, dtype=np.float64)

    # stack rows: start, end, parent, side (0 root, 1 left, 2 right)
    stack = np.empty((cap, 4), dtype=np.int64)
    stack[0, 0] = 0
    stack[0, 1] = n
    stack[0, 2] = -1
    stack[0, 3] = 0
    top = 1
    n_nodes = 0

    while top > 0:
        top -= 1
        start = stack[top, 0]
        end = stack[top, 1]
        parent = stack[top, 2]
        side = stack[top, 3]
        node = n_nodes
        n_nodes += 1
        g = base + node
        feature[g] = LEAF
        left[g] = -1
        right[g] = -1
        threshold[g] = 0.0
        if side == 1:
            left[base + parent] = node
        elif side == 2:
            right[base + parent] = node

        m = end - start
        counts[:] = 0
        for i in range(start, end):
            counts[y[idx[i]]] += 1
        n_present = 0
        sq = 0.0
        for c in range(n_classes):
            hist[g, c] = counts[c]
            if counts[c] > 0:
                n_present += 1
            sq += counts[c] * counts[c]
        if n_present <= 1:
            continue
        node_gini = 1.0 - sq / (m * m)

        best_dec = _MIN_DECREASE
        best_f = -1
        best_thr = 0.0
        for k in range(mtry):
            j = k + np.random.randint(0, p - k)
            tmp = feats[k]
            feats[k] = feats[j]
            feats[j] = tmp
            f = feats[k]
            row = XT[f]
            vmin = np.inf
            vmax = -np.inf
            for i in range(m):
                v = row[idx[start + i]]
                vals[i] = v
                if v < vmin:
                    vmin = v
                if v > vmax:
                    vmax = v
            if vmin == vmax:
                continue
            if m <= _SMALL:
                # insertion sort of (value, label) pairs; no allocation
                for i in range(m):
                    labels[i] = y[idx[start + i]]
                for i in range(1, m):
                    v = vals[i]
                    c = labels[i]
                    j = i - 1
                    while j >= 0 and vals[j] > v:
                        vals[j + 1] = vals[j]
                        labels[j + 1] = labels[j]
                        j -= 1
                    vals[j + 1] = v
                    labels[j + 1] = c
            else:
                order = np.argsort(vals[:m])
                for i in range(m):
                    labels[i] = y[idx[start + order[i]]]
                    svals[i] = vals[order[i]]
                for i in range(m):
                    vals[i] = svals[i]
            lcounts[:] = 0
            sl = 0.0
            sr = sq
            for i in range(m - 1):
                c = labels[i]
                sl += 2 * lcounts[c] + 1
                sr -= 2 * (counts[c] - lcounts[c]) - 1
                lcounts[c] += 1
                v0 = vals[i]
                v1 = vals[i + 1]
                if v0 < v1:
                    nl = i + 1
                    nr = m - nl
                    dec = node_gini - (nl - sl / nl + nr - sr / nr) / m
                    if dec > best_dec:
                        best_dec = dec
                        best_f = f
                        thr = 0.5 * (v0 + v1)
                        if thr >= v1:
                            thr = v0
                        best_thr = thr
        if best_f < 0:
            continue

        feature[g] = best_f
        threshold[g] = best_thr
        importance[best_f] += (m / n) * best_dec
        # partition idx[start:end] so rows going left come first
        row = XT[best_f]
        lo = start
        hi = end - 1
        while lo <= hi:
            if row[idx[lo]] <= best_thr:
                lo += 1
            else:
                tmp = idx[lo]
                idx[lo] = idx[hi]
                idx[hi] = tmp
                hi -= 1
        # push right first so the left subtree is numbered next (preorder)
        stack[top, 0] = lo
        stack[top, 1] = end
        stack[top, 2] = node
        stack[top, 3] = 2
        top += 1
        stack[top, 0] = start
        stack[top, 1] = lo
        stack[top, 2] = node
        stack[top, 3] = 1
        top += 1

    return n_nodes


@njit(cache=True, nogil=True)
def grow_tree(XT, y, n_classes, in_bag, mtry, seed):
    """Single tree on a given in-bag multiset.

    Returns (feature, threshold, left, right, hist, importance).
    """
    np.random.seed(seed)
    cap = 2 * in_bag.shape[0] - 1
    feature = np.empty(cap, dtype=np.int32)
    threshold = np.empty(cap, dtype=np.float64)
    left = np.empty(cap, dtype=np.int32)
    right = np.empty(cap, dtype=np.int32)
    hist = np.zeros((cap, n_classes), dtype=np.int32)
    importance = np.zeros(XT.shape[0], dtype=np.float64)
    k = _grow(XT, y, n_classes, in_bag, mtry, feature, threshold, left, right, hist, importance, 0)
    return feature[:k].copy(), threshold[:k].copy(), left[:k].copy(), right[:k].copy(), hist[:k].copy(), importance


@njit(cache=True, nogil=True)
def grow_trees(XT, y, n_classes, mtry, seeds):
    """Bootstrap and grow one tree per seed.

    Returns (feature, threshold, left, right, hist, node_counts,
    in_bag_counts[T, n], importances[T, p]).
    """
    p, n = XT.shape
    t_count = seeds.shape[0]
    cap = t_count * (2 * n - 1)
    feature = np.empty(cap, dtype=np.int32)
    threshold = np.empty(cap, dtype=np.float64)
    left = np.empty(cap, dtype=np.int32)
    right = np.empty(cap, dtype=np.int32)
    hist = np.zeros((cap, n_classes), dtype=np.int32)
    node_counts = np.empty(t_count, dtype=np.int64)
    bag_counts = np.zeros((t_count, n), dtype=np.int32)
    importances = np.zeros((t_count, p), dtype=np.float64)
    base = 0
    for t in range(t_count):
        np.random.seed(seeds[t])
        in_bag = np.empty(n, dtype=np.int64)
        for i in range(n):
            in_bag[i] = np.random.randint(0, n)
            bag_counts[t, in_bag[i]] += 1
        k = _grow(XT, y, n_classes, in_bag, mtry, feature, threshold, left, right, hist, importances[t], base)
        node_counts[t] = k
        base += k
    return (
        feature[:base].copy(),
        threshold[:base].copy(),
        left[:base].copy(),
        right[:base].copy(),
        hist[:base].copy(),
        node_counts,
        bag_counts,
        importances,
    )


@njit(cache=True, nogil=True)
def leaf_classes(X, feature, threshold, left, right, leaf_class, roots):
    """Class voted by every tree for every row: shape (n_trees, n_rows)."""
    n = X.shape[0]
    t_count = roots.shape[0]
    out = np.empty((t_count, n), dtype=np.int32)
    for t in range(t_count):
        r = roots[t]
        for i in range(n):
            node = r
            while feature[node] != LEAF:
                if X[i, feature[node]] <= threshold[node]:
                    node = r + left[node]
                else:
                    node = r + right[node]
            out[t, i] = leaf_class[node]
    return out


@njit(cache=True, nogil=True)
def tally_votes(X, feature, threshold, left, right, leaf_class, roots, n_classes):
    n = X.shape[0]
    votes = np.zeros((n, n_classes), dtype=np.int64)
    for t in range(roots.shape[0]):
        r = roots[t]
        for i in range(n):
            node = r
            while feature[node] != LEAF:
                if X[i, feature[node]] <= threshold[node]:
                    node = r + left[node]
                else:
                    node = r + right[node]
            votes[i, leaf_class[node]] += 1
    return votes
