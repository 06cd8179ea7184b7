"""Pure-Python/numpy versions of the compiled forest kernels.

Same signatures and semantics as ``_kernels.pyx``. Used when the extension
is not built or when ``SPATIALCP_BACKEND=python`` is set.
"""
import numpy as np

_MASK = (1 << 64) - 1


def _splitmix(state):
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def fit_tree(X, y, samples_in, min_leaf, mtry, seed):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    samples = np.array(samples_in, dtype=np.intp, copy=True)
    m, p = len(samples), X.shape[1]
    feature, threshold, left, right, start, end = [-1], [0.0], [-1], [-1], [0], [m]
    state = int(seed) & _MASK
    stack = [0]
    while stack:
        node = stack.pop()
        s0, s1 = start[node], end[node]
        n = s1 - s0
        if n < 2 * min_leaf:
            continue
        idx = samples[s0:s1]
        y_node = y[idx]
        if y_node.min() == y_node.max():
            continue
        # sequential sums so both backends round identically
        tot = np.cumsum(y_node)[-1]
        sq = np.cumsum(y_node * y_node)[-1]
        parent = tot * tot / n

        feats = list(range(p))
        for j in range(mtry):
            state, z = _splitmix(state)
            r = j + z % (p - j)
            feats[j], feats[r] = feats[r], feats[j]

        best_f, best_thr, best_proxy = -1, 0.0, -np.inf
        nl = np.arange(1, n, dtype=np.float64)
        valid_size = (nl >= min_leaf) & (n - nl >= min_leaf)
        for f in feats[:mtry]:
            v = X[idx, f]
            order = np.argsort(v, kind="stable")
            vs, ys = v[order], y_node[order]
            if vs[0] == vs[-1]:
                continue
            cs = np.cumsum(ys)
            total = cs[-1]
            ok = valid_size & (vs[:-1] < vs[1:])
            if not ok.any():
                continue
            sl = cs[:-1]
            sr = total - sl
            proxy = sl * sl / nl + sr * sr / (n - nl)
            proxy = np.where(ok, proxy, -np.inf)
            i = int(np.argmax(proxy))
            pr = proxy[i]
            thr = 0.5 * (vs[i] + vs[i + 1])
            if thr >= vs[i + 1]:
                thr = vs[i]
            if pr > best_proxy or (pr == best_proxy and (f < best_f or (f == best_f and thr < best_thr))):
                best_proxy, best_f, best_thr = pr, f, thr

        if best_f < 0 or not (best_proxy - parent > 1e-12 * sq):
            continue
        go_left = X[idx, best_f] <= best_thr
        samples[s0:s1] = np.concatenate([idx[go_left], idx[~go_left]])
        n_left = int(go_left.sum())
        lid = len(feature)
        feature[node], threshold[node], left[node], right[node] = best_f, float(best_thr), lid, lid + 1
        for a, b in ((s0, s0 + n_left), (s0 + n_left, s1)):
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            start.append(a)
            end.append(b)
        stack.extend([lid + 1, lid])

    as_i = lambda a: np.asarray(a, dtype=np.intp)
    return (as_i(feature), np.asarray(threshold, dtype=np.float64), as_i(left), as_i(right),
            as_i(start), as_i(end), samples)


def apply_tree(Xq, feature, threshold, left, right):
    Xq = np.asarray(Xq, dtype=np.float64)
    nodes = np.zeros(len(Xq), dtype=np.intp)
    active = left[nodes] != -1
    rows = np.arange(len(Xq))
    while active.any():
        r, nd = rows[active], nodes[active]
        go_left = Xq[r, feature[nd]] <= threshold[nd]
        nodes[r] = np.where(go_left, left[nd], right[nd])
        active = left[nodes] != -1
    return nodes


def accumulate_weights(W, leaves, ptr, members, vals, scale):
    lo, hi = ptr[leaves], ptr[leaves + 1]
    counts = hi - lo
    rows = np.repeat(np.arange(len(leaves)), counts)
    offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    pos = np.repeat(lo, counts) + offs
    np.add.at(W, (rows, members[pos]), scale * vals[pos])


def row_quantiles(W, sorted_vals, ps):
    W = np.asarray(W, dtype=np.float64)
    cum = np.cumsum(W, axis=1)
    total = cum[:, -1:]
    out = np.empty((len(W), len(ps)))
    first = np.argmax(W > 0, axis=1)
    for q, p in enumerate(ps):
        target = p * total - 1e-12 * total
        j = np.minimum((cum < target).sum(axis=1), W.shape[1] - 1)
        out[:, q] = sorted_vals[np.maximum(j, first)]
    return out
