"""Brute-force reference implementations used to cross-check the metrics."""

from __future__ import annotations

from fractions import Fraction


def runs(labels):
    """(class, start, end) runs by a plain scan."""
    out = []
    start = 0
    for t in range(1, len(labels) + 1):
        if t == len(labels) or labels[t] != labels[start]:
            out.append((int(labels[start]), start, t - 1))
            start = t
    return out


def keep(segs, include_background):
    return [s for s in segs if include_background or s[0] != 0]


def overlap_ratio(a, b):
    inter = len(set(range(a[1], a[2] + 1)) & set(range(b[1], b[2] + 1)))
    union = len(set(range(a[1], a[2] + 1)) | set(range(b[1], b[2] + 1)))
    return inter / union


def best_matching(edges, n_left, n_right):
    """Largest one-to-one matching by exhaustive search over left-vertex assignments."""
    best = 0

    def go(i, used, count):
        nonlocal best
        if count + (n_left - i) <= best:
            return
        if i == n_left:
            best = max(best, count)
            return
        for j in range(n_right):
            if j not in used and (i, j) in edges:
                go(i + 1, used | {j}, count + 1)
        go(i + 1, used, count)

    go(0, frozenset(), 0)
    return best


def f1_oracle(pred, gt, tau, include_background=False):
    P = keep(runs(pred), include_background)
    G = keep(runs(gt), include_background)
    if not P and not G:
        return 100.0
    edges = {(i, j) for i, p in enumerate(P) for j, g in enumerate(G)
             if p[0] == g[0] and overlap_ratio(p, g) >= tau}
    tp = best_matching(edges, len(P), len(G))
    if tp == 0:
        return 0.0
    prec, rec = tp / len(P), tp / len(G)
    return 100.0 * 2 * prec * rec / (prec + rec)


def levenshtein_oracle(a, b):
    """Full (len(a)+1) x (len(b)+1) table."""
    D = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a) + 1):
        D[i][0] = i
    for j in range(len(b) + 1):
        D[0][j] = j
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            D[i][j] = min(D[i - 1][j] + 1, D[i][j - 1] + 1, D[i - 1][j - 1] + (a[i - 1] != b[j - 1]))
    return D[len(a)][len(b)]


def edit_oracle(pred, gt, include_background=False):
    p = [s[0] for s in keep(runs(pred), include_background)]
    g = [s[0] for s in keep(runs(gt), include_background)]
    n = max(len(p), len(g))
    if n == 0:
        return 100.0
    return max(0.0, 100.0 * (1 - levenshtein_oracle(p, g) / n))


def ap_oracle(hits, n_gt):
    """AP as the mean, over relevant items, of the best precision at or beyond their rank."""
    if not hits:
        return Fraction(0)
    prec = []
    tp = 0
    for i, h in enumerate(hits, start=1):
        tp += h
        prec.append(Fraction(tp, i))
    total = Fraction(0)
    for i, h in enumerate(hits):
        if h:
            total += max(prec[i:])
    return total / n_gt


def map_oracle(detections, gt, include_background=False):
    """Detections are (cls, start, end, score); gt is a label list."""
    G = keep(runs(gt), include_background)
    classes = sorted({g[0] for g in G})
    dets = [d for d in detections if include_background or d[0] != 0]
    if not classes:
        return 100.0 if not dets else 0.0
    aps = []
    for c in classes:
        gc = [g for g in G if g[0] == c]
        dc = sorted([d for d in dets if d[0] == c], key=lambda d: (-d[3], d[1]))
        consumed = set()
        hits = []
        for d in dc:
            mid = (d[1] + d[2]) // 2
            owner = next((i for i, g in enumerate(gc) if g[1] <= mid <= g[2]), None)
            hit = owner is not None and owner not in consumed
            if hit:
                consumed.add(owner)
            hits.append(hit)
        aps.append(ap_oracle(hits, len(gc)))
    return float(100 * sum(aps) / len(aps))
