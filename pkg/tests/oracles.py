"""Independent reference implementations used to check the package.

Each oracle is written from the rules directly, in plain Python, and shares
no code with the package under test.
"""

import itertools
import math
import statistics

TABLE = {
    "a": (0.41, -0.18, 1.22),
    "s": (0.55, -1.65, 0.48),
    "t": (0.37, -0.59, 0.81),
    "u": (0.32, -1.34, 1.21),
}


def total_effect(leaves):
    """leaves: (assort, dom, align, attr_count, fmt, time_pressure, uncertainty)."""
    a, sd, sa, ta, tf, tp, u = leaves
    levels = {"a": a, "s": (sd + sa) / 2, "t": (tp + ta + tf) / 3, "u": u}
    out = 0.0
    for k in "astu":
        beta, lo, hi = TABLE[k]
        frac = (levels[k] - 1) / 2
        out += beta * ((1 - frac) * lo + frac * hi)
    return out


def _ok(item, c):
    name, op, bound = c
    value = item["price"] if name == "price" else item["attrs"].get(name)
    if value is None:
        return False
    if op == "<=":
        return value <= bound
    if op == ">=":
        return value >= bound
    return abs(value - bound) <= 1e-9


def select(items, constraints, weights, perceived, pickiness, theta=3):
    """items: list of dicts {id, price, attrs}; weights: list aligned with perceived vectors.

    Returns (status, best_id, best_utility, reason).
    """
    pool = list(items)
    if len(pool) > theta:
        pool = [it for it in pool if all(_ok(it, c) for c in constraints)]
    ids = [it["id"] for it in pool]
    if len(ids) > theta:
        order = sorted(range(len(weights)), key=lambda j: (-weights[j], j))
        for j in order:
            if len(ids) <= theta:
                break
            med = statistics.median(perceived[i][j] for i in ids)
            ids = [i for i in ids if perceived[i][j] >= med]
        if len(ids) > theta:
            top = order[0]
            best = sorted(ids, key=lambda i: (-perceived[i][top], i))[:theta]
            ids = [i for i in ids if i in best]
    tau = 0.6 + 0.1 * pickiness
    if not ids:
        return ("reject", None, None, "no_candidates")
    scored = []
    for i in ids:
        u = 0.0
        for w, a in zip(weights, perceived[i]):
            u += w * a
        scored.append((u, i))
    top_u = max(u for u, _ in scored)
    best = min(i for u, i in scored if u == top_u)
    if top_u < tau:
        return ("reject", best, top_u, "below_threshold")
    return ("proceed", best, top_u, None)


def wilcoxon_exact_p(diffs):
    """Two-sided exact p by enumerating all 2^n sign assignments of |d| ranks."""
    nz = [d for d in diffs if d != 0]
    mags = sorted(abs(d) for d in nz)
    rank_of = {}
    for m in set(mags):
        positions = [k + 1 for k, x in enumerate(mags) if x == m]
        rank_of[m] = sum(positions) / len(positions)
    ranks = [rank_of[abs(d)] for d in nz]
    observed = sum(r for r, d in zip(ranks, nz) if d > 0)
    lower = upper = total = 0
    for signs in itertools.product((0, 1), repeat=len(ranks)):
        w = sum(r for r, s in zip(ranks, signs) if s)
        total += 1
        lower += w <= observed + 1e-12
        upper += w >= observed - 1e-12
    return min(1.0, 2 * min(lower, upper) / total)


def accept_probability(d, p_base):
    return math.sin(math.asin(math.sqrt(p_base)) - d / 2) ** 2
