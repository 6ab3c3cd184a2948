"""Population update schemes.

All functions here work on internal objectives under minimization.  Ties are
broken by objective values lexicographically, then by position in the input,
so every scheme is deterministic given its inputs.
"""

from __future__ import annotations

from itertools import combinations
from math import comb

import numpy as np

from papforge.metrics import hypervolume


def dominance_matrix(F: np.ndarray) -> np.ndarray:
    """D[i, j] is True when row i dominates row j."""
    le = np.all(F[:, None, :] <= F[None, :, :], axis=2)
    lt = np.any(F[:, None, :] < F[None, :, :], axis=2)
    return le & lt


def nd_ranks(F: np.ndarray) -> np.ndarray:
    D = dominance_matrix(F)
    count = D.sum(axis=0)
    ranks = np.full(len(F), -1)
    r = 0
    front = np.flatnonzero(count == 0)
    while front.size:
        ranks[front] = r
        count = count - D[front].sum(axis=0)
        count[ranks >= 0] = -1
        front = np.flatnonzero(count == 0)
        r += 1
    return ranks


def crowding(F: np.ndarray) -> np.ndarray:
    n, m = F.shape
    if n <= 2:
        return np.full(n, np.inf)
    d = np.zeros(n)
    for k in range(m):
        o = np.lexsort((np.arange(n), F[:, k]))
        span = F[o[-1], k] - F[o[0], k]
        d[o[0]] = d[o[-1]] = np.inf
        if span > 0:
            d[o[1:-1]] += (F[o[2:], k] - F[o[:-2], k]) / span
    return d


def stable_order(F: np.ndarray, *primary) -> np.ndarray:
    """Sort by primary keys, then objectives lexicographically, then index."""
    n, m = F.shape
    keys = [np.arange(n)] + [F[:, k] for k in range(m - 1, -1, -1)] + list(reversed(primary))
    return np.lexsort(keys)


def per_front_crowding(F: np.ndarray, ranks: np.ndarray) -> np.ndarray:
    cd = np.empty(len(F))
    for r in np.unique(ranks):
        idx = np.flatnonzero(ranks == r)
        cd[idx] = crowding(F[idx])
    return cd


def nsga2_select(F: np.ndarray, n: int):
    """Indices of survivors and their tournament merit (lower is better)."""
    ranks = nd_ranks(F)
    cd = per_front_crowding(F, ranks)
    keep = stable_order(F, ranks, -cd)[:n]
    return keep, np.arange(len(keep))


def das_dennis(n_obj: int, n_points: int) -> np.ndarray:
    """Uniform simplex lattice with the most points not exceeding ``n_points`` (at least n_obj)."""
    if n_obj == 1:
        return np.ones((1, 1))
    H = 1
    while comb(H + 1 + n_obj - 1, n_obj - 1) <= n_points:
        H += 1
    pts = []
    for bars in combinations(range(H + n_obj - 1), n_obj - 1):
        prev, parts = -1, []
        for b in bars:
            parts.append(b - prev - 1)
            prev = b
        parts.append(H + n_obj - 2 - prev)
        pts.append(parts)
    return np.array(pts, dtype=np.float64) / H


def nsga3_select(F: np.ndarray, n: int, dirs: np.ndarray):
    ranks = nd_ranks(F)
    order = stable_order(F, ranks)
    if len(F) <= n:
        return order, np.arange(len(order))
    last_rank = ranks[order[n - 1]]
    chosen = list(order[ranks[order] < last_rank])
    last = [i for i in order if ranks[i] == last_rank]
    if len(chosen) + len(last) == n:
        keep = np.array(chosen + last)
        return keep, np.arange(n)
    St = np.array(chosen + last)
    ideal = F[St].min(axis=0)
    Fn = F[St] - ideal
    scale = Fn[ranks[St] == ranks[St].min()].max(axis=0)
    scale[scale <= 1e-12] = 1.0
    Fn = Fn / scale
    U = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    proj = Fn @ U.T
    perp = np.maximum((Fn ** 2).sum(axis=1)[:, None] - proj ** 2, 0.0)
    assoc = np.argmin(perp, axis=1)
    dist = perp[np.arange(len(St)), assoc]
    pos = {int(s): p for p, s in enumerate(St)}
    niche = np.bincount(assoc[:len(chosen)], minlength=len(U))
    remaining = {j: [] for j in range(len(U))}
    for i in last:
        remaining[int(assoc[pos[i]])].append(i)
    need = n - len(chosen)
    picked = []
    while len(picked) < need:
        open_dirs = [j for j in range(len(U)) if remaining[j]]
        j = min(open_dirs, key=lambda d: (niche[d], d))
        members = np.array(remaining[j])
        if niche[j] == 0:
            sub = F[members]
            o = stable_order(sub, dist[[pos[i] for i in members]])
        else:
            o = stable_order(F[members])
        pick = int(members[o[0]])
        remaining[j].remove(pick)
        picked.append(pick)
        niche[j] += 1
    keep = np.array(chosen + picked)
    return keep, np.argsort(stable_order(F[keep], ranks[keep]), kind="stable")


def spea2_fitness(F: np.ndarray, Fn: np.ndarray):
    D = dominance_matrix(F)
    strength = D.sum(axis=1)
    raw = (D * strength[:, None]).sum(axis=0)
    dist = np.sqrt(((Fn[:, None, :] - Fn[None, :, :]) ** 2).sum(axis=2))
    k = min(int(np.sqrt(len(F))), len(F) - 1)
    sigma = np.sort(dist, axis=1)[:, k]
    return raw + 1.0 / (sigma + 2.0), dist


def spea2_select(F: np.ndarray, Fn: np.ndarray, cap: int):
    fit, dist = spea2_fitness(F, Fn)
    nd = np.flatnonzero(fit < 1)
    if len(nd) <= cap:
        keep = stable_order(F, fit)[:cap]
    else:
        alive = list(nd)
        sub = dist[np.ix_(nd, nd)].copy()
        np.fill_diagonal(sub, np.inf)
        live = np.ones(len(nd), dtype=bool)
        while live.sum() > cap:
            rows = np.flatnonzero(live)
            d = sub[np.ix_(rows, rows)]
            # compare on the three nearest neighbours; deeper ties are vanishingly rare
            q = min(3, d.shape[1])
            near = np.sort(np.partition(d, q - 1, axis=1)[:, :q], axis=1)
            victim = rows[np.lexsort(near.T[::-1])[0]]
            live[victim] = False
        keep = np.array([alive[i] for i in np.flatnonzero(live)])
    keep = np.asarray(keep)
    return keep, np.argsort(np.argsort(fit[keep], kind="stable"), kind="stable")


def hv_contributions(F: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Exclusive hypervolume of each point of a mutually nondominated set (minimization)."""
    n, m = F.shape
    if m == 2:
        o = np.lexsort((np.arange(n), F[:, 1], F[:, 0]))
        x, y = F[o, 0], F[o, 1]
        nx = np.concatenate([x[1:], [ref[0]]])
        py = np.concatenate([[ref[1]], y[:-1]])
        c = np.empty(n)
        c[o] = np.maximum(nx - x, 0) * np.maximum(py - y, 0)
        return c
    G, r = -F, -ref
    c = np.empty(n)
    for i in range(n):
        box = float(np.prod(G[i] - r))
        others = np.delete(G, i, axis=0)
        shadow = np.minimum(others, G[i]) if len(others) else others
        c[i] = box - (hypervolume(shadow, r) if len(shadow) else 0.0)
    return c


def hv_select(F: np.ndarray, n: int, ref: np.ndarray):
    ranks = nd_ranks(F)
    order = stable_order(F, ranks)
    if len(F) <= n:
        return order, np.arange(len(order))
    last_rank = ranks[order[n - 1]]
    chosen = [int(i) for i in order if ranks[i] < last_rank]
    last = [int(i) for i in order if ranks[i] == last_rank]
    drop = len(chosen) + len(last) - n
    if drop > 0:
        L = np.array(last)
        if F.shape[1] == 2:
            live = list(range(len(L)))
            for _ in range(drop):
                c = hv_contributions(F[L[live]], ref)
                live.pop(int(stable_order(F[L[live]], c)[0]))
            last = [int(L[i]) for i in live]
        else:
            # one-shot removal of the smallest contributors keeps 3-objective runs affordable
            c = hv_contributions(F[L], ref)
            gone = set(stable_order(F[L], c)[:drop].tolist())
            last = [int(L[i]) for i in range(len(L)) if i not in gone]
    keep = np.array(chosen + last)
    return keep, np.argsort(stable_order(F[keep], ranks[keep]), kind="stable")


def aggregate(Fn: np.ndarray, W: np.ndarray, ideal: np.ndarray, kind: str) -> np.ndarray:
    """Scalarized value of each row of Fn under the matching row of W (lower is better)."""
    Wp = np.maximum(W, 1e-6)
    if kind == "tchebycheff":
        return np.max(Wp * np.abs(Fn - ideal), axis=-1)
    return np.sum(W * (Fn - ideal), axis=-1)


def weight_vectors(n_obj: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Simplex lattice sized to ``n``, topped up with random simplex points when the lattice is smaller."""
    W = das_dennis(n_obj, n)
    if len(W) > n:
        W = W[:n]
    if len(W) < n:
        extra = rng.dirichlet(np.ones(n_obj), size=n - len(W))
        W = np.vstack([W, extra])
    return W


def weight_neighbors(W: np.ndarray, T: int) -> np.ndarray:
    d = ((W[:, None, :] - W[None, :, :]) ** 2).sum(axis=2)
    T = max(1, min(T, len(W)))
    return np.argsort(d, axis=1, kind="stable")[:, :T]
