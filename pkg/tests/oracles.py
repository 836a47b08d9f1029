"""Brute-force reference implementations shared by the unit and acceptance suites."""
import numpy as np
from hypothesis import strategies as st

from lidarbg.detect import NOISE


def ray_cast_inside(poly, p):
    """Even-odd rule, with points on an edge counted inside."""
    x, y = p
    n = len(poly)
    inside = False
    for i in range(n):
        (x1, y1), (x2, y2) = poly[i], poly[(i + 1) % n]
        cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
        if cross == 0 and min(x1, x2) <= x <= max(x1, x2) and min(y1, y2) <= y <= max(y1, y2):
            return True
        if (y1 > y) != (y2 > y):
            xi = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xi:
                inside = not inside
    return inside


def brute_lof(X, k):
    n = len(X)
    D = np.linalg.norm(X[:, None] - X[None], axis=2)
    np.fill_diagonal(D, np.inf)
    nbrs = np.argsort(D, axis=1, kind="stable")[:, :k]
    kdist = np.array([D[i, nbrs[i, -1]] for i in range(n)])
    lrd = np.array([1.0 / (np.mean([max(D[i, j], kdist[j]) for j in nbrs[i]]) + 1e-10) for i in range(n)])
    return np.array([lrd[nbrs[i]].mean() / lrd[i] for i in range(n)])


def brute_dbscan(X, eps, min_pts):
    """Textbook DBSCAN over the full distance matrix with the same border and numbering rules."""
    n = len(X)
    D = np.linalg.norm(X[:, None] - X[None], axis=2)
    nb = [[j for j in range(n) if j != i and D[i, j] <= eps] for i in range(n)]
    core = [len(nb[i]) + 1 >= min_pts for i in range(n)]
    comp = [-1] * n
    c = 0
    for i in range(n):
        if core[i] and comp[i] < 0:
            stack = [i]
            comp[i] = c
            while stack:
                u = stack.pop()
                for v in nb[u]:
                    if core[v] and comp[v] < 0:
                        comp[v] = c
                        stack.append(v)
            c += 1
    lab = list(comp)
    for i in range(n):
        if not core[i]:
            cores = [j for j in nb[i] if core[j]]
            if cores:
                j = min(cores, key=lambda j: (D[i, j], *X[j]))
                lab[i] = comp[j]
    order = sorted((i for i in range(n) if lab[i] >= 0), key=lambda i: tuple(X[i]))
    remap = {}
    for i in order:
        remap.setdefault(lab[i], len(remap))
    return np.array([remap[l] if l >= 0 else NOISE for l in lab])


def star_polygon(seed, n):
    r = np.random.default_rng(seed)
    ang = np.sort(r.uniform(0, 2 * np.pi, n))
    ang += np.arange(n) * 1e-3
    rad = r.uniform(1, 5, n)
    return np.round(np.column_stack([rad * np.cos(ang), rad * np.sin(ang)]), 3)


def python_greedy(P, G, radius):
    cand = sorted((float(np.hypot(*(np.subtract(p, g)))), j, i)
                  for i, p in enumerate(P) for j, g in enumerate(G))
    up, ug, n = set(), set(), 0
    for d, j, i in cand:
        if d <= radius and i not in up and j not in ug:
            up.add(i)
            ug.add(j)
            n += 1
    return n


def disjoint_points(seed, n_gt, n_pred):
    """Gts on a 10 m lattice; each pred sits within 3 m of at most one gt, so no pred can reach two gts."""
    r = np.random.default_rng(seed)
    slots = r.permutation(16)[:n_gt]
    G = np.column_stack([slots % 4, slots // 4]) * 10.0
    P = []
    for _ in range(n_pred):
        if n_gt and r.random() < 0.8:
            ang, rad = r.uniform(0, 2 * np.pi), r.uniform(0, 3.0)
            P.append(G[r.integers(n_gt)] + rad * np.array([np.cos(ang), np.sin(ang)]))
        else:
            P.append(r.uniform(-50, -10, 2))
    return np.array(P).reshape(-1, 2), G.reshape(-1, 2).astype(float)


disjoint_instance = st.builds(disjoint_points, st.integers(0, 2 ** 31), st.integers(0, 6), st.integers(0, 6))
