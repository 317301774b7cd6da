"""Independent reference implementations used to check the package.

Everything here is deliberately naive (per-pair loops, full sorts, dense
convolutions, explicit flood fill) and shares no code with the library paths
it validates.
"""
from __future__ import annotations

import math

import numpy as np


def cosine_oracle(a, b) -> float:
    num = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(y * y for y in b))
    return num / (na * nb)


def topk_oracle(probe_vec, gallery_ids, gallery_matrix, k) -> list[tuple[str, float]]:
    """Full O(G) scan; ties broken by ascending gallery id."""
    sims = [(cosine_oracle(probe_vec, row), gid) for gid, row in zip(gallery_ids, gallery_matrix)]
    ranked = sorted(sims, key=lambda t: (-t[0], t[1]))
    return [(gid, s) for s, gid in ranked[:k]]


def precision5_oracle(hit_labels_per_probe, probe_labels) -> float:
    """Direct evaluation of the top-5 precision sum."""
    total = 0
    for want, hits in zip(probe_labels, hit_labels_per_probe):
        assert len(hits) == 5
        total += sum(1 for lbl in hits if lbl == want)
    return total / (5.0 * len(probe_labels))


def auc_paircount_oracle(scores, labels) -> float:
    """O(P*N) pair count with half credit for ties."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return (wins + 0.5 * ties) / (pos.size * neg.size)


def knn_oracle(probe, gallery_matrix, K) -> float:
    dists = sorted(math.dist(probe, row) for row in gallery_matrix)
    return sum(dists[:K]) / K


def lof_oracle(probe, gallery_matrix, k) -> float:
    """Textbook LOF computed with explicit loops and sorted lists.

    Neighborhoods are the k nearest points with ties broken by index; local
    reachability densities floor the mean reachability at 1e-12.
    """
    g = [list(map(float, row)) for row in gallery_matrix]
    n = len(g)

    def knn(point, exclude=None):
        ranked = sorted(
            (math.dist(point, g[j]), j) for j in range(n) if j != exclude
        )
        return ranked[:k]

    kdist = {}
    neighborhoods = {}
    for i in range(n):
        ranked = knn(g[i], exclude=i)
        neighborhoods[i] = ranked
        kdist[i] = ranked[-1][0]

    def lrd(ranked):
        reach = [max(kdist[j], d) for d, j in ranked]
        return 1.0 / max(sum(reach) / len(reach), 1e-12)

    lrd_g = {i: lrd(neighborhoods[i]) for i in range(n)}
    probe_nb = knn(list(map(float, probe)))
    lrd_probe = lrd(probe_nb)
    return (sum(lrd_g[j] for _, j in probe_nb) / len(probe_nb)) / lrd_probe


def floodfill_components(bits: np.ndarray, connectivity: int) -> list[dict]:
    """Stack-based flood fill; components ordered by first pixel in scan order."""
    h, w = bits.shape
    grid = [[bool(bits[y, x]) for x in range(w)] for y in range(h)]
    seen = [[False] * w for _ in range(h)]
    if connectivity == 4:
        offsets = ((0, 1), (0, -1), (1, 0), (-1, 0))
    else:
        offsets = ((0, 1), (0, -1), (1, 0), (-1, 0), (1, 1), (1, -1), (-1, 1), (-1, -1))
    components = []
    for y0 in range(h):
        for x0 in range(w):
            if not grid[y0][x0] or seen[y0][x0]:
                continue
            stack = [(y0, x0)]
            seen[y0][x0] = True
            count = 0
            min_x = max_x = x0
            min_y = max_y = y0
            while stack:
                y, x = stack.pop()
                count += 1
                min_x, max_x = min(min_x, x), max(max_x, x)
                min_y, max_y = min(min_y, y), max(max_y, y)
                for dy, dx in offsets:
                    ny, nx = y + dy, x + dx
                    if 0 <= ny < h and 0 <= nx < w and grid[ny][nx] and not seen[ny][nx]:
                        seen[ny][nx] = True
                        stack.append((ny, nx))
            components.append(
                {"pixel_count": count, "bounding_box": (min_x, min_y, max_x, max_y)}
            )
    return components


def dense_gaussian_oracle(texture: np.ndarray, sigma: float) -> np.ndarray:
    """Full 2-D convolution with the outer-product kernel and edge clamping."""
    radius = math.ceil(3.0 * sigma)
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    k1 = np.exp(-(k * k) / (2.0 * sigma * sigma))
    k1 /= k1.sum()
    kernel2d = np.outer(k1, k1)
    h, w = texture.shape[:2]
    out = np.zeros_like(texture, dtype=np.float64)
    for y in range(h):
        for x in range(w):
            acc = np.zeros(texture.shape[2:], dtype=np.float64) if texture.ndim == 3 else 0.0
            for dy in range(-radius, radius + 1):
                for dx in range(-radius, radius + 1):
                    sy = min(max(y + dy, 0), h - 1)
                    sx = min(max(x + dx, 0), w - 1)
                    acc = acc + kernel2d[dy + radius, dx + radius] * texture[sy, sx]
            out[y, x] = acc
    return out


def lloyd_restart_oracle(points: np.ndarray, k: int, restarts: int, seed: int, iters: int = 100) -> np.ndarray:
    """Best-of-N plain Lloyd runs from random data-point initializations."""
    rng = np.random.default_rng(seed)
    best_assign = None
    best_inertia = np.inf
    n = points.shape[0]
    for _ in range(restarts):
        centers = points[rng.choice(n, size=k, replace=False)].copy()
        for _ in range(iters):
            d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            assign = d2.argmin(axis=1)
            new_centers = centers.copy()
            for c in range(k):
                members = assign == c
                if members.any():
                    new_centers[c] = points[members].mean(axis=0)
            if np.allclose(new_centers, centers):
                centers = new_centers
                break
            centers = new_centers
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assign = d2.argmin(axis=1)
        inertia = float(d2[np.arange(n), assign].sum())
        if inertia < best_inertia:
            best_inertia = inertia
            best_assign = assign.copy()
    assert best_assign is not None
    return best_assign


def same_partition(assign_a: dict[str, int], assign_b: dict[str, int]) -> bool:
    """True when two labelings induce identical partitions of the ids."""
    if set(assign_a) != set(assign_b):
        return False
    groups_a: dict[int, frozenset] = {}
    groups_b: dict[int, frozenset] = {}
    for sid in assign_a:
        groups_a.setdefault(assign_a[sid], set()).add(sid)  # type: ignore[arg-type]
        groups_b.setdefault(assign_b[sid], set()).add(sid)  # type: ignore[arg-type]
    parts_a = {frozenset(v) for v in groups_a.values()}
    parts_b = {frozenset(v) for v in groups_b.values()}
    return parts_a == parts_b


def central_difference_grad(fn, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient of a scalar function of an array."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = grad.reshape(-1)
    xf = x.reshape(-1)
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + h
        up = fn(x)
        xf[i] = orig - h
        down = fn(x)
        xf[i] = orig
        flat[i] = (up - down) / (2.0 * h)
    return grad


def relative_grad_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = max(float(np.linalg.norm(analytic)), 1e-12)
    return float(np.linalg.norm(analytic - numeric)) / denom
