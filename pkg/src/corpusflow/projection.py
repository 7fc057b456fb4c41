"""Semi-supervised structuring of a document set.

Pipeline: group-constrained metric -> neighbor-embedding reduction to a small
number of dimensions (default five) -> hierarchical density-based clustering
-> machine-proposed clusters as a list of document lists.

Everything here is a deterministic function of (inputs, config, seed):
exact brute-force k-NN, a fixed-iteration bisection for the fuzzy-neighborhood
bandwidths, seeded-uniform layout initialization, and a sequential SGD loop.
Sources are curated subsets (desk scale), so the O(n^2) metric is tractable
and fully reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import Cancelled, InvalidConfig, TooFewDocs

_MASK64 = 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class ProjectionConfig:
    n_neighbors: int = 15
    target_dims: int = 5
    min_dist: float = 0.1
    spread: float = 1.0
    epochs: int = 200
    negative_sample_rate: int = 5
    min_cluster_size: int = 10
    min_samples: int | None = None  # None means min_cluster_size
    d_same: float = 1e-4
    d_diff: float = 2.0
    seed: int = 0

    def validate(self) -> None:
        if self.n_neighbors < 2:
            raise InvalidConfig(f"n_neighbors must be >= 2, got {self.n_neighbors}")
        if self.target_dims < 2:
            raise InvalidConfig(f"target_dims must be >= 2, got {self.target_dims}")
        if not (0.0 <= self.d_same < self.d_diff <= 2.0):
            raise InvalidConfig(
                f"need 0 <= d_same < d_diff <= 2, got d_same={self.d_same} d_diff={self.d_diff}"
            )
        if self.epochs < 1:
            raise InvalidConfig(f"epochs must be >= 1, got {self.epochs}")
        if self.negative_sample_rate < 0:
            raise InvalidConfig("negative_sample_rate must be >= 0")
        if self.min_cluster_size < 2:
            raise InvalidConfig(f"min_cluster_size must be >= 2, got {self.min_cluster_size}")
        if self.min_samples is not None and self.min_samples < 1:
            raise InvalidConfig(f"min_samples must be >= 1, got {self.min_samples}")
        if self.min_dist < 0 or self.spread <= 0:
            raise InvalidConfig("min_dist must be >= 0 and spread > 0")

    @property
    def effective_min_samples(self) -> int:
        return self.min_samples if self.min_samples is not None else self.min_cluster_size


def resolve_partition(groups: Sequence[Sequence[str]]) -> tuple[dict[str, int], list[str]]:
    """Assign each constrained doc to one control set.

    Overlapping control groups are resolved first-edge-wins; each conflict is
    surfaced as a warning rather than an error.
    """
    assignment: dict[str, int] = {}
    warnings: list[str] = []
    for gi, group in enumerate(groups):
        for doc_id in group:
            if doc_id in assignment and assignment[doc_id] != gi:
                warnings.append(
                    f"document {doc_id} appears in control groups "
                    f"{assignment[doc_id]} and {gi}; keeping the first"
                )
                continue
            assignment.setdefault(doc_id, gi)
    return assignment, warnings


def constrained_distance_matrix(
    vectors: np.ndarray, labels: np.ndarray, d_same: float, d_diff: float
) -> np.ndarray:
    """All-pairs constrained metric in [0, 2].

    Same control set -> d_same; different control sets -> d_diff; otherwise
    1 - cosine. Symmetric with a zero diagonal.
    """
    v = vectors.astype(np.float64)
    base = 1.0 - v @ v.T
    np.clip(base, 0.0, 2.0, out=base)
    constrained = labels >= 0
    pair_constrained = constrained[:, None] & constrained[None, :]
    same = pair_constrained & (labels[:, None] == labels[None, :])
    diff = pair_constrained & (labels[:, None] != labels[None, :])
    base[same] = d_same
    base[diff] = d_diff
    np.fill_diagonal(base, 0.0)
    return base


def constrained_distance(
    a_vec: np.ndarray, b_vec: np.ndarray, a_label: int, b_label: int,
    d_same: float = 1e-4, d_diff: float = 2.0,
) -> float:
    """Single-pair form of the constrained metric (labels < 0 mean unconstrained)."""
    if a_label >= 0 and b_label >= 0:
        return d_same if a_label == b_label else d_diff
    base = 1.0 - float(np.dot(a_vec.astype(np.float64), b_vec.astype(np.float64)))
    return min(max(base, 0.0), 2.0)


# --- fuzzy neighborhood graph ----------------------------------------------------

_SMOOTH_TOLERANCE = 1e-5


def _smooth_bandwidth(neighbor_dists: Sequence[float], rho: float, k: int) -> float:
    """Bisection (64 iterations) for sigma with sum_j exp(-max(0,d-rho)/sigma) = log2(k)."""
    target = math.log2(k)
    lo, hi, mid = 0.0, math.inf, 1.0
    for _ in range(64):
        psum = 0.0
        for d in neighbor_dists:
            gap = d - rho
            psum += math.exp(-gap / mid) if gap > 0 else 1.0
        if abs(psum - target) < _SMOOTH_TOLERANCE:
            break
        if psum > target:
            hi = mid
            mid = (lo + hi) / 2.0
        else:
            lo = mid
            mid = mid * 2.0 if hi == math.inf else (lo + hi) / 2.0
    return mid


def _neighbor_graph(dist: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray, list[tuple[int, int, float]]]:
    """Exact k-NN membership weights, symmetrized via a + b - a*b.

    Returns (knn_indices, knn_dists, edges) with edges as (i, j, weight),
    i < j, sorted, zero-weight edges dropped.
    """
    n = dist.shape[0]
    knn_idx = np.empty((n, k), dtype=np.int64)
    knn_dist = np.empty((n, k), dtype=np.float64)
    for i in range(n):
        order = np.argsort(dist[i], kind="stable")
        picked = [j for j in order if j != i][:k]
        knn_idx[i] = picked
        knn_dist[i] = dist[i, picked]

    directed: dict[tuple[int, int], float] = {}
    for i in range(n):
        rho = float(knn_dist[i, 0])
        sigma = _smooth_bandwidth(knn_dist[i].tolist(), rho, k)
        for col in range(k):
            j = int(knn_idx[i, col])
            gap = float(knn_dist[i, col]) - rho
            w = math.exp(-gap / sigma) if gap > 0 and sigma > 0 else 1.0
            directed[(i, j)] = w

    edges: list[tuple[int, int, float]] = []
    seen: set[tuple[int, int]] = set()
    for (i, j) in directed:
        a, b = (i, j) if i < j else (j, i)
        if (a, b) in seen:
            continue
        seen.add((a, b))
        wab = directed.get((a, b), 0.0)
        wba = directed.get((b, a), 0.0)
        w = wab + wba - wab * wba
        if w > 0.0:
            edges.append((a, b, w))
    edges.sort()
    return knn_idx, knn_dist, edges


# --- low-dimensional layout --------------------------------------------------------


def fit_curve_params(min_dist: float, spread: float) -> tuple[float, float]:
    """Fit (a, b) of 1/(1 + a*x^(2b)) to the offset exponential taper."""
    from scipy.optimize import curve_fit

    def curve(x, a, b):
        return 1.0 / (1.0 + a * x ** (2 * b))

    xs = np.linspace(0.0, spread * 3, 300)
    ys = np.where(xs < min_dist, 1.0, np.exp(-(xs - min_dist) / spread))
    (a, b), _ = curve_fit(curve, xs, ys)
    return float(a), float(b)


_CURVE_CACHE: dict[tuple[float, float], tuple[float, float]] = {}


def _curve_params(min_dist: float, spread: float) -> tuple[float, float]:
    key = (min_dist, spread)
    if key not in _CURVE_CACHE:
        _CURVE_CACHE[key] = fit_curve_params(min_dist, spread)
    return _CURVE_CACHE[key]


def _sgd_layout(
    n: int,
    edges: list[tuple[int, int, float]],
    config: ProjectionConfig,
    rng: np.random.Generator,
    should_abort: Callable[[], bool] | None = None,
) -> np.ndarray:
    """Stochastic descent over the membership graph.

    Attractive moves pull edge endpoints together, negative samples push
    random points apart; the learning rate decays linearly 1 -> 0.
    """
    dims = config.target_dims
    a, b = _curve_params(config.min_dist, config.spread)
    epochs = config.epochs

    coords = rng.uniform(-10.0, 10.0, size=(n, dims))
    y = [list(map(float, row)) for row in coords]

    weights = [w for _, _, w in edges]
    if not weights:
        return np.asarray(y, dtype=np.float64)
    w_max = max(weights)
    # edges are sampled in proportion to weight: the heaviest every epoch
    eps = [w_max / w for w in weights]  # epochs per sample, per edge
    neg_rate = config.negative_sample_rate
    eps_neg = [e / neg_rate if neg_rate > 0 else math.inf for e in eps]
    next_sample = list(eps)
    neg_progress = [0.0] * len(edges)

    alpha = 1.0
    clip = 4.0
    for epoch in range(epochs):
        if should_abort is not None and should_abort():
            raise Cancelled("projection layout superseded")
        epoch_f = float(epoch + 1)
        for e, (i, j, _) in enumerate(edges):
            if next_sample[e] > epoch_f:
                continue
            yi, yj = y[i], y[j]
            d2 = 0.0
            for t in range(dims):
                diff = yi[t] - yj[t]
                d2 += diff * diff
            if d2 > 0.0:
                coeff = (-2.0 * a * b * d2 ** (b - 1.0)) / (a * d2**b + 1.0)
            else:
                coeff = 0.0
            for t in range(dims):
                g = coeff * (yi[t] - yj[t])
                g = clip if g > clip else (-clip if g < -clip else g)
                yi[t] += alpha * g
                yj[t] -= alpha * g
            next_sample[e] += eps[e]

            if neg_rate > 0:
                n_neg = int((epoch_f - neg_progress[e]) / eps_neg[e])
                for _ in range(n_neg):
                    kidx = int(rng.integers(0, n))
                    if kidx == i:
                        continue
                    yk = y[kidx]
                    d2 = 0.0
                    for t in range(dims):
                        diff = yi[t] - yk[t]
                        d2 += diff * diff
                    if d2 > 0.0:
                        coeff = (2.0 * b) / ((0.001 + d2) * (a * d2**b + 1.0))
                    else:
                        coeff = 0.0
                    for t in range(dims):
                        if coeff > 0.0:
                            g = coeff * (yi[t] - yk[t])
                            g = clip if g > clip else (-clip if g < -clip else g)
                        else:
                            g = clip
                        yi[t] += alpha * g
                neg_progress[e] += n_neg * eps_neg[e]
        alpha = 1.0 * (1.0 - (epoch + 1) / float(epochs))
    return np.asarray(y, dtype=np.float64)


def reduce(
    vectors: np.ndarray,
    labels: np.ndarray,
    config: ProjectionConfig,
    should_abort: Callable[[], bool] | None = None,
) -> np.ndarray:
    """Project |source| vectors to config.target_dims coordinates.

    ``labels`` holds the control-set index per row (< 0 for unconstrained).
    Deterministic given config.seed. ``should_abort`` is polled at epoch
    boundaries so a superseded background job can stop early.
    """
    config.validate()
    n = int(vectors.shape[0])
    if n <= config.n_neighbors:
        raise TooFewDocs(f"need more than n_neighbors={config.n_neighbors} docs, got {n}")
    dist = constrained_distance_matrix(vectors, labels, config.d_same, config.d_diff)
    _, _, edges = _neighbor_graph(dist, config.n_neighbors)
    rng = np.random.Generator(np.random.PCG64(config.seed & _MASK64))
    return _sgd_layout(n, edges, config, rng, should_abort=should_abort)


# --- hierarchical density clustering ------------------------------------------------


def _mutual_reachability(coords: np.ndarray, min_samples: int) -> np.ndarray:
    n = coords.shape[0]
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    m = min(min_samples, n - 1)
    # distance to the m-th nearest other point (row sorted; index 0 is self)
    core = np.sort(dist, axis=1)[:, m]
    mr = np.maximum(dist, np.maximum(core[:, None], core[None, :]))
    np.fill_diagonal(mr, 0.0)
    return mr


def _prim_mst(mr: np.ndarray) -> list[tuple[int, int, float]]:
    """O(n^2) Prim over the complete mutual-reachability graph; ties break on index."""
    n = mr.shape[0]
    in_tree = [False] * n
    best = mr[0].copy()
    best_from = np.zeros(n, dtype=np.int64)
    in_tree[0] = True
    best[0] = np.inf
    edges: list[tuple[int, int, float]] = []
    for _ in range(n - 1):
        nxt = int(np.argmin(best))  # argmin takes the lowest index on ties
        edges.append((int(best_from[nxt]), nxt, float(best[nxt])))
        in_tree[nxt] = True
        row = mr[nxt]
        for j in range(n):
            if not in_tree[j] and row[j] < best[j]:
                best[j] = row[j]
                best_from[j] = nxt
        best[nxt] = np.inf
    return edges


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(2 * n - 1))
        self.size = [1] * n + [0] * (n - 1)
        self.next_label = n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> int:
        label = self.next_label
        self.next_label += 1
        self.parent[a] = label
        self.parent[b] = label
        self.size[label] = self.size[a] + self.size[b]
        return label


def _single_linkage(mst: list[tuple[int, int, float]], n: int) -> list[tuple[int, int, float, int]]:
    """Dendrogram rows (left_root, right_root, distance, merged_size)."""
    rows: list[tuple[int, int, float, int]] = []
    uf = _UnionFind(n)
    for u, v, w in sorted(mst, key=lambda e: (e[2], e[0], e[1])):
        ru, rv = uf.find(u), uf.find(v)
        left, right = (ru, rv) if ru < rv else (rv, ru)
        label = uf.union(left, right)
        rows.append((left, right, w, uf.size[label]))
    return rows


def _condense_tree(
    linkage: list[tuple[int, int, float, int]], n: int, min_cluster_size: int
) -> list[tuple[int, int, float, int]]:
    """Rows (parent, child, lambda, size); clusters get ids from n upward.

    Walking the dendrogram top-down: a split whose sides reach
    min_cluster_size creates child clusters (or continues the cluster when
    only one side qualifies); smaller sides fall out point by point at that
    level's lambda. Equal-weight merge cascades are expanded into one
    multiway split, because tied mutual-reachability values (several pairs
    dominated by one core distance) are common and the binary merge order
    within a tie is arbitrary.
    """
    if not linkage:
        return []
    root = n + len(linkage) - 1
    children: dict[int, tuple[int, int, float]] = {}
    for idx, (left, right, w, _) in enumerate(linkage):
        children[n + idx] = (left, right, w)

    def subtree_points(node: int) -> list[int]:
        stack, pts = [node], []
        while stack:
            cur = stack.pop()
            if cur < n:
                pts.append(cur)
            else:
                l, r, _ = children[cur]
                stack.extend((l, r))
        return sorted(pts)

    def node_size(node: int) -> int:
        return 1 if node < n else linkage[node - n][3]

    def split_frontier(node: int, w: float) -> list[int]:
        """Maximal subtrees separated at threshold w (the components with
        pairwise connection strictly below w)."""
        parts: list[int] = []
        stack = [node]
        while stack:
            cur = stack.pop()
            if cur >= n and children[cur][2] == w:
                stack.extend(children[cur][:2])
            else:
                parts.append(cur)
        parts.sort()
        return parts

    rows: list[tuple[int, int, float, int]] = []
    relabel: dict[int, int] = {root: n}
    next_label = n + 1
    queue = [root]
    while queue:
        node = queue.pop(0)
        if node < n:
            continue
        w = children[node][2]
        lam = 1.0 / w if w > 0.0 else math.inf
        cluster = relabel[node]
        parts = split_frontier(node, w)
        big = [p for p in parts if node_size(p) >= min_cluster_size]
        small = [p for p in parts if node_size(p) < min_cluster_size]
        if len(big) >= 2:
            for part in big:
                relabel[part] = next_label
                rows.append((cluster, next_label, lam, node_size(part)))
                next_label += 1
                queue.append(part)
        elif len(big) == 1:
            relabel[big[0]] = cluster
            queue.append(big[0])
        for part in small:
            for p in subtree_points(part):
                rows.append((cluster, p, lam, 1))
    return rows


def _cluster_stability(rows: list[tuple[int, int, float, int]], n: int) -> dict[int, float]:
    births: dict[int, float] = {}
    for parent, child, lam, _ in rows:
        if child >= n:
            births[child] = lam
    clusters = {parent for parent, _, _, _ in rows}
    stability = {}
    for c in clusters:
        birth = births.get(c, 0.0)
        total = 0.0
        for parent, _, lam, size in rows:
            if parent == c:
                total += (lam - birth) * size
        stability[c] = total
    return stability


def _excess_of_mass_selection(
    rows: list[tuple[int, int, float, int]], stability: dict[int, float], n: int
) -> set[int]:
    """Bottom-up selection; a parent keeps the win on ties; the root is never selected."""
    child_clusters: dict[int, list[int]] = {}
    for parent, child, _, _ in rows:
        if child >= n:
            child_clusters.setdefault(parent, []).append(child)
    if not stability:
        return set()
    root = min(stability)
    is_selected = {c: True for c in stability if c != root}
    adjusted = dict(stability)
    for node in sorted(stability, reverse=True):
        if node == root:
            continue
        subtree = sum(adjusted[c] for c in child_clusters.get(node, ()))
        if subtree > adjusted[node]:
            is_selected[node] = False
            adjusted[node] = subtree
        else:
            # deselect every descendant cluster
            stack = list(child_clusters.get(node, ()))
            while stack:
                c = stack.pop()
                if is_selected.get(c):
                    is_selected[c] = False
                stack.extend(child_clusters.get(c, ()))
    return {c for c, sel in is_selected.items() if sel}


def cluster(coords: np.ndarray, config: ProjectionConfig) -> tuple[list[list[int]], list[int]]:
    """HDBSCAN* over Euclidean distance in the reduced space.

    Returns (clusters, noise) as lists of row indices; clusters ordered by
    size descending (ties by smallest member index), members ascending.
    All-noise is a valid outcome.
    """
    config.validate()
    n = int(coords.shape[0])
    if n == 0:
        return [], []
    if n < config.min_cluster_size:
        return [], list(range(n))
    mr = _mutual_reachability(coords, config.effective_min_samples)
    mst = _prim_mst(mr)
    linkage = _single_linkage(mst, n)
    rows = _condense_tree(linkage, n, config.min_cluster_size)
    stability = _cluster_stability(rows, n)
    selected = _excess_of_mass_selection(rows, stability, n)

    parent_of: dict[int, int] = {}
    for parent, child, _, _ in rows:
        if child >= n:
            parent_of[child] = parent
    labels: dict[int, int] = {}
    for parent, child, _, _ in rows:
        if child < n:
            cur: int | None = parent
            while cur is not None and cur not in selected:
                cur = parent_of.get(cur)
            if cur is not None:
                labels[child] = cur

    groups: dict[int, list[int]] = {}
    for point, lab in labels.items():
        groups.setdefault(lab, []).append(point)
    clusters = [sorted(members) for members in groups.values()]
    clusters.sort(key=lambda ms: (-len(ms), ms[0]))
    noise = sorted(set(range(n)) - set(labels))
    return clusters, noise


# --- composition ----------------------------------------------------------------------


@dataclass
class ProjectionResult:
    clusters: list[list[str]]  # doc ids, one list per cluster
    noise: list[str]
    coordinates: np.ndarray  # |source| x target_dims
    source_ids: list[str]
    warnings: list[str]


def project(
    source_ids: list[str],
    control_groups: Sequence[Sequence[str]],
    config: ProjectionConfig,
    vector_lookup,
    ingest_seq_of,
    should_abort: Callable[[], bool] | None = None,
) -> ProjectionResult:
    """cluster(reduce(...)) over a source document list.

    ``vector_lookup(doc_id)`` returns the document vector; ``ingest_seq_of``
    orders documents inside each output list. Control groups are intersected
    with the source; an empty control list degenerates to the base metric.
    """
    config.validate()
    source_set = set(source_ids)
    groups = [[d for d in g if d in source_set] for g in control_groups]
    assignment, warnings = resolve_partition(groups)
    labels = np.asarray([assignment.get(d, -1) for d in source_ids], dtype=np.int64)
    vectors = np.stack([vector_lookup(d) for d in source_ids]) if source_ids else np.zeros((0, 0))
    coords = reduce(vectors, labels, config, should_abort=should_abort)
    cluster_rows, noise_rows = cluster(coords, config)

    def by_seq(idxs: list[int]) -> list[str]:
        return [source_ids[i] for i in sorted(idxs, key=lambda i: ingest_seq_of(source_ids[i]))]

    clusters = [by_seq(c) for c in cluster_rows]
    clusters.sort(key=lambda ms: (-len(ms), ingest_seq_of(ms[0])))
    return ProjectionResult(
        clusters=clusters,
        noise=by_seq(noise_rows),
        coordinates=coords,
        source_ids=list(source_ids),
        warnings=warnings,
    )


def coordinates_csv(result: ProjectionResult) -> str:
    """CSV export (doc_id, dim0..dimK) for external plotting."""
    dims = result.coordinates.shape[1] if result.coordinates.size else 0
    lines = ["doc_id," + ",".join(f"dim{t}" for t in range(dims))]
    for i, doc_id in enumerate(result.source_ids):
        lines.append(doc_id + "," + ",".join(repr(float(x)) for x in result.coordinates[i]))
    return "\n".join(lines) + "\n"
