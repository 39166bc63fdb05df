"""Pixel-wise shallow baselines: k-means++ clustering aligned to reference
classes via the Kuhn-Munkres assignment, and a Gini random forest trained on
low-resolution labels.

All training is reproducible bit-for-bit given (data, hyperparameters, seed):
per-initialization and per-tree generators are derived from one seed sequence
and consumed in a fixed order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import N_SIMPLIFIED_CLASSES
from .preprocess import FeatureMatrix

K_CLASSES = N_SIMPLIFIED_CLASSES

# Relative slack for the Lloyd monotonicity assertion; covers float64
# rounding in the mean updates without hiding real regressions.
_INERTIA_SLACK = 1e-12

_ASSIGN_CHUNK = 262144  # rows per distance block, bounds peak memory


# ---------------------------------------------------------------------------
# Kuhn-Munkres assignment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AssignmentSolution:
    """Optimal assignment of min(n, m) row/column pairs and its total cost."""

    assignment: dict[int, int]
    total_cost: float


def _lap_square(cost: np.ndarray) -> np.ndarray:
    """Min-cost perfect matching on a square matrix (O(n^3) potentials method).

    Returns col_of_row. Column n acts as the virtual start column of each
    augmenting-path search.
    """
    n = cost.shape[0]
    u = np.zeros(n)
    v = np.zeros(n + 1)
    match = np.full(n + 1, -1, dtype=np.intp)  # column -> row
    for i in range(n):
        match[n] = i
        j0 = n
        minv = np.full(n, np.inf)
        way = np.full(n, n, dtype=np.intp)
        used = np.zeros(n + 1, dtype=bool)
        while match[j0] != -1:
            used[j0] = True
            i0 = match[j0]
            reduced = cost[i0] - u[i0] - v[:n]
            improve = ~used[:n] & (reduced < minv)
            minv[improve] = reduced[improve]
            way[improve] = j0
            candidates = np.where(used[:n], np.inf, minv)
            j1 = int(candidates.argmin())
            delta = candidates[j1]
            u[match[used]] += delta
            v[used] -= delta
            minv[~used[:n]] -= delta
            j0 = j1
        while j0 != n:
            match[j0] = match[way[j0]]
            j0 = way[j0]
    col_of_row = np.empty(n, dtype=np.intp)
    col_of_row[match[:n]] = np.arange(n)
    return col_of_row


def hungarian(cost) -> AssignmentSolution:
    """Optimal min-cost assignment of min(n, m) pairs of an n×m cost matrix.

    Rectangular inputs are padded square with a constant >= the maximum cost,
    which leaves the restriction to real rows/columns optimal.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.size == 0:
        raise ValueError(f"cost matrix must be non-empty 2-D, got shape {cost.shape}")
    if not np.isfinite(cost).all():
        raise ValueError("cost matrix must be finite")
    n, m = cost.shape
    size = max(n, m)
    padded = np.full((size, size), cost.max(), dtype=np.float64)
    padded[:n, :m] = cost
    col_of_row = _lap_square(padded)
    assignment = {
        i: int(col_of_row[i]) for i in range(n) if col_of_row[i] < m
    }
    total = float(sum(cost[i, j] for i, j in assignment.items()))
    return AssignmentSolution(assignment=assignment, total_cost=total)


def align_clusters(
    cluster_labels: np.ndarray,
    reference: np.ndarray,
    mask: np.ndarray | None = None,
) -> dict[int, int]:
    """Map cluster ids to the simplified classes maximizing total agreement.

    Builds the k×10 co-occurrence matrix over mask-true pixels with a valid
    reference label and solves the assignment on negated counts, so one
    minimizing kernel serves both orientations. The returned map is injective.
    """
    cluster_labels = np.asarray(cluster_labels).ravel()
    reference = np.asarray(reference).ravel()
    if cluster_labels.shape != reference.shape:
        raise ValueError("cluster_labels and reference must have equal length")
    keep = reference != 0
    if mask is not None:
        keep &= np.asarray(mask, dtype=bool).ravel()
    if not keep.any():
        raise ValueError("no valid pixels to align clusters against")
    clusters = cluster_labels[keep].astype(np.int64)
    classes = reference[keep].astype(np.int64)
    k = int(clusters.max()) + 1
    cooc = np.bincount(clusters * K_CLASSES + (classes - 1), minlength=k * K_CLASSES)
    cooc = cooc.reshape(k, K_CLASSES)
    solution = hungarian(-cooc.astype(np.float64))
    return {cluster: col + 1 for cluster, col in sorted(solution.assignment.items())}


def default_k(labels: np.ndarray, mask: np.ndarray | None = None) -> int:
    """Default cluster count: the number of distinct class ids among the
    labeled (non-zero), mask-true pixels of the training reference."""
    labels = np.asarray(labels).ravel()
    keep = labels != 0
    if mask is not None:
        keep &= np.asarray(mask, dtype=bool).ravel()
    k = len(np.unique(labels[keep]))
    if k == 0:
        raise ValueError("no labeled pixels to derive k from")
    return k


# ---------------------------------------------------------------------------
# k-means++ / Lloyd
# ---------------------------------------------------------------------------

@dataclass
class KMeansModel:
    centroids: np.ndarray                     # k×d float64, values in [0, 1]
    inertia: float
    cluster_to_class: dict[int, int] | None   # injective cluster -> class id
    seed: int
    n_init: int
    max_iter: int
    inertia_history: tuple[float, ...] = field(default_factory=tuple)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def d(self) -> int:
        return self.centroids.shape[1]


def _nearest(X: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Chunked nearest-centroid search; ties break to the lowest cluster id."""
    n = X.shape[0]
    labels = np.empty(n, dtype=np.int32)
    d2 = np.empty(n, dtype=np.float64)
    c2 = (centroids * centroids).sum(axis=1)
    for start in range(0, n, _ASSIGN_CHUNK):
        block = X[start : start + _ASSIGN_CHUNK]
        dist = (block * block).sum(axis=1)[:, None] - 2.0 * block @ centroids.T + c2
        np.maximum(dist, 0.0, out=dist)
        idx = dist.argmin(axis=1)
        labels[start : start + _ASSIGN_CHUNK] = idx
        d2[start : start + _ASSIGN_CHUNK] = dist[np.arange(len(block)), idx]
    return labels, d2


def _kmeanspp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """D^2-weighted seeding: each new centroid is a data point sampled with
    probability proportional to its squared distance to the chosen set."""
    n = X.shape[0]
    centroids = np.empty((k, X.shape[1]), dtype=np.float64)
    centroids[0] = X[rng.integers(n)]
    d2 = ((X - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[j] = X[idx]
        np.minimum(d2, ((X - centroids[j]) ** 2).sum(axis=1), out=d2)
    return centroids


def _lloyd(X, centroids, max_iter):
    """Lloyd iterations from the given seeding; returns (centroids, inertia, history)."""
    k = centroids.shape[0]
    history: list[float] = []
    labels = None
    for _ in range(max_iter):
        new_labels, d2 = _nearest(X, centroids)
        inertia = float(d2.sum())
        if history and inertia > history[-1] * (1.0 + _INERTIA_SLACK) + _INERTIA_SLACK:
            raise AssertionError(
                f"Lloyd inertia increased: {history[-1]!r} -> {inertia!r}"
            )
        history.append(inertia)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, X)
        sizes = np.bincount(labels, minlength=k).astype(np.float64)
        empty = sizes == 0
        nonzero = ~empty
        centroids = centroids.copy()
        centroids[nonzero] = sums[nonzero] / sizes[nonzero, None]
        if empty.any():
            # Standard remedy: relocate each empty cluster to the point
            # currently farthest from its own centroid.
            far = d2.copy()
            for cluster in np.flatnonzero(empty):
                p = int(far.argmax())
                centroids[cluster] = X[p]
                far[p] = -1.0
    return centroids, history[-1], tuple(history)


def kmeans_fit(
    features: FeatureMatrix | np.ndarray,
    k: int,
    n_init: int = 10,
    max_iter: int = 300,
    seed: int = 0,
) -> KMeansModel:
    """Best of n_init independent k-means++ seedings, each Lloyd-fitted for up
    to max_iter iterations; the lowest-inertia run wins (ties to the earliest).

    Operates on the valid rows of the feature matrix. Raises if the data has
    fewer than k distinct rows.
    """
    X = features.valid_values() if isinstance(features, FeatureMatrix) else np.asarray(features, dtype=np.float64)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if X.ndim != 2:
        raise ValueError(f"expected N×d features, got shape {X.shape}")
    if np.unique(X, axis=0).shape[0] < k:
        raise ValueError(f"fewer than k={k} distinct valid feature rows")

    streams = np.random.SeedSequence(seed).spawn(n_init)
    best: tuple[float, int, np.ndarray, tuple[float, ...]] | None = None
    for run, stream in enumerate(streams):
        rng = np.random.default_rng(stream)
        centroids = _kmeanspp_init(X, k, rng)
        centroids, inertia, history = _lloyd(X, centroids, max_iter)
        if best is None or inertia < best[0]:
            best = (inertia, run, centroids, history)
    assert best is not None
    inertia, _, centroids, history = best
    return KMeansModel(
        centroids=centroids,
        inertia=inertia,
        cluster_to_class=None,
        seed=seed,
        n_init=n_init,
        max_iter=max_iter,
        inertia_history=history,
    )


def kmeans_cluster_ids(model: KMeansModel, features: FeatureMatrix | np.ndarray) -> np.ndarray:
    """Raw nearest-centroid cluster ids for every row (no class mapping)."""
    X = features.values if isinstance(features, FeatureMatrix) else np.asarray(features, dtype=np.float64)
    if X.shape[1] != model.d:
        raise ValueError(f"feature dimension {X.shape[1]} != model dimension {model.d}")
    labels, _ = _nearest(X, model.centroids)
    return labels


def kmeans_predict(model: KMeansModel, features: FeatureMatrix | np.ndarray) -> np.ndarray:
    """Nearest-centroid class prediction through the cluster->class map."""
    if model.cluster_to_class is None:
        raise ValueError("model has no cluster_to_class map; run align_clusters first")
    clusters = kmeans_cluster_ids(model, features)
    lut = np.zeros(model.k, dtype=np.uint8)
    mapped = np.zeros(model.k, dtype=bool)
    for cluster, cls in model.cluster_to_class.items():
        lut[cluster] = cls
        mapped[cluster] = True
    if not mapped[np.unique(clusters)].all():
        missing = sorted(set(np.unique(clusters)) - set(model.cluster_to_class))
        raise ValueError(f"clusters {missing} have no class mapping")
    return lut[clusters]


# ---------------------------------------------------------------------------
# Random forest
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Tree:
    """Flat binary tree: feature[i] < 0 marks node i as a leaf."""

    feature: np.ndarray    # int16, -1 for leaves
    threshold: np.ndarray  # float64, 0 for leaves
    left: np.ndarray       # int32 child index, -1 for leaves
    right: np.ndarray      # int32 child index, -1 for leaves
    probs: np.ndarray      # n_nodes×10 float64, zero rows for internal nodes

    @property
    def n_nodes(self) -> int:
        return len(self.feature)


@dataclass
class ForestModel:
    trees: tuple[Tree, ...]
    n_trees: int
    max_depth: int
    n_features: int
    seed: int


def _leaf_probs(y: np.ndarray) -> np.ndarray:
    counts = np.bincount(y, minlength=K_CLASSES + 1)[1:]
    return counts / counts.sum()


def _best_split(X, y, idx, feature_order):
    """Scan the candidate features for the lowest weighted Gini split.

    Returns (feature, threshold) or None when every candidate is constant.
    Thresholds are midpoints between distinct neighbors, nudged down when
    rounding would merge them with the upper value.
    """
    n = len(idx)
    best = None  # (gini, feature_rank, threshold)
    y_node = y[idx]
    for rank, f in enumerate(feature_order):
        vals = X[idx, f]
        order = np.argsort(vals, kind="stable")
        sv = vals[order]
        if sv[0] == sv[-1]:
            continue
        sy = y_node[order]
        onehot = np.zeros((n, K_CLASSES), dtype=np.float64)
        onehot[np.arange(n), sy - 1] = 1.0
        cum = onehot.cumsum(axis=0)
        left_n = np.arange(1, n, dtype=np.float64)
        left_cnt = cum[:-1]
        right_cnt = cum[-1] - left_cnt
        right_n = n - left_n
        gini_left = 1.0 - ((left_cnt / left_n[:, None]) ** 2).sum(axis=1)
        gini_right = 1.0 - ((right_cnt / right_n[:, None]) ** 2).sum(axis=1)
        weighted = (left_n * gini_left + right_n * gini_right) / n
        cut = sv[1:] != sv[:-1]
        weighted = np.where(cut, weighted, np.inf)
        pos = int(weighted.argmin())
        if best is None or weighted[pos] < best[0]:
            thr = 0.5 * (sv[pos] + sv[pos + 1])
            if thr >= sv[pos + 1]:
                thr = sv[pos]
            best = (float(weighted[pos]), rank, f, float(thr))
    if best is None:
        return None
    return best[2], best[3]


def _grow_tree(X, y, idx, max_depth, m_try, rng):
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    probs: list[np.ndarray] = []

    d = X.shape[1]
    zero = np.zeros(K_CLASSES)

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        probs.append(zero)
        return len(feature) - 1

    def build(idx, depth, node):
        y_node = y[idx]
        pure = y_node[0] == y_node[-1] and (y_node == y_node[0]).all()
        if depth >= max_depth or len(idx) < 2 or pure:
            probs[node] = _leaf_probs(y_node)
            return
        order = rng.choice(d, size=m_try, replace=False)
        split = _best_split(X, y, idx, order)
        if split is None:
            probs[node] = _leaf_probs(y_node)
            return
        f, thr = split
        go_left = X[idx, f] <= thr
        feature[node] = f
        threshold[node] = thr
        left[node] = new_node()
        build(idx[go_left], depth + 1, left[node])
        right[node] = new_node()
        build(idx[~go_left], depth + 1, right[node])

    root = new_node()
    build(idx, 0, root)
    return Tree(
        feature=np.array(feature, dtype=np.int16),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int32),
        right=np.array(right, dtype=np.int32),
        probs=np.vstack(probs),
    )


def rf_fit(
    features: FeatureMatrix | np.ndarray,
    labels: np.ndarray,
    mask: np.ndarray | None = None,
    n_trees: int = 100,
    max_depth: int = 10,
    seed: int = 0,
) -> ForestModel:
    """Train a Gini random forest on the masked-in labeled pixels.

    Each tree sees a same-size bootstrap sample and draws ceil(sqrt(d))
    candidate features per node from its own derived generator, so results
    do not depend on any execution order.
    """
    if isinstance(features, FeatureMatrix):
        base_mask = features.valid_mask.copy()
        X_all = features.values
    else:
        X_all = np.asarray(features, dtype=np.float64)
        base_mask = np.ones(len(X_all), dtype=bool)
    labels = np.asarray(labels).ravel()
    if len(labels) != len(X_all):
        raise ValueError("labels length must match feature rows")
    if mask is not None:
        base_mask &= np.asarray(mask, dtype=bool).ravel()
    base_mask &= labels != 0
    if not base_mask.any():
        raise ValueError("no valid labeled pixels to train on")

    X = np.ascontiguousarray(X_all[base_mask], dtype=np.float64)
    y = labels[base_mask].astype(np.int64)
    if (y > K_CLASSES).any():
        raise ValueError("labels must be simplified class ids 1..10")

    n = len(X)
    m_try = math.ceil(math.sqrt(X.shape[1]))
    trees = []
    for stream in np.random.SeedSequence(seed).spawn(n_trees):
        rng = np.random.default_rng(stream)
        boot = rng.integers(0, n, size=n)
        trees.append(_grow_tree(X, y, boot, max_depth, m_try, rng))
    return ForestModel(
        trees=tuple(trees),
        n_trees=n_trees,
        max_depth=max_depth,
        n_features=X.shape[1],
        seed=seed,
    )


def tree_apply(tree: Tree, X: np.ndarray) -> np.ndarray:
    """Vectorized root-to-leaf routing; returns the leaf probability rows."""
    node = np.zeros(len(X), dtype=np.int32)
    active = np.flatnonzero(tree.feature[node] >= 0)
    while len(active):
        cur = node[active]
        go_left = X[active, tree.feature[cur]] <= tree.threshold[cur]
        node[active] = np.where(go_left, tree.left[cur], tree.right[cur])
        active = active[tree.feature[node[active]] >= 0]
    return tree.probs[node]


def rf_predict_proba(model: ForestModel, features: FeatureMatrix | np.ndarray) -> np.ndarray:
    """Mean leaf probability vector across the ensemble, in tree order."""
    X = features.values if isinstance(features, FeatureMatrix) else np.asarray(features, dtype=np.float64)
    if X.shape[1] != model.n_features:
        raise ValueError(
            f"feature dimension {X.shape[1]} != model dimension {model.n_features}"
        )
    acc = np.zeros((len(X), K_CLASSES), dtype=np.float64)
    for tree in model.trees:
        acc += tree_apply(tree, X)
    return acc / model.n_trees


def rf_predict(model: ForestModel, features: FeatureMatrix | np.ndarray) -> np.ndarray:
    """Argmax of the averaged leaf probabilities; ties break to the lowest id."""
    proba = rf_predict_proba(model, features)
    return (proba.argmax(axis=1) + 1).astype(np.uint8)
