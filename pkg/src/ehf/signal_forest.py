"""Local-extrema labels for price paths and a small from-scratch random forest.

Days whose price sticks out by more than a relative threshold beta against
both neighbors are labeled 0 ("skip": a local max or min about to revert);
everything else is 1 ("trade allowed"). The forest forecasts tomorrow-blind
labels from the two most recent log returns so the hedging engine can gate
rebalances without lookahead.
"""

from __future__ import annotations

import csv
import math
import zipfile
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError, IntegrityError, ShapeError
from .market_sim import PathSet

_LABEL_RULES = ("extremum", "prose")


# ---------------------------------------------------------------------------
# labeling
# ---------------------------------------------------------------------------

def label_extrema(path: np.ndarray, beta: float, rule: str = "extremum") -> np.ndarray:
    """Per-day {0,1} labels for one price path; ends default to 1.

    Day t is labeled 0 under the default rule iff it beats both neighbors by
    more than beta in relative terms:

        up-spike:   (S_t - S_{t-1})/S_{t-1} > beta  and  (S_t - S_{t+1})/S_{t+1} > beta
        down-spike: (S_{t-1} - S_t)/S_{t-1} > beta  and  (S_{t+1} - S_t)/S_t > beta

    rule="prose" keeps the alternative monotone-middle reading (higher than
    yesterday and lower than tomorrow, or vice versa) for comparison; it marks
    trend days rather than turning points and is not used by the pipeline.
    """
    s = np.asarray(path, dtype=np.float64)
    if s.ndim != 1 or len(s) < 3:
        raise DomainError(f"need at least 3 prices to label, got shape {s.shape}")
    if beta < 0:
        raise DomainError(f"beta must be >= 0, got {beta}")
    if rule not in _LABEL_RULES:
        raise ConfigurationError(f"unknown labeling rule {rule!r}")
    prev, cur, nxt = s[:-2], s[1:-1], s[2:]
    if rule == "extremum":
        up_spike = ((cur - prev) / prev > beta) & ((cur - nxt) / nxt > beta)
        down_spike = ((prev - cur) / prev > beta) & ((nxt - cur) / cur > beta)
        is_zero = up_spike | down_spike
    else:
        rising = ((cur - prev) / prev > beta) & ((nxt - cur) / cur > beta)
        falling = ((prev - cur) / prev > beta) & ((cur - nxt) / nxt > beta)
        is_zero = rising | falling
    labels = np.ones(len(s), dtype=np.int8)
    labels[1:-1][is_zero] = 0
    return labels


def label_matrix(paths: PathSet, beta: float, rule: str = "extremum") -> np.ndarray:
    """Ground-truth labels for every hedge day: [n_paths, n_steps] in {0,1}.

    Vectorized equivalent of label_extrema over rows, truncated to the
    n_steps decision days (the final price has no tomorrow and is not a
    decision day anyway).
    """
    s = paths.prices
    if beta < 0:
        raise DomainError(f"beta must be >= 0, got {beta}")
    if rule not in _LABEL_RULES:
        raise ConfigurationError(f"unknown labeling rule {rule!r}")
    prev, cur, nxt = s[:, :-2], s[:, 1:-1], s[:, 2:]
    if rule == "extremum":
        is_zero = (((cur - prev) / prev > beta) & ((cur - nxt) / nxt > beta)) | \
                  (((prev - cur) / prev > beta) & ((nxt - cur) / cur > beta))
    else:
        is_zero = (((cur - prev) / prev > beta) & ((nxt - cur) / cur > beta)) | \
                  (((prev - cur) / prev > beta) & ((cur - nxt) / nxt > beta))
    labels = np.ones_like(s, dtype=np.int8)
    labels[:, 1:-1][is_zero] = 0
    return labels[:, : paths.n_steps]


def feature_table(paths: PathSet) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Classifier features for every day with two prior returns.

    Returns (X, path_row, day): X[k] = (log(S_t/S_{t-1}), log(S_{t-1}/S_{t-2}))
    for day = t in [2, n_steps), flattened path-major. Days 0-1 are excluded —
    at prediction time they carry no usable history and are forced to label 1.
    """
    r = np.diff(np.log(paths.prices), axis=1)
    days = np.arange(2, paths.n_steps)
    r1 = r[:, days - 1]
    r2 = r[:, days - 2]
    X = np.stack([r1.ravel(), r2.ravel()], axis=1)
    path_row = np.repeat(np.arange(paths.n_paths), len(days))
    day = np.tile(days, paths.n_paths)
    return X, path_row, day


# ---------------------------------------------------------------------------
# decision trees
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 50
    max_depth: int = 12          # 0 = grow until pure
    min_leaf: int = 5
    bootstrap_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ConfigurationError(f"need at least one tree, got {self.n_trees}")
        if self.min_leaf < 1 or self.max_depth < 0:
            raise ConfigurationError("min_leaf must be >= 1 and max_depth >= 0")
        if not (0.0 < self.bootstrap_fraction <= 1.0):
            raise ConfigurationError(
                f"bootstrap fraction must be in (0, 1], got {self.bootstrap_fraction}")


@dataclass(frozen=True)
class DecisionTree:
    """Flat-array binary tree; feature[i] = -1 marks node i as a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_class: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)


@dataclass(frozen=True)
class Forest:
    trees: tuple
    config: ForestConfig
    n_features: int


def _best_split(X: np.ndarray, y: np.ndarray, min_leaf: int):
    """Exhaustive weighted-Gini minimization over midpoint thresholds.

    Returns (feature, threshold, gini) or None if no split leaves both sides
    with at least min_leaf samples.
    """
    n = len(y)
    best = (math.inf, -1, 0.0)
    sizes_left = np.arange(1, n, dtype=np.float64)
    sizes_right = n - sizes_left
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ones_left = np.cumsum(y[order])[:-1].astype(np.float64)
        valid = (xs[1:] != xs[:-1]) & (sizes_left >= min_leaf) & (sizes_right >= min_leaf)
        if not valid.any():
            continue
        ones_right = float(y.sum()) - ones_left
        gini_left = 1.0 - (ones_left / sizes_left) ** 2 \
            - ((sizes_left - ones_left) / sizes_left) ** 2
        gini_right = 1.0 - (ones_right / sizes_right) ** 2 \
            - ((sizes_right - ones_right) / sizes_right) ** 2
        gini = (sizes_left * gini_left + sizes_right * gini_right) / n
        gini[~valid] = math.inf
        i = int(np.argmin(gini))
        if gini[i] < best[0]:
            best = (gini[i], f, 0.5 * (xs[i] + xs[i + 1]))
    if best[1] < 0:
        return None
    return best[1], best[2], best[0]


def _fit_tree(X: np.ndarray, y: np.ndarray, cfg: ForestConfig,
              rng: np.random.Generator) -> DecisionTree:
    n = len(y)
    n_boot = max(1, int(round(cfg.bootstrap_fraction * n)))
    boot = rng.integers(0, n, size=n_boot)
    Xb, yb = X[boot], y[boot]
    feature, threshold, left, right, leaf_class = [], [], [], [], []

    def alloc() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        leaf_class.append(-1)
        return len(feature) - 1

    stack = [(alloc(), np.arange(n_boot), 0)]
    while stack:
        node, rows, depth = stack.pop()
        ys = yb[rows]
        ones = int(ys.sum())
        split = None
        depth_ok = cfg.max_depth == 0 or depth < cfg.max_depth
        if 0 < ones < len(rows) and depth_ok and len(rows) >= 2 * cfg.min_leaf:
            split = _best_split(Xb[rows], ys, cfg.min_leaf)
        if split is None:
            leaf_class[node] = 1 if 2 * ones >= len(rows) else 0
            continue
        f, thr, _ = split
        go_left = Xb[rows, f] <= thr
        feature[node] = f
        threshold[node] = thr
        left[node] = alloc()
        right[node] = alloc()
        stack.append((left[node], rows[go_left], depth + 1))
        stack.append((right[node], rows[~go_left], depth + 1))
    return DecisionTree(
        feature=np.asarray(feature, dtype=np.int32),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        leaf_class=np.asarray(leaf_class, dtype=np.int8),
    )


def _tree_predict(tree: DecisionTree, X: np.ndarray) -> np.ndarray:
    idx = np.zeros(len(X), dtype=np.int64)
    active = np.flatnonzero(tree.feature[idx] >= 0)
    while active.size:
        node = idx[active]
        go_left = X[active, tree.feature[node]] <= tree.threshold[node]
        idx[active] = np.where(go_left, tree.left[node], tree.right[node])
        active = active[tree.feature[idx[active]] >= 0]
    return tree.leaf_class[idx]


def fit_forest(X: np.ndarray, y: np.ndarray, cfg: ForestConfig,
               jobs: int = 1) -> Forest:
    """Bootstrap-aggregated Gini trees; deterministic given cfg.seed.

    Trees are independent given their per-tree seed streams, so jobs > 1 fits
    them on a thread pool without changing the result.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) != len(y):
        raise ShapeError(f"features {X.shape} do not match {len(y)} labels")
    if len(y) < 2:
        raise DomainError("need at least 2 samples to fit")
    if not np.isin(y, (0, 1)).all():
        raise DomainError("labels must be binary in {0, 1}")
    y = y.astype(np.int8)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_trees)
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            trees = tuple(pool.map(
                lambda s: _fit_tree(X, y, cfg, np.random.default_rng(s)), seeds))
    else:
        trees = tuple(_fit_tree(X, y, cfg, np.random.default_rng(s)) for s in seeds)
    return Forest(trees=trees, config=cfg, n_features=X.shape[1])


def predict_labels(forest: Forest, X: np.ndarray) -> np.ndarray:
    """Majority vote across trees; exact ties go to 1 (trade)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != forest.n_features:
        raise ShapeError(
            f"expected [n, {forest.n_features}] features, got {X.shape}")
    votes = np.zeros(len(X), dtype=np.int64)
    for tree in forest.trees:
        votes += _tree_predict(tree, X)
    return (2 * votes >= len(forest.trees)).astype(np.int8)


def predict_label_matrix(forest: Forest, paths: PathSet) -> np.ndarray:
    """[n_paths, n_steps] forecast labels; days 0-1 forced to 1 (no history)."""
    X, path_row, day = feature_table(paths)
    labels = np.ones((paths.n_paths, paths.n_steps), dtype=np.int8)
    labels[path_row, day] = predict_labels(forest, X)
    return labels


# ---------------------------------------------------------------------------
# reporting and persistence
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClassificationReport:
    accuracy: float
    confusion: np.ndarray       # rows = truth, cols = prediction
    prevalence_one: float       # fraction of truth labeled 1
    baseline_accuracy: float    # always-predict-majority accuracy

    def __str__(self):
        c = self.confusion
        return (
            f"accuracy {self.accuracy:.4f} (majority baseline "
            f"{self.baseline_accuracy:.4f}, class-1 prevalence {self.prevalence_one:.4f})\n"
            f"confusion [truth x prediction]:\n"
            f"          pred 0  pred 1\n"
            f"  true 0 {c[0, 0]:7d} {c[0, 1]:7d}\n"
            f"  true 1 {c[1, 0]:7d} {c[1, 1]:7d}")


def classification_report(predictions: np.ndarray, truth: np.ndarray) -> ClassificationReport:
    predictions = np.asarray(predictions).ravel()
    truth = np.asarray(truth).ravel()
    if len(predictions) != len(truth):
        raise ShapeError(
            f"{len(predictions)} predictions vs {len(truth)} truth labels")
    confusion = np.zeros((2, 2), dtype=np.int64)
    for t in (0, 1):
        for p in (0, 1):
            confusion[t, p] = int(np.sum((truth == t) & (predictions == p)))
    total = len(truth)
    prevalence = float(np.mean(truth == 1))
    return ClassificationReport(
        accuracy=float(np.trace(confusion)) / total,
        confusion=confusion,
        prevalence_one=prevalence,
        baseline_accuracy=max(prevalence, 1.0 - prevalence),
    )


def save_forest(filename, forest: Forest) -> None:
    payload = {
        "meta": np.array([
            forest.config.n_trees, forest.config.max_depth, forest.config.min_leaf,
            forest.config.seed, forest.n_features], dtype=np.int64),
        "bootstrap_fraction": np.array([forest.config.bootstrap_fraction]),
    }
    for i, tree in enumerate(forest.trees):
        payload[f"t{i}_feature"] = tree.feature
        payload[f"t{i}_threshold"] = tree.threshold
        payload[f"t{i}_left"] = tree.left
        payload[f"t{i}_right"] = tree.right
        payload[f"t{i}_leaf"] = tree.leaf_class
    np.savez_compressed(filename, **payload)


def load_forest(filename) -> Forest:
    try:
        data = np.load(filename, allow_pickle=False)
    except (ValueError, OSError, zipfile.BadZipFile) as exc:
        raise IntegrityError(f"{filename}: not a forest archive ({exc})") from exc
    with data:
        try:
            n_trees, max_depth, min_leaf, seed, n_features = data["meta"]
            cfg = ForestConfig(
                n_trees=int(n_trees), max_depth=int(max_depth),
                min_leaf=int(min_leaf),
                bootstrap_fraction=float(data["bootstrap_fraction"][0]),
                seed=int(seed))
            trees = tuple(
                DecisionTree(
                    feature=data[f"t{i}_feature"], threshold=data[f"t{i}_threshold"],
                    left=data[f"t{i}_left"], right=data[f"t{i}_right"],
                    leaf_class=data[f"t{i}_leaf"])
                for i in range(cfg.n_trees))
        except KeyError as exc:
            raise IntegrityError(f"{filename}: malformed forest file ({exc})") from exc
    return Forest(trees=trees, config=cfg, n_features=int(n_features))


def write_label_csv(filename, paths: PathSet, beta: float,
                    predicted: np.ndarray | None = None) -> None:
    """Feature/label table: path_id, day, r1, r2, label, predicted."""
    X, path_row, day = feature_table(paths)
    truth = label_matrix(paths, beta)
    with open(filename, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path_id", "day", "r1", "r2", "label", "predicted"])
        for k in range(len(X)):
            i, t = path_row[k], day[k]
            pred = "" if predicted is None else int(predicted[i, t])
            writer.writerow([int(paths.path_ids[i]), int(t),
                             repr(float(X[k, 0])), repr(float(X[k, 1])),
                             int(truth[i, t]), pred])
