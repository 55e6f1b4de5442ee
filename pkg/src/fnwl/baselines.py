"""Classical classifiers operating on flattened windows.

All four are deterministic given their training data: tie-breaking rules
are pinned (lowest class index for score ties, lowest feature index then
lowest threshold for equal split gains, lower training index for equal
neighbour distances, the single nearest neighbour for k-NN vote ties).
Scores returned by ``predict_scores`` are usable for one-vs-rest AUC.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

VAR_SMOOTHING = 1e-9


def _check_fit_inputs(x: np.ndarray, y: np.ndarray, n_classes: int | None):
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ShapeError(f"X {x.shape} and y {y.shape} are inconsistent")
    if len(y) == 0:
        raise ValueError("empty training set")
    if y.min() < 0:
        raise ValueError(f"negative label {y.min()}")
    k = int(y.max()) + 1 if n_classes is None else n_classes
    present = np.bincount(y, minlength=k) > 0
    if not present.all():
        missing = np.flatnonzero(~present).tolist()
        raise ValueError(f"classes {missing} are missing from the training set")
    return x, y, k


def _check_test_inputs(x: np.ndarray, n_features: int) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != n_features:
        raise ShapeError(
            f"test matrix shape {x.shape} does not match the {n_features} "
            "training features"
        )
    return x


class GaussianNaiveBayes:
    """Per-class, per-feature Gaussians with variance smoothing.

    Smoothing adds ``1e-9 * max feature variance`` to every class variance;
    scores are log-posteriors evaluated in log space.
    """

    def fit(self, x, y, n_classes: int | None = None) -> "GaussianNaiveBayes":
        x, y, k = _check_fit_inputs(x, y, n_classes)
        self.n_classes = k
        self.n_features = x.shape[1]
        eps = VAR_SMOOTHING * float(x.var(axis=0).max())
        self.means = np.stack([x[y == c].mean(axis=0) for c in range(k)])
        self.variances = np.stack([x[y == c].var(axis=0) for c in range(k)]) + eps
        counts = np.bincount(y, minlength=k)
        self.log_priors = np.log(counts / len(y))
        return self

    def predict_scores(self, x) -> np.ndarray:
        x = _check_test_inputs(x, self.n_features)
        scores = np.empty((x.shape[0], self.n_classes))
        for c in range(self.n_classes):
            diff = x - self.means[c]
            ll = -0.5 * (
                np.log(2.0 * np.pi * self.variances[c]) + diff**2 / self.variances[c]
            ).sum(axis=1)
            scores[:, c] = self.log_priors[c] + ll
        return scores

    def predict(self, x) -> np.ndarray:
        return self.predict_scores(x).argmax(axis=1)


class NearestCentroid:
    """Predict the class whose training mean is nearest in Euclidean distance."""

    def fit(self, x, y, n_classes: int | None = None) -> "NearestCentroid":
        x, y, k = _check_fit_inputs(x, y, n_classes)
        self.n_classes = k
        self.n_features = x.shape[1]
        self.centroids = np.stack([x[y == c].mean(axis=0) for c in range(k)])
        return self

    def predict_scores(self, x) -> np.ndarray:
        x = _check_test_inputs(x, self.n_features)
        d2 = (
            np.square(x).sum(axis=1)[:, None]
            - 2.0 * x @ self.centroids.T
            + np.square(self.centroids).sum(axis=1)[None, :]
        )
        return -np.sqrt(np.maximum(d2, 0.0))

    def predict(self, x) -> np.ndarray:
        return self.predict_scores(x).argmax(axis=1)


@dataclass
class _TreeNode:
    prediction: int
    class_fractions: np.ndarray
    feature: int = -1
    threshold: float = 0.0
    left: "_TreeNode | None" = None
    right: "_TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


def _gini(counts: np.ndarray) -> float:
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts / total
    return 1.0 - float(np.square(p).sum())


class DecisionTree:
    """CART with Gini impurity on continuous features.

    Candidate thresholds are midpoints of consecutive distinct sorted
    values; a sample goes left when ``x[feature] <= threshold``. The best
    split maximises the impurity decrease, breaking ties by the lowest
    feature index and then the lowest threshold. Nodes become leaves when
    pure, when no split has positive gain, or at the depth cap. Leaves
    predict the majority class (ties to the lowest index) and score with
    their class frequencies.
    """

    def __init__(self, max_depth: int | None = None):
        if max_depth is not None and max_depth < 0:
            raise ValueError(f"max_depth must be >= 0, got {max_depth}")
        self.max_depth = max_depth

    def fit(self, x, y, n_classes: int | None = None) -> "DecisionTree":
        x, y, k = _check_fit_inputs(x, y, n_classes)
        self.n_classes = k
        self.n_features = x.shape[1]
        self.root = self._grow(x, y, depth=0)
        return self

    def _leaf(self, y: np.ndarray) -> _TreeNode:
        counts = np.bincount(y, minlength=self.n_classes)
        return _TreeNode(
            prediction=int(counts.argmax()),
            class_fractions=counts / counts.sum(),
        )

    def _best_split(self, x: np.ndarray, y: np.ndarray):
        n = len(y)
        totals = np.bincount(y, minlength=self.n_classes).astype(np.float64)
        parent = _gini(totals)
        order = np.argsort(x, axis=0, kind="stable")  # (n, D)
        xs = np.take_along_axis(x, order, axis=0)
        ys = y[order]
        # Gini via sums of squared class counts, accumulated class by class
        # to keep memory at O(n * D)
        ssq_left = np.zeros((n - 1, x.shape[1]))
        ssq_right = np.zeros((n - 1, x.shape[1]))
        for c in range(self.n_classes):
            left = np.cumsum(ys == c, axis=0)[:-1].astype(np.float64)
            ssq_left += np.square(left)
            ssq_right += np.square(totals[c] - left)
        n_left = np.arange(1, n, dtype=np.float64)[:, None]
        n_right = n - n_left
        gini_left = 1.0 - ssq_left / np.square(n_left)
        gini_right = 1.0 - ssq_right / np.square(n_right)
        gain = parent - (n_left * gini_left + n_right * gini_right) / n
        valid = xs[1:] > xs[:-1]
        gain = np.where(valid, gain, -np.inf)
        best = float(gain.max())
        if not np.isfinite(best) or best <= 0.0:
            return None
        # argmax over (feature, position) order: lowest feature index wins,
        # then the lowest threshold (positions ascend with the sorted values)
        flat = np.argmax(gain.T)
        feature, pos = divmod(int(flat), n - 1)
        threshold = 0.5 * (xs[pos, feature] + xs[pos + 1, feature])
        return feature, float(threshold), best

    def _grow(self, x: np.ndarray, y: np.ndarray, depth: int) -> _TreeNode:
        node = self._leaf(y)
        if (y == y[0]).all():
            return node
        if self.max_depth is not None and depth >= self.max_depth:
            return node
        found = self._best_split(x, y)
        if found is None:
            return node
        feature, threshold, _ = found
        mask = x[:, feature] <= threshold
        if mask.all() or not mask.any():  # midpoint rounded onto a value
            return node
        node.feature = feature
        node.threshold = threshold
        node.left = self._grow(x[mask], y[mask], depth + 1)
        node.right = self._grow(x[~mask], y[~mask], depth + 1)
        return node

    def _route(self, row: np.ndarray) -> _TreeNode:
        node = self.root
        while not node.is_leaf:
            node = node.left if row[node.feature] <= node.threshold else node.right
        return node

    def predict(self, x) -> np.ndarray:
        x = _check_test_inputs(x, self.n_features)
        return np.array([self._route(row).prediction for row in x], dtype=np.int64)

    def predict_scores(self, x) -> np.ndarray:
        x = _check_test_inputs(x, self.n_features)
        return np.stack([self._route(row).class_fractions for row in x])


class KNearestNeighbors:
    """Euclidean k-NN with majority vote; scores are vote fractions."""

    def __init__(self, k: int = 5):
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        self.k = k

    def fit(self, x, y, n_classes: int | None = None) -> "KNearestNeighbors":
        x, y, k_classes = _check_fit_inputs(x, y, n_classes)
        if self.k > len(y):
            raise ValueError(f"k={self.k} exceeds the {len(y)} training points")
        self.n_classes = k_classes
        self.n_features = x.shape[1]
        self.x_train = x
        self.y_train = y
        return self

    def _neighbours(self, x: np.ndarray) -> np.ndarray:
        d2 = (
            np.square(x).sum(axis=1)[:, None]
            - 2.0 * x @ self.x_train.T
            + np.square(self.x_train).sum(axis=1)[None, :]
        )
        # stable sort: equal distances resolve to the lower training index
        return np.argsort(d2, axis=1, kind="stable")[:, : self.k]

    def predict_scores(self, x) -> np.ndarray:
        x = _check_test_inputs(x, self.n_features)
        nn = self._neighbours(x)
        votes = np.stack(
            [np.bincount(self.y_train[row], minlength=self.n_classes) for row in nn]
        )
        return votes / self.k

    def predict(self, x) -> np.ndarray:
        x = _check_test_inputs(x, self.n_features)
        nn = self._neighbours(x)
        out = np.empty(len(x), dtype=np.int64)
        for i, row in enumerate(nn):
            votes = np.bincount(self.y_train[row], minlength=self.n_classes)
            top = votes.max()
            if (votes == top).sum() > 1:
                out[i] = self.y_train[row[0]]  # vote tie: the single nearest decides
            else:
                out[i] = int(votes.argmax())
        return out


def gaussian_nb_fit_predict(train_x, train_y, test_x, n_classes=None):
    clf = GaussianNaiveBayes().fit(train_x, train_y, n_classes)
    return clf.predict(test_x), clf.predict_scores(test_x)


def nearest_centroid_fit_predict(train_x, train_y, test_x, n_classes=None):
    clf = NearestCentroid().fit(train_x, train_y, n_classes)
    return clf.predict(test_x), clf.predict_scores(test_x)


def decision_tree_fit_predict(train_x, train_y, test_x, max_depth=None, n_classes=None):
    clf = DecisionTree(max_depth=max_depth).fit(train_x, train_y, n_classes)
    return clf.predict(test_x), clf.predict_scores(test_x)


def knn_fit_predict(train_x, train_y, test_x, k=5, n_classes=None):
    clf = KNearestNeighbors(k=k).fit(train_x, train_y, n_classes)
    return clf.predict(test_x), clf.predict_scores(test_x)


BASELINES = {
    "nb": gaussian_nb_fit_predict,
    "centroid": nearest_centroid_fit_predict,
    "tree": decision_tree_fit_predict,
    "knn": knn_fit_predict,
}
