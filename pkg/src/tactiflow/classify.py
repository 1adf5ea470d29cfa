"""Gesture classification over fixed-length frame windows.

Features are per-frame grid-pooled channel means (frame-major, then cell,
then channel), standardized by training statistics. The classifier is
multinomial logistic regression trained by mini-batch SGD on cross-entropy
with inverted dropout on the feature vectors. Deliberately small and
hand-checkable: what is being compared is the input representation
(raw pressure vs flow-augmented), not the model.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import (CLASS_NAMES, N_CLASSES, GestureClass, first_window,
                      sliding_windows, split_dataset)
from .errors import ConfigError, NumericError

STD_FLOOR = 1e-8

RAW = "raw"
AUGMENTED = "augmented"


@dataclass(frozen=True)
class FeatureConfig:
    """Pooling grid and channel selection.

    ``channels_used``: "raw" pools only the pressure channel, "augmented"
    pools pressure, flow magnitude and flow direction.
    """

    pool_rows: int = 8
    pool_cols: int = 8
    channels_used: str = AUGMENTED

    def __post_init__(self):
        if self.pool_rows < 1 or self.pool_cols < 1:
            raise ConfigError("pool grid dims must be >= 1")
        if self.channels_used not in (RAW, AUGMENTED):
            raise ConfigError("channels_used must be 'raw' or 'augmented'")

    @property
    def n_channels(self):
        return 1 if self.channels_used == RAW else 3

    def feature_length(self, L):
        return self.pool_rows * self.pool_cols * self.n_channels * L

    def to_dict(self):
        return {"pool_rows": self.pool_rows, "pool_cols": self.pool_cols,
                "channels_used": self.channels_used}


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    epochs: int = 100
    dropout_p: float = 0.3
    batch_size: int = 32
    seed: int = 0
    L: int = 5

    def __post_init__(self):
        # lr 0 is allowed so no-update behavior stays testable.
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be nonnegative")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError("dropout_p must lie in [0, 1)")
        if self.epochs < 0 or self.batch_size < 1 or self.L < 1:
            raise ConfigError("bad training configuration")


def _frame_channels(frame, n_channels):
    """View a window element as an (H, W, C) array with C >= n_channels."""
    if hasattr(frame, "stacked"):          # AugmentedFrame
        arr = frame.stacked()
    elif hasattr(frame, "pixels"):         # TactileImage
        arr = np.asarray(frame.pixels)[:, :, None]
    else:
        arr = np.asarray(frame)
        if arr.ndim == 2:
            arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ConfigError("frame must be 2-D or (H, W, C)")
    if arr.shape[2] < n_channels:
        raise ConfigError("frame has %d channels, feature config needs %d"
                          % (arr.shape[2], n_channels))
    return arr[:, :, :n_channels]


def cell_means(image, pool_rows, pool_cols):
    """Per-cell channel means over an integer partition of the image grid.

    Returns (pool_rows * pool_cols, C), cells in row-major order.
    """
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    h, w, c = arr.shape
    if h < pool_rows or w < pool_cols:
        raise ConfigError("image %dx%d smaller than pool grid %dx%d"
                          % (h, w, pool_rows, pool_cols))
    r_edges = (np.arange(pool_rows + 1) * h) // pool_rows
    c_edges = (np.arange(pool_cols + 1) * w) // pool_cols
    sums = np.add.reduceat(arr, r_edges[:-1], axis=0)
    sums = np.add.reduceat(sums, c_edges[:-1], axis=1)
    counts = np.outer(np.diff(r_edges), np.diff(c_edges))
    return (sums / counts[:, :, None]).reshape(pool_rows * pool_cols, c)


def extract_features(window, config):
    """Pool an L-frame window into one feature vector.

    Ordering: frame-major, then cell (row-major), then channel.
    """
    if not window:
        raise ConfigError("empty window")
    shapes = set()
    blocks = []
    for frame in window:
        arr = _frame_channels(frame, config.n_channels)
        shapes.add(arr.shape[:2])
        blocks.append(cell_means(arr, config.pool_rows, config.pool_cols).ravel())
    if len(shapes) != 1:
        raise ConfigError("mixed frame dimensions in window: %r" % shapes)
    return np.concatenate(blocks)


def sequence_cell_means(seq, pool_rows=8, pool_cols=8):
    """Per-frame pooled features for a whole (T, H, W, C) sequence.

    The (T, cells, C) result is the cached building block for window
    features: raw-variant vectors are the C=1 slice, and blank padding
    frames contribute all-zero rows, exactly matching extract_features.
    """
    seq = np.asarray(seq)
    if seq.ndim == 3:
        seq = seq[:, :, :, None]
    return np.stack([cell_means(f, pool_rows, pool_cols) for f in seq])


def window_feature_matrix(cache, starts, L, n_channels):
    """Assemble window features from a per-frame cache (T, cells, C).

    ``starts`` may index past T - L; missing frames are zero blocks
    (blank-frame padding).
    """
    t, cells, c = cache.shape
    block = cells * n_channels
    out = np.zeros((len(starts), L * block))
    sub = cache[:, :, :n_channels].reshape(t, block)
    for row, s in enumerate(starts):
        avail = min(L, t - s)
        out[row, :avail * block] = sub[s:s + avail].ravel()
    return out


@dataclass
class ClassifierModel:
    """Softmax regression weights plus the feature pipeline statistics."""

    weights: np.ndarray
    bias: np.ndarray
    feature_config: FeatureConfig
    feature_mean: np.ndarray
    feature_std: np.ndarray
    n_classes: int = N_CLASSES
    train_losses: list = field(default_factory=list, repr=False)

    def standardize(self, X):
        return (X - self.feature_mean) / self.feature_std

    def save_json(self, path):
        doc = {
            "feature_config": self.feature_config.to_dict(),
            "n_classes": self.n_classes,
            "feature_mean": self.feature_mean.tolist(),
            "feature_std": self.feature_std.tolist(),
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(doc, f, sort_keys=True)
            f.write("\n")

    @classmethod
    def load_json(cls, path):
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
        return cls(weights=np.array(doc["weights"]),
                   bias=np.array(doc["bias"]),
                   feature_config=FeatureConfig(**doc["feature_config"]),
                   feature_mean=np.array(doc["feature_mean"]),
                   feature_std=np.array(doc["feature_std"]),
                   n_classes=doc["n_classes"])


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy_loss_and_grad(weights, bias, X, y):
    """Mean softmax cross-entropy and its analytic gradient.

    Returns (loss, grad_weights, grad_bias). Kept free of dropout and
    standardization so it can be checked against finite differences.
    """
    n = X.shape[0]
    probs = softmax(X @ weights.T + bias)
    eps = 1e-300  # guards log(0) for saturated probabilities
    loss = -np.mean(np.log(probs[np.arange(n), y] + eps))
    delta = probs
    delta[np.arange(n), y] -= 1.0
    grad_w = delta.T @ X / n
    grad_b = delta.mean(axis=0)
    return loss, grad_w, grad_b


def train_on_features(X, y, feature_config, train_config, n_classes=N_CLASSES):
    """SGD training on a precomputed feature matrix."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.intp)
    if X.ndim != 2 or len(X) != len(y):
        raise ConfigError("feature matrix and labels disagree")
    counts = np.bincount(y, minlength=n_classes)
    if (counts == 0).any():
        missing = [i for i in range(n_classes) if counts[i] == 0]
        raise ConfigError("training set has empty classes: %r" % missing)

    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.maximum(sd, STD_FLOOR)
    Xs = (X - mu) / sd

    d = X.shape[1]
    W = np.zeros((n_classes, d))
    b = np.zeros(n_classes)
    rng = np.random.default_rng(train_config.seed)
    lr = train_config.learning_rate
    p = train_config.dropout_p
    losses = []
    n = len(Xs)
    for epoch in range(train_config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        batches = 0
        for start in range(0, n, train_config.batch_size):
            idx = order[start:start + train_config.batch_size]
            Xb = Xs[idx]
            if p > 0.0:
                keep = rng.random(Xb.shape) >= p
                Xb = Xb * keep / (1.0 - p)
            loss, gw, gb = cross_entropy_loss_and_grad(W, b, Xb, y[idx])
            if not np.isfinite(loss):
                raise NumericError("non-finite loss at epoch %d batch %d"
                                   % (epoch, batches))
            W -= lr * gw
            b -= lr * gb
            epoch_loss += loss
            batches += 1
        losses.append(epoch_loss / max(batches, 1))

    return ClassifierModel(weights=W, bias=b, feature_config=feature_config,
                           feature_mean=mu, feature_std=sd,
                           n_classes=n_classes, train_losses=losses)


def train(windows, labels, feature_config, train_config, n_classes=N_CLASSES):
    """Train from raw windows (lists of frames); features are extracted here."""
    X = np.stack([extract_features(w, feature_config) for w in windows])
    return train_on_features(X, labels, feature_config, train_config, n_classes)


def predict_features(model, X):
    probs = softmax(model.standardize(np.atleast_2d(X)) @ model.weights.T + model.bias)
    return probs.argmax(axis=1), probs


def predict(model, window):
    """(predicted class index, probability vector); ties go to the lowest index."""
    x = extract_features(window, model.feature_config)
    cls, probs = predict_features(model, x)
    return int(cls[0]), probs[0]


@dataclass
class EvalReport:
    """Confusion counts and accuracies, possibly merged across seeds."""

    confusion: np.ndarray
    per_class_accuracy: np.ndarray
    mean_accuracy: float
    seeds: list
    per_seed_accuracies: list
    accuracy_std: float = 0.0
    variant: str = ""
    L: int = 0

    def normalized_confusion(self):
        totals = self.confusion.sum(axis=1, keepdims=True).astype(np.float64)
        totals[totals == 0] = 1.0
        return self.confusion / totals

    def to_dict(self):
        return {
            "variant": self.variant,
            "L": self.L,
            "seeds": list(self.seeds),
            "per_seed_accuracies": [float(a) for a in self.per_seed_accuracies],
            "mean_accuracy": float(self.mean_accuracy),
            "accuracy_std": float(self.accuracy_std),
            "per_class_accuracy": [float(a) for a in self.per_class_accuracy],
            "confusion_counts": self.confusion.tolist(),
            "normalized_confusion": self.normalized_confusion().tolist(),
            "class_names": [CLASS_NAMES[c] for c in GestureClass],
        }


def _report_from_confusion(confusion, seeds, per_seed_accuracies, variant="", L=0):
    confusion = np.asarray(confusion, dtype=np.int64)
    totals = confusion.sum(axis=1).astype(np.float64)
    safe = np.where(totals == 0, 1.0, totals)
    per_class = np.diag(confusion) / safe
    accs = list(per_seed_accuracies)
    std = float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0
    return EvalReport(confusion=confusion, per_class_accuracy=per_class,
                      mean_accuracy=float(np.mean(accs)), seeds=list(seeds),
                      per_seed_accuracies=accs, accuracy_std=std,
                      variant=variant, L=L)


def _confusion_from_predictions(y_true, y_pred, n_classes):
    conf = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(conf, (y_true, y_pred), 1)
    return conf


def evaluate(model, sample_frames, labels, L):
    """Evaluate on the first L frames of each sample (blank-padded)."""
    if not sample_frames:
        raise ConfigError("empty test set")
    y_true = np.asarray(labels, dtype=np.intp)
    preds = np.empty(len(sample_frames), dtype=np.intp)
    for i, frames in enumerate(sample_frames):
        cls, _ = predict(model, first_window(frames, L))
        preds[i] = cls
    conf = _confusion_from_predictions(y_true, preds, model.n_classes)
    per_class = np.diag(conf) / np.maximum(conf.sum(axis=1), 1)
    mean_acc = float(per_class[conf.sum(axis=1) > 0].mean())
    return _report_from_confusion(conf, seeds=[], per_seed_accuracies=[mean_acc], L=L)


def _variant_channels(variant):
    if variant not in (RAW, AUGMENTED):
        raise ConfigError("unknown variant %r" % variant)
    return 1 if variant == RAW else 3


def experiment_single(caches, labels, split, variant, seed, L,
                       feature_config, train_config):
    """One (variant, seed) train/eval pass on shared split and windows."""
    n_ch = _variant_channels(variant)
    fc = FeatureConfig(pool_rows=feature_config.pool_rows,
                       pool_cols=feature_config.pool_cols,
                       channels_used=variant)
    train_rows = []
    train_labels = []
    for i in split.train_indices:
        t = caches[i].shape[0]
        starts = list(range(t - L + 1)) if t >= L else [0]
        train_rows.append(window_feature_matrix(caches[i], starts, L, n_ch))
        train_labels.extend([labels[i]] * len(starts))
    X_train = np.vstack(train_rows)
    y_train = np.asarray(train_labels, dtype=np.intp)

    tc = TrainConfig(learning_rate=train_config.learning_rate,
                     epochs=train_config.epochs,
                     dropout_p=train_config.dropout_p,
                     batch_size=train_config.batch_size,
                     seed=seed, L=L)
    model = train_on_features(X_train, y_train, fc, tc)

    X_test = np.vstack([window_feature_matrix(caches[i], [0], L, n_ch)
                        for i in split.test_indices])
    y_test = np.asarray([labels[i] for i in split.test_indices], dtype=np.intp)
    pred, _ = predict_features(model, X_test)
    conf = _confusion_from_predictions(y_test, pred, N_CLASSES)
    per_class = np.diag(conf) / np.maximum(conf.sum(axis=1), 1)
    mean_acc = float(per_class[conf.sum(axis=1) > 0].mean())
    return model, conf, mean_acc


def run_experiment(dataset, caches, L=5, variants=(RAW, AUGMENTED),
                   seeds=(0, 1, 2), test_per_class=30,
                   feature_config=None, train_config=None):
    """Paired raw-vs-augmented evaluation across seeds.

    ``caches`` holds one (T, cells, 3) pooled-feature array per sample (see
    sequence_cell_means). For each seed, the split and window boundaries are
    shared by all variants, so the comparison isolates the representation.
    """
    if not seeds:
        raise ConfigError("need at least one seed")
    feature_config = feature_config or FeatureConfig()
    train_config = train_config or TrainConfig()
    labels = [int(s.label) for s in dataset.samples]
    confs = {v: [] for v in variants}
    accs = {v: [] for v in variants}
    for seed in seeds:
        split = split_dataset(dataset, test_per_class, seed)
        for variant in variants:
            _, conf, acc = experiment_single(caches, labels, split, variant,
                                              seed, L, feature_config, train_config)
            confs[variant].append(conf)
            accs[variant].append(acc)
    return {v: _report_from_confusion(np.sum(confs[v], axis=0), seeds, accs[v],
                                      variant=v, L=L)
            for v in variants}


def sweep_L(dataset, caches, L_values=(1, 2, 3, 4, 5, 6),
            variants=(RAW, AUGMENTED), seeds=(0, 1, 2), test_per_class=30,
            feature_config=None, train_config=None):
    """Retrain per (L, variant, seed); returns (rows, reports).

    rows: one dict per run with keys L, variant, seed, accuracy (the sweep
    CSV payload). reports: {(L, variant): merged EvalReport}.
    """
    rows = []
    reports = {}
    for L in L_values:
        if L < 1:
            raise ConfigError("L values must be >= 1")
        res = run_experiment(dataset, caches, L=L, variants=variants, seeds=seeds,
                             test_per_class=test_per_class,
                             feature_config=feature_config,
                             train_config=train_config)
        for variant in variants:
            rep = res[variant]
            reports[(L, variant)] = rep
            for seed, acc in zip(rep.seeds, rep.per_seed_accuracies):
                rows.append({"L": L, "variant": variant, "seed": seed,
                             "accuracy": acc})
    return rows, reports
