"""Hybrid 1D + 2D convolutional classifier for PR matrices, in plain numpy.

Architecture for an ``n x n`` input (one channel, min-max scaled to [0, 1]):

    2-D branch:  conv 16 -> conv 32 -> conv 64 -> maxpool 2x2/2
                 -> conv 128 -> conv 256 -> global average pool      (256)
    flat branch: flatten n*n -> dense 256                            (256)
    head:        concat (512) -> dense 128 -> 64 -> 32 (dropout 0.2 each)
                 -> dense classes -> softmax

Convolutions are 3x3, stride 1, zero "same" padding; every hidden layer uses
ReLU.  Activations are kept channels-last, ``(batch, H, W, C)``.  Everything
is float64 so finite differences can verify the hand-written backward pass.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "HybridModel",
    "TrainConfig",
    "init_model",
    "forward",
    "loss_and_grads",
    "gradient_check",
    "train",
    "evaluate",
    "classification_metrics",
    "knn_baseline",
    "normalize_matrix",
    "save_model",
    "load_model",
]

CONV_A = (16, 32, 64)
CONV_B = (128, 256)
FLAT_WIDTH = 256
DENSE = (128, 64, 32)
DROPOUT = 0.2


@dataclass
class HybridModel:
    n: int
    classes: list
    params: dict
    meta: dict = field(default_factory=dict)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def copy(self) -> "HybridModel":
        return HybridModel(self.n, list(self.classes), {k: v.copy() for k, v in self.params.items()}, json.loads(json.dumps(self.meta)))

    def num_parameters(self) -> int:
        return int(sum(v.size for v in self.params.values()))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    lr: float = 1e-3
    batch_size: int = 8
    test_fraction: float = 0.2
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if not 0 <= self.test_fraction < 1:
            raise ValueError("test_fraction must lie in [0, 1)")


def _layer_shapes(n: int, n_classes: int) -> dict:
    shapes = {}
    c_in = 1
    for i, f in enumerate(CONV_A + CONV_B, start=1):
        shapes[f"conv{i}.W"] = (c_in, 3, 3, f)
        shapes[f"conv{i}.b"] = (f,)
        c_in = f
    shapes["flat.W"] = (n * n, FLAT_WIDTH)
    shapes["flat.b"] = (FLAT_WIDTH,)
    d_in = CONV_B[-1] + FLAT_WIDTH
    for i, w in enumerate(DENSE + (n_classes,), start=1):
        shapes[f"dense{i}.W"] = (d_in, w)
        shapes[f"dense{i}.b"] = (w,)
        d_in = w
    return shapes


def init_model(n: int, classes, seed: int = 0) -> HybridModel:
    """He-normal weights (variance 2 / fan-in), zero biases.

    ``classes`` is a count or a list of class labels.
    """
    if isinstance(classes, int):
        classes = list(range(classes))
    classes = list(classes)
    if n < 4:
        raise ValueError(f"network size must be >= 4, got {n}")
    if len(classes) < 2 or len(set(classes)) != len(classes):
        raise ValueError("need at least 2 distinct classes")
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in _layer_shapes(n, len(classes)).items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[:-1]))
            params[name] = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=shape)
    return HybridModel(n, classes, params, {"normalization": "minmax_per_matrix", "init_seed": int(seed)})


def normalize_matrix(values) -> np.ndarray:
    """Min-max scale one matrix to [0, 1]; a constant matrix maps to zeros."""
    v = np.asarray(getattr(values, "values", values), dtype=float)
    lo, hi = v.min(), v.max()
    if hi > lo:
        return (v - lo) / (hi - lo)
    return np.zeros_like(v)


def _batch_input(model: HybridModel, mats) -> np.ndarray:
    if isinstance(mats, np.ndarray) and mats.ndim == 2:
        mats = [mats]
    elif not isinstance(mats, (list, tuple)) and not (isinstance(mats, np.ndarray) and mats.ndim == 3):
        mats = [mats]
    arrs = []
    for m in mats:
        v = np.asarray(getattr(m, "values", m), dtype=float)
        if v.shape != (model.n, model.n):
            raise ValueError(f"expected a {model.n}x{model.n} matrix, got {v.shape}")
        arrs.append(normalize_matrix(v))
    return np.stack(arrs)


# --------------------------------------------------------------------------
# layers

def _conv_forward(x, W, b):
    B, H, Wd, C = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = sliding_window_view(xp, (3, 3), axis=(1, 2)).reshape(B * H * Wd, C * 9)
    out = cols @ W.reshape(C * 9, -1) + b
    return out.reshape(B, H, Wd, -1), cols


def _conv_backward(dout, cols, W, x_shape):
    B, H, Wd, C = x_shape
    F = W.shape[-1]
    dflat = dout.reshape(-1, F)
    dW = (cols.T @ dflat).reshape(W.shape)
    db = dflat.sum(axis=0)
    dcols = (dflat @ W.reshape(C * 9, F).T).reshape(B, H, Wd, C, 3, 3)
    dxp = np.zeros((B, H + 2, Wd + 2, C))
    for ki in range(3):
        for kj in range(3):
            dxp[:, ki:ki + H, kj:kj + Wd, :] += dcols[..., ki, kj]
    return dxp[:, 1:-1, 1:-1, :], dW, db


def _pool_forward(x):
    B, H, W, C = x.shape
    h, w = H // 2, W // 2
    blocks = x[:, :2 * h, :2 * w, :].reshape(B, h, 2, w, 2, C).transpose(0, 1, 3, 5, 2, 4).reshape(B, h, w, C, 4)
    arg = blocks.argmax(axis=-1)
    return np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0], arg


def _pool_backward(dout, arg, x_shape):
    B, H, W, C = x_shape
    h, w = H // 2, W // 2
    dblocks = np.zeros((B, h, w, C, 4))
    np.put_along_axis(dblocks, arg[..., None], dout[..., None], axis=-1)
    dx = np.zeros(x_shape)
    dx[:, :2 * h, :2 * w, :] = dblocks.reshape(B, h, w, C, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(B, 2 * h, 2 * w, C)
    return dx


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward(params, x, rng=None):
    """Forward pass on a normalized batch ``(B, n, n)``; returns (logits, cache).

    Dropout is applied iff ``rng`` is given.
    """
    cache = {}
    h = x[..., None]
    for i in range(1, 6):
        if i == 4:
            cache["pool_in"] = h.shape
            h, cache["pool_arg"] = _pool_forward(h)
        z, cols = _conv_forward(h, params[f"conv{i}.W"], params[f"conv{i}.b"])
        cache[f"conv{i}"] = (cols, h.shape, z > 0)
        h = np.maximum(z, 0)
    cache["gap_shape"] = h.shape
    conv_feat = h.mean(axis=(1, 2))

    flat_in = x.reshape(x.shape[0], -1)
    zf = flat_in @ params["flat.W"] + params["flat.b"]
    cache["flat"] = (flat_in, zf > 0)
    flat_feat = np.maximum(zf, 0)

    a = np.concatenate([conv_feat, flat_feat], axis=1)
    for i in range(1, len(DENSE) + 1):
        z = a @ params[f"dense{i}.W"] + params[f"dense{i}.b"]
        act = np.maximum(z, 0)
        mask = None
        if rng is not None:
            mask = (rng.random(act.shape) >= DROPOUT) / (1.0 - DROPOUT)
            act = act * mask
        cache[f"dense{i}"] = (a, z > 0, mask)
        a = act
    last = len(DENSE) + 1
    logits = a @ params[f"dense{last}.W"] + params[f"dense{last}.b"]
    cache[f"dense{last}"] = (a,)
    return logits, cache


def _backward(params, cache, dlogits):
    grads = {}
    last = len(DENSE) + 1
    (a,) = cache[f"dense{last}"]
    grads[f"dense{last}.W"] = a.T @ dlogits
    grads[f"dense{last}.b"] = dlogits.sum(axis=0)
    da = dlogits @ params[f"dense{last}.W"].T
    for i in range(len(DENSE), 0, -1):
        a_in, active, mask = cache[f"dense{i}"]
        if mask is not None:
            da = da * mask
        dz = da * active
        grads[f"dense{i}.W"] = a_in.T @ dz
        grads[f"dense{i}.b"] = dz.sum(axis=0)
        da = dz @ params[f"dense{i}.W"].T

    width = CONV_B[-1]
    dconv_feat, dflat_feat = da[:, :width], da[:, width:]

    flat_in, active = cache["flat"]
    dzf = dflat_feat * active
    grads["flat.W"] = flat_in.T @ dzf
    grads["flat.b"] = dzf.sum(axis=0)

    B, H, W, C = cache["gap_shape"]
    dh = np.broadcast_to(dconv_feat[:, None, None, :] / (H * W), (B, H, W, C))
    for i in range(5, 0, -1):
        cols, in_shape, active = cache[f"conv{i}"]
        dz = dh * active
        dh, grads[f"conv{i}.W"], grads[f"conv{i}.b"] = _conv_backward(dz, cols, params[f"conv{i}.W"], in_shape)
        if i == 4:
            dh = _pool_backward(dh, cache["pool_arg"], cache["pool_in"])
    return grads


def _cross_entropy(logits, y):
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(y)), y].mean()), np.exp(logp)


def loss_and_grads(model: HybridModel, mats, labels, rng=None):
    """Mean cross-entropy of a batch and its gradient for every parameter."""
    x = _batch_input(model, mats)
    y = _label_indices(model, labels)
    logits, cache = _forward(model.params, x, rng)
    loss, probs = _cross_entropy(logits, y)
    dlogits = probs.copy()
    dlogits[np.arange(len(y)), y] -= 1.0
    dlogits /= len(y)
    return loss, _backward(model.params, cache, dlogits)


def _label_indices(model, labels):
    index = {c: i for i, c in enumerate(model.classes)}
    try:
        return np.array([index[l] for l in labels], dtype=np.int64)
    except KeyError as exc:
        raise ValueError(f"label {exc.args[0]!r} is not one of the model classes {model.classes}") from None


def logits(model: HybridModel, mats, train_mode: bool = False, seed: int | None = None) -> np.ndarray:
    x = _batch_input(model, mats)
    rng = np.random.default_rng(seed) if train_mode else None
    return _forward(model.params, x, rng)[0]


def forward(model: HybridModel, pr, train_mode: bool = False, seed: int | None = None) -> np.ndarray:
    """Class probabilities for one matrix (vector) or a batch (rows).

    Dropout is applied only with ``train_mode``, with its mask drawn from
    ``seed``.
    """
    single = not isinstance(pr, (list, tuple)) and np.asarray(getattr(pr, "values", pr)).ndim == 2
    probs = _softmax(logits(model, pr, train_mode, seed))
    return probs[0] if single else probs


# --------------------------------------------------------------------------
# gradient check

def _loss_and_kinks(params, x, y):
    """Loss plus the on/off pattern of every ReLU and the max-pool winners."""
    logit, cache = _forward(params, x)
    pattern = [cache[f"conv{i}"][2] for i in range(1, 6)] + [cache["pool_arg"], cache["flat"][1]]
    pattern += [cache[f"dense{i}"][1] for i in range(1, len(DENSE) + 1)]
    return _cross_entropy(logit, y)[0], pattern


def _same_pattern(a, b) -> bool:
    return all(np.array_equal(u, v) for u, v in zip(a, b))


def gradient_check(model: HybridModel, sample, n_params: int = 200, step: float = 1e-5, seed: int = 0,
                   grad_hook=None, degenerate: float = 1e-8, abs_tol: float = 1e-7,
                   skip_kinks: bool = True, return_details: bool = False):
    """Largest relative error between analytic and central-difference gradients.

    Checks ``n_params`` parameters chosen at random, at least two from every
    tensor.  When both gradients are below ``degenerate`` in magnitude the
    ratio is meaningless; such entries count as 0 if they agree to
    ``abs_tol`` and as ``inf`` otherwise.  ``grad_hook(grads)`` may edit the
    analytic gradients in place before comparison.

    With ``skip_kinks`` an entry is left out when the +/- ``step`` forward
    passes flip a ReLU or change a max-pool winner: the loss is not
    differentiable across that step, so the difference quotient says nothing
    about the backward pass.  Min-max scaling yields exact zeros and biases
    start at zero, so pre-activations sitting exactly on a kink do occur.

    Returns the error, or ``(error, n_checked, n_kinks)`` with ``return_details``.
    """
    pr, label = sample
    model = model.copy()
    _, grads = loss_and_grads(model, [pr], [label])
    if grad_hook is not None:
        grad_hook(grads)
    x = _batch_input(model, [pr])
    y = _label_indices(model, [label])
    _, base = _loss_and_kinks(model.params, x, y)
    rng = np.random.default_rng(seed)
    names = list(model.params)
    sizes = np.array([model.params[k].size for k in names], dtype=float)
    per_tensor = np.maximum(2, np.floor(n_params * sizes / sizes.sum())).astype(int)
    worst = 0.0
    checked = kinks = 0
    for name, count in zip(names, per_tensor):
        p = model.params[name].reshape(-1)
        g = grads[name].reshape(-1)
        for idx in rng.choice(p.size, size=min(count, p.size), replace=False):
            orig = p[idx]
            p[idx] = orig + step
            lp, pat_p = _loss_and_kinks(model.params, x, y)
            p[idx] = orig - step
            lm, pat_m = _loss_and_kinks(model.params, x, y)
            p[idx] = orig
            if skip_kinks and not (_same_pattern(base, pat_p) and _same_pattern(base, pat_m)):
                kinks += 1
                continue
            checked += 1
            numeric = (lp - lm) / (2 * step)
            analytic = g[idx]
            scale = max(abs(numeric), abs(analytic))
            if scale < degenerate:
                err = 0.0 if abs(numeric - analytic) <= abs_tol else math.inf
            else:
                err = abs(numeric - analytic) / scale
            worst = max(worst, err)
    return (worst, checked, kinks) if return_details else worst


# --------------------------------------------------------------------------
# training and evaluation

def _unpack(dataset):
    mats, labels = [], []
    for item in dataset:
        m, lab = item
        mats.append(np.asarray(getattr(m, "values", m), dtype=float))
        labels.append(lab)
    return mats, labels


def stratified_split(labels, test_fraction: float, seed: int):
    """Indices (train, test); each class contributes ``round(test_fraction * count)`` to test."""
    rng = np.random.default_rng(seed)
    labels = list(labels)
    train_idx, test_idx = [], []
    for cls in sorted(set(labels), key=str):
        idx = np.array([i for i, l in enumerate(labels) if l == cls])
        rng.shuffle(idx)
        k = int(round(test_fraction * len(idx)))
        test_idx.extend(idx[:k].tolist())
        train_idx.extend(idx[k:].tolist())
    return sorted(train_idx), sorted(test_idx)


def train(dataset, config: TrainConfig | None = None, model: HybridModel | None = None):
    """Train a :class:`HybridModel` with mini-batch Adam on a stratified split.

    ``dataset`` is a sequence of ``(matrix, label)`` pairs.  Returns
    ``(model, metrics)``; metrics hold the per-epoch mean batch loss, the
    initial loss, split indices and train/test accuracy.
    """
    config = config or TrainConfig()
    mats, labels = _unpack(dataset)
    classes = sorted(set(labels), key=str)
    if len(classes) < 2:
        raise ValueError("training needs at least 2 classes")
    min_count = 5 if config.test_fraction > 0 else 1
    for cls in classes:
        if labels.count(cls) < min_count:
            raise ValueError(f"class {cls!r} has {labels.count(cls)} samples; need at least {min_count}")
    shapes = {m.shape for m in mats}
    if len(shapes) != 1:
        raise ValueError(f"matrices have mixed shapes {sorted(shapes)}")
    n = mats[0].shape[0]

    root = np.random.SeedSequence(config.seed)
    split_seed, init_seed, order_seed, drop_seed = (int(s.generate_state(1)[0]) for s in root.spawn(4))
    train_idx, test_idx = stratified_split(labels, config.test_fraction, split_seed)
    if model is None:
        model = init_model(n, classes, init_seed)
    else:
        model = model.copy()
    model.meta.update({"train_config": asdict(config)})

    order_rng = np.random.default_rng(order_seed)
    drop_rng = np.random.default_rng(drop_seed)
    m1 = {k: np.zeros_like(v) for k, v in model.params.items()}
    m2 = {k: np.zeros_like(v) for k, v in model.params.items()}
    step = 0

    train_mats = [mats[i] for i in train_idx]
    train_labels = [labels[i] for i in train_idx]
    x_train = _batch_input(model, train_mats)
    y_train = _label_indices(model, train_labels)
    initial_loss, _ = _cross_entropy(_forward(model.params, x_train)[0], y_train)

    history = []
    for epoch in range(config.epochs):
        perm = order_rng.permutation(len(train_idx))
        batch_losses = []
        for start in range(0, len(perm), config.batch_size):
            sel = perm[start:start + config.batch_size]
            logit, cache = _forward(model.params, x_train[sel], drop_rng)
            loss, probs = _cross_entropy(logit, y_train[sel])
            if not math.isfinite(loss):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}")
            dlogits = probs
            dlogits[np.arange(len(sel)), y_train[sel]] -= 1.0
            dlogits /= len(sel)
            grads = _backward(model.params, cache, dlogits)
            step += 1
            bc1 = 1 - config.beta1 ** step
            bc2 = 1 - config.beta2 ** step
            for k, g in grads.items():
                m1[k] = config.beta1 * m1[k] + (1 - config.beta1) * g
                m2[k] = config.beta2 * m2[k] + (1 - config.beta2) * g * g
                model.params[k] -= config.lr * (m1[k] / bc1) / (np.sqrt(m2[k] / bc2) + config.eps)
            batch_losses.append(loss * len(sel))
        history.append(sum(batch_losses) / len(perm))

    metrics = {
        "initial_loss": initial_loss,
        "loss": history,
        "train_index": train_idx,
        "test_index": test_idx,
        "train_accuracy": evaluate(model, [(mats[i], labels[i]) for i in train_idx])["accuracy"],
    }
    if test_idx:
        metrics["test"] = evaluate(model, [(mats[i], labels[i]) for i in test_idx])
        metrics["test_accuracy"] = metrics["test"]["accuracy"]
    return model, metrics


def predict(model: HybridModel, mats) -> list:
    probs = forward(model, list(mats))
    return [model.classes[i] for i in probs.argmax(axis=1)]


def classification_metrics(y_true, y_pred, classes=None) -> dict:
    y_true, y_pred = list(y_true), list(y_pred)
    if not y_true:
        raise ValueError("cannot score an empty dataset")
    if len(y_true) != len(y_pred):
        raise ValueError("prediction and label counts differ")
    classes = list(classes) if classes is not None else sorted(set(y_true) | set(y_pred), key=str)
    index = {c: i for i, c in enumerate(classes)}
    conf = np.zeros((len(classes), len(classes)), dtype=int)
    for t, p in zip(y_true, y_pred):
        conf[index[t], index[p]] += 1
    per_class = {}
    for c, i in index.items():
        col, row = conf[:, i].sum(), conf[i, :].sum()
        per_class[c] = {
            "precision": float(conf[i, i] / col) if col else 0.0,
            "recall": float(conf[i, i] / row) if row else 0.0,
        }
    return {
        "accuracy": float(np.trace(conf) / conf.sum()),
        "per_class": per_class,
        "confusion": conf.tolist(),
        "classes": classes,
    }


def evaluate(model: HybridModel, dataset) -> dict:
    """Accuracy, per-class precision/recall and confusion matrix (eval mode)."""
    mats, labels = _unpack(dataset)
    if not mats:
        raise ValueError("cannot evaluate on an empty dataset")
    return classification_metrics(labels, predict(model, mats), model.classes)


def knn_baseline(train_set, test_pr, k: int = 3):
    """Majority label among the ``k`` nearest training matrices (Frobenius norm).

    Ties go to the tied class whose neighbours have the smallest mean
    distance, then to the smallest label.
    """
    mats, labels = _unpack(train_set)
    if not 1 <= k <= len(mats):
        raise ValueError(f"k must lie in [1, {len(mats)}], got {k}")
    target = np.asarray(getattr(test_pr, "values", test_pr), dtype=float)
    for m in mats:
        if m.shape != target.shape:
            raise ValueError(f"shape mismatch: {m.shape} vs {target.shape}")
    dists = np.array([np.linalg.norm(m - target) for m in mats])
    nearest = np.argsort(dists, kind="stable")[:k]
    votes = {}
    for i in nearest:
        votes.setdefault(labels[i], []).append(dists[i])
    top = max(len(v) for v in votes.values())
    tied = [lab for lab, v in votes.items() if len(v) == top]
    return min(tied, key=lambda lab: (float(np.mean(votes[lab])), str(lab)))


# --------------------------------------------------------------------------
# persistence

def save_model(model: HybridModel, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"n": model.n, "classes": model.classes, "meta": model.meta, "architecture": {
        "conv_a": CONV_A, "conv_b": CONV_B, "flat": FLAT_WIDTH, "dense": DENSE, "dropout": DROPOUT}}
    with open(path, "wb") as fh:
        np.savez(fh, __header__=np.array(json.dumps(header)), **{k: v for k, v in model.params.items()})
    return path


def load_model(path) -> HybridModel:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["__header__"]))
        params = {k: data[k].copy() for k in data.files if k != "__header__"}
    expected = _layer_shapes(header["n"], len(header["classes"]))
    for name, shape in expected.items():
        if name not in params or params[name].shape != tuple(shape):
            raise ValueError(f"{path}: parameter {name} missing or misshapen")
    return HybridModel(header["n"], header["classes"], {k: params[k] for k in expected}, header["meta"])
