"""Training loop, augmentation, class weighting, and IoU evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimError, FormatError, ShapeError
from .net.ops import weighted_ce_loss
from .net.optim import adam_init, adam_step, sgd_step
from .net.unet import UNetModel, deserialize_model, serialize_model, unet_backward, unet_forward, unet_forward_cached
from .spectral import SpectralCube
from .synth import LabeledScene, make_rng

# Sub-stream tags for the training PRNG.
_STREAM_SPLIT = 10
_STREAM_SHUFFLE = 11
_STREAM_DROPOUT = 12


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 4
    optimizer: str = "sgd"
    lr: float = 0.001
    augment: bool = True
    val_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError("optimizer must be 'sgd' or 'adam'")
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigError("val_fraction must be in (0, 1)")


@dataclass
class History:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_mean_iou: list[float] = field(default_factory=list)


def compute_class_weights(label_maps, n_classes: int) -> np.ndarray:
    """Inverse-frequency weights w_c = N / (C * n_c); absent classes get 0."""
    counts = np.zeros(n_classes, dtype=np.int64)
    for lab in label_maps:
        lab = np.asarray(lab)
        if lab.min() < 0 or lab.max() >= n_classes:
            raise ValueError("label id outside 0..n_classes-1")
        counts += np.bincount(lab.ravel(), minlength=n_classes)
    total = counts.sum()
    if total < 1:
        raise ValueError("need at least one labeled pixel")
    weights = np.zeros(n_classes)
    present = counts > 0
    weights[present] = total / (n_classes * counts[present])
    return weights


_DIHEDRAL_OPS = tuple(range(8))


def _dihedral(arr: np.ndarray, op: int, spatial_axes: tuple[int, int]) -> np.ndarray:
    out = arr
    if op >= 4:
        out = np.flip(out, axis=spatial_axes[1])
    out = np.rot90(out, k=op % 4, axes=spatial_axes)
    return np.ascontiguousarray(out)


def augment(scene: LabeledScene) -> list[LabeledScene]:
    """The 8 dihedral variants of a square scene (4 flip variants otherwise)."""
    square = scene.cube.height == scene.cube.width
    ops = _DIHEDRAL_OPS if square else (0, 2, 4, 6)
    out = []
    for op in ops:
        cube = SpectralCube(data=_dihedral(scene.cube.data, op, (1, 2)))
        labels = _dihedral(scene.labels, op, (0, 1))
        out.append(LabeledScene(cube=cube, labels=labels, fingerprint=scene.fingerprint ^ op))
    return out


def split_dataset(scenes: list[LabeledScene], config: TrainConfig):
    """Seeded train/validation split; same (scenes, config) -> same split."""
    n = len(scenes)
    if n < 5:
        raise ConfigError(f"need at least 5 scenes, got {n}")
    n_val = int(round(config.val_fraction * n))
    n_val = min(max(n_val, 1), n - 1)
    order = make_rng(config.seed, _STREAM_SPLIT).permutation(n)
    val_idx = np.sort(order[:n_val])
    train_idx = np.sort(order[n_val:])
    return [scenes[i] for i in train_idx], [scenes[i] for i in val_idx]


def _derived_seed(seed: int, *key: int) -> int:
    state = np.random.SeedSequence([int(seed), *map(int, key)]).generate_state(1, np.uint64)
    return int(state[0])


def evaluate_scenes(model: UNetModel, scenes: list[LabeledScene], class_weights: np.ndarray):
    """Mean loss over scenes plus the IoU report from the pooled confusion."""
    n_classes = model.config.n_classes
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    losses = []
    for scene in scenes:
        probs = unet_forward(model, scene.cube.data[None])
        losses.append(weighted_ce_loss(probs, scene.labels[None], class_weights).value)
        pred = np.argmax(probs[0], axis=0)
        confusion += _confusion_matrix(pred, scene.labels, n_classes)
    report = report_from_confusion(confusion)
    return float(np.mean(losses)), report


def train(model: UNetModel, scenes: list[LabeledScene], config: TrainConfig):
    """Train in place on the given scenes; returns (model, History).

    Class weights come from the training split only; the validation split
    is never augmented.  All shuffling and dropout derives from the config
    seed, so identical inputs give bit-identical checkpoints.
    """
    train_scenes, val_scenes = split_dataset(scenes, config)
    n_classes = model.config.n_classes
    class_weights = compute_class_weights([s.labels for s in train_scenes], n_classes)

    if config.augment:
        train_scenes = [v for s in train_scenes for v in augment(s)]

    inputs = np.stack([s.cube.data for s in train_scenes])
    targets = np.stack([s.labels for s in train_scenes])

    adam_state = adam_init(model.params) if config.optimizer == "adam" else None
    history = History()
    for epoch in range(config.epochs):
        epoch_rng = make_rng(_derived_seed(config.seed, _STREAM_SHUFFLE, epoch), 0)
        order = epoch_rng.permutation(len(train_scenes))
        batch_losses = []
        for step, start in enumerate(range(0, len(order), config.batch_size)):
            idx = order[start : start + config.batch_size]
            x = inputs[idx]
            y = targets[idx]
            drop_seed = _derived_seed(config.seed, _STREAM_DROPOUT, epoch, step)
            probs, cache = unet_forward_cached(model, x, training=True, dropout_seed=drop_seed)
            loss = weighted_ce_loss(probs, y, class_weights)
            grads = unet_backward(model, cache, loss.grad_logits)
            if adam_state is None:
                sgd_step(model.params, grads, config.lr)
            else:
                adam_step(model.params, grads, adam_state, config.lr)
            batch_losses.append(loss.value)
        val_loss, val_report = evaluate_scenes(model, val_scenes, class_weights)
        history.train_loss.append(float(np.mean(batch_losses)))
        history.val_loss.append(val_loss)
        history.val_mean_iou.append(val_report.mean_iou)
    return model, history


def predict_mask(model: UNetModel, cube: SpectralCube) -> np.ndarray:
    """Per-pixel argmax of the class probabilities (lowest id wins ties)."""
    probs = unet_forward(model, cube.data[None])
    return np.argmax(probs[0], axis=0)


@dataclass
class IouReport:
    """Per-class IoU (NaN where a class is absent from both masks), the mean
    over defined classes, and the gt-by-pred confusion matrix."""

    per_class_iou: np.ndarray
    mean_iou: float
    confusion: np.ndarray


def _confusion_matrix(pred: np.ndarray, gt: np.ndarray, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (gt.ravel(), pred.ravel()), 1)
    return cm


def report_from_confusion(confusion: np.ndarray) -> IouReport:
    n_classes = confusion.shape[0]
    tp = np.diag(confusion).astype(np.float64)
    fp = confusion.sum(axis=0) - tp
    fn = confusion.sum(axis=1) - tp
    union = tp + fp + fn
    per_class = np.full(n_classes, np.nan)
    defined = union > 0
    per_class[defined] = tp[defined] / union[defined]
    mean = float(per_class[defined].mean()) if defined.any() else float("nan")
    return IouReport(per_class_iou=per_class, mean_iou=mean, confusion=confusion)


def iou(pred: np.ndarray, gt: np.ndarray, n_classes: int) -> IouReport:
    """Intersection over union per class, mean over classes present in
    either mask, plus the confusion matrix."""
    p = np.asarray(pred)
    g = np.asarray(gt)
    if p.shape != g.shape:
        raise DimError(f"mask shapes differ: {p.shape} vs {g.shape}")
    if p.min() < 0 or g.min() < 0 or p.max() >= n_classes or g.max() >= n_classes:
        raise ValueError("mask ids must be < n_classes")
    return report_from_confusion(_confusion_matrix(p, g, n_classes))


def checkpoint_save(path, model: UNetModel) -> None:
    Path(path).write_bytes(serialize_model(model))


def checkpoint_load(path) -> UNetModel:
    raw = Path(path).read_bytes()
    try:
        return deserialize_model(raw)
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None
