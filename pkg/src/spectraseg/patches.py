"""Patch-level separability analysis: extraction, PCA, baseline classifiers.

Patches are size x size x 36 blocks labeled by their center pixel.  PCA is
computed from the covariance eigendecomposition using a cyclic Jacobi
sweep (through the Gram dual when there are fewer samples than features).
Three baseline classifiers (1-nearest-neighbor, nearest centroid,
multinomial logistic regression trained by gradient descent) quantify how
separable the patch classes are; the separability report summarizes
centroid geometry, silhouette, and centroid-overlap fractions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimError, RankError, SizeError
from .spectral import SpectralCube
from .synth import make_rng

_JACOBI_TOL = 1e-12
_JACOBI_MAX_SWEEPS = 30


@dataclass
class PatchDataset:
    patch_size: int
    vectors: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        lab = np.asarray(self.labels, dtype=np.int64)
        if v.ndim != 2 or v.shape[0] < 1:
            raise DimError("vectors must be (N >= 1, D)")
        if lab.shape != (v.shape[0],):
            raise DimError("labels must align with vectors")
        self.vectors, self.labels = v, lab

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1


def extract_patches(cube: SpectralCube, labels: np.ndarray, size: int = 7, stride: int = 1) -> PatchDataset:
    """Valid-region patch extraction; each patch is labeled by its center pixel.

    Patch count is ceil((H - size + 1) / stride) * ceil((W - size + 1) / stride).
    """
    h, w = cube.height, cube.width
    if size % 2 == 0:
        raise SizeError(f"patch size must be odd, got {size}")
    if size > min(h, w):
        raise SizeError(f"patch size {size} exceeds image dims {h}x{w}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    lab = np.asarray(labels)
    if lab.shape != (h, w):
        raise DimError("labels must match cube dims")

    win = np.lib.stride_tricks.sliding_window_view(cube.data, (size, size), axis=(1, 2))
    win = win[:, ::stride, ::stride]                 # (36, ny, nx, size, size)
    ny, nx = win.shape[1], win.shape[2]
    vectors = win.transpose(1, 2, 0, 3, 4).reshape(ny * nx, -1)

    half = size // 2
    ys = half + stride * np.arange(ny)
    xs = half + stride * np.arange(nx)
    patch_labels = lab[np.ix_(ys, xs)].reshape(-1)
    return PatchDataset(patch_size=size, vectors=vectors.copy(), labels=patch_labels)


def jacobi_eigh(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric eigendecomposition by cyclic Jacobi rotations.

    Sweeps the upper triangle row by row until the off-diagonal mass falls
    below tolerance.  Returns (eigenvalues, eigenvectors-as-columns) in
    descending eigenvalue order.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n) or not np.allclose(a, a.T, atol=1e-10):
        raise ValueError("matrix must be symmetric")
    v = np.eye(n)
    scale = max(np.abs(a).max(), 1.0)
    for _ in range(_JACOBI_MAX_SWEEPS):
        off = np.sqrt(max((a**2).sum() - (np.diag(a) ** 2).sum(), 0.0))
        if off <= _JACOBI_TOL * scale * n:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= _JACOBI_TOL * scale:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
                rot_p = c * a[p, :] - s * a[q, :]
                rot_q = s * a[p, :] + c * a[q, :]
                a[p, :], a[q, :] = rot_p, rot_q
                rot_p = c * v[:, p] - s * v[:, q]
                rot_q = s * v[:, p] + c * v[:, q]
                v[:, p], v[:, q] = rot_p, rot_q
    eigvals = np.diag(a).copy()
    order = np.argsort(eigvals)[::-1]
    return eigvals[order], v[:, order]


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray


def pca_fit(data: PatchDataset, k: int) -> PcaModel:
    """Top-k principal axes of the patch vectors.

    Uses the covariance eigenproblem directly when D <= N, otherwise the
    N x N Gram dual with eigenvector lifting; either way the eigensolver
    is the cyclic Jacobi above.
    """
    x = data.vectors
    n, d = x.shape
    if not 1 <= k <= min(n, d):
        raise RankError(f"k must be in 1..{min(n, d)}, got {k}")
    mean = x.mean(axis=0)
    xc = x - mean
    if d <= n:
        cov = xc.T @ xc / (n - 1) if n > 1 else np.zeros((d, d))
        eigvals, eigvecs = jacobi_eigh(cov)
        comps = eigvecs[:, :k].T
        vals = eigvals[:k]
    else:
        gram = xc @ xc.T / (n - 1) if n > 1 else np.zeros((n, n))
        eigvals, eigvecs = jacobi_eigh(gram)
        vals = eigvals[:k]
        comps = np.zeros((k, d))
        for i in range(k):
            lam = eigvals[i]
            if lam > 1e-12:
                comps[i] = xc.T @ eigvecs[:, i] / np.sqrt(lam * (n - 1))
            else:
                comps[i] = _complete_direction(comps[:i], d)
    vals = np.maximum(vals, 0.0)
    for i in range(k):
        comps[i] /= np.linalg.norm(comps[i])
    return PcaModel(mean=mean, components=comps, eigenvalues=vals)


def _complete_direction(existing: np.ndarray, d: int) -> np.ndarray:
    # Deterministic orthonormal completion for null directions.
    for j in range(d):
        cand = np.zeros(d)
        cand[j] = 1.0
        if existing.size:
            cand -= existing.T @ (existing @ cand)
        norm = np.linalg.norm(cand)
        if norm > 1e-6:
            return cand / norm
    raise RankError("cannot complete an orthonormal basis")


def pca_project(model: PcaModel, vector: np.ndarray) -> np.ndarray:
    """Project one vector (D,) or a stack (N, D) onto the principal axes."""
    x = np.asarray(vector, dtype=np.float64)
    d = model.mean.shape[0]
    if x.shape[-1] != d or x.ndim not in (1, 2):
        raise DimError(f"vector must have length {d}")
    return (x - model.mean) @ model.components.T


@dataclass
class ClassifierReport:
    accuracies: dict[str, float]
    confusions: dict[str, np.ndarray]
    n_train: int
    n_test: int


def _stratified_split(labels: np.ndarray, seed: int, test_fraction: float = 0.2):
    rng = make_rng(seed, 7)
    train_idx, test_idx = [], []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        idx = rng.permutation(idx)
        n_test = max(1, int(round(test_fraction * len(idx))))
        test_idx.append(idx[:n_test])
        train_idx.append(idx[n_test:])
    return np.sort(np.concatenate(train_idx)), np.sort(np.concatenate(test_idx))


def nearest_neighbor_predict(train_x: np.ndarray, train_y: np.ndarray, query: np.ndarray,
                             block: int = 256) -> np.ndarray:
    """1-NN with Euclidean distance; ties resolve to the lowest train index."""
    preds = np.empty(query.shape[0], dtype=np.int64)
    train_sq = (train_x**2).sum(axis=1)
    for start in range(0, query.shape[0], block):
        q = query[start : start + block]
        d2 = (q**2).sum(axis=1)[:, None] - 2.0 * q @ train_x.T + train_sq[None, :]
        preds[start : start + block] = train_y[np.argmin(d2, axis=1)]
    return preds


def _fit_logistic(x: np.ndarray, y: np.ndarray, n_classes: int, iters: int = 300, lr: float = 0.5):
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std[std < 1e-12] = 1.0
    xs = (x - mean) / std
    wmat = np.zeros((xs.shape[1], n_classes))
    bias = np.zeros(n_classes)
    onehot = np.eye(n_classes)[y]
    for _ in range(iters):
        z = xs @ wmat + bias
        z -= z.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        g = (p - onehot) / xs.shape[0]
        wmat -= lr * (xs.T @ g)
        bias -= lr * g.sum(axis=0)
    return mean, std, wmat, bias


def _logistic_predict(params, query: np.ndarray) -> np.ndarray:
    mean, std, wmat, bias = params
    z = ((query - mean) / std) @ wmat + bias
    return np.argmax(z, axis=1)


def _confusion(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def fit_baselines(data: PatchDataset, split_seed: int) -> ClassifierReport:
    """Held-out accuracy of the three baselines on a seeded stratified split."""
    labels = data.labels
    classes, counts = np.unique(labels, return_counts=True)
    if len(classes) < 2:
        raise DataError("need at least 2 classes")
    if counts.min() < 10:
        raise DataError(f"every class needs >= 10 samples, worst has {counts.min()}")
    n_classes = int(labels.max()) + 1

    train_idx, test_idx = _stratified_split(labels, split_seed)
    tr_x, tr_y = data.vectors[train_idx], labels[train_idx]
    te_x, te_y = data.vectors[test_idx], labels[test_idx]

    centroids = np.stack([
        tr_x[tr_y == c].mean(axis=0) if np.any(tr_y == c) else np.full(tr_x.shape[1], np.inf)
        for c in range(n_classes)
    ])

    preds = {
        "1nn": nearest_neighbor_predict(tr_x, tr_y, te_x),
        "nearest_centroid": np.argmin(
            ((te_x[:, None, :] - centroids[None]) ** 2).sum(axis=2), axis=1
        ),
        "logistic_regression": _logistic_predict(_fit_logistic(tr_x, tr_y, n_classes), te_x),
    }
    accuracies = {name: float((p == te_y).mean()) for name, p in preds.items()}
    confusions = {name: _confusion(te_y, p, n_classes) for name, p in preds.items()}
    return ClassifierReport(
        accuracies=accuracies, confusions=confusions, n_train=len(tr_y), n_test=len(te_y)
    )


@dataclass
class SeparabilityReport:
    centroid_distances: np.ndarray
    mean_silhouette: float
    overlap_fraction: float
    per_class_overlap: np.ndarray


def separability_report(points: np.ndarray, labels: np.ndarray) -> SeparabilityReport:
    """Cluster-geometry summary of projected patches.

    The overlap fraction counts points whose nearest foreign centroid is
    strictly closer than their own class centroid.  Silhouette follows the
    usual (b - a) / max(a, b) with singleton clusters scored 0.
    """
    pts = np.asarray(points, dtype=np.float64)
    lab = np.asarray(labels, dtype=np.int64)
    if pts.ndim != 2 or lab.shape != (pts.shape[0],):
        raise DimError("points must be (N, k) with matching labels")
    classes = np.unique(lab)
    centroids = np.stack([pts[lab == c].mean(axis=0) for c in classes])
    centroid_distances = np.sqrt(
        ((centroids[:, None, :] - centroids[None]) ** 2).sum(axis=2)
    )

    d_to_centroid = np.sqrt(((pts[:, None, :] - centroids[None]) ** 2).sum(axis=2))
    own_col = np.searchsorted(classes, lab)
    own = d_to_centroid[np.arange(len(lab)), own_col]
    foreign = d_to_centroid.copy()
    foreign[np.arange(len(lab)), own_col] = np.inf
    nearest_foreign = foreign.min(axis=1)
    overlap_mask = nearest_foreign < own
    per_class_overlap = np.array([overlap_mask[lab == c].mean() for c in classes])

    d_full = np.sqrt(((pts[:, None, :] - pts[None]) ** 2).sum(axis=2))
    sil = np.zeros(len(lab))
    for i in range(len(lab)):
        same = lab == lab[i]
        if same.sum() <= 1:
            continue
        a = d_full[i, same].sum() / (same.sum() - 1)
        b = min(d_full[i, lab == c].mean() for c in classes if c != lab[i])
        denom = max(a, b)
        sil[i] = (b - a) / denom if denom > 0 else 0.0
    return SeparabilityReport(
        centroid_distances=centroid_distances,
        mean_silhouette=float(sil.mean()),
        overlap_fraction=float(overlap_mask.mean()),
        per_class_overlap=per_class_overlap,
    )


def onenn_segment(train: PatchDataset, cube: SpectralCube, labels_shape=None) -> np.ndarray:
    """Per-pixel 1-NN segmentation over the valid patch region.

    Returns a (H - size + 1, W - size + 1) label map aligned with patch
    centers; border pixels outside the valid region are not predicted.
    """
    size = train.patch_size
    dense = extract_patches(cube, np.zeros((cube.height, cube.width), dtype=np.int64), size, stride=1)
    preds = nearest_neighbor_predict(train.vectors, train.labels, dense.vectors)
    ny = cube.height - size + 1
    nx = cube.width - size + 1
    return preds.reshape(ny, nx)
