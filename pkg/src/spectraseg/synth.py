"""Deterministic synthetic scene generator with arthroscopy-style degradations.

Scenes are seeded Voronoi partitions over a small library of canonical
tissue reflectance spectra, so classes differ by spectrum rather than
texture.  A degradation stack (Gaussian blur, per-band exponential
attenuation, additive noise) imitates underwater imaging conditions.

All randomness flows through numpy's Philox generator, a counter-based
4x64 PRNG, keyed from explicit seeds; identical (config, seed) pairs
give bitwise identical scenes on every platform.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import RangeError, ShapeError
from .spectral import GRID, N_BANDS, SpectralCube, clamp_spectrum

# Sub-stream tags so scene layout and degradation noise never share a stream.
_STREAM_SCENE = 0
_STREAM_DEGRADE = 1

TISSUE_NAMES = ("bone", "cartilage", "acl", "meniscus", "synovium", "fat", "vessel", "capsule")


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Philox generator keyed by (seed, stream)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


def _tissue_curves() -> dict[str, np.ndarray]:
    x = (GRID.wavelengths_nm - 380.0) / 350.0
    return {
        "bone": 0.58 + 0.28 * x,
        "cartilage": 0.42 + 0.18 * np.sin(np.pi * x),
        "acl": 0.28 + 0.38 * _sigmoid((x - 0.55) / 0.10),
        "meniscus": 0.22 + 0.26 * np.exp(-(((x - 0.35) / 0.16) ** 2)),
        "synovium": 0.15 + 0.34 * np.exp(-(((x - 0.78) / 0.14) ** 2)),
        "fat": 0.72 - 0.34 * x + 0.16 * np.exp(-(((x - 0.55) / 0.10) ** 2)),
        "vessel": 0.10 + 0.60 * _sigmoid((x - 0.72) / 0.07),
        "capsule": 0.40 + 0.14 * np.cos(2 * np.pi * x),
    }


@dataclass
class TissueClassSpec:
    """One synthetic tissue class: id, name, canonical spectrum, jitter level."""

    class_id: int
    name: str
    base_spectrum: np.ndarray
    spectral_jitter: float = 0.0

    def __post_init__(self):
        if self.class_id < 0:
            raise ValueError("class_id must be >= 0")
        if self.spectral_jitter < 0:
            raise ValueError("spectral_jitter must be >= 0")
        self.base_spectrum = clamp_spectrum(self.base_spectrum)


def default_tissue_library(n_classes: int, jitter: float = 0.02) -> list[TissueClassSpec]:
    """The first ``n_classes`` canonical tissue spectra (2..8 classes).

    The shipped curves are smooth and pairwise at least 0.5 apart in L2
    over the 36 bands.
    """
    if not 2 <= n_classes <= 8:
        raise RangeError(f"n_classes must be in 2..8, got {n_classes}")
    curves = _tissue_curves()
    return [
        TissueClassSpec(class_id=i, name=name, base_spectrum=curves[name], spectral_jitter=jitter)
        for i, name in enumerate(TISSUE_NAMES[:n_classes])
    ]


def water_attenuation_profile() -> np.ndarray:
    """Relative per-band attenuation rising toward long wavelengths, max 1."""
    x = (GRID.wavelengths_nm - 380.0) / 350.0
    return x**2


@dataclass
class SceneConfig:
    """Layout and appearance parameters for one generated scene."""

    height: int
    width: int
    classes: list[TissueClassSpec]
    n_regions: int
    shading_strength: float = 0.0
    seed: int = 0
    dominant_share: float = 0.6

    def __post_init__(self):
        if self.height < 16 or self.width < 16:
            raise ValueError("height and width must be >= 16")
        ids = [c.class_id for c in self.classes]
        if len(self.classes) < 1 or len(set(ids)) != len(ids):
            raise ValueError("classes must be nonempty with unique ids")
        if self.n_regions < len(self.classes):
            raise ValueError("n_regions must be >= number of classes")
        if not 0.0 <= self.shading_strength <= 1.0:
            raise ValueError("shading_strength must be in [0, 1]")
        if not 0.0 <= self.dominant_share < 1.0:
            raise ValueError("dominant_share must be in [0, 1)")


@dataclass
class DegradationConfig:
    """Blur, per-band attenuation, and additive-noise levels."""

    blur_sigma_px: float = 0.0
    noise_sigma: float = 0.0
    attenuation_alpha: np.ndarray = field(default_factory=lambda: np.zeros(N_BANDS))
    attenuation_depth: float = 0.0

    def __post_init__(self):
        alpha = np.asarray(self.attenuation_alpha, dtype=np.float64)
        if alpha.shape != (N_BANDS,):
            raise ShapeError(f"attenuation_alpha must have {N_BANDS} entries")
        if self.blur_sigma_px < 0 or self.noise_sigma < 0 or self.attenuation_depth < 0:
            raise ValueError("degradation levels must be >= 0")
        if alpha.min() < 0 or not np.all(np.isfinite(alpha)):
            raise ValueError("attenuation_alpha must be nonnegative and finite")
        self.attenuation_alpha = alpha

    def is_identity(self) -> bool:
        return (
            self.blur_sigma_px == 0.0
            and self.noise_sigma == 0.0
            and (self.attenuation_depth == 0.0 or not self.attenuation_alpha.any())
        )


@dataclass
class LabeledScene:
    """A spectral cube plus its per-pixel class labels."""

    cube: SpectralCube
    labels: np.ndarray
    fingerprint: int

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.shape != (self.cube.height, self.cube.width):
            raise ShapeError("labels must match cube height and width")
        self.labels = lab.astype(np.int64)


def _fingerprint(*chunks: bytes) -> int:
    h = hashlib.blake2b(digest_size=8)
    for c in chunks:
        h.update(c)
    return int.from_bytes(h.digest(), "little")


def _config_bytes(config: SceneConfig) -> bytes:
    parts = [
        np.array([config.height, config.width, config.n_regions, config.seed], np.int64).tobytes(),
        np.array([config.shading_strength, config.dominant_share], np.float64).tobytes(),
    ]
    for c in config.classes:
        parts.append(c.name.encode())
        parts.append(np.array([c.class_id], np.int64).tobytes())
        parts.append(np.array([c.spectral_jitter], np.float64).tobytes())
        parts.append(c.base_spectrum.tobytes())
    return b"".join(parts)


def _region_class_assignment(config: SceneConfig, rng: np.random.Generator) -> np.ndarray:
    """Class per Voronoi site: one site per class, the dominant class takes
    its share of the extras, the rest are filled round-robin; final order is
    a seeded shuffle."""
    n_classes = len(config.classes)
    n = config.n_regions
    counts = np.ones(n_classes, dtype=np.int64)
    extra = n - n_classes
    dominant = int(round(config.dominant_share * n)) - 1
    dominant = min(max(dominant, 0), extra)
    counts[0] += dominant
    extra -= dominant
    if n_classes > 1:
        for i in range(extra):
            counts[1 + i % (n_classes - 1)] += 1
    else:
        counts[0] += extra
    assignment = np.repeat(np.arange(n_classes), counts)
    return rng.permutation(assignment)


def _shading_field(h: int, w: int, strength: float, rng: np.random.Generator) -> np.ndarray:
    """Smooth multiplicative field in [1 - strength, 1]."""
    fx = rng.integers(1, 3)
    fy = rng.integers(1, 3)
    px, py = rng.uniform(0.0, 1.0, size=2)
    xs = np.arange(w) / w
    ys = np.arange(h) / h
    sx = np.sin(2 * np.pi * (fx * xs + px))
    sy = np.sin(2 * np.pi * (fy * ys + py))
    s = (np.outer(sy, sx) + 1.0) / 2.0
    return 1.0 - strength * s


def generate_scene(config: SceneConfig) -> LabeledScene:
    """Generate one labeled scene from its config (deterministic per seed).

    Voronoi sites are distinct pixel centers, so every site (and through the
    assignment above, every class) owns at least one pixel.
    """
    rng = make_rng(config.seed, _STREAM_SCENE)
    h, w = config.height, config.width

    flat_sites = rng.choice(h * w, size=config.n_regions, replace=False)
    sites = np.stack([flat_sites // w, flat_sites % w], axis=1)
    site_class = _region_class_assignment(config, rng)

    ys = np.arange(h)[:, None]
    xs = np.arange(w)[None, :]
    d2 = (ys[None] - sites[:, 0, None, None]) ** 2 + (xs[None] - sites[:, 1, None, None]) ** 2
    labels_idx = np.argmin(d2, axis=0)
    class_ids = np.array([c.class_id for c in config.classes])
    labels = class_ids[site_class[labels_idx]]

    shade = _shading_field(h, w, config.shading_strength, rng)

    base = np.stack([c.base_spectrum for c in config.classes])    # (n_classes, 36)
    jitters = np.array([c.spectral_jitter for c in config.classes])
    id_to_index = {c.class_id: i for i, c in enumerate(config.classes)}
    index_map = np.vectorize(id_to_index.__getitem__)(labels)

    data = base[index_map].transpose(2, 0, 1)                     # (36, H, W)
    jitter_map = jitters[index_map]
    if jitter_map.any():
        g = rng.standard_normal((N_BANDS, h, w))
        data = data * (1.0 + jitter_map[None] * g)
    data = np.clip(data * shade[None], 0.0, 1.0)

    fp = _fingerprint(b"scene", _config_bytes(config))
    return LabeledScene(cube=SpectralCube(data=data), labels=labels, fingerprint=fp)


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(np.ceil(3.0 * sigma))
    u = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (u / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(stack: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur of (..., H, W), kernel truncated at 3 sigma.

    Borders use zero padding followed by division by the blurred all-ones
    field, so weights stay a convex combination everywhere and constant
    inputs are preserved exactly.
    """
    if sigma == 0.0:
        return stack.copy()
    k = _gaussian_kernel(sigma)
    radius = (len(k) - 1) // 2

    def conv_axis(a: np.ndarray, axis: int) -> np.ndarray:
        pad = [(0, 0)] * a.ndim
        pad[axis] = (radius, radius)
        ap = np.pad(a, pad)
        out = np.zeros_like(a)
        for i, kw in enumerate(k):
            sl = [slice(None)] * a.ndim
            sl[axis] = slice(i, i + a.shape[axis])
            out += kw * ap[tuple(sl)]
        return out

    blurred = conv_axis(conv_axis(stack, -2), -1)
    norm = conv_axis(conv_axis(np.ones(stack.shape[-2:]), 0), 1)
    return blurred / norm


def apply_degradations(scene: LabeledScene, deg: DegradationConfig, seed: int) -> LabeledScene:
    """Blur, attenuate, and add noise to the cube; labels are untouched.

    Per band k:  clamp(blur(cube_k) * exp(-alpha_k * depth) + noise, 0, 1).
    """
    data = scene.cube.data
    if not deg.is_identity():
        data = gaussian_blur(data, deg.blur_sigma_px)
        if deg.attenuation_depth > 0 and deg.attenuation_alpha.any():
            data = data * np.exp(-deg.attenuation_alpha * deg.attenuation_depth)[:, None, None]
        if deg.noise_sigma > 0:
            rng = make_rng(seed, _STREAM_DEGRADE)
            data = data + deg.noise_sigma * rng.standard_normal(data.shape)
        data = np.clip(data, 0.0, 1.0)
    fp = _fingerprint(
        b"degraded",
        scene.fingerprint.to_bytes(8, "little"),
        np.array([deg.blur_sigma_px, deg.noise_sigma, deg.attenuation_depth], np.float64).tobytes(),
        deg.attenuation_alpha.tobytes(),
        np.array([seed], np.int64).tobytes(),
    )
    return LabeledScene(cube=SpectralCube(data=data), labels=scene.labels.copy(), fingerprint=fp)


def generate_dataset(config: SceneConfig, deg: DegradationConfig, count: int, seed: int) -> list[LabeledScene]:
    """Generate ``count`` scenes with per-scene seeds seed + i."""
    if count < 1:
        raise ValueError("count must be >= 1")
    scenes = []
    for i in range(count):
        scene = generate_scene(replace(config, seed=seed + i))
        scenes.append(apply_degradations(scene, deg, seed + i))
    return scenes
