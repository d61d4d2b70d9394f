"""Spectral grid, camera response model, and Wiener reflectance reconstruction.

The toolkit works on a fixed 36-band grid covering the visible range
380-730 nm in 10 nm steps.  A camera is modelled by per-channel filter
transmittance curves, an illuminant spectrum, and a sensor sensitivity
curve; their product, discretized on the grid, is the 3x36 system matrix
that maps a reflectance spectrum to a linear-light RGB triple.  The
inverse direction (RGB back to a 36-band spectrum) is a Wiener estimator
fitted from training spectra.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DimError, ShapeError, SingularSystemError

N_BANDS = 36
LAMBDA_START_NM = 380.0
LAMBDA_STEP_NM = 10.0

# Condition-number ceiling for the 3x3 normal matrix of a Wiener fit.
SINGULAR_COND_LIMIT = 1e12


def wavelength_grid() -> np.ndarray:
    """The 36 band centers in nm: 380, 390, ..., 730."""
    return LAMBDA_START_NM + LAMBDA_STEP_NM * np.arange(N_BANDS, dtype=np.float64)


@dataclass(frozen=True)
class SpectralGrid:
    """Fixed wavelength grid shared by every spectrum in the toolkit."""

    wavelengths_nm: np.ndarray = field(default_factory=wavelength_grid)
    delta_nm: float = LAMBDA_STEP_NM

    def __post_init__(self):
        w = np.asarray(self.wavelengths_nm, dtype=np.float64)
        if w.shape != (N_BANDS,):
            raise ShapeError(f"grid must have exactly {N_BANDS} bands, got {w.shape}")
        if w[0] != LAMBDA_START_NM or w[-1] != LAMBDA_START_NM + LAMBDA_STEP_NM * (N_BANDS - 1):
            raise ValueError("grid must span 380-730 nm")
        steps = np.diff(w)
        if not np.all(steps > 0) or not np.allclose(steps, self.delta_nm):
            raise ValueError("grid must be strictly increasing with uniform spacing")
        object.__setattr__(self, "wavelengths_nm", w)


GRID = SpectralGrid()


def clamp_spectrum(values) -> np.ndarray:
    """Coerce a physical reflectance spectrum: 36 finite values clipped to [0, 1]."""
    v = np.asarray(values, dtype=np.float64)
    if v.shape != (N_BANDS,):
        raise DimError(f"spectrum must have {N_BANDS} samples, got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("spectrum contains non-finite values")
    return np.clip(v, 0.0, 1.0)


@dataclass
class SpectralCube:
    """H x W image with a 36-band reflectance spectrum per pixel.

    Stored band-major: ``data`` has shape (bands, height, width), matching
    the on-disk SPC1 layout.
    """

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 3 or d.shape[0] != N_BANDS:
            raise ShapeError(f"cube data must be ({N_BANDS}, H, W), got {d.shape}")
        if d.shape[1] < 1 or d.shape[2] < 1:
            raise ShapeError("cube must have H >= 1 and W >= 1")
        if not np.all(np.isfinite(d)):
            raise ValueError("cube contains non-finite values")
        self.data = d

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def spectrum_at(self, y: int, x: int) -> np.ndarray:
        return self.data[:, y, x].copy()


def validate_rgb_image(img) -> np.ndarray:
    """Check an (H, W, 3) linear-light image: finite values in [0, 1]."""
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 3 or a.shape[2] != 3:
        raise ShapeError(f"RGB image must be (H, W, 3), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("image contains non-finite values")
    if a.min() < 0.0 or a.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    return a


@dataclass
class CameraModel:
    """Per-channel filter transmittance, illuminant, and sensor sensitivity.

    ``filter_transmittance`` is (3, 36) in R, G, B row order; ``illuminant``
    and ``sensor_sensitivity`` are (36,).  All curves are sampled on GRID.
    """

    filter_transmittance: np.ndarray
    illuminant: np.ndarray
    sensor_sensitivity: np.ndarray
    grid: SpectralGrid = field(default_factory=lambda: GRID)

    def __post_init__(self):
        t = np.asarray(self.filter_transmittance, dtype=np.float64)
        e = np.asarray(self.illuminant, dtype=np.float64)
        s = np.asarray(self.sensor_sensitivity, dtype=np.float64)
        if t.shape != (3, N_BANDS):
            raise ShapeError(f"filter_transmittance must be (3, {N_BANDS}), got {t.shape}")
        if e.shape != (N_BANDS,) or s.shape != (N_BANDS,):
            raise ShapeError("illuminant and sensor_sensitivity must have 36 samples")
        for name, arr in (("filter_transmittance", t), ("illuminant", e), ("sensor_sensitivity", s)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
            if arr.min() < 0.0:
                raise ValueError(f"{name} must be nonnegative")
        if np.any(t.max(axis=1) <= 0.0):
            raise ValueError("each filter row needs at least one strictly positive entry")
        self.filter_transmittance = t
        self.illuminant = e
        self.sensor_sensitivity = s


def gaussian_camera(centers_nm=(620.0, 550.0, 450.0), sigma_nm: float = 30.0,
                    normalize: bool = True) -> CameraModel:
    """Synthetic camera with Gaussian R, G, B filter curves and flat E = S = 1.

    With ``normalize`` each filter row is scaled so the corresponding row of
    the system matrix sums to 1, i.e. a perfectly white spectrum maps to
    (1, 1, 1).
    """
    lam = GRID.wavelengths_nm
    t = np.stack([np.exp(-0.5 * ((lam - c) / sigma_nm) ** 2) for c in centers_nm])
    ones = np.ones(N_BANDS)
    if normalize:
        row_mass = (t * ones * ones).sum(axis=1) * GRID.delta_nm
        t = t / row_mass[:, None]
    return CameraModel(filter_transmittance=t, illuminant=ones, sensor_sensitivity=ones)


def system_matrix(camera: CameraModel, grid: SpectralGrid | None = None) -> np.ndarray:
    """Discretized camera response: M[c, k] = t_c(l_k) * E(l_k) * S(l_k) * dl."""
    g = camera.grid if grid is None else grid
    m = camera.filter_transmittance * camera.illuminant * camera.sensor_sensitivity
    return m * g.delta_nm


def forward_project(spectrum, camera: CameraModel) -> np.ndarray:
    """Project a 36-band spectrum to a linear RGB triple: p = M @ r."""
    r = np.asarray(spectrum, dtype=np.float64)
    if r.shape != (N_BANDS,):
        raise DimError(f"spectrum must have {N_BANDS} samples, got {r.shape}")
    return system_matrix(camera) @ r


def render_cube(cube: SpectralCube, camera: CameraModel, exposure: float = 1.0,
                clip: bool = True) -> np.ndarray:
    """Render a cube to an (H, W, 3) linear RGB image, one projection per pixel.

    ``exposure`` is a global gain applied before the optional clip to [0, 1].
    Clipping is on by default; disable it when a lossless round trip through
    reconstruction is required.
    """
    m = system_matrix(camera)
    img = np.einsum("ck,khw->hwc", m, cube.data) * float(exposure)
    if clip:
        img = np.clip(img, 0.0, 1.0)
    return img


@dataclass
class WienerReconstructor:
    """Affine map from RGB triples back to 36-band spectra.

    Reconstruction is r = mean + gain @ (p - system @ mean), which fixes
    the training mean exactly: an input of system @ mean returns mean.
    """

    mean_spectrum: np.ndarray
    gain: np.ndarray
    system: np.ndarray
    noise_sigma: float

    def __post_init__(self):
        mu = np.asarray(self.mean_spectrum, dtype=np.float64)
        w = np.asarray(self.gain, dtype=np.float64)
        m = np.asarray(self.system, dtype=np.float64)
        if mu.shape != (N_BANDS,) or w.shape != (N_BANDS, 3) or m.shape != (3, N_BANDS):
            raise ShapeError("reconstructor fields have inconsistent shapes")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(w)) and np.all(np.isfinite(m))):
            raise ValueError("reconstructor contains non-finite values")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        self.mean_spectrum, self.gain, self.system = mu, w, m


def fit_wiener(training, camera: CameraModel, noise_sigma: float = 0.0) -> WienerReconstructor:
    """Fit a Wiener estimator from training spectra.

    With mean mu and sample covariance C of the training set, the gain is
    W = C M^T (M C M^T + sigma^2 I)^(-1).  Raises SingularSystemError when
    the bracketed 3x3 matrix has condition estimate above 1e12, which
    signals a degenerate training set at sigma = 0.
    """
    x = np.asarray(training, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != N_BANDS:
        raise DimError(f"training set must be (N, {N_BANDS}), got {x.shape}")
    if x.shape[0] < 2:
        raise DataError("need at least 2 training spectra")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    m = system_matrix(camera)
    mu = x.mean(axis=0)
    centered = x - mu
    cov = centered.T @ centered / (x.shape[0] - 1)
    normal = m @ cov @ m.T + noise_sigma**2 * np.eye(3)
    if not np.all(np.isfinite(normal)) or np.linalg.cond(normal) > SINGULAR_COND_LIMIT:
        raise SingularSystemError(
            "normal matrix is numerically singular; add noise_sigma or more varied training spectra"
        )
    gain = cov @ m.T @ np.linalg.inv(normal)
    return WienerReconstructor(mean_spectrum=mu, gain=gain, system=m, noise_sigma=float(noise_sigma))


def reconstruct_pixel(rec: WienerReconstructor, rgb) -> np.ndarray:
    """Estimate the 36-band spectrum behind one RGB triple (no clamping)."""
    p = np.asarray(rgb, dtype=np.float64)
    if p.shape != (3,):
        raise DimError(f"rgb must have 3 values, got {p.shape}")
    return rec.mean_spectrum + rec.gain @ (p - rec.system @ rec.mean_spectrum)


def reconstruct_cube(rec: WienerReconstructor, img, clamp: bool = False) -> SpectralCube:
    """Reconstruct a spectrum for every pixel of an (H, W, 3) image."""
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 3 or a.shape[2] != 3:
        raise ShapeError(f"image must be (H, W, 3), got {a.shape}")
    base = rec.system @ rec.mean_spectrum
    centered = a - base
    data = rec.mean_spectrum[:, None, None] + np.einsum("kc,hwc->khw", rec.gain, centered)
    if clamp:
        data = np.clip(data, 0.0, 1.0)
    return SpectralCube(data=data)
