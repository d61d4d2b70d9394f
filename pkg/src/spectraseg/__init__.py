"""Spectral-reflectance reconstruction from RGB and multispectral scene
segmentation with a small dilated-convolution UNet, on deterministic
synthetic scenes.
"""

from .spectral import (
    GRID,
    N_BANDS,
    CameraModel,
    SpectralCube,
    SpectralGrid,
    WienerReconstructor,
    fit_wiener,
    forward_project,
    gaussian_camera,
    reconstruct_cube,
    reconstruct_pixel,
    render_cube,
    system_matrix,
    wavelength_grid,
)
from .synth import (
    DegradationConfig,
    LabeledScene,
    SceneConfig,
    TissueClassSpec,
    apply_degradations,
    default_tissue_library,
    generate_dataset,
    generate_scene,
)
from .training import History, IouReport, TrainConfig, compute_class_weights, iou, predict_mask, train

__version__ = "0.1.0"

__all__ = [
    "GRID",
    "N_BANDS",
    "CameraModel",
    "DegradationConfig",
    "History",
    "IouReport",
    "LabeledScene",
    "SceneConfig",
    "SpectralCube",
    "SpectralGrid",
    "TissueClassSpec",
    "TrainConfig",
    "WienerReconstructor",
    "apply_degradations",
    "compute_class_weights",
    "default_tissue_library",
    "fit_wiener",
    "forward_project",
    "gaussian_camera",
    "generate_dataset",
    "generate_scene",
    "iou",
    "predict_mask",
    "reconstruct_cube",
    "reconstruct_pixel",
    "render_cube",
    "system_matrix",
    "train",
    "wavelength_grid",
]
