"""File formats: SPC1 cubes, netpbm images, curve tables, reconstructor JSON.

SPC1 is the cube container: magic ``SPC1``, three little-endian u32 fields
H, W, B (B must be 36), then H*W*B little-endian f32 samples in band-major
order (band, then row, then column).  Labels and masks travel as binary
P5 PGM, RGB images as binary P6 PPM, both 8-bit.  Camera curves and spectra
load from whitespace-separated text tables with one line per band.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .spectral import GRID, N_BANDS, CameraModel, SpectralCube, WienerReconstructor

SPC1_MAGIC = b"SPC1"


def write_spc1(path, cube: SpectralCube) -> None:
    data = cube.data.astype("<f4")
    header = SPC1_MAGIC + struct.pack("<III", cube.height, cube.width, cube.bands)
    Path(path).write_bytes(header + data.tobytes(order="C"))


def read_spc1(path) -> SpectralCube:
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise FormatError(f"{path}: truncated SPC1 header")
    if raw[:4] != SPC1_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {SPC1_MAGIC!r}")
    h, w, b = struct.unpack("<III", raw[4:16])
    if b != N_BANDS:
        raise FormatError(f"{path}: band count {b} != {N_BANDS}")
    expected = 16 + h * w * b * 4
    if len(raw) != expected:
        raise FormatError(f"{path}: size {len(raw)} != expected {expected}")
    data = np.frombuffer(raw[16:], dtype="<f4").reshape(b, h, w)
    if not np.all(np.isfinite(data)):
        raise FormatError(f"{path}: cube contains non-finite samples")
    return SpectralCube(data=data.astype(np.float64))


def _read_pnm_header(raw: bytes, magic: bytes, path) -> tuple[list[int], int]:
    """Parse a netpbm header (magic, dims, maxval) honoring '#' comments.

    Returns ([width, height, maxval], offset of first raster byte).
    """
    if raw[:2] != magic:
        raise FormatError(f"{path}: bad magic {raw[:2]!r}, expected {magic!r}")
    fields: list[int] = []
    i = 2
    while len(fields) < 3:
        if i >= len(raw):
            raise FormatError(f"{path}: truncated header")
        c = raw[i : i + 1]
        if c == b"#":
            while i < len(raw) and raw[i : i + 1] != b"\n":
                i += 1
        elif c.isspace():
            i += 1
        elif c.isdigit():
            j = i
            while j < len(raw) and raw[j : j + 1].isdigit():
                j += 1
            fields.append(int(raw[i:j]))
            i = j
        else:
            raise FormatError(f"{path}: unexpected byte {c!r} in header")
    if i >= len(raw) or not raw[i : i + 1].isspace():
        raise FormatError(f"{path}: missing whitespace after maxval")
    return fields, i + 1


def write_pgm(path, values: np.ndarray) -> None:
    """Write an (H, W) uint8 array as binary P5."""
    a = np.asarray(values)
    if a.ndim != 2:
        raise FormatError(f"PGM payload must be 2-D, got shape {a.shape}")
    if a.dtype != np.uint8:
        if a.min() < 0 or a.max() > 255:
            raise FormatError("PGM values must fit in 8 bits")
        a = a.astype(np.uint8)
    header = f"P5\n{a.shape[1]} {a.shape[0]}\n255\n".encode()
    Path(path).write_bytes(header + a.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    (w, h, maxval), offset = _read_pnm_header(raw, b"P5", path)
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit PGM supported, maxval {maxval}")
    if len(raw) - offset != w * h:
        raise FormatError(f"{path}: raster size {len(raw) - offset} != {w * h}")
    return np.frombuffer(raw[offset:], dtype=np.uint8).reshape(h, w).copy()


def write_ppm(path, rgb: np.ndarray) -> None:
    """Write an (H, W, 3) uint8 array as binary P6."""
    a = np.asarray(rgb)
    if a.ndim != 3 or a.shape[2] != 3:
        raise FormatError(f"PPM payload must be (H, W, 3), got shape {a.shape}")
    if a.dtype != np.uint8:
        if a.min() < 0 or a.max() > 255:
            raise FormatError("PPM values must fit in 8 bits")
        a = a.astype(np.uint8)
    header = f"P6\n{a.shape[1]} {a.shape[0]}\n255\n".encode()
    Path(path).write_bytes(header + a.tobytes())


def read_ppm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    (w, h, maxval), offset = _read_pnm_header(raw, b"P6", path)
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit PPM supported, maxval {maxval}")
    if len(raw) - offset != w * h * 3:
        raise FormatError(f"{path}: raster size {len(raw) - offset} != {w * h * 3}")
    return np.frombuffer(raw[offset:], dtype=np.uint8).reshape(h, w, 3).copy()


def quantize_u8(values: np.ndarray) -> np.ndarray:
    """Map floats in [0, 1] to uint8 by rounding; inputs are clipped first."""
    return np.round(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)


def u8_to_unit(values: np.ndarray) -> np.ndarray:
    return values.astype(np.float64) / 255.0


def srgb_decode(v: np.ndarray) -> np.ndarray:
    """sRGB electro-optical transfer: encoded [0,1] to linear light."""
    v = np.asarray(v, dtype=np.float64)
    return np.where(v <= 0.04045, v / 12.92, ((v + 0.055) / 1.055) ** 2.4)


def srgb_encode(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    v = np.clip(v, 0.0, 1.0)
    return np.where(v <= 0.0031308, v * 12.92, 1.055 * v ** (1 / 2.4) - 0.055)


def load_table(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a whitespace-separated table: wavelength_nm then value columns.

    '#' starts a comment; blank lines are skipped.  Returns (wavelengths,
    values) with values shaped (rows, columns).
    """
    wavelengths = []
    rows = []
    ncols = None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        parts = body.split()
        if len(parts) < 2:
            raise FormatError(f"{path}:{lineno}: need wavelength and at least one value")
        try:
            nums = [float(p) for p in parts]
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
        if ncols is None:
            ncols = len(nums)
        elif len(nums) != ncols:
            raise FormatError(f"{path}:{lineno}: expected {ncols} columns, got {len(nums)}")
        wavelengths.append(nums[0])
        rows.append(nums[1:])
    if not rows:
        raise FormatError(f"{path}: empty table")
    return np.array(wavelengths), np.array(rows)


def _check_grid(wavelengths: np.ndarray, path) -> None:
    if wavelengths.shape != (N_BANDS,) or not np.allclose(wavelengths, GRID.wavelengths_nm):
        raise FormatError(f"{path}: wavelengths must match the 380-730 nm 10 nm grid")


def load_camera(path) -> CameraModel:
    """Camera table columns: wavelength_nm, t_r, t_g, t_b, illuminant, sensitivity."""
    wavelengths, values = load_table(path)
    _check_grid(wavelengths, path)
    if values.shape[1] != 5:
        raise FormatError(f"{path}: camera table needs 5 value columns, got {values.shape[1]}")
    return CameraModel(
        filter_transmittance=values[:, 0:3].T,
        illuminant=values[:, 3],
        sensor_sensitivity=values[:, 4],
    )


def save_camera(path, camera: CameraModel) -> None:
    lines = ["# wavelength_nm t_r t_g t_b illuminant sensitivity"]
    t = camera.filter_transmittance
    for k, lam in enumerate(GRID.wavelengths_nm):
        vals = (t[0, k], t[1, k], t[2, k], camera.illuminant[k], camera.sensor_sensitivity[k])
        lines.append(f"{lam:.1f} " + " ".join(repr(float(v)) for v in vals))
    Path(path).write_text("\n".join(lines) + "\n")


def load_spectra(path) -> np.ndarray:
    """Spectra table: wavelength_nm then one column per spectrum; returns (N, 36)."""
    wavelengths, values = load_table(path)
    _check_grid(wavelengths, path)
    return values.T.copy()


def save_reconstructor(path, rec: WienerReconstructor) -> None:
    payload = {
        "format": "wiener-reconstructor",
        "version": 1,
        "noise_sigma": rec.noise_sigma,
        "mean_spectrum": rec.mean_spectrum.tolist(),
        "gain": rec.gain.tolist(),
        "system": rec.system.tolist(),
    }
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")


def load_reconstructor(path) -> WienerReconstructor:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from None
    if not isinstance(payload, dict) or payload.get("format") != "wiener-reconstructor":
        raise FormatError(f"{path}: not a reconstructor file")
    if payload.get("version") != 1:
        raise FormatError(f"{path}: unsupported version {payload.get('version')}")
    try:
        return WienerReconstructor(
            mean_spectrum=np.array(payload["mean_spectrum"], dtype=np.float64),
            gain=np.array(payload["gain"], dtype=np.float64),
            system=np.array(payload["system"], dtype=np.float64),
            noise_sigma=float(payload["noise_sigma"]),
        )
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: malformed reconstructor payload: {exc}") from None
