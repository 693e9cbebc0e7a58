"""Backprojection DAS reconstruction, compounding, and envelope images.

The DAS operator samples each element's analytic signal at the
plane-wave round-trip delay via cubic B-spline interpolation (channel
prefilter applied once), sums over elements, and equalizes each pixel by
the sum of contributing weights. Delays falling outside the recorded
window contribute zero.
"""

from __future__ import annotations

import struct
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit, prange
from scipy.signal import hilbert

from .config import ImageGrid, ProbeConfig
from .interpolate import mirror_index, prefilter
from .simulate import ChannelData

IMAGE_MAGIC = b"PWIM"
IMAGE_VERSION = 1
DTYPE_ENVELOPE = 0
DTYPE_IQ = 1
_IMG_HEADER = struct.Struct("<4sIIIIdddddd")


@dataclass(frozen=True)
class IQImage:
    """Complex (analytic) image on a Cartesian grid."""

    pixels: np.ndarray  # (nz, nx) complex
    grid: ImageGrid

    def __post_init__(self):
        if self.pixels.shape != self.grid.shape:
            raise ValueError("pixel array does not match grid shape")


@dataclass(frozen=True)
class EnvelopeImage:
    """Non-negative magnitude image on a Cartesian grid."""

    pixels: np.ndarray  # (nz, nx) real
    grid: ImageGrid

    def __post_init__(self):
        if self.pixels.shape != self.grid.shape:
            raise ValueError("pixel array does not match grid shape")
        if np.any(self.pixels < 0):
            raise ValueError("envelope pixels must be non-negative")


@dataclass(frozen=True)
class EnhancerHook:
    """Pluggable single-frame image enhancer.

    "identity" passes images through unchanged. "external_command" runs
    `command <input_image> <output_image>` on the documented IQ file
    format; the output must live on the same grid.
    """

    kind: str = "identity"
    command: tuple = ()

    def __post_init__(self):
        if self.kind not in ("identity", "external_command"):
            raise ValueError(f"unknown enhancer kind {self.kind!r}")
        if self.kind == "external_command" and not self.command:
            raise ValueError("external_command requires a command")


def to_analytic(data: ChannelData) -> ChannelData:
    """Per-channel analytic signal (one-sided spectrum construction)."""
    if data.n_time < 8:
        raise ValueError("need at least 8 time samples")
    analytic = hilbert(np.asarray(data.samples.real, dtype=np.float64), axis=0)
    return ChannelData(samples=analytic, t0=data.t0, fs=data.fs,
                       tx_angle=data.tx_angle)


@njit(parallel=True, cache=True)
def _das_kernel(coef_re, coef_im, elem_x, grid_x, grid_z, sin_b, cos_b,
                c, fs, t0, f_number, out_re, out_im):
    n_time = coef_re.shape[0]
    n_elem = elem_x.shape[0]
    nz = grid_z.shape[0]
    nx = grid_x.shape[0]
    for iz in prange(nz):
        z = grid_z[iz]
        half_aperture = z / (2.0 * f_number) if f_number > 0.0 else 1e9
        for ix in range(nx):
            x = grid_x[ix]
            tx_delay = (z * cos_b + x * sin_b) / c
            acc_re = 0.0
            acc_im = 0.0
            weight = 0.0
            for e in range(n_elem):
                dx = x - elem_x[e]
                if dx > half_aperture or -dx > half_aperture:
                    continue
                tau = tx_delay + np.sqrt(dx * dx + z * z) / c
                s = (tau - t0) * fs
                if s < 0.0 or s > n_time - 1:
                    continue
                i0 = int(np.floor(s))
                t = s - i0
                w0 = (1.0 - t) ** 3 / 6.0
                w1 = (4.0 - 6.0 * t * t + 3.0 * t * t * t) / 6.0
                w2 = (1.0 + 3.0 * t + 3.0 * t * t - 3.0 * t * t * t) / 6.0
                w3 = t * t * t / 6.0
                j0 = mirror_index(i0 - 1, n_time)
                j1 = mirror_index(i0, n_time)
                j2 = mirror_index(i0 + 1, n_time)
                j3 = mirror_index(i0 + 2, n_time)
                acc_re += (w0 * coef_re[j0, e] + w1 * coef_re[j1, e]
                           + w2 * coef_re[j2, e] + w3 * coef_re[j3, e])
                acc_im += (w0 * coef_im[j0, e] + w1 * coef_im[j1, e]
                           + w2 * coef_im[j2, e] + w3 * coef_im[j3, e])
                weight += 1.0
            if weight > 0.0:
                out_re[iz, ix] = acc_re / weight
                out_im[iz, ix] = acc_im / weight


def das_reconstruct(
    data: ChannelData,
    probe: ProbeConfig,
    grid: ImageGrid,
    f_number: float | None = None,
) -> IQImage:
    """Delay-and-sum the channel data onto `grid`.

    Real input is converted to its analytic signal first, so the B-spline
    interpolation acts on the analytic channels directly. Receive
    apodization defaults to none; pass `f_number` to gate the receive
    aperture at |x_pixel - x_element| <= z / (2 F#).
    """
    if data.n_elements != probe.element_count:
        raise ValueError("channel count does not match probe element_count")
    if abs(data.fs - probe.sampling_frequency) > 1e-6 * probe.sampling_frequency:
        raise ValueError("channel data sampling frequency does not match probe")
    if not np.iscomplexobj(data.samples):
        data = to_analytic(data)
    coeffs = prefilter(data.samples, axis=0)
    out_re = np.zeros(grid.shape)
    out_im = np.zeros(grid.shape)
    _das_kernel(
        np.ascontiguousarray(coeffs.real), np.ascontiguousarray(coeffs.imag),
        np.ascontiguousarray(probe.element_positions),
        np.ascontiguousarray(grid.x), np.ascontiguousarray(grid.z),
        np.sin(data.tx_angle), np.cos(data.tx_angle),
        probe.sound_speed, data.fs, data.t0,
        0.0 if f_number is None else float(f_number),
        out_re, out_im,
    )
    return IQImage(pixels=out_re + 1j * out_im, grid=grid)


def compound(images) -> IQImage:
    """Pixel-wise complex mean of images sharing one grid."""
    images = list(images)
    if not images:
        raise ValueError("cannot compound an empty image list")
    grid = images[0].grid
    for img in images[1:]:
        if img.grid != grid:
            raise ValueError("compound requires a common grid")
    mean = np.mean([img.pixels for img in images], axis=0)
    return IQImage(pixels=mean, grid=grid)


def envelope_on_tracking_grid(iq: IQImage) -> EnvelopeImage:
    """Modulus of the IQ image, decimated by two axially.

    Keeps every second row starting at row 0; a trailing odd row is
    truncated. On the default lambda/4 x lambda/8 reconstruction grid
    this yields the isotropic lambda/4 tracking grid.
    """
    grid = iq.grid
    n_keep = grid.nz // 2
    if n_keep < 1:
        raise ValueError("image too small to decimate axially")
    env = np.abs(iq.pixels[: 2 * n_keep: 2])
    new_grid = ImageGrid(
        x_min=grid.x_min, x_max=grid.x_max,
        z_min=grid.z_min, z_max=grid.z_min + (n_keep - 1) * 2 * grid.dz,
        dx=grid.dx, dz=2 * grid.dz, nx=grid.nx, nz=n_keep,
    )
    return EnvelopeImage(pixels=env, grid=new_grid)


def enhance(img: IQImage, hook: EnhancerHook) -> IQImage:
    """Run the enhancer hook on a single frame.

    External command failures and grid mismatches raise; there is no
    silent fallback to the unenhanced image.
    """
    if hook.kind == "identity":
        return img
    with tempfile.TemporaryDirectory(prefix="pwtrack-enhance-") as tmp:
        in_path = Path(tmp) / "input.iq"
        out_path = Path(tmp) / "output.iq"
        save_image(in_path, img)
        cmd = [*hook.command, str(in_path), str(out_path)]
        result = subprocess.run(cmd, capture_output=True, text=True)
        if result.returncode != 0:
            raise RuntimeError(
                f"enhancer command failed (exit {result.returncode}): "
                f"{result.stderr.strip()}")
        enhanced = load_image(out_path)
    if not isinstance(enhanced, IQImage):
        raise RuntimeError("enhancer produced an envelope image, expected IQ")
    if enhanced.grid != img.grid:
        raise RuntimeError("enhancer output grid mismatch")
    return enhanced


def save_image(path, image) -> None:
    """Write an IQ or envelope image in the binary image format."""
    grid = image.grid
    if isinstance(image, IQImage):
        tag = DTYPE_IQ
        payload = np.ascontiguousarray(image.pixels, dtype=np.complex64).tobytes()
    else:
        tag = DTYPE_ENVELOPE
        payload = np.ascontiguousarray(image.pixels, dtype=np.float32).tobytes()
    header = _IMG_HEADER.pack(
        IMAGE_MAGIC, IMAGE_VERSION, tag, grid.nz, grid.nx,
        grid.x_min, grid.x_max, grid.z_min, grid.z_max, grid.dx, grid.dz)
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)


def load_image(path):
    with open(path, "rb") as f:
        raw = f.read(_IMG_HEADER.size)
        if len(raw) < _IMG_HEADER.size:
            raise ValueError(f"{path}: truncated image header")
        (magic, version, tag, nz, nx,
         x_min, x_max, z_min, z_max, dx, dz) = _IMG_HEADER.unpack(raw)
        if magic != IMAGE_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r} in image header")
        if version != IMAGE_VERSION:
            raise ValueError(f"{path}: unsupported image version {version}")
        body = f.read()
    grid = ImageGrid(x_min=x_min, x_max=x_max, z_min=z_min, z_max=z_max,
                     dx=dx, dz=dz, nx=nx, nz=nz)
    if tag == DTYPE_IQ:
        pixels = np.frombuffer(body, dtype=np.complex64)
        if pixels.size != nz * nx:
            raise ValueError(f"{path}: pixel count does not match header nz*nx")
        return IQImage(pixels=pixels.reshape(nz, nx).astype(np.complex128), grid=grid)
    if tag == DTYPE_ENVELOPE:
        pixels = np.frombuffer(body, dtype=np.float32)
        if pixels.size != nz * nx:
            raise ValueError(f"{path}: pixel count does not match header nz*nx")
        return EnvelopeImage(pixels=pixels.reshape(nz, nx).astype(np.float64), grid=grid)
    raise ValueError(f"{path}: unknown image dtype tag {tag}")
