"""Multi-pass ZNCC speckle tracking between two envelope frames.

Window correlation uses an FFT cross-correlation for the raw products
and integral images for the per-lag mean/variance normalization, so each
lag's coefficient equals the direct zero-normalized definition over the
overlapping region. Subpixel refinement fits a 2-D Gaussian (quadratic
in log space) around the peak. Passes go coarse to fine; between passes
the second frame is deformed by the accumulated field and outliers are
smoothed with the unsupervised DCT smoother.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np
from numba import njit
from scipy.interpolate import RegularGridInterpolator
from scipy.ndimage import map_coordinates
from scipy.signal import fftconvolve

from .beamform import EnvelopeImage
from .smoothing import smooth_grid

FIELD_MAGIC = "pwtrack-field"

#: interrogation windows (m) and overlap used throughout the experiments
PAPER_WINDOW_SIZES = (4.0e-3, 2.5e-3, 2.0e-3, 1.5e-3)
PAPER_OVERLAP = 0.65


@dataclass(frozen=True)
class TrackingParams:
    """Multi-pass block-matching parameters.

    Window sizes are physical square sizes, strictly decreasing. The
    search range is the half window on the first pass and a quarter
    window afterwards, unless `search_margin` pins an explicit per-pass
    lag limit in pixels.
    """

    pass_window_sizes: tuple = PAPER_WINDOW_SIZES
    overlap_fraction: float = PAPER_OVERLAP
    search_margin: tuple | None = None
    smooth_each_pass: bool = True
    min_overlap: float = 0.5

    def __post_init__(self):
        sizes = tuple(self.pass_window_sizes)
        if not sizes or any(s <= 0 for s in sizes):
            raise ValueError("window sizes must be positive")
        if any(b >= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError("window sizes must be strictly decreasing")
        if not 0 <= self.overlap_fraction < 1:
            raise ValueError("overlap_fraction must be in [0, 1)")
        if self.search_margin is not None and len(self.search_margin) != len(sizes):
            raise ValueError("search_margin must give one lag limit per pass")

    @property
    def passes(self) -> int:
        return len(self.pass_window_sizes)


@dataclass(frozen=True)
class CorrelationSurface:
    """ZNCC values over integer lags [-max_lag .. +max_lag] per axis.

    `admissible` marks lags whose overlap region was large enough for a
    stable normalization; the peak is the argmax over admissible lags
    (first index wins ties). `peak_valid` is False when no lag was
    admissible.
    """

    values: np.ndarray
    max_lag: tuple
    admissible: np.ndarray
    peak_lag: tuple
    peak_valid: bool


@dataclass(frozen=True)
class DisplacementField:
    """2-D displacement vectors on a window-center grid."""

    u_x: np.ndarray  # (n_cz, n_cx) meters
    u_z: np.ndarray
    centers_x: np.ndarray  # (n_cx,) meters
    centers_z: np.ndarray  # (n_cz,) meters
    valid: np.ndarray  # bool, same shape as u_x

    def __post_init__(self):
        shape = (len(self.centers_z), len(self.centers_x))
        for name in ("u_x", "u_z", "valid"):
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} does not match the center grid")


def _integral(a):
    out = np.zeros((a.shape[0] + 1, a.shape[1] + 1))
    np.cumsum(np.cumsum(a, axis=0), axis=1, out=out[1:, 1:])
    return out


@njit(cache=True)
def _zncc_from_sums(s_ab, ia, ia2, ib, ib2, m, n, ml_z, ml_x, min_area):
    values = np.zeros((2 * ml_z + 1, 2 * ml_x + 1))
    admissible = np.zeros((2 * ml_z + 1, 2 * ml_x + 1), dtype=np.bool_)
    for r in range(2 * ml_z + 1):
        dz = r - ml_z
        az0 = max(0, -dz)
        az1 = m + min(0, -dz)  # exclusive
        bz0 = max(0, dz)
        bz1 = m + min(0, dz)
        for c in range(2 * ml_x + 1):
            dx = c - ml_x
            ax0 = max(0, -dx)
            ax1 = n + min(0, -dx)
            bx0 = max(0, dx)
            bx1 = n + min(0, dx)
            count = (az1 - az0) * (ax1 - ax0)
            if count < min_area:
                continue
            sa = ia[az1, ax1] - ia[az0, ax1] - ia[az1, ax0] + ia[az0, ax0]
            saa = ia2[az1, ax1] - ia2[az0, ax1] - ia2[az1, ax0] + ia2[az0, ax0]
            sb = ib[bz1, bx1] - ib[bz0, bx1] - ib[bz1, bx0] + ib[bz0, bx0]
            sbb = ib2[bz1, bx1] - ib2[bz0, bx1] - ib2[bz1, bx0] + ib2[bz0, bx0]
            var_a = saa - sa * sa / count
            var_b = sbb - sb * sb / count
            if var_a <= 1e-300 or var_b <= 1e-300:
                continue
            cov = s_ab[r, c] - sa * sb / count
            values[r, c] = cov / np.sqrt(var_a * var_b)
            admissible[r, c] = True
    return values, admissible


def zncc_surface(win_a, win_b, max_lag, min_overlap=0.5) -> CorrelationSurface:
    """Zero-normalized cross-correlation of two equal-shape windows.

    For each lag d the coefficient is computed over the overlap region
    with that region's own means and variances. Lags whose overlap falls
    below `min_overlap` of the window area are excluded from the peak.
    A positive lag means `win_b` content sits at larger indices than the
    matching `win_a` content (i.e. the displacement a -> b).
    """
    a = np.asarray(win_a, dtype=np.float64)
    b = np.asarray(win_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError("windows must share one 2-D shape")
    if a.std() == 0.0 or b.std() == 0.0:
        raise ValueError("zero-variance window: correlation undefined")
    try:
        ml_z, ml_x = max_lag
    except TypeError:
        ml_z = ml_x = int(max_lag)
    m, n = a.shape
    ml_z = min(int(ml_z), m - 1)
    ml_x = min(int(ml_x), n - 1)

    # raw cross products for every lag: sum_i a[i] * b[i + d]
    s_ab_full = fftconvolve(b, a[::-1, ::-1], mode="full")
    s_ab = s_ab_full[m - 1 - ml_z: m + ml_z, n - 1 - ml_x: n + ml_x]

    values, admissible = _zncc_from_sums(
        np.ascontiguousarray(s_ab), _integral(a), _integral(a * a),
        _integral(b), _integral(b * b), m, n, ml_z, ml_x,
        min_overlap * m * n)

    if admissible.any():
        masked = np.where(admissible, values, -np.inf)
        flat = int(np.argmax(masked))
        peak = (flat // values.shape[1] - ml_z, flat % values.shape[1] - ml_x)
        peak_valid = True
    else:
        peak = (0, 0)
        peak_valid = False
    return CorrelationSurface(values=values, max_lag=(ml_z, ml_x),
                              admissible=admissible, peak_lag=peak,
                              peak_valid=peak_valid)


def _gauss_1d(c_m, c_0, c_p):
    if c_m <= 0 or c_0 <= 0 or c_p <= 0:
        return 0.0
    denom = 2.0 * np.log(c_m) - 4.0 * np.log(c_0) + 2.0 * np.log(c_p)
    if denom >= 0:
        return 0.0
    return (np.log(c_m) - np.log(c_p)) / denom


# design matrix of the log-space quadratic over the 3x3 neighborhood:
# columns 1, di, dj, di^2, di*dj, dj^2
_OFFSETS = [(di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1)]
_DESIGN = np.array([[1.0, di, dj, di * di, di * dj, dj * dj]
                    for di, dj in _OFFSETS])
_DESIGN_PINV = np.linalg.pinv(_DESIGN)


def subpixel_peak(surface: CorrelationSurface):
    """Refine the integer correlation peak by 2-D Gaussian regression.

    Fits the log of the 3x3 neighborhood to a quadratic (anisotropic
    Gaussian with cross-term) and returns (lag_z, lag_x, saturated) in
    fractional pixels. A peak on the surface border is returned as the
    integer lag with saturated=True. If the neighborhood is not strictly
    positive the fit falls back to per-axis three-point Gaussian fits.
    """
    values = surface.values
    ml_z, ml_x = surface.max_lag
    pz = surface.peak_lag[0] + ml_z
    px = surface.peak_lag[1] + ml_x
    if (pz == 0 or pz == values.shape[0] - 1
            or px == 0 or px == values.shape[1] - 1):
        return float(surface.peak_lag[0]), float(surface.peak_lag[1]), True

    patch = values[pz - 1: pz + 2, px - 1: px + 2]
    if np.all(patch > 0):
        coeff = _DESIGN_PINV @ np.log(patch).ravel()
        _, c1, c2, c3, c4, c5 = coeff
        det = 4.0 * c3 * c5 - c4 * c4
        if det > 0 and c3 < 0:
            dz = (c4 * c2 - 2.0 * c5 * c1) / det
            dx = (c4 * c1 - 2.0 * c3 * c2) / det
            if abs(dz) <= 1.0 and abs(dx) <= 1.0:
                return (surface.peak_lag[0] + dz, surface.peak_lag[1] + dx,
                        False)
    # fall back to separable 1-D fits on whichever axes are usable
    dz = _gauss_1d(patch[0, 1], patch[1, 1], patch[2, 1])
    dx = _gauss_1d(patch[1, 0], patch[1, 1], patch[1, 2])
    return surface.peak_lag[0] + dz, surface.peak_lag[1] + dx, False


def _densify(field: DisplacementField, z_coords, x_coords):
    """Bilinear interpolation of both components onto arbitrary coordinates."""
    points = (field.centers_z, field.centers_x)
    kwargs = dict(method="linear", bounds_error=False, fill_value=None)
    zz, xx = np.meshgrid(z_coords, x_coords, indexing="ij")
    query = np.column_stack([zz.ravel(), xx.ravel()])
    if len(field.centers_z) < 2 or len(field.centers_x) < 2:
        u_x = np.full(zz.shape, field.u_x.flat[0])
        u_z = np.full(zz.shape, field.u_z.flat[0])
        return u_z, u_x
    u_z = RegularGridInterpolator(points, field.u_z, **kwargs)(query)
    u_x = RegularGridInterpolator(points, field.u_x, **kwargs)(query)
    return u_z.reshape(zz.shape), u_x.reshape(zz.shape)


def warp_image(img: EnvelopeImage, field: DisplacementField) -> EnvelopeImage:
    """Resample `img` at x + u: the warped image at x shows img(x + u(x)).

    The field is densified to the pixel grid bilinearly (with linear
    extrapolation beyond the outermost window centers), then the image
    is sampled by cubic B-spline with mirror extension. Warping frame 2
    of a tracked pair by the running estimate aligns it with frame 1.
    """
    grid = img.grid
    u_z, u_x = _densify(field, grid.z, grid.x)
    row = (np.add.outer(grid.z, np.zeros(grid.nx)) + u_z - grid.z_min) / grid.dz
    col = (np.add.outer(np.zeros(grid.nz), grid.x) + u_x - grid.x_min) / grid.dx
    warped = map_coordinates(img.pixels, [row, col], order=3, mode="mirror",
                             prefilter=True)
    np.clip(warped, 0.0, None, out=warped)
    return EnvelopeImage(pixels=warped, grid=grid)


def smooth_field(field: DisplacementField) -> DisplacementField:
    """Robust-smooth both components; invalid cells are inpainted."""
    if not field.valid.any():
        raise ValueError("cannot smooth an all-invalid field")
    weights = field.valid.astype(np.float64)
    u_x, _ = smooth_grid(field.u_x, weights=weights, robust=True)
    u_z, _ = smooth_grid(field.u_z, weights=weights, robust=True)
    return replace(field, u_x=u_x, u_z=u_z)


def _window_centers(n_pixels, w_px, step):
    half = w_px // 2
    last = n_pixels - 1 - half
    if last < half:
        raise ValueError("window larger than image")
    return np.arange(half, last + 1, step)


def track(frame_a: EnvelopeImage, frame_b: EnvelopeImage,
          params: TrackingParams) -> DisplacementField:
    """Estimate the displacement field from `frame_a` to `frame_b`.

    Coarse-to-fine block matching: each pass correlates windows of
    `frame_a` against the currently deformed `frame_b`, refines the peak
    to subpixel precision, converts lags to meters through the grid
    spacing, smooths outliers, and accumulates into the running field.
    The result lives on the last pass's window-center grid.
    """
    if frame_a.grid != frame_b.grid:
        raise ValueError("frames must share one grid")
    grid = frame_a.grid
    a_img = frame_a.pixels
    field = None

    for k, w_m in enumerate(params.pass_window_sizes):
        w_px = int(round(w_m / grid.dx))
        if w_px % 2 == 0:
            w_px += 1
        half = w_px // 2
        step = max(1, int(round(w_px * (1.0 - params.overlap_fraction))))
        rows = _window_centers(grid.nz, w_px, step)
        cols = _window_centers(grid.nx, w_px, step)
        centers_z = grid.z_min + rows * grid.dz
        centers_x = grid.x_min + cols * grid.dx

        if params.search_margin is not None:
            max_lag = int(params.search_margin[k])
        elif k == 0:
            max_lag = w_px // 2
        else:
            max_lag = max(2, int(round(0.25 * w_px)))

        if field is None:
            b_img = frame_b.pixels
        else:
            b_img = warp_image(frame_b, field).pixels

        res_z = np.zeros((len(rows), len(cols)))
        res_x = np.zeros_like(res_z)
        valid = np.zeros(res_z.shape, dtype=bool)
        for i, zi in enumerate(rows):
            for j, xj in enumerate(cols):
                win_a = a_img[zi - half: zi + half + 1, xj - half: xj + half + 1]
                win_b = b_img[zi - half: zi + half + 1, xj - half: xj + half + 1]
                try:
                    surf = zncc_surface(win_a, win_b, max_lag,
                                        min_overlap=params.min_overlap)
                except ValueError:
                    continue
                if not surf.peak_valid:
                    continue
                lag_z, lag_x, saturated = subpixel_peak(surf)
                if saturated and k > 0:
                    # refinements hitting the search border are outliers
                    continue
                res_z[i, j] = lag_z * grid.dz
                res_x[i, j] = lag_x * grid.dx
                valid[i, j] = True

        if field is None:
            prev_z = np.zeros_like(res_z)
            prev_x = np.zeros_like(res_x)
        else:
            prev_z, prev_x = _densify(field, centers_z, centers_x)

        field = DisplacementField(
            u_x=prev_x + res_x, u_z=prev_z + res_z,
            centers_x=centers_x, centers_z=centers_z, valid=valid,
        )
        if params.smooth_each_pass:
            field = smooth_field(field)
    return field


def save_field(path, field: DisplacementField, metadata=None) -> None:
    """Field file: JSON header line, float32 planes, validity bitmask."""
    header = {
        "magic": FIELD_MAGIC,
        "version": 1,
        "n_cz": len(field.centers_z),
        "n_cx": len(field.centers_x),
    }
    if metadata:
        header["metadata"] = metadata
    with open(path, "wb") as f:
        f.write((json.dumps(header) + "\n").encode())
        f.write(field.u_x.astype(np.float32).tobytes())
        f.write(field.u_z.astype(np.float32).tobytes())
        f.write(field.centers_x.astype(np.float32).tobytes())
        f.write(field.centers_z.astype(np.float32).tobytes())
        f.write(np.packbits(field.valid.ravel()).tobytes())


def load_field(path) -> DisplacementField:
    with open(path, "rb") as f:
        try:
            header = json.loads(f.readline())
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: malformed field header") from exc
        if header.get("magic") != FIELD_MAGIC:
            raise ValueError(f"{path}: bad magic in field header")
        n_cz, n_cx = header["n_cz"], header["n_cx"]
        plane = n_cz * n_cx
        u_x = np.frombuffer(f.read(4 * plane), dtype=np.float32)
        u_z = np.frombuffer(f.read(4 * plane), dtype=np.float32)
        cx = np.frombuffer(f.read(4 * n_cx), dtype=np.float32)
        cz = np.frombuffer(f.read(4 * n_cz), dtype=np.float32)
        bits = np.frombuffer(f.read(), dtype=np.uint8)
    valid = np.unpackbits(bits, count=plane).astype(bool)
    return DisplacementField(
        u_x=u_x.reshape(n_cz, n_cx).astype(np.float64),
        u_z=u_z.reshape(n_cz, n_cx).astype(np.float64),
        centers_x=cx.astype(np.float64), centers_z=cz.astype(np.float64),
        valid=valid.reshape(n_cz, n_cx),
    )


def export_field_table(path, field: DisplacementField) -> None:
    """Tabular text export: x, z, u_x, u_z, valid."""
    with open(path, "w") as f:
        f.write("# x_m z_m u_x_m u_z_m valid\n")
        for i, z in enumerate(field.centers_z):
            for j, x in enumerate(field.centers_x):
                f.write(f"{x:.9e} {z:.9e} {field.u_x[i, j]:.9e} "
                        f"{field.u_z[i, j]:.9e} {int(field.valid[i, j])}\n")
