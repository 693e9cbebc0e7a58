"""Probe, acquisition-sequence, and image-grid configuration.

All quantities are SI (meters, seconds, hertz, radians) unless noted.
Configuration files use INI syntax with sections [probe], [sequence],
and [grid]; field names mirror the dataclass fields.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class ProbeConfig:
    """Linear-array transducer geometry, pulse, and acoustic constants.

    The aperture is the lateral span of the element centers,
    i.e. (element_count - 1) * pitch, and must agree with the stored
    value to within one pitch.
    """

    element_count: int = 192
    pitch: float = 230e-6
    element_width: float = 207e-6
    aperture: float = 43.93e-3
    center_frequency: float = 5.3e6
    transmit_frequency: float = 5.208e6
    sampling_frequency: float = 20.833e6
    sound_speed: float = 1540.0
    elevation_focus: float = 28e-3
    fractional_bandwidth: float = 0.75

    def __post_init__(self):
        if self.element_count < 2:
            raise ValueError("element_count must be >= 2")
        if self.aperture <= 0 or self.pitch <= 0 or self.element_width <= 0:
            raise ValueError("geometry values must be positive")
        for name in ("center_frequency", "transmit_frequency", "sampling_frequency"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.sampling_frequency < 2 * self.transmit_frequency:
            raise ValueError("sampling_frequency below Nyquist for the transmit pulse")
        if self.sound_speed <= 0:
            raise ValueError("sound_speed must be positive")
        nominal = (self.element_count - 1) * self.pitch
        if abs(nominal - self.aperture) > self.pitch:
            raise ValueError(
                f"aperture {self.aperture} inconsistent with "
                f"element_count * pitch ({nominal})"
            )
        if self.wavelength >= self.aperture:
            raise ValueError("wavelength must be smaller than the aperture")

    @property
    def wavelength(self) -> float:
        """Wavelength at the transmit frequency (used for image grids)."""
        return self.sound_speed / self.transmit_frequency

    @property
    def center_wavelength(self) -> float:
        """Wavelength at the nominal center frequency (used for angle planning)."""
        return self.sound_speed / self.center_frequency

    @property
    def element_positions(self):
        """Lateral element-center coordinates, symmetric about x = 0."""
        import numpy as np

        n = self.element_count
        return (np.arange(n) - (n - 1) / 2) * self.pitch


@dataclass(frozen=True)
class SteeringSequence:
    """Ordered plane-wave steering angles fired at a fixed PRF.

    The angle count is odd and the ordering alternates outside-in:
    (-b_M, +b_M, -b_{M-1}, +b_{M-1}, ..., -b_1, +b_1, 0).
    """

    angles: tuple = field(default_factory=lambda: (0.0,))
    prf: float = 9e3

    def __post_init__(self):
        if len(self.angles) % 2 == 0:
            raise ValueError("angle count must be odd")
        if self.prf <= 0:
            raise ValueError("prf must be positive")

    @property
    def count(self) -> int:
        return len(self.angles)

    @property
    def frame_rate(self) -> float:
        return self.prf / self.count


@dataclass(frozen=True)
class ImageGrid:
    """Uniform Cartesian pixel grid with inclusive endpoints on grid nodes."""

    x_min: float
    x_max: float
    z_min: float
    z_max: float
    dx: float
    dz: float
    nx: int
    nz: int

    def __post_init__(self):
        if self.dx <= 0 or self.dz <= 0:
            raise ValueError("grid spacings must be positive")
        if self.nx != round((self.x_max - self.x_min) / self.dx) + 1:
            raise ValueError("nx inconsistent with lateral extent")
        if self.nz != round((self.z_max - self.z_min) / self.dz) + 1:
            raise ValueError("nz inconsistent with axial extent")

    @property
    def x(self):
        import numpy as np

        return self.x_min + self.dx * np.arange(self.nx)

    @property
    def z(self):
        import numpy as np

        return self.z_min + self.dz * np.arange(self.nz)

    @property
    def shape(self):
        """(nz, nx), matching image array layout."""
        return (self.nz, self.nx)


def plan_angle_spacing(probe: ProbeConfig) -> float:
    """Steering-angle spacing arcsin(wavelength / aperture), in radians.

    Uses the center-frequency wavelength, which reproduces the published
    0.38 degree spacing for the default probe.
    """
    return math.asin(probe.center_wavelength / probe.aperture)


def plan_sequence(probe: ProbeConfig, n_angles: int, prf: float) -> SteeringSequence:
    """Plan an alternate-ordered steered plane-wave sequence.

    Angles are n * spacing for n = -M..M with M = (n_angles - 1) / 2,
    reordered outside-in with the 0-degree transmit last.
    """
    if n_angles < 1 or n_angles % 2 == 0:
        raise ValueError("n_angles must be an odd integer >= 1")
    spacing = plan_angle_spacing(probe)
    m = (n_angles - 1) // 2
    ordered = []
    for k in range(m, 0, -1):
        ordered.append(-k * spacing)
        ordered.append(k * spacing)
    ordered.append(0.0)
    return SteeringSequence(angles=tuple(ordered), prf=prf)


def reference_angle_count(probe: ProbeConfig, f_number: float) -> int:
    """Number of angles for a reference-quality compound, aperture/(wavelength*F#).

    Rounded to the nearest integer, then up to the next odd integer so the
    sequence contains a normal-incidence transmit. With the default probe
    and F# = 1.75 this yields 87.
    """
    if f_number <= 0:
        raise ValueError("f_number must be positive")
    n = round(probe.aperture / (probe.center_wavelength * f_number))
    n = max(n, 1)
    if n % 2 == 0:
        n += 1
    return n


def make_image_grid(
    probe: ProbeConfig,
    depth_range: tuple,
    axial_fraction: float,
    lateral_fraction: float,
) -> ImageGrid:
    """Build a reconstruction grid spanning the aperture laterally.

    Spacings are wavelength fractions (transmit frequency). Pixel counts
    are chosen so the grid covers the requested extent entirely: the
    number of intervals per axis is the ceiling of extent / spacing, and
    the max endpoint is snapped outward onto a grid node. The default
    probe at 1-60 mm depth with fractions (1/8, 1/4) gives 596 x 1598
    pixels (lateral x axial).
    """
    z_min, z_max = depth_range
    if z_min < 0 or z_max < z_min:
        raise ValueError("depth_range must be non-negative and increasing")
    if axial_fraction <= 0 or lateral_fraction <= 0:
        raise ValueError("grid fractions must be positive")
    lam = probe.wavelength
    dx = lam * lateral_fraction
    dz = lam * axial_fraction
    x_min = -probe.aperture / 2
    x_span = probe.aperture
    # ceil with a small slack so exact multiples do not gain a pixel
    nx = math.ceil(x_span / dx - 1e-9) + 1
    nz = math.ceil((z_max - z_min) / dz - 1e-9) + 1
    return ImageGrid(
        x_min=x_min,
        x_max=x_min + (nx - 1) * dx,
        z_min=z_min,
        z_max=z_min + (nz - 1) * dz,
        dx=dx,
        dz=dz,
        nx=nx,
        nz=nz,
    )


def load_config(path):
    """Read an INI configuration file.

    Returns (probe, sequence, grid); sequence and grid are None when the
    corresponding section is absent. The [sequence] section holds
    n_angles and prf; the [grid] section holds depth_min, depth_max,
    axial_fraction, lateral_fraction.
    """
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(path)

    probe_kwargs = {}
    if parser.has_section("probe"):
        for key, value in parser.items("probe"):
            if key == "element_count":
                probe_kwargs[key] = int(value)
            else:
                probe_kwargs[key] = float(value)
    probe = ProbeConfig(**probe_kwargs)

    sequence = None
    if parser.has_section("sequence"):
        sec = parser["sequence"]
        sequence = plan_sequence(
            probe,
            n_angles=sec.getint("n_angles", 1),
            prf=sec.getfloat("prf", 9e3),
        )

    grid = None
    if parser.has_section("grid"):
        sec = parser["grid"]
        grid = make_image_grid(
            probe,
            depth_range=(sec.getfloat("depth_min"), sec.getfloat("depth_max")),
            axial_fraction=sec.getfloat("axial_fraction", 0.125),
            lateral_fraction=sec.getfloat("lateral_fraction", 0.25),
        )

    return probe, sequence, grid
