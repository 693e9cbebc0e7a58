"""Point-scatterer phantoms and inter-transmit motion.

Scatterer positions are (x, y, z) with x lateral, y elevation, z axial
(depth). Phantoms store scatterers as arrays for speed; the rotating
multi-cylinder phantom keeps a per-scatterer zone index so each zone can
rotate about its own center.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .config import ProbeConfig

PHANTOM_MAGIC = "pwtrack-phantom"


@dataclass(frozen=True)
class Scatterer:
    """A single point scatterer: position (x, y, z) and signed reflectivity."""

    position: tuple
    amplitude: float


@dataclass(frozen=True)
class CylinderGeometry:
    """Cylinders with axes along elevation: centers in the (x, z) plane."""

    centers: tuple  # ((x, z), ...) in meters
    radius: float
    height: float

    def __post_init__(self):
        if self.radius <= 0 or self.height <= 0:
            raise ValueError("cylinder radius and height must be positive")

    @property
    def volume(self) -> float:
        return np.pi * self.radius**2 * self.height


@dataclass(frozen=True)
class MotionLaw:
    """Motion applied between transmit events.

    kind is "static" or "rigid_rotation". For rotation, every scatterer
    turns counter-clockwise (in the x-z plane) by angular_velocity * dt
    about the center of the zone it belongs to.
    """

    kind: str = "static"
    centers: tuple = ()  # per-zone (x, z) rotation centers
    angular_velocity: float = 0.0

    def __post_init__(self):
        if self.kind not in ("static", "rigid_rotation"):
            raise ValueError(f"unknown motion kind {self.kind!r}")
        if self.kind == "rigid_rotation" and not self.centers:
            raise ValueError("rigid_rotation requires zone centers")


@dataclass(frozen=True)
class ScattererPhantom:
    """Scatterer arrays plus the motion law and zone membership."""

    positions: np.ndarray  # (n, 3) float64
    amplitudes: np.ndarray  # (n,) float64
    zones: np.ndarray  # (n,) int32, index into motion.centers (or -1)
    motion: MotionLaw = field(default_factory=MotionLaw)

    def __post_init__(self):
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise ValueError("positions must be (n, 3)")
        if len(self.amplitudes) != len(self.positions):
            raise ValueError("amplitudes length mismatch")
        if len(self.zones) != len(self.positions):
            raise ValueError("zones length mismatch")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("non-finite scatterer positions")
        if not np.all(np.isfinite(self.amplitudes)):
            raise ValueError("non-finite scatterer amplitudes")

    def __len__(self):
        return len(self.positions)


def resolution_cell_volume(probe: ProbeConfig, reference_depth: float,
                           elevation_cell: float = 1.0e-3) -> float:
    """Approximate -6 dB resolution-cell volume at a reference depth.

    Axial extent is c / (2 * bandwidth), lateral extent is
    wavelength * depth / aperture, elevation extent is fixed (the
    elevation cell of the probe, 1 mm by default).
    """
    bandwidth_hz = probe.fractional_bandwidth * probe.center_frequency
    axial = probe.sound_speed / (2.0 * bandwidth_hz)
    lateral = probe.wavelength * reference_depth / probe.aperture
    return axial * lateral * elevation_cell


def build_rotating_cylinder_phantom(
    probe: ProbeConfig,
    density: float,
    amplitudes_db,
    geometry: CylinderGeometry,
    angular_velocity: float,
    rng,
    reference_depth: float | None = None,
) -> ScattererPhantom:
    """Fill each cylinder with uniformly random scatterers.

    The scatterer count per cylinder is density * volume / cell-volume.
    Amplitudes are drawn from a zero-mean normal whose mean magnitude
    matches the zone level in dB (relative to the 0 dB reference).
    `rng` is a numpy Generator; all randomness flows through it.
    """
    if density <= 0:
        raise ValueError("density must be positive")
    amplitudes_db = list(amplitudes_db)
    if len(amplitudes_db) != len(geometry.centers):
        raise ValueError("one amplitude per cylinder required")
    if reference_depth is None:
        reference_depth = float(np.mean([c[1] for c in geometry.centers]))
    cell = resolution_cell_volume(probe, reference_depth,
                                  elevation_cell=geometry.height)
    count = int(round(density * geometry.volume / cell))
    if count < 1:
        raise ValueError("density too low: no scatterers per cylinder")

    positions = []
    amplitudes = []
    zones = []
    for zone, ((cx, cz), level_db) in enumerate(zip(geometry.centers, amplitudes_db)):
        # uniform in the disk via radius sqrt-transform
        r = geometry.radius * np.sqrt(rng.random(count))
        phi = rng.random(count) * 2.0 * np.pi
        x = cx + r * np.cos(phi)
        z = cz + r * np.sin(phi)
        y = (rng.random(count) - 0.5) * geometry.height
        mean_mag = 10.0 ** (level_db / 20.0)
        amp = rng.normal(0.0, mean_mag * np.sqrt(np.pi / 2.0), count)
        positions.append(np.column_stack([x, y, z]))
        amplitudes.append(amp)
        zones.append(np.full(count, zone, dtype=np.int32))

    motion = MotionLaw(
        kind="rigid_rotation",
        centers=tuple(tuple(c) for c in geometry.centers),
        angular_velocity=angular_velocity,
    )
    return ScattererPhantom(
        positions=np.concatenate(positions),
        amplitudes=np.concatenate(amplitudes),
        zones=np.concatenate(zones),
        motion=motion,
    )


def advance_motion(phantom: ScattererPhantom, dt: float) -> ScattererPhantom:
    """Return the phantom after `dt` seconds of its motion law."""
    if dt < 0:
        raise ValueError("dt must be >= 0")
    motion = phantom.motion
    if motion.kind == "static" or dt == 0.0 or motion.angular_velocity == 0.0:
        return phantom
    theta = motion.angular_velocity * dt
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    pos = phantom.positions.copy()
    for zone, (cx, cz) in enumerate(motion.centers):
        sel = phantom.zones == zone
        x = pos[sel, 0] - cx
        z = pos[sel, 2] - cz
        # counter-clockwise in the image plane (x right, z down)
        pos[sel, 0] = cx + cos_t * x + sin_t * z
        pos[sel, 2] = cz - sin_t * x + cos_t * z
    return replace(phantom, positions=pos)


def save_phantom(path, phantom: ScattererPhantom) -> None:
    """Write a phantom: one JSON header line, then a float32 scatterer table.

    Table columns are x, y, z, amplitude, zone.
    """
    header = {
        "magic": PHANTOM_MAGIC,
        "version": 1,
        "count": len(phantom),
        "motion": {
            "kind": phantom.motion.kind,
            "centers": [list(c) for c in phantom.motion.centers],
            "angular_velocity": phantom.motion.angular_velocity,
        },
    }
    table = np.column_stack([
        phantom.positions,
        phantom.amplitudes,
        phantom.zones.astype(np.float64),
    ]).astype(np.float32)
    with open(path, "wb") as f:
        f.write((json.dumps(header) + "\n").encode())
        f.write(table.tobytes())


def load_phantom(path) -> ScattererPhantom:
    with open(path, "rb") as f:
        header_line = f.readline()
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: malformed phantom header") from exc
        if header.get("magic") != PHANTOM_MAGIC:
            raise ValueError(f"{path}: bad magic in phantom header")
        count = header["count"]
        table = np.frombuffer(f.read(), dtype=np.float32).reshape(count, 5)
    motion_info = header["motion"]
    motion = MotionLaw(
        kind=motion_info["kind"],
        centers=tuple(tuple(c) for c in motion_info["centers"]),
        angular_velocity=motion_info["angular_velocity"],
    )
    return ScattererPhantom(
        positions=table[:, :3].astype(np.float64),
        amplitudes=table[:, 3].astype(np.float64),
        zones=table[:, 4].astype(np.int32),
        motion=motion,
    )
