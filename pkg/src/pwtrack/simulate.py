"""Far-field point-scatterer echo simulation for steered plane waves.

For every scatterer / element pair, an echo arrives at

    tau = (z cos(beta) + x sin(beta)) / c  +  |p_s - p_e| / c

with amplitude scatterer_amplitude * element_directivity / range, shaped
by the two-way (pulse-echo) waveform. Contributions are summed per
element in a fixed scatterer order, so results are bit-stable no matter
how element columns are scheduled across threads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .config import ProbeConfig
from .phantom import ScattererPhantom

CHANNEL_MAGIC = b"PWCD"
CHANNEL_VERSION = 1
_HEADER = struct.Struct("<4sIIIddd")  # magic, version, n_time, n_elements, fs, t0, angle


@dataclass(frozen=True)
class PulseModel:
    """Gaussian-modulated sinusoid; the pulse-echo response is its autoconvolution."""

    center_frequency: float = 5.208e6
    fractional_bandwidth: float = 0.75
    kind: str = "gaussian_modulated_sine"

    def __post_init__(self):
        if self.kind != "gaussian_modulated_sine":
            raise ValueError(f"unsupported pulse kind {self.kind!r}")
        if self.center_frequency <= 0 or not 0 < self.fractional_bandwidth < 2:
            raise ValueError("invalid pulse parameters")

    @property
    def sigma(self) -> float:
        """Gaussian envelope std (seconds) from the -6 dB fractional bandwidth."""
        sigma_f = self.fractional_bandwidth * self.center_frequency / (
            2.0 * np.sqrt(2.0 * np.log(2.0)))
        return 1.0 / (2.0 * np.pi * sigma_f)

    def waveform(self, t):
        """One-way transmit waveform."""
        t = np.asarray(t, dtype=np.float64)
        return np.exp(-(t**2) / (2.0 * self.sigma**2)) * np.sin(
            2.0 * np.pi * self.center_frequency * t)

    def two_way_table(self, oversampling_dt: float):
        """Pulse-echo waveform (autoconvolution) sampled on a fine grid.

        Returns (t_start, dt, values) with the peak magnitude scaled to 1.
        """
        half = 4.5 * self.sigma
        n = int(np.ceil(2.0 * half / oversampling_dt)) | 1
        t = (np.arange(n) - n // 2) * oversampling_dt
        one_way = self.waveform(t)
        two_way = np.convolve(one_way, one_way) * oversampling_dt
        two_way /= np.max(np.abs(two_way))
        t_start = -(n - 1) * oversampling_dt
        return t_start, oversampling_dt, two_way


@dataclass(frozen=True)
class ChannelData:
    """Raw echo samples [n_time x n_elements] with acquisition metadata."""

    samples: np.ndarray
    t0: float
    fs: float
    tx_angle: float

    def __post_init__(self):
        if self.samples.ndim != 2:
            raise ValueError("samples must be [n_time x n_elements]")
        if self.fs <= 0:
            raise ValueError("fs must be positive")

    @property
    def n_time(self) -> int:
        return self.samples.shape[0]

    @property
    def n_elements(self) -> int:
        return self.samples.shape[1]


@njit(parallel=True, cache=True)
def _simulate_kernel(pos, amp, elem_x, sin_b, cos_b, c, fs, t0, n_time,
                     table, table_t0, table_dt, elem_width, wavelength, out):
    n_scat = pos.shape[0]
    n_elem = elem_x.shape[0]
    n_table = table.shape[0]
    table_span = table_t0 + (n_table - 1) * table_dt
    for e in prange(n_elem):
        xe = elem_x[e]
        for s in range(n_scat):
            x = pos[s, 0]
            y = pos[s, 1]
            z = pos[s, 2]
            dx = x - xe
            r = np.sqrt(dx * dx + y * y + z * z)
            tau = (z * cos_b + x * sin_b) / c + r / c
            sin_theta = np.sqrt(dx * dx + y * y) / r
            arg = np.pi * elem_width * sin_theta / wavelength
            if arg > 1e-12:
                directivity = np.sin(arg) / arg
            else:
                directivity = 1.0
            a = amp[s] * directivity / r
            k0 = int(np.ceil((tau + table_t0 - t0) * fs))
            k1 = int(np.floor((tau + table_span - t0) * fs))
            if k0 < 0:
                k0 = 0
            if k1 > n_time - 1:
                k1 = n_time - 1
            for k in range(k0, k1 + 1):
                tt = t0 + k / fs - tau
                fidx = (tt - table_t0) / table_dt
                i = int(fidx)
                if 0 <= i < n_table - 1:
                    frac = fidx - i
                    out[k, e] += a * (table[i] * (1.0 - frac) + table[i + 1] * frac)


def simulate_channel_data(
    phantom: ScattererPhantom,
    probe: ProbeConfig,
    tx_angle: float,
    pulse: PulseModel,
    time_window,
) -> ChannelData:
    """Simulate one plane-wave transmit-receive event.

    Echoes arriving outside `time_window` are truncated silently. The
    plane-wave transmit delay is referenced to the wavefront crossing the
    array center (x = 0, z = 0) at t = 0.
    """
    if len(phantom) == 0:
        raise ValueError("phantom is empty")
    t_start, t_end = time_window
    if t_end <= t_start:
        raise ValueError("time_window must be increasing")
    n_time = int(np.ceil((t_end - t_start) * probe.sampling_frequency))
    out = np.zeros((n_time, probe.element_count))
    table_t0, table_dt, table = pulse.two_way_table(
        1.0 / (probe.sampling_frequency * 16.0))
    _simulate_kernel(
        np.ascontiguousarray(phantom.positions),
        np.ascontiguousarray(phantom.amplitudes),
        np.ascontiguousarray(probe.element_positions),
        np.sin(tx_angle), np.cos(tx_angle),
        probe.sound_speed, probe.sampling_frequency, t_start, n_time,
        table, table_t0, table_dt,
        probe.element_width, probe.wavelength, out,
    )
    return ChannelData(samples=out, t0=t_start, fs=probe.sampling_frequency,
                       tx_angle=tx_angle)


def default_time_window(probe: ProbeConfig, max_depth: float):
    """Receive window covering round trips down to `max_depth`."""
    margin = 2e-6
    return (0.0, 2.0 * max_depth / probe.sound_speed
            + probe.aperture / probe.sound_speed + margin)


def save_channel_data(path, data: ChannelData) -> None:
    """Binary channel-data file: little-endian header + float32 time-major samples."""
    header = _HEADER.pack(CHANNEL_MAGIC, CHANNEL_VERSION,
                          data.n_time, data.n_elements,
                          data.fs, data.t0, data.tx_angle)
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(data.samples, dtype=np.float32).tobytes())


def load_channel_data(path) -> ChannelData:
    with open(path, "rb") as f:
        raw = f.read(_HEADER.size)
        if len(raw) < _HEADER.size:
            raise ValueError(f"{path}: truncated channel-data header")
        magic, version, n_time, n_elements, fs, t0, angle = _HEADER.unpack(raw)
        if magic != CHANNEL_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r} in channel-data header")
        if version != CHANNEL_VERSION:
            raise ValueError(f"{path}: unsupported channel-data version {version}")
        samples = np.frombuffer(f.read(), dtype=np.float32)
    if samples.size != n_time * n_elements:
        raise ValueError(f"{path}: sample count does not match header n_time")
    return ChannelData(
        samples=samples.reshape(n_time, n_elements).astype(np.float64),
        t0=t0, fs=fs, tx_angle=angle,
    )
