"""Rotating-cylinder experiment harness.

Runs the full pipeline (phantom -> steered-PW simulation with
inter-transmit motion -> DAS reconstruction -> compounding -> optional
enhancement -> tracking -> error metrics) over a matrix of
reconstruction methods, displacement regimes, and scatterer
realizations, and writes displacement fields, averaged error maps, and
a summary table to an output directory. Outputs are deterministic for a
given seed: realization k draws all randomness from seed + k and no
file embeds a timestamp.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .beamform import (
    EnhancerHook,
    compound,
    das_reconstruct,
    enhance,
    envelope_on_tracking_grid,
)
from .config import ImageGrid, ProbeConfig, make_image_grid, plan_sequence
from .metrics import RepeMap, analytic_rotation_field, repe_field, rve, zone_mask
from .phantom import (
    CylinderGeometry,
    ScattererPhantom,
    advance_motion,
    build_rotating_cylinder_phantom,
)
from .simulate import PulseModel, default_time_window, simulate_channel_data
from .tracking import DisplacementField, TrackingParams, save_field, track

# Maximum inter-frame displacement (meters) at the evaluation radius.
# Within the annulus the displacement then spans roughly a tenth of the
# maximum (at the inner margin) up to the maximum itself.
DISPLACEMENT_REGIMES = {"small": 60e-6, "large": 600e-6}


@dataclass(frozen=True)
class MethodSpec:
    """One image reconstruction method: n steered transmits per frame.

    The frame rate is prf / n_angles; every method runs at its maximum
    achievable frame rate. An enhancer hook may post-process each
    compounded frame before envelope detection.
    """

    name: str
    n_angles: int
    enhancer: EnhancerHook = field(default_factory=EnhancerHook)

    def __post_init__(self):
        if not self.name:
            raise ValueError("method name must be non-empty")
        if self.n_angles < 1 or self.n_angles % 2 == 0:
            raise ValueError("n_angles must be an odd integer >= 1")


def das_method(n_angles: int) -> MethodSpec:
    """Plain coherent compounding of n_angles steered transmits."""
    return MethodSpec(name=f"das_{n_angles}", n_angles=n_angles)


def enhanced_single_pw(hook: EnhancerHook, name: str = "enhanced_1") -> MethodSpec:
    """Single normal-incidence transmit with an external image enhancer."""
    return MethodSpec(name=name, n_angles=1, enhancer=hook)


@dataclass(frozen=True)
class ExperimentSpec:
    """Full description of one experiment run."""

    output_dir: Path
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    geometry: CylinderGeometry = None
    zone_names: tuple = ("A", "B", "C", "D")
    amplitudes_db: tuple = (20.0, -20.0, -20.0, 0.0)
    methods: tuple = ()
    regimes: tuple = ("small", "large")
    realizations: int = 5
    seed: int = 0
    prf: float = 9e3
    density: float = 10.0
    depth_range: tuple = (1e-3, 45e-3)
    axial_fraction: float = 0.125
    lateral_fraction: float = 0.25
    tracking: TrackingParams = field(default_factory=TrackingParams)
    border_margin: float = 0.36e-3
    f_number: float | None = None
    workers: int = 1

    def __post_init__(self):
        if self.geometry is None or not self.methods:
            raise ValueError("geometry and at least one method are required")
        if self.realizations < 1:
            raise ValueError("realizations must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        for regime in self.regimes:
            if regime not in DISPLACEMENT_REGIMES:
                raise ValueError(f"unknown displacement regime {regime!r}")
        if len(self.zone_names) != len(self.geometry.centers):
            raise ValueError("one zone name per cylinder required")
        if len(self.amplitudes_db) != len(self.geometry.centers):
            raise ValueError("one amplitude per cylinder required")
        names = [m.name for m in self.methods]
        if len(set(names)) != len(names):
            raise ValueError("method names must be unique")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @property
    def evaluation_radius(self) -> float:
        """Radius at which the regime's maximum displacement occurs."""
        return self.geometry.radius - self.border_margin

    def angular_velocity(self, method: MethodSpec, regime: str) -> float:
        """Angular velocity making the inter-frame chord displacement at
        the evaluation radius equal the regime maximum at this method's
        frame rate."""
        d_max = DISPLACEMENT_REGIMES[regime]
        r = self.evaluation_radius
        if d_max >= 2 * r:
            raise ValueError("regime displacement exceeds the cylinder")
        theta = 2.0 * np.arcsin(d_max / (2.0 * r))
        frame_rate = self.prf / method.n_angles
        return theta * frame_rate


def desk_experiment_spec(output_dir, realizations: int = 5,
                         seed: int = 12345, methods=None,
                         regimes=("small", "large")) -> ExperimentSpec:
    """Desk-scale defaults: a 96-element probe and half-size cylinders.

    The four cylinders keep the full-scale layout's character: a bright
    reference zone (A), two dim zones (B, C) placed in the edge-wave and
    side-lobe artifact regions that A casts under single-PW imaging, and
    a mid-level zone (D) on A's grating-lobe replica.
    """
    probe = ProbeConfig(element_count=96, aperture=95 * 230e-6)
    geometry = CylinderGeometry(
        centers=((-5.5e-3, 16e-3), (7e-3, 5.5e-3), (1e-3, 21e-3),
                 (6.5e-3, 12.5e-3)),
        radius=3.43e-3,
        height=1e-3,
    )
    if methods is None:
        methods = (das_method(1), das_method(9), das_method(15))
    return ExperimentSpec(
        output_dir=Path(output_dir),
        probe=probe,
        geometry=geometry,
        methods=tuple(methods),
        regimes=tuple(regimes),
        realizations=realizations,
        seed=seed,
        depth_range=(2e-3, 28e-3),
    )


def _zone_reference_depth(geometry: CylinderGeometry) -> float:
    return float(np.mean([c[1] for c in geometry.centers]))


def _build_phantom(spec: ExperimentSpec, realization: int) -> ScattererPhantom:
    rng = np.random.default_rng(spec.seed + realization)
    return build_rotating_cylinder_phantom(
        probe=spec.probe,
        density=spec.density,
        amplitudes_db=spec.amplitudes_db,
        geometry=spec.geometry,
        angular_velocity=0.0,
        rng=rng,
        reference_depth=_zone_reference_depth(spec.geometry),
    )


def _run_one(spec: ExperimentSpec, method: MethodSpec, regime: str,
             phantom: ScattererPhantom, grid: ImageGrid,
             pulse: PulseModel, time_window) -> DisplacementField:
    """Simulate two consecutive frames and track the motion between them."""
    omega = spec.angular_velocity(method, regime)
    phantom = replace(phantom,
                      motion=replace(phantom.motion, kind="rigid_rotation",
                                     centers=spec.geometry.centers,
                                     angular_velocity=omega))
    sequence = plan_sequence(spec.probe, method.n_angles, spec.prf)
    n = sequence.count
    frames = []
    for start in range(0, 2 * n, n):
        images = []
        for i in range(n):
            data = simulate_channel_data(phantom, spec.probe,
                                         sequence.angles[i], pulse,
                                         time_window)
            images.append(das_reconstruct(data, spec.probe, grid,
                                          f_number=spec.f_number))
            phantom = advance_motion(phantom, 1.0 / spec.prf)
        frames.append(enhance(compound(images), method.enhancer))
    env_a = envelope_on_tracking_grid(frames[0])
    env_b = envelope_on_tracking_grid(frames[1])
    return track(env_a, env_b, spec.tracking)


def _zone_repe_maps(spec: ExperimentSpec, method: MethodSpec, regime: str,
                    fld: DisplacementField):
    """Per-zone local REPE maps of one field against the analytic rotation."""
    omega = spec.angular_velocity(method, regime)
    frame_interval = method.n_angles / spec.prf
    out = {}
    for zone, center in zip(spec.zone_names, spec.geometry.centers):
        mask = zone_mask(fld.centers_x, fld.centers_z, center,
                         spec.geometry.radius, spec.border_margin,
                         spec.border_margin)
        truth = analytic_rotation_field(center, omega, frame_interval,
                                        fld.centers_x, fld.centers_z)
        rmap = repe_field(fld, truth)
        values = np.where(mask & rmap.mask, rmap.values, np.nan)
        out[zone] = (values, mask & rmap.mask)
    return out


def run_experiment(spec: ExperimentSpec):
    """Run the method x regime x realization matrix and write all artifacts.

    Returns the summary dictionary that is also written to summary.json.
    A failing realization is logged in the summary and skipped from the
    averages; the run as a whole still completes.
    """
    out_dir = Path(spec.output_dir)
    fields_dir = out_dir / "fields"
    maps_dir = out_dir / "maps"
    for d in (out_dir, fields_dir, maps_dir):
        d.mkdir(parents=True, exist_ok=True)

    grid = make_image_grid(spec.probe, spec.depth_range,
                           spec.axial_fraction, spec.lateral_fraction)
    pulse = PulseModel(center_frequency=spec.probe.transmit_frequency,
                       fractional_bandwidth=spec.probe.fractional_bandwidth)
    time_window = default_time_window(spec.probe, grid.z_max + 1e-3)
    phantoms = [_build_phantom(spec, k) for k in range(spec.realizations)]

    failures = []
    # (method, regime, zone) -> list of per-realization masked REPE maps
    collected = {}
    field_grid = {}

    def task(method, regime, k):
        fld = _run_one(spec, method, regime, phantoms[k], grid, pulse,
                       time_window)
        save_field(
            fields_dir / f"{method.name}_{regime}_r{k:02d}.field", fld,
            metadata={
                "method": method.name, "regime": regime, "realization": k,
                "angular_velocity": spec.angular_velocity(method, regime),
                "frame_interval": method.n_angles / spec.prf,
            })
        return fld

    jobs = [(method, regime, k)
            for method in spec.methods
            for regime in spec.regimes
            for k in range(spec.realizations)]
    if spec.workers == 1:
        results = []
        for job in jobs:
            try:
                results.append(task(*job))
            except Exception as exc:  # logged below, run continues
                results.append(exc)
    else:
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            futures = [pool.submit(task, *job) for job in jobs]
            results = []
            for fut in futures:
                try:
                    results.append(fut.result())
                except Exception as exc:  # logged below, run continues
                    results.append(exc)

    for (method, regime, k), result in zip(jobs, results):
        if isinstance(result, Exception):
            failures.append({"method": method.name, "regime": regime,
                             "realization": k, "reason": str(result)})
            continue
        try:
            maps = _zone_repe_maps(spec, method, regime, result)
        except Exception as exc:
            failures.append({"method": method.name, "regime": regime,
                             "realization": k, "reason": str(exc)})
            continue
        field_grid[(method.name, regime)] = result
        for zone, (values, mask) in maps.items():
            collected.setdefault((method.name, regime, zone), []).append(
                (values, mask))

    rows = []
    avg_by_config = {}
    for method in spec.methods:
        for regime in spec.regimes:
            for zone in spec.zone_names:
                key = (method.name, regime, zone)
                stacks = collected.get(key)
                if not stacks:
                    rows.append({"zone": zone, "method": method.name,
                                 "regime": regime, "mrepe": None,
                                 "rve": None, "n_valid": 0})
                    continue
                # masks are identical across realizations (same grid and
                # zero-truth cells), so a plain mean suffices
                values = np.mean(np.stack([v for v, _ in stacks]), axis=0)
                mask = stacks[0][1]
                avg = RepeMap(values=np.where(mask, values, np.nan), mask=mask)
                eval_mask = mask & np.isfinite(avg.values)
                mrepe_value = float(np.mean(avg.values[eval_mask]))
                rows.append({
                    "zone": zone, "method": method.name, "regime": regime,
                    "mrepe": mrepe_value, "rve": rve(avg),
                    "n_valid": int(eval_mask.sum()),
                })
                avg_by_config.setdefault((method.name, regime), {})[zone] = avg

    for (method_name, regime), zones in avg_by_config.items():
        ref = field_grid[(method_name, regime)]
        values = np.full(ref.u_x.shape, np.nan)
        mask = np.zeros(ref.u_x.shape, dtype=bool)
        for avg in zones.values():
            sel = avg.mask
            values[sel] = avg.values[sel]
            mask |= sel
        save_field(
            maps_dir / f"repe_{method_name}_{regime}.field",
            DisplacementField(u_x=values, u_z=np.zeros_like(values),
                              centers_x=ref.centers_x,
                              centers_z=ref.centers_z, valid=mask),
            metadata={"content": "averaged_local_repe",
                      "method": method_name, "regime": regime,
                      "realizations": spec.realizations})

    attempted = len(jobs)
    completed = attempted - len(failures)
    summary = {
        "seed": spec.seed,
        "realizations": spec.realizations,
        "methods": [m.name for m in spec.methods],
        "regimes": list(spec.regimes),
        "zones": list(spec.zone_names),
        "attempted": attempted,
        "completed": completed,
        "failures": failures,
        "rows": rows,
    }
    with open(out_dir / "summary.json", "w") as f:
        json.dump(summary, f, indent=2)
        f.write("\n")
    _write_summary_table(out_dir / "summary.txt", summary)
    return summary


def _write_summary_table(path, summary) -> None:
    with open(path, "w") as f:
        f.write(f"{'zone':<6}{'method':<14}{'regime':<8}"
                f"{'mrepe_%':>10}{'rve_%':>8}{'n_valid':>9}\n")
        for row in summary["rows"]:
            mrepe = ("      --" if row["mrepe"] is None
                     else f"{100 * row['mrepe']:8.2f}")
            rve_s = ("    --" if row["rve"] is None
                     else f"{100 * row['rve']:6.2f}")
            f.write(f"{row['zone']:<6}{row['method']:<14}{row['regime']:<8}"
                    f"  {mrepe}  {rve_s}{row['n_valid']:>9}\n")
        f.write(f"\ncompleted {summary['completed']} of "
                f"{summary['attempted']} realizations\n")
        for failure in summary["failures"]:
            f.write(f"failed: {failure['method']} {failure['regime']} "
                    f"r{failure['realization']:02d}: {failure['reason']}\n")


def parse_method(token: str, enhancer: EnhancerHook | None = None) -> MethodSpec:
    """Parse a method token: "das_<n>" or "enhanced_1".

    "enhanced_1" requires an external enhancer hook.
    """
    token = token.strip()
    if token.startswith("das_"):
        try:
            n = int(token[4:])
        except ValueError:
            raise ValueError(f"malformed method token {token!r}") from None
        return das_method(n)
    if token == "enhanced_1":
        if enhancer is None or enhancer.kind == "identity":
            raise ValueError("method enhanced_1 requires an enhancer command")
        return enhanced_single_pw(enhancer)
    raise ValueError(f"unknown method token {token!r}")


def load_experiment_spec(path, output_dir, realizations: int | None = None,
                         seed: int | None = None,
                         enhancer: EnhancerHook | None = None,
                         workers: int | None = None) -> ExperimentSpec:
    """Build an ExperimentSpec from an INI file.

    Sections: [probe] (ProbeConfig fields), [experiment] (seed,
    realizations, prf, density, methods, regimes, depth_min, depth_max,
    border_margin, workers), [zones] (names, centers, radius, height,
    amplitudes_db), optional [tracking] (window_sizes,
    overlap_fraction). Keyword arguments override the file.
    """
    import configparser

    from .config import load_config

    probe, _, _ = load_config(path)
    parser = configparser.ConfigParser()
    parser.read(path)
    if not parser.has_section("experiment") or not parser.has_section("zones"):
        raise ValueError(f"{path}: [experiment] and [zones] sections required")
    exp = parser["experiment"]
    zones = parser["zones"]

    centers = tuple(
        tuple(float(v) for v in pair.split())
        for pair in zones.get("centers").split(","))
    if any(len(c) != 2 for c in centers):
        raise ValueError(f"{path}: zone centers must be 'x z' pairs")
    geometry = CylinderGeometry(
        centers=centers,
        radius=zones.getfloat("radius"),
        height=zones.getfloat("height", 1e-3),
    )
    zone_names = tuple(s.strip() for s in zones.get("names").split(","))
    amplitudes_db = tuple(
        float(s) for s in zones.get("amplitudes_db").split(","))

    method_tokens = [s.strip() for s in exp.get("methods").split(",")]
    methods = tuple(parse_method(tok, enhancer) for tok in method_tokens)
    regimes = tuple(s.strip() for s in exp.get("regimes", "small, large").split(","))

    tracking = TrackingParams()
    if parser.has_section("tracking"):
        trk = parser["tracking"]
        kwargs = {}
        if "window_sizes" in trk:
            kwargs["pass_window_sizes"] = tuple(
                float(s) for s in trk.get("window_sizes").split(","))
        if "overlap_fraction" in trk:
            kwargs["overlap_fraction"] = trk.getfloat("overlap_fraction")
        tracking = TrackingParams(**kwargs)

    return ExperimentSpec(
        output_dir=Path(output_dir),
        probe=probe,
        geometry=geometry,
        zone_names=zone_names,
        amplitudes_db=amplitudes_db,
        methods=methods,
        regimes=regimes,
        realizations=(realizations if realizations is not None
                      else exp.getint("realizations", 5)),
        seed=seed if seed is not None else exp.getint("seed", 0),
        prf=exp.getfloat("prf", 9e3),
        density=exp.getfloat("density", 10.0),
        depth_range=(exp.getfloat("depth_min", 1e-3),
                     exp.getfloat("depth_max", 45e-3)),
        tracking=tracking,
        border_margin=exp.getfloat("border_margin", 0.36e-3),
        workers=workers if workers is not None else exp.getint("workers", 1),
    )


def summary_row(summary, zone: str, method: str, regime: str):
    """Look up one (zone, method, regime) row of a summary dictionary."""
    for row in summary["rows"]:
        if (row["zone"] == zone and row["method"] == method
                and row["regime"] == regime):
            return row
    raise KeyError(f"no summary row for {zone}/{method}/{regime}")
