"""Command-line interface.

Subcommands cover the pipeline stages (phantom, simulate, beamform,
track, metrics) and the full experiment harness. All file formats are
the binary/JSON formats documented in the corresponding modules.
"""

from __future__ import annotations

import argparse
import shlex
import sys
from pathlib import Path

import numpy as np

from .beamform import (
    EnhancerHook,
    EnvelopeImage,
    IQImage,
    compound,
    das_reconstruct,
    enhance,
    envelope_on_tracking_grid,
    load_image,
    save_image,
)
from .config import ProbeConfig, load_config, make_image_grid, plan_sequence
from .experiment import (
    desk_experiment_spec,
    load_experiment_spec,
    parse_method,
    run_experiment,
)
from .metrics import RepeMap, rve
from .phantom import (
    CylinderGeometry,
    advance_motion,
    build_rotating_cylinder_phantom,
    load_phantom,
    save_phantom,
)
from .simulate import (
    PulseModel,
    default_time_window,
    load_channel_data,
    save_channel_data,
    simulate_channel_data,
)
from .tracking import (
    PAPER_OVERLAP,
    PAPER_WINDOW_SIZES,
    TrackingParams,
    load_field,
    save_field,
    track,
)


def _probe_and_grid(args):
    if args.config:
        probe, _, grid = load_config(args.config)
    else:
        probe, grid = ProbeConfig(), None
    if grid is None:
        grid = make_image_grid(probe, (1e-3, 45e-3), 0.125, 0.25)
    return probe, grid


def _enhancer_from(args) -> EnhancerHook:
    if getattr(args, "enhancer", None):
        return EnhancerHook(kind="external_command",
                            command=tuple(shlex.split(args.enhancer)))
    return EnhancerHook()


def _cmd_phantom(args) -> int:
    if args.config:
        spec = load_experiment_spec(args.config, output_dir=".")
        probe, geometry = spec.probe, spec.geometry
        amplitudes_db, density = spec.amplitudes_db, spec.density
    else:
        spec = desk_experiment_spec(".")
        probe, geometry = spec.probe, spec.geometry
        amplitudes_db, density = spec.amplitudes_db, spec.density
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    phantom = build_rotating_cylinder_phantom(
        probe=probe, density=density, amplitudes_db=amplitudes_db,
        geometry=geometry, angular_velocity=args.angular_velocity, rng=rng)
    save_phantom(args.output, phantom)
    print(f"wrote {len(phantom)} scatterers to {args.output}")
    return 0


def _cmd_simulate(args) -> int:
    probe, grid = _probe_and_grid(args)
    phantom = load_phantom(args.phantom)
    sequence = plan_sequence(probe, args.n_angles, args.prf)
    pulse = PulseModel(center_frequency=probe.transmit_frequency,
                       fractional_bandwidth=probe.fractional_bandwidth)
    window = default_time_window(probe, grid.z_max + 1e-3)
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, angle in enumerate(sequence.angles):
        data = simulate_channel_data(phantom, probe, angle, pulse, window)
        save_channel_data(out_dir / f"tx_{i:03d}.chd", data)
        phantom = advance_motion(phantom, 1.0 / sequence.prf)
    print(f"wrote {sequence.count} transmits to {out_dir}")
    return 0


def _cmd_beamform(args) -> int:
    probe, grid = _probe_and_grid(args)
    hook = _enhancer_from(args)
    images = [das_reconstruct(load_channel_data(path), probe, grid,
                              f_number=args.f_number)
              for path in args.inputs]
    if args.compound:
        image = enhance(compound(images), hook)
        if args.envelope:
            save_image(args.output, envelope_on_tracking_grid(image))
        else:
            save_image(args.output, image)
        print(f"wrote {args.output}")
    else:
        out_dir = Path(args.output)
        out_dir.mkdir(parents=True, exist_ok=True)
        for path, image in zip(args.inputs, images):
            image = enhance(image, hook)
            if args.envelope:
                image = envelope_on_tracking_grid(image)
            out = out_dir / (Path(path).stem + (".env" if args.envelope
                                                else ".iq"))
            save_image(out, image)
        print(f"wrote {len(images)} images to {out_dir}")
    return 0


def _load_envelope(path) -> EnvelopeImage:
    image = load_image(path)
    if isinstance(image, IQImage):
        return envelope_on_tracking_grid(image)
    return image


def _cmd_track(args) -> int:
    frame_a = _load_envelope(args.frame_a)
    frame_b = _load_envelope(args.frame_b)
    if args.params == "paper":
        params = TrackingParams(pass_window_sizes=PAPER_WINDOW_SIZES,
                                overlap_fraction=PAPER_OVERLAP)
    else:
        sizes = tuple(float(s) for s in args.params.split(","))
        params = TrackingParams(pass_window_sizes=sizes)
    result = track(frame_a, frame_b, params)
    save_field(args.output, result)
    print(f"wrote {args.output}")
    return 0


def _cmd_metrics(args) -> int:
    estimate = load_field(args.estimate)
    reference = load_field(args.reference)
    from .metrics import repe_field

    rmap = repe_field(estimate, reference)
    mask = rmap.mask & np.isfinite(rmap.values)
    if not mask.any():
        print("no cells with non-zero reference displacement", file=sys.stderr)
        return 1
    mrepe_value = float(np.mean(rmap.values[mask]))
    rve_value = rve(RepeMap(values=rmap.values, mask=mask))
    print(f"mrepe_% {100 * mrepe_value:.3f}")
    print(f"rve_% {100 * rve_value:.2f}")
    print(f"n_valid {int(mask.sum())}")
    return 0


def _cmd_experiment(args) -> int:
    hook = _enhancer_from(args)
    if args.config:
        spec = load_experiment_spec(
            args.config, output_dir=args.output_dir,
            realizations=args.realizations, seed=args.seed,
            enhancer=hook if hook.kind != "identity" else None,
            workers=1 if args.deterministic else None)
    else:
        methods = None
        if args.methods:
            methods = tuple(parse_method(tok, hook)
                            for tok in args.methods.split(","))
        spec = desk_experiment_spec(
            args.output_dir,
            realizations=args.realizations if args.realizations else 5,
            seed=args.seed if args.seed is not None else 12345,
            methods=methods)
    summary = run_experiment(spec)
    print(open(Path(spec.output_dir) / "summary.txt").read(), end="")
    return 0 if not summary["failures"] else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pwtrack",
        description="Plane-wave ultrasound simulation, reconstruction, "
                    "and speckle tracking.")
    parser.add_argument("--config", help="INI configuration file")
    parser.add_argument("--seed", type=int, default=None,
                        help="64-bit seed for all randomness")
    parser.add_argument("--deterministic", action="store_true",
                        help="force single-worker, byte-reproducible runs")
    parser.add_argument("--enhancer", default=None,
                        help="external enhancer command for IQ frames")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="build a rotating-cylinder phantom")
    p.add_argument("--output", required=True)
    p.add_argument("--angular-velocity", type=float, default=0.0)
    p.set_defaults(func=_cmd_phantom)

    p = sub.add_parser("simulate", help="simulate a steered-PW sequence")
    p.add_argument("phantom")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--n-angles", type=int, default=1)
    p.add_argument("--prf", type=float, default=9e3)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("beamform", help="DAS-reconstruct channel data")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--compound", action="store_true",
                   help="coherently average all inputs into one image")
    p.add_argument("--envelope", action="store_true",
                   help="write envelope images on the tracking grid")
    p.add_argument("--f-number", type=float, default=None)
    p.add_argument("--output", required=True,
                   help="output image file (with --compound) or directory")
    p.set_defaults(func=_cmd_beamform)

    p = sub.add_parser("track", help="track displacement between two frames")
    p.add_argument("frame_a")
    p.add_argument("frame_b")
    p.add_argument("--params", default="paper",
                   help='"paper" or comma-separated window sizes in meters')
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_track)

    p = sub.add_parser("metrics", help="compare two displacement fields")
    p.add_argument("estimate")
    p.add_argument("reference")
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("experiment", help="run the full experiment matrix")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--realizations", type=int, default=None)
    p.add_argument("--methods", default=None,
                   help="comma-separated method tokens, e.g. das_1,das_15")
    p.set_defaults(func=_cmd_experiment)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
