"""Plane-wave ultrasound simulation, DAS reconstruction, and 2-D speckle tracking."""

from .config import (
    ImageGrid,
    ProbeConfig,
    SteeringSequence,
    load_config,
    make_image_grid,
    plan_angle_spacing,
    plan_sequence,
    reference_angle_count,
)
from .phantom import (
    CylinderGeometry,
    MotionLaw,
    Scatterer,
    ScattererPhantom,
    advance_motion,
    build_rotating_cylinder_phantom,
)
from .simulate import ChannelData, PulseModel, simulate_channel_data
from .beamform import (
    EnhancerHook,
    EnvelopeImage,
    IQImage,
    compound,
    das_reconstruct,
    enhance,
    envelope_on_tracking_grid,
    to_analytic,
)
from .tracking import (
    CorrelationSurface,
    DisplacementField,
    TrackingParams,
    smooth_field,
    subpixel_peak,
    track,
    warp_image,
    zncc_surface,
)
from .experiment import (
    DISPLACEMENT_REGIMES,
    ExperimentSpec,
    MethodSpec,
    das_method,
    desk_experiment_spec,
    enhanced_single_pw,
    load_experiment_spec,
    run_experiment,
    summary_row,
)
from .metrics import (
    RepeMap,
    analytic_rotation_field,
    mrepe,
    repe,
    repe_field,
    rve,
    zone_mask,
)

__version__ = "0.1.0"
