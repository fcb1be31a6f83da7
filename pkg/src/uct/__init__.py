"""Virtual ring-array ultrasound computed tomography testbed.

Submodules: core (grids, phantoms, geometry), fieldio (on-disk arrays),
wavesim (k-space forward simulation), picker (first-arrival picking),
eikonal (traveltimes and bent rays), brtt (traveltime tomography),
dasrt (reflection imaging), metrics (image quality and statistics),
pipeline (dataset generation) and cli (command line front end).
"""

from .core import (AcousticMaps, Grid2D, LabelMap, Lesion, PhantomSpec,
                   RingArray, TissueLayer, default_phantom_spec,
                   generate_phantom, make_ring_array, snap_to_grid,
                   snap_to_grid_jl)
from .errors import (ConfigError, DegenerateSignalError, FieldFormatError,
                     InvalidArgumentError, NonConvergentRayError,
                     NumericalDivergenceError, UctError)
from .fieldio import read_field, read_sidecar, write_field, write_sidecar
from .wavesim import (MeasurementData, SimConfig, SourcePulse, add_noise,
                      make_pulse, simulate)
from .picker import TofTable, aic_pick, butterworth_lowpass, differential_tof, \
    pick_all
from .eikonal import (RaySystem, SlownessMap, TraveltimeField,
                      build_ray_system, solve_eikonal, trace_ray)
from .brtt import (BoxConstraint, GnConfig, GnTrace, gn_reconstruct,
                   project_box, slowness_to_sos, upsample_nn)
from .dasrt import (ApodizationRule, ReflectivityMap, compute_apodization,
                    das_image, deconvolve_source)
from .metrics import (MetricReport, evaluate_image, mann_whitney_u, nrmse,
                      psnr_scaled, region_nrmse, roc_auc, ssim, tumor_rois)
from .pipeline import ImagePair, PipelineConfig, run_pipeline, water_subtract

__version__ = "0.1.0"

__all__ = [
    "AcousticMaps", "Grid2D", "LabelMap", "Lesion", "PhantomSpec",
    "RingArray", "TissueLayer", "default_phantom_spec", "generate_phantom",
    "make_ring_array", "snap_to_grid", "snap_to_grid_jl",
    "ConfigError", "DegenerateSignalError", "FieldFormatError",
    "InvalidArgumentError", "NonConvergentRayError",
    "NumericalDivergenceError", "UctError",
    "read_field", "read_sidecar", "write_field", "write_sidecar",
    "MeasurementData", "SimConfig", "SourcePulse", "add_noise", "make_pulse",
    "simulate",
    "TofTable", "aic_pick", "butterworth_lowpass", "differential_tof",
    "pick_all",
    "RaySystem", "SlownessMap", "TraveltimeField", "build_ray_system",
    "solve_eikonal", "trace_ray",
    "BoxConstraint", "GnConfig", "GnTrace", "gn_reconstruct", "project_box",
    "slowness_to_sos", "upsample_nn",
    "ApodizationRule", "ReflectivityMap", "compute_apodization", "das_image",
    "deconvolve_source",
    "MetricReport", "evaluate_image", "mann_whitney_u", "nrmse",
    "psnr_scaled", "region_nrmse", "roc_auc", "ssim", "tumor_rois",
    "ImagePair", "PipelineConfig", "run_pipeline", "water_subtract",
]
