"""TDOA localization of an airborne emitter: link budget, CRLB, ML estimation
and Monte Carlo evaluation under mixed LOS/NLOS conditions."""

__version__ = "0.1.0"

from tdoaloc.geometry import (
    Box,
    Cylinder,
    Position,
    SensorNetwork,
    Trajectory,
    Waypoint,
    distance,
    sample_trajectory,
)
from tdoaloc.channel import (
    RadioConfig,
    link_budget,
    noise_power,
    range_sigma,
    received_power,
    toa_sigma,
)
from tdoaloc.tdoa import (
    NlosBiasModel,
    TdoaMeasurement,
    covariance_matrix,
    mean_vector,
    synthesize,
)
from tdoaloc.crlb import CrlbResult, GeometryDegenerateError, crlb, crlb_grid, fim, jacobian
from tdoaloc.estimator import EstimateResult, estimate, flag_outlier
from tdoaloc.los import classify, segment_blocked

__all__ = [
    "Box",
    "Cylinder",
    "CrlbResult",
    "EstimateResult",
    "GeometryDegenerateError",
    "NlosBiasModel",
    "Position",
    "RadioConfig",
    "SensorNetwork",
    "TdoaMeasurement",
    "Trajectory",
    "Waypoint",
    "classify",
    "covariance_matrix",
    "crlb",
    "crlb_grid",
    "distance",
    "estimate",
    "fim",
    "flag_outlier",
    "jacobian",
    "link_budget",
    "mean_vector",
    "noise_power",
    "range_sigma",
    "received_power",
    "sample_trajectory",
    "segment_blocked",
    "synthesize",
    "toa_sigma",
]
