"""Three-view relative pose estimation from four-point samples via
virtual correspondences, with 5pt/6pt/P3P minimal solvers, a RANSAC loop,
and a synthetic benchmark harness."""

from .errors import (
    CheiralityError,
    ConfigurationError,
    DegenerateError,
    EstimationFailedError,
    TrivcError,
)
from .geometry import (
    CameraConfiguration,
    RelativePose,
    TripletHypothesis,
    decompose_essential,
    essential_from_pose,
    sampson_error,
    symmetric_epipolar_error,
    triangulate,
)
from .metrics import (
    auc,
    check_minimal_configuration,
    rotation_error,
    translation_angle_error,
    triplet_pose_error,
)
from .pipelines import (
    TripletSample,
    five_plus_p3p,
    six_plus_p3p,
    solve_4p3v,
    solve_4p3vf,
    solve_4p_twoview,
)
from .ransac import RansacConfig, RansacResult, run_ransac, triplet_residual
from .solvers.five_point import solve_5pt
from .solvers.p3p import solve_p3p
from .solvers.six_point import solve_6pt_focal

__version__ = "0.1.0"

__all__ = [
    "CameraConfiguration",
    "CheiralityError",
    "ConfigurationError",
    "DegenerateError",
    "EstimationFailedError",
    "RansacConfig",
    "RansacResult",
    "RelativePose",
    "TripletHypothesis",
    "TripletSample",
    "TrivcError",
    "auc",
    "check_minimal_configuration",
    "decompose_essential",
    "essential_from_pose",
    "five_plus_p3p",
    "rotation_error",
    "run_ransac",
    "sampson_error",
    "six_plus_p3p",
    "solve_4p3v",
    "solve_4p3vf",
    "solve_4p_twoview",
    "solve_5pt",
    "solve_6pt_focal",
    "solve_p3p",
    "symmetric_epipolar_error",
    "translation_angle_error",
    "triangulate",
    "triplet_pose_error",
    "triplet_residual",
]
