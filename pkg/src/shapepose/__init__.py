"""shapepose: geometry, sampling, and evaluation toolkit for joint
shape-completion / 6-DoF pose pipelines over BOP-style data."""

from . import errors
from .flow import (
    LATENT_SHAPE,
    FlowState,
    SamplerConfig,
    cfg_combine,
    cfm_interpolate,
    cfm_velocity_target,
    denoise_joint,
    euler_sample,
    joint_cfm_loss,
)
from .harness import Report, RunConfig, run_eval, run_occlusion_report, run_selection_study
from .ingest import (
    EvalRecord,
    PredictionBundle,
    SceneFrame,
    erode_mask,
    load_bop_scene,
    load_predictions,
)
from .mesh import SampledSurface, TriMesh, diameter, load_mesh, sample_surface, save_ply
from .metrics import (
    IcpResult,
    RigidTransform,
    add_s_directional,
    add_sb,
    add_sb_recall,
    chamfer_normalized,
    dre,
    dre_recall,
    icp_align,
    occlusion_bin,
    occlusion_fraction,
)
from .pointmap import (
    BinaryMask,
    CameraIntrinsics,
    DepthImage,
    ObjectNormalization,
    Pointmap,
    backproject,
    dynamic_crop_box,
    mask_pointmap,
    normalize_pointmap,
    robust_normalization,
)
from .pose import (
    PoseStats,
    Rotation,
    Sim3Pose,
    pose_denormalize,
    pose_normalize,
    pose_stats_fit,
    rot_from_6d,
    rot_from_9d,
    rot_to_6d,
    rot_to_9d,
)
from .report import emit_report
from .selection import (
    AlignmentScore,
    PoseCandidate,
    alignment_score,
    oracle_select,
    relative_camera_transform,
    score_candidates_cross_view,
    score_candidates_single_view,
    score_samples,
    select_pose_cross_view,
    select_pose_single_view,
    select_sample,
    trimmed_mean,
)
from .voxel import (
    OccupancyGrid,
    SparseFeatures,
    SparseStructure,
    grid_to_sparse,
    pack_neighborhoods,
    sparse_to_grid,
    unpack_neighborhoods,
)

__version__ = "0.1.0"
