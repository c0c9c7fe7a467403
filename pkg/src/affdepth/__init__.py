"""Affordance-guided multi-step depth reconstruction for transparent objects.

The package reconstructs missing object depth by combining a sparse
least-squares depth completion with RANSAC plane fitting, ordered over a
graph of affordance regions, and derives manipulation poses from the
result. A synthetic cup-scene generator with analytic ground truth backs
the test and benchmark suites.
"""

from .affordance import (classification_loss, fuse_affordance, map_loss,
                         softmax_mask, weighted_f_measure)
from .depthopt import (EnergyWeights, SparseSystem, assemble_system, boundary_weight,
                       energy, solve)
from .errors import (AffdepthError, BehindCameraError, DegenerateInputError,
                     InsufficientDataError, InvalidInputError, RayParallelError,
                     SceneFormatError)
from .geometry import (CameraIntrinsics, Plane, backproject, connected_components,
                       project, ray_plane_depth)
from .images import (BACKGROUND, CLASS_NAMES, CONTAIN, SUPPORT, WRAP_GRASP,
                     BoundaryMap, DepthImage, NormalMap)
from .metrics import DepthMetrics, evaluate_depth
from .pipeline import (ReconConfig, ReconPlan, SceneInstance, crop_instance,
                       mask_unreliable_depth, plan_steps, reconstruct_instance,
                       reconstruct_scene, single_step_baseline)
from .planefit import fit_plane_svd, ransac_plane, ransac_plane_parallel, rim_depth
from .proposals import (Pose, ProposalConfig, frame_from_z, pick_proposal,
                        pour_proposal, stack_proposal)
from .regions import Region, RegionGraph, build_region_graph, extract_regions
from .sceneio import Scene, load_scene, save_scene
from .synth import SynthCupSpec, gen_synthetic

__version__ = "0.1.0"
