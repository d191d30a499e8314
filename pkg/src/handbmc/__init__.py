"""Biomechanical feasibility constraints for 21-joint 3D hand poses.

Evaluate, differentiate, fit and enforce an anatomical feasibility
model (bone lengths, palm structure, joint-angle hulls) on right-hand
skeletons, recover absolute root depth from the 2.5D representation,
and project poses onto the feasible set by gradient descent.
"""

from .angles import (AnglePair, BoneFrame, all_finger_angles, extract_angles,
                     pip_frames, propagate_frame, reconstruct_direction,
                     synthesize_pose)
from .autodiff import GradientReport, Var, grad
from .camera import (CameraIntrinsics, TwoPointFiveD, decompose_25d, project,
                     reconstruct_joints, solve_root_depth)
from .errors import (BehindCamera, ComplexRoots, DataError, DegenerateBasis,
                     DegenerateBone, DegenerateDistribution, DegeneratePalm,
                     DegenerateReference, DegenerateSample, DegenerateVector,
                     DegeneracyError, GimbalDegenerate, InsufficientData,
                     InsufficientPoints, NoPositiveRoot, NumericalError,
                     SchemaError, ToolkitError)
from .hull import AngleHull, angle_loss_term, build_hull, contains, hull_distance
from .limits import LimitMetadata, LimitSet, fit_limits, load_limits, save_limits
from .losses import (LossReport, LossWeights, angle_constraint_loss,
                     bmc_loss, bone_length_loss, evaluate_batch,
                     finite_difference_error, full_training_loss, kink_flags,
                     kink_margins)
from .palm import PalmDescriptor, palm_descriptor, root_bone_loss
from .projection import (ProjectionConfig, ProjectionResult, project_batch,
                         project_to_feasible)
from .skeleton import (BoneSet, HandPose, Interval, angle_between,
                       bones_from_pose, interval_penalty, load_poses,
                       project_onto_plane, save_poses)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
