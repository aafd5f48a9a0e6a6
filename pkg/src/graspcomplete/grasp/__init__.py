from .gripper import (
    Finger,
    GripperModel,
    Link,
    bundled_gripper,
    gripper_free_space,
    load_gripper,
    parse_gripper,
    resolve_gripper,
)
from .planner import GraspCandidate, GraspPlanner, PlannerConfig, candidates_to_csv, generate_candidates
from .simulate import (
    Contact,
    GraspPose,
    GraspSimResult,
    ObjectProps,
    compute_orientation,
    compute_quality,
    quality_from_components,
    simulate_grasp,
)

__all__ = [
    "Contact",
    "Finger",
    "GraspCandidate",
    "GraspPlanner",
    "GraspPose",
    "GraspSimResult",
    "GripperModel",
    "Link",
    "ObjectProps",
    "PlannerConfig",
    "bundled_gripper",
    "candidates_to_csv",
    "compute_orientation",
    "compute_quality",
    "generate_candidates",
    "gripper_free_space",
    "load_gripper",
    "parse_gripper",
    "quality_from_components",
    "resolve_gripper",
    "simulate_grasp",
]
