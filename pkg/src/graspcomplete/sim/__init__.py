from .camera import VirtualCamera, camera_for_scene, coverage, look_at, render_depth_cloud
from .scene import SUITE, SyntheticScene, library_mesh, load_scene, object_library, regrounded
from .tactile import TactileConfig, patch_grid, perturb_pose_on_failure, synth_tactile

__all__ = [
    "SUITE",
    "SyntheticScene",
    "TactileConfig",
    "VirtualCamera",
    "camera_for_scene",
    "coverage",
    "library_mesh",
    "load_scene",
    "look_at",
    "object_library",
    "patch_grid",
    "perturb_pose_on_failure",
    "regrounded",
    "render_depth_cloud",
    "synth_tactile",
]
