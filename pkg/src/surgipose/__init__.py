"""Synthetic BOP-format 6D-pose datasets of surgical-instrument scenes.

Trajectory replay under randomized endoscope viewpoints and lighting, a
deterministic software renderer, BOP dataset IO, pose-error evaluation, and a
classical PnP baseline.
"""

__version__ = "0.1.0"

from .geometry import (AxisAngle, CameraModel, Pose, axis_angle, compose,
                       interpolate_pose, invert, rotation_from)
from .mesh import TriMesh, generate_needle_mesh, load_mesh, mesh_diameter, save_mesh
from .render import FrameBuffers, LightSpec, render_frame, shade_blinn_phong
from .scene import (EcmRig, Material, SceneInstance, Trajectory,
                    ViewpointRandomization, ecm_forward_kinematics,
                    sample_viewpoint, trajectory_sample)

__all__ = [
    "AxisAngle", "CameraModel", "Pose", "axis_angle", "compose",
    "interpolate_pose", "invert", "rotation_from",
    "TriMesh", "generate_needle_mesh", "load_mesh", "mesh_diameter", "save_mesh",
    "FrameBuffers", "LightSpec", "render_frame", "shade_blinn_phong",
    "EcmRig", "Material", "SceneInstance", "Trajectory",
    "ViewpointRandomization", "ecm_forward_kinematics", "sample_viewpoint",
    "trajectory_sample",
    "__version__",
]
