"""Shared fixtures and small scene builders for the test suite."""

import math

import numpy as np

from surgipose.geometry import CameraModel, Pose, rotation_from
from surgipose.mesh import TriMesh, generate_needle_mesh, make_plane_mesh
from surgipose.render import LightSpec
from surgipose.scene import (EcmRig, Material, SceneConfig, SceneInstance,
                             Keyframe, Trajectory, TrajectoryInstance,
                             ViewpointRandomization)


def random_rotation(rng) -> np.ndarray:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, math.pi)
    return rotation_from(axis, angle)


def random_pose(rng, t_scale: float = 100.0) -> Pose:
    return Pose(random_rotation(rng), rng.uniform(-t_scale, t_scale, size=3))


def default_camera(**overrides) -> CameraModel:
    params = dict(fx=1000.0, fy=1000.0, cx=320.0, cy=240.0, width=640, height=480)
    params.update(overrides)
    return CameraModel(**params)


def single_triangle_mesh(z: float = 0.0, half: float = 50.0) -> TriMesh:
    v = np.array([[-half, -half, z], [half, -half, z], [0.0, half, z]])
    return TriMesh(v, np.array([[0, 1, 2]]), np.tile((0.0, 0.0, 1.0), (3, 1)))


def plain_lights() -> LightSpec:
    return LightSpec(directional=(((0.0, 0.0, 1.0), (1.0, 1.0, 1.0)),),
                     ambient=(0.2, 0.2, 0.2))


def facing_instance(instance_id: int, mesh, z: float = 100.0,
                    obj_id: int | None = None) -> SceneInstance:
    return SceneInstance(instance_id, obj_id or instance_id, mesh,
                         Pose(np.eye(3), [0.0, 0.0, z]), Material())


def needle_scene_config(seed: int = 7, with_occluder: bool = False,
                        bounds=(0.02, 0.02, 2.0, 0.05)) -> SceneConfig:
    """Small self-contained scene: needle in front of an ECM camera."""
    needle = generate_needle_mesh(segments=24, ring_segments=8)
    instances = [SceneInstance(1, 1, needle, Pose(np.eye(3), [0.0, 0.0, 0.0]),
                               Material(diffuse=(0.7, 0.7, 0.75)))]
    if with_occluder:
        pad = make_plane_mesh(14.0, 14.0)
        instances.append(SceneInstance(2, 2, pad, Pose(np.eye(3), [4.0, 0.0, -20.0]),
                                       Material(diffuse=(0.8, 0.5, 0.4))))
    # camera 120 mm behind the needle along -z, looking at it (+z forward)
    rig = EcmRig(base_pose=Pose(np.eye(3), [0.0, 0.0, -120.0]),
                 joints=np.zeros(4))
    rand = ViewpointRandomization(joint_offset_bounds=np.asarray(bounds),
                                  light_cone_half_angle_deg=15.0,
                                  light_intensity_range=(0.9, 1.1), seed=seed)
    return SceneConfig(camera=default_camera(), rig=rig, instances=instances,
                       randomization=rand,
                       mesh_refs={1: {"type": "needle", "segments": 24, "ring_segments": 8},
                                  **({2: {"type": "plane", "size_x": 14.0, "size_y": 14.0}}
                                     if with_occluder else {})})


def needle_trajectory(config: SceneConfig, n_keyframes: int = 2,
                      duration: float = 1.0) -> Trajectory:
    """Needle drifting sideways with mild rotation; ECM joints easing forward."""
    instances = tuple(TrajectoryInstance(i.instance_id, i.obj_id,
                                         config.mesh_refs.get(i.instance_id))
                      for i in config.instances)
    keyframes = []
    for k in range(n_keyframes):
        s = k / max(1, n_keyframes - 1)
        t = s * duration
        poses = {}
        for inst in config.instances:
            base_t = inst.pose_world.translation
            offset = np.array([6.0 * s, -2.0 * s, 0.0])
            rot = rotation_from([0.0, 1.0, 0.0], 0.5 * s) @ inst.pose_world.rotation
            poses[inst.instance_id] = Pose(rot, base_t + offset)
        joints = np.array([0.05 * s, -0.03 * s, 4.0 * s, 0.1 * s])
        keyframes.append(Keyframe(t, poses, joints))
    return Trajectory(name="fixture", source="tests", instances=instances,
                      keyframes=tuple(keyframes))


def hash_tree(root) -> str:
    """SHA-256 over sorted relative paths and file contents."""
    import hashlib
    from pathlib import Path

    h = hashlib.sha256()
    root = Path(root)
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        h.update(str(path.relative_to(root)).encode())
        h.update(path.read_bytes())
    return h.hexdigest()
