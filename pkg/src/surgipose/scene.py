"""Scene description: instances, ECM camera kinematics, trajectories, and
viewpoint randomization.

The endoscopic camera manipulator (ECM) is modeled as the standard 4-DOF
remote-center-of-motion chain: yaw about the RCM, pitch, insertion along the
scope axis, and roll about it.  Trajectories are keyframed object poses plus
ECM joint values, persisted as versioned JSON (see schemas/trajectory.schema.json).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidParam, JointLimit, OutOfRange, SchemaError
from .geometry import (CameraModel, Pose, compose, interpolate_pose,
                       pose_from_list, pose_to_list, rotation_x, rotation_y,
                       rotation_z)
from .mesh import (TriMesh, generate_needle_mesh, load_mesh, make_box_mesh,
                   make_plane_mesh, make_uv_sphere_mesh)
from .render import LightSpec
from .rng import replay_rng

TRAJECTORY_VERSION = 1
SCENE_CONFIG_VERSION = 1

DEFAULT_JOINT_LIMITS = ((-math.pi / 2, math.pi / 2), (-math.pi / 2, math.pi / 2),
                        (0.0, 300.0), (-math.pi, math.pi))
# yaw/pitch +-5 deg, insertion +-10 mm, roll +-10 deg; config-overridable
DEFAULT_OFFSET_BOUNDS = (math.radians(5.0), math.radians(5.0), 10.0, math.radians(10.0))
DEFAULT_AMBIENT = (0.15, 0.15, 0.15)


@dataclass(frozen=True)
class Material:
    """Blinn-Phong material; channels in [0, 1], shininess > 0."""

    ambient: tuple = (0.6, 0.6, 0.6)
    diffuse: tuple = (0.6, 0.6, 0.6)
    specular: tuple = (0.3, 0.3, 0.3)
    shininess: float = 32.0

    def __post_init__(self):
        for name in ("ambient", "diffuse", "specular"):
            rgb = tuple(float(c) for c in getattr(self, name))
            if len(rgb) != 3 or any(not 0.0 <= c <= 1.0 for c in rgb):
                raise InvalidParam(f"material.{name} must be 3 channels in [0, 1]")
            object.__setattr__(self, name, rgb)
        if self.shininess <= 0:
            raise InvalidParam("material.shininess must be > 0")


@dataclass
class SceneInstance:
    """One placed mesh; instance_id must be unique within a scene."""

    instance_id: int
    obj_id: int
    mesh: TriMesh
    pose_world: Pose
    material: Material = field(default_factory=Material)

    def __post_init__(self):
        if self.instance_id <= 0:
            raise InvalidParam("instance_id must be a positive integer")
        if self.obj_id <= 0:
            raise InvalidParam("obj_id must be a positive integer")


@dataclass(frozen=True)
class EcmRig:
    """ECM state: RCM base frame, joint values (yaw, pitch, insertion, roll)."""

    base_pose: Pose
    joints: np.ndarray
    joint_limits: np.ndarray = field(
        default_factory=lambda: np.asarray(DEFAULT_JOINT_LIMITS, dtype=np.float64))

    def __post_init__(self):
        joints = np.asarray(self.joints, dtype=np.float64).reshape(4).copy()
        limits = np.asarray(self.joint_limits, dtype=np.float64).reshape(4, 2).copy()
        if np.any(limits[:, 0] > limits[:, 1]):
            raise InvalidParam("joint limits must satisfy lo <= hi")
        if limits[2, 0] < 0:
            raise InvalidParam("insertion (q3) limits must be >= 0")
        bad = (joints < limits[:, 0]) | (joints > limits[:, 1])
        if np.any(bad):
            names = np.array(["q1", "q2", "q3", "q4"])[bad]
            raise JointLimit(f"joints {list(names)} outside limits: {joints[bad]}")
        joints.flags.writeable = False
        limits.flags.writeable = False
        object.__setattr__(self, "joints", joints)
        object.__setattr__(self, "joint_limits", limits)

    def with_joints(self, joints) -> "EcmRig":
        return EcmRig(self.base_pose, np.asarray(joints, dtype=np.float64), self.joint_limits)

    def clamp_joints(self, joints) -> tuple[np.ndarray, list[str]]:
        """Clamp joint values to the limits; report what got clamped."""
        q = np.asarray(joints, dtype=np.float64).reshape(4)
        lo, hi = self.joint_limits[:, 0], self.joint_limits[:, 1]
        clamped = np.clip(q, lo, hi)
        warnings = [f"q{i+1} clamped from {q[i]:.6g} to {clamped[i]:.6g}"
                    for i in range(4) if clamped[i] != q[i]]
        return clamped, warnings


def ecm_forward_kinematics(rig: EcmRig) -> Pose:
    """Camera-in-world pose: base * Ry(q1) * Rx(q2) * Trans(0,0,q3) * Rz(q4).

    The optical axis is the camera +z; with all joints zero the camera frame
    coincides with the RCM base frame.
    """
    q1, q2, q3, q4 = rig.joints
    rot = rotation_y(q1) @ rotation_x(q2) @ rotation_z(q4)
    trans = rotation_y(q1) @ rotation_x(q2) @ np.array([0.0, 0.0, q3])
    return compose(rig.base_pose, Pose(rot, trans))


@dataclass(frozen=True)
class TrajectoryInstance:
    """Instance slot a trajectory animates; mesh_ref is a path or a procedural spec."""

    instance_id: int
    obj_id: int
    mesh_ref: object = None  # str path or dict {"type": ...}


@dataclass(frozen=True)
class Keyframe:
    t: float
    poses: dict            # instance_id -> Pose
    ecm_joints: np.ndarray

    def __post_init__(self):
        joints = np.asarray(self.ecm_joints, dtype=np.float64).reshape(4).copy()
        joints.flags.writeable = False
        object.__setattr__(self, "ecm_joints", joints)
        object.__setattr__(self, "poses", dict(self.poses))


@dataclass(frozen=True)
class Trajectory:
    name: str
    instances: tuple
    keyframes: tuple
    source: str = ""

    def __post_init__(self):
        instances = tuple(self.instances)
        keyframes = tuple(self.keyframes)
        if len(keyframes) < 2:
            raise InvalidParam("a trajectory needs at least 2 keyframes")
        times = [kf.t for kf in keyframes]
        if any(t1 <= t0 for t0, t1 in zip(times, times[1:])):
            raise InvalidParam("keyframe timestamps must be strictly increasing")
        ids = {inst.instance_id for inst in instances}
        if len(ids) != len(instances):
            raise InvalidParam("duplicate instance_id in trajectory instances")
        for kf in keyframes:
            if set(kf.poses.keys()) != ids:
                raise InvalidParam(
                    f"keyframe at t={kf.t} animates instances {sorted(kf.poses)} "
                    f"but the trajectory declares {sorted(ids)}")
        object.__setattr__(self, "instances", instances)
        object.__setattr__(self, "keyframes", keyframes)

    @property
    def t_start(self) -> float:
        return self.keyframes[0].t

    @property
    def t_end(self) -> float:
        return self.keyframes[-1].t


@dataclass(frozen=True)
class SceneState:
    """Sampled trajectory state: per-instance world poses + ECM joints."""

    poses: dict
    ecm_joints: np.ndarray


def trajectory_sample(traj: Trajectory, time: float) -> SceneState:
    """Interpolated scene state at `time` (geodesic poses, linear joints).

    Exact keyframe timestamps return the stored keyframe values exactly.
    """
    if time < traj.t_start or time > traj.t_end:
        raise OutOfRange(
            f"time {time} outside trajectory range [{traj.t_start}, {traj.t_end}]")
    kfs = traj.keyframes
    times = [kf.t for kf in kfs]
    # bisect for the bracketing pair
    lo, hi = 0, len(kfs) - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if times[mid] <= time:
            lo = mid
        else:
            hi = mid
    for idx in (lo, hi):
        if time == times[idx]:
            return SceneState(dict(kfs[idx].poses), kfs[idx].ecm_joints.copy())
    a, b = kfs[lo], kfs[hi]
    s = (time - a.t) / (b.t - a.t)
    poses = {iid: interpolate_pose(a.poses[iid], b.poses[iid], s) for iid in a.poses}
    joints = (1.0 - s) * a.ecm_joints + s * b.ecm_joints
    return SceneState(poses, joints)


@dataclass(frozen=True)
class ViewpointRandomization:
    """Per-replay camera and lighting randomization bounds."""

    joint_offset_bounds: np.ndarray = field(
        default_factory=lambda: np.asarray(DEFAULT_OFFSET_BOUNDS, dtype=np.float64))
    light_cone_half_angle_deg: float = 20.0
    light_intensity_range: tuple = (0.8, 1.2)
    seed: int = 0

    def __post_init__(self):
        bounds = np.asarray(self.joint_offset_bounds, dtype=np.float64).reshape(4).copy()
        if np.any(bounds < 0):
            raise InvalidParam("joint offset bounds must be >= 0")
        bounds.flags.writeable = False
        lo, hi = (float(x) for x in self.light_intensity_range)
        if lo > hi or lo < 0:
            raise InvalidParam("light intensity range must satisfy 0 <= lo <= hi")
        if not 0.0 <= self.light_cone_half_angle_deg <= 90.0:
            raise InvalidParam("light cone half-angle must lie in [0, 90] deg")
        object.__setattr__(self, "joint_offset_bounds", bounds)
        object.__setattr__(self, "light_intensity_range", (lo, hi))
        object.__setattr__(self, "seed", int(self.seed))


@dataclass(frozen=True)
class ViewpointSample:
    """One sampled viewpoint: offset rig, light, and bookkeeping for the manifest."""

    rig: EcmRig
    light: LightSpec
    joint_offsets: np.ndarray
    clamp_warnings: tuple


def sample_viewpoint(rig: EcmRig, rand: ViewpointRandomization, replay_index: int,
                     ambient=DEFAULT_AMBIENT) -> ViewpointSample:
    """Sample the per-replay camera joint offsets and lighting.

    Offsets are uniform in [-b_i, +b_i] and held constant for the whole
    replay.  The light is a headlight: a directional light traveling along
    the camera optical axis, tilted by a uniform draw inside the configured
    cone, with a scalar intensity from the configured range.  Draw order is
    fixed (4 joint offsets, cone cosine, cone azimuth, intensity), so equal
    (seed, replay_index) reproduce the sample bit for bit.

    Joint values leaving their limits are clamped, and the clamping recorded
    (long batch jobs should survive, not abort).
    """
    rng = replay_rng(rand.seed, replay_index)
    bounds = rand.joint_offset_bounds
    offsets = rng.uniform(-bounds, bounds, size=4)
    joints, warnings = rig.clamp_joints(rig.joints + offsets)

    cos_half = math.cos(math.radians(rand.light_cone_half_angle_deg))
    cos_t = rng.uniform(cos_half, 1.0)
    phi = rng.uniform(0.0, 2.0 * math.pi)
    lo, hi = rand.light_intensity_range
    intensity = rng.uniform(lo, hi)

    sin_t = math.sqrt(max(0.0, 1.0 - cos_t * cos_t))
    local_dir = np.array([sin_t * math.cos(phi), sin_t * math.sin(phi), cos_t])

    out_rig = rig.with_joints(joints)
    cam_world = ecm_forward_kinematics(out_rig)
    world_dir = cam_world.rotation @ local_dir
    world_dir = world_dir / np.linalg.norm(world_dir)
    light = LightSpec(directional=((world_dir, (intensity,) * 3),),
                      ambient=np.asarray(ambient, dtype=np.float64))
    return ViewpointSample(rig=out_rig, light=light,
                           joint_offsets=offsets, clamp_warnings=tuple(warnings))


# ---------------------------------------------------------------------------
# persistence

def _mesh_from_ref(ref, base_dir: Path) -> TriMesh:
    if isinstance(ref, str):
        return load_mesh(Path(base_dir) / ref)
    if isinstance(ref, dict):
        kind = ref.get("type")
        params = {k: v for k, v in ref.items() if k != "type"}
        try:
            if kind == "needle":
                return generate_needle_mesh(**params)
            if kind == "box":
                return make_box_mesh(**params)
            if kind == "plane":
                return make_plane_mesh(**params)
            if kind == "uv_sphere":
                return make_uv_sphere_mesh(**params)
        except TypeError as exc:
            raise SchemaError(f"bad parameters for procedural mesh '{kind}': {exc}") from exc
        raise SchemaError(f"unknown procedural mesh type {kind!r}")
    raise SchemaError(f"mesh reference must be a path or procedural spec, got {type(ref).__name__}")


def trajectory_to_json(traj: Trajectory) -> dict:
    return {
        "version": TRAJECTORY_VERSION,
        "name": traj.name,
        "source": traj.source,
        "instances": [
            {"instance_id": inst.instance_id, "obj_id": inst.obj_id,
             **({"mesh": inst.mesh_ref} if inst.mesh_ref is not None else {})}
            for inst in traj.instances
        ],
        "keyframes": [
            {"t": kf.t,
             "poses": {str(iid): pose_to_list(p) for iid, p in sorted(kf.poses.items())},
             "ecm": [float(q) for q in kf.ecm_joints]}
            for kf in traj.keyframes
        ],
    }


def trajectory_from_json(doc: dict) -> Trajectory:
    try:
        if int(doc.get("version", -1)) != TRAJECTORY_VERSION:
            raise SchemaError(f"version: expected {TRAJECTORY_VERSION}, got {doc.get('version')}")
        instances = tuple(
            TrajectoryInstance(int(item["instance_id"]), int(item["obj_id"]),
                               item.get("mesh"))
            for item in doc["instances"])
        keyframes = []
        for i, kf in enumerate(doc["keyframes"]):
            poses = {int(iid): pose_from_list(vals) for iid, vals in kf["poses"].items()}
            keyframes.append(Keyframe(float(kf["t"]), poses, np.asarray(kf["ecm"], dtype=np.float64)))
        return Trajectory(name=str(doc.get("name", "")), source=str(doc.get("source", "")),
                          instances=instances, keyframes=tuple(keyframes))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed trajectory document: {exc}") from exc


def load_trajectory(path) -> Trajectory:
    with open(path) as f:
        return trajectory_from_json(json.load(f))


def save_trajectory(path, traj: Trajectory) -> None:
    with open(path, "w") as f:
        json.dump(trajectory_to_json(traj), f, indent=1)
        f.write("\n")


@dataclass
class SceneConfig:
    """Static scene: camera, rig, instances, lighting, randomization bounds."""

    camera: CameraModel
    rig: EcmRig
    instances: list
    randomization: ViewpointRandomization
    ambient: tuple = DEFAULT_AMBIENT
    background: tuple = (0.0, 0.0, 0.0)
    mesh_refs: dict = field(default_factory=dict)  # instance_id -> original ref

    def instance_map(self) -> dict:
        return {inst.instance_id: inst for inst in self.instances}


def scene_config_from_json(doc: dict, base_dir=".") -> SceneConfig:
    base_dir = Path(base_dir)
    try:
        if int(doc.get("version", -1)) != SCENE_CONFIG_VERSION:
            raise SchemaError(f"version: expected {SCENE_CONFIG_VERSION}, got {doc.get('version')}")
        cam = CameraModel(**doc["camera"])
        ecm = doc["ecm"]
        rig = EcmRig(
            base_pose=pose_from_list(ecm.get("base_pose", pose_to_list(Pose.identity()))),
            joints=np.asarray(ecm.get("joints", (0.0, 0.0, 0.0, 0.0)), dtype=np.float64),
            joint_limits=np.asarray(ecm.get("joint_limits", DEFAULT_JOINT_LIMITS), dtype=np.float64))
        instances = []
        mesh_refs = {}
        for item in doc["instances"]:
            iid = int(item["instance_id"])
            mesh = _mesh_from_ref(item["mesh"], base_dir)
            mat = Material(**item.get("material", {}))
            pose = pose_from_list(item.get("pose", pose_to_list(Pose.identity())))
            instances.append(SceneInstance(iid, int(item["obj_id"]), mesh, pose, mat))
            mesh_refs[iid] = item["mesh"]
        if len({i.instance_id for i in instances}) != len(instances):
            raise SchemaError("duplicate instance_id in scene instances")
        rand_doc = doc.get("randomization", {})
        rand = ViewpointRandomization(
            joint_offset_bounds=np.asarray(
                rand_doc.get("joint_offset_bounds", DEFAULT_OFFSET_BOUNDS), dtype=np.float64),
            light_cone_half_angle_deg=float(rand_doc.get("light_cone_half_angle_deg", 20.0)),
            light_intensity_range=tuple(rand_doc.get("light_intensity_range", (0.8, 1.2))),
            seed=int(rand_doc.get("seed", 0)))
        ambient = tuple(doc.get("ambient", DEFAULT_AMBIENT))
        background = tuple(doc.get("background", (0.0, 0.0, 0.0)))
        return SceneConfig(camera=cam, rig=rig, instances=instances,
                           randomization=rand, ambient=ambient,
                           background=background, mesh_refs=mesh_refs)
    except SchemaError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed scene config: {exc}") from exc


def load_scene_config(path) -> SceneConfig:
    path = Path(path)
    with open(path) as f:
        doc = json.load(f)
    return scene_config_from_json(doc, base_dir=path.parent)


def scene_to_trajectory_instances(config: SceneConfig) -> tuple:
    return tuple(TrajectoryInstance(inst.instance_id, inst.obj_id,
                                    config.mesh_refs.get(inst.instance_id))
                 for inst in config.instances)
