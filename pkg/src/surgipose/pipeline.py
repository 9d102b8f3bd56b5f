"""Trajectory replay x viewpoint randomization -> annotated BOP dataset.

Each replay gets its own scene_id.  Per frame the full scene and each object
alone are rendered with the same camera; the visible mask is where the object
wins the full-scene depth test, the projected mask is its coverage when
rendered alone (self-occlusion included), and

    visibility = visible-mask pixels / projected-mask pixels.

Frames where the filter target is absent (or below the configured visibility
threshold) are dropped and recorded in the manifest.  Identical (job, seed)
reproduce the dataset byte for byte.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bop import DEFAULT_DEPTH_SCALE, ObjectAnnotation, SceneWriter, dump_json
from .errors import ConfigError, InvalidParam, ResolutionMismatch
from .geometry import Pose, compose, invert
from .mesh import mesh_diameter, save_mesh
from .render import FrameBuffers, render_frame
from .scene import (SceneConfig, SceneInstance, Trajectory, load_scene_config,
                    load_trajectory, sample_viewpoint, scene_config_from_json,
                    trajectory_from_json, trajectory_sample,
                    ecm_forward_kinematics)


@dataclass(frozen=True)
class GtInfo:
    """Per-frame, per-object annotation (the scene_gt_info record)."""

    obj_id: int
    pose_cam: Pose
    bbox_obj: tuple        # (x, y, w, h) px from the projected mask
    bbox_visib: tuple      # (x, y, w, h) px from the visible mask
    px_count_all: int
    px_count_visib: int
    visib_fract: float

    def __post_init__(self):
        if self.px_count_visib > self.px_count_all:
            raise InvalidParam("px_count_visib cannot exceed px_count_all")
        expected = (self.px_count_visib / self.px_count_all
                    if self.px_count_all > 0 else 0.0)
        if abs(self.visib_fract - expected) > 1e-12:
            raise InvalidParam("visib_fract inconsistent with pixel counts")


def _mask_bbox(mask: np.ndarray) -> tuple:
    ys, xs = np.nonzero(mask)
    if len(xs) == 0:
        return (0, 0, 0, 0)
    return (int(xs.min()), int(ys.min()),
            int(xs.max() - xs.min() + 1), int(ys.max() - ys.min() + 1))


def compute_gt_info(full: FrameBuffers, object_only: FrameBuffers,
                    instance: SceneInstance, pose_cam: Pose) -> GtInfo:
    """Annotation for one object given the full-scene and object-alone renders.

    Both buffers must come from the same camera and object pose; the
    object-alone render defines the projected mask.
    """
    if full.resolution != object_only.resolution:
        raise ResolutionMismatch(
            f"full render {full.resolution} vs object render {object_only.resolution}")
    visible = full.instance_id == instance.instance_id
    projected = object_only.instance_id == instance.instance_id
    px_all = int(projected.sum())
    px_visib = int(visible.sum())
    fract = px_visib / px_all if px_all > 0 else 0.0
    return GtInfo(obj_id=instance.obj_id, pose_cam=pose_cam,
                  bbox_obj=_mask_bbox(projected), bbox_visib=_mask_bbox(visible),
                  px_count_all=px_all, px_count_visib=px_visib, visib_fract=fract)


@dataclass
class GenerationJob:
    """One dataset-generation run: trajectory x replays x randomization."""

    trajectory: Trajectory
    scene: SceneConfig
    out_root: Path
    replays: int = 1
    sample_rate_hz: float | None = 10.0
    frames_per_replay: int | None = None
    min_visib_keep: float = 0.0
    scene_id_base: int = 0
    target_obj_id: int | None = None
    seed: int | None = None  # overrides scene.randomization.seed when set

    def __post_init__(self):
        self.out_root = Path(self.out_root)
        if self.replays < 1:
            raise ConfigError("replays must be >= 1")
        if not 0.0 <= self.min_visib_keep <= 1.0:
            raise ConfigError("min_visib_keep must lie in [0, 1]")
        if self.frames_per_replay is None and (self.sample_rate_hz or 0) <= 0:
            raise ConfigError("need a positive sample_rate_hz or frames_per_replay")
        if self.frames_per_replay is not None and self.frames_per_replay < 1:
            raise ConfigError("frames_per_replay must be >= 1")
        traj_ids = {inst.instance_id for inst in self.trajectory.instances}
        scene_ids = {inst.instance_id for inst in self.scene.instances}
        if traj_ids != scene_ids:
            raise ConfigError(
                f"trajectory animates instances {sorted(traj_ids)} but the scene "
                f"declares {sorted(scene_ids)}")
        obj_ids = [inst.obj_id for inst in self.scene.instances]
        if self.target_obj_id is None:
            self.target_obj_id = obj_ids[0]
        if self.target_obj_id not in obj_ids:
            raise ConfigError(f"target_obj_id {self.target_obj_id} not in scene")

    @property
    def effective_seed(self) -> int:
        return self.scene.randomization.seed if self.seed is None else int(self.seed)

    def sample_times(self) -> list[float]:
        t0, t1 = self.trajectory.t_start, self.trajectory.t_end
        if self.frames_per_replay is not None:
            if self.frames_per_replay == 1:
                return [t0]
            return [float(t) for t in np.linspace(t0, t1, self.frames_per_replay)]
        dt = 1.0 / float(self.sample_rate_hz)
        n = int(math.floor((t1 - t0) / dt + 1e-9)) + 1
        return [min(t0 + i * dt, t1) for i in range(n)]


def frame_filter(info: GtInfo, job: GenerationJob) -> tuple[bool, str | None]:
    """Keep a frame iff the target object is present and visible enough."""
    if info.px_count_visib == 0:
        return False, "not present"
    if info.visib_fract < job.min_visib_keep:
        return False, "below visibility threshold"
    return True, None


def job_from_json(doc: dict, base_dir=".") -> GenerationJob:
    """Build a job from its JSON document; trajectory/scene may be paths or inline."""
    base_dir = Path(base_dir)
    try:
        traj_spec = doc["trajectory"]
        scene_spec = doc["scene"]
    except KeyError as exc:
        raise ConfigError(f"job config missing key {exc}") from exc
    trajectory = (load_trajectory(base_dir / traj_spec) if isinstance(traj_spec, str)
                  else trajectory_from_json(traj_spec))
    scene = (load_scene_config(base_dir / scene_spec) if isinstance(scene_spec, str)
             else scene_config_from_json(scene_spec, base_dir))
    out_root = doc.get("out_root")
    if out_root is None:
        raise ConfigError("job config needs out_root (or pass --out)")
    rate = doc.get("sample_rate_hz", 10.0 if "frames_per_replay" not in doc else None)
    return GenerationJob(
        trajectory=trajectory, scene=scene,
        out_root=base_dir / out_root,
        replays=int(doc.get("replays", 1)),
        sample_rate_hz=None if rate is None else float(rate),
        frames_per_replay=(int(doc["frames_per_replay"])
                           if "frames_per_replay" in doc else None),
        min_visib_keep=float(doc.get("min_visib_keep", 0.0)),
        scene_id_base=int(doc.get("scene_id_base", 0)),
        target_obj_id=(int(doc["target_obj_id"]) if "target_obj_id" in doc else None),
        seed=(int(doc["seed"]) if "seed" in doc else None))


def load_job(path) -> GenerationJob:
    path = Path(path)
    with open(path) as f:
        return job_from_json(json.load(f), base_dir=path.parent)


@dataclass
class SceneManifest:
    scene_id: int
    trajectory_name: str
    replay_index: int
    joint_offsets: list
    light_direction: list
    light_intensity: float
    ambient: list
    frames_written: int
    frames_dropped: int
    drop_reasons: list = field(default_factory=list)   # [sample_index, reason]
    clamp_warnings: list = field(default_factory=list)
    kept: list = field(default_factory=list)           # [im_id, sample_index, time]


@dataclass
class DatasetManifest:
    seed: int
    tool_version: str
    scenes: list = field(default_factory=list)
    sample_times: list = field(default_factory=list)
    depth_scale: float = DEFAULT_DEPTH_SCALE

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "tool_version": self.tool_version,
            "depth_scale": self.depth_scale,
            "sample_times": self.sample_times,
            "scenes": [
                {"scene_id": s.scene_id,
                 "trajectory_name": s.trajectory_name,
                 "replay_index": s.replay_index,
                 "joint_offsets": s.joint_offsets,
                 "light_direction": s.light_direction,
                 "light_intensity": s.light_intensity,
                 "ambient": s.ambient,
                 "frames_written": s.frames_written,
                 "frames_dropped": s.frames_dropped,
                 "drop_reasons": s.drop_reasons,
                 "clamp_warnings": s.clamp_warnings,
                 "kept": s.kept}
                for s in self.scenes
            ],
        }


def write_object_models(job: GenerationJob) -> None:
    """Write models/obj_XXXXXX.ply plus models_info.json for the scene objects."""
    models_dir = job.out_root / "models"
    models_dir.mkdir(parents=True, exist_ok=True)
    seen: dict[int, object] = {}
    info: dict[int, dict] = {}
    for inst in job.scene.instances:
        if inst.obj_id in seen:
            if seen[inst.obj_id] is not inst.mesh:
                raise ConfigError(
                    f"obj_id {inst.obj_id} is bound to two different meshes")
            continue
        seen[inst.obj_id] = inst.mesh
        save_mesh(models_dir / f"obj_{inst.obj_id:06d}.ply", inst.mesh)
        v = inst.mesh.vertices
        info[inst.obj_id] = {
            "diameter": mesh_diameter(inst.mesh),
            "min_x": float(v[:, 0].min()), "min_y": float(v[:, 1].min()),
            "min_z": float(v[:, 2].min()),
            "size_x": float(v[:, 0].max() - v[:, 0].min()),
            "size_y": float(v[:, 1].max() - v[:, 1].min()),
            "size_z": float(v[:, 2].max() - v[:, 2].min()),
        }
    dump_json(info, models_dir / "models_info.json")


def run_generation(job: GenerationJob, progress=None) -> DatasetManifest:
    """Execute a generation job and return its manifest.

    The manifest is written last, so a directory without manifest.json is a
    partial run.  One progress line per completed replay goes to stdout;
    `progress(frames_done, frames_total)` is called after every sampled frame.
    """
    scene = job.scene
    job.out_root.mkdir(parents=True, exist_ok=True)
    write_object_models(job)

    times = job.sample_times()
    rand = scene.randomization
    if job.seed is not None:
        from dataclasses import replace as _replace
        rand = _replace(rand, seed=job.effective_seed)

    frames_total = job.replays * len(times)
    frames_done = 0
    manifest = DatasetManifest(seed=job.effective_seed, tool_version=__version__,
                               sample_times=[float(t) for t in times])

    for replay in range(job.replays):
        sample = sample_viewpoint(scene.rig, rand, replay, ambient=scene.ambient)
        scene_id = job.scene_id_base + replay
        scene_dir = job.out_root / f"{scene_id:06d}"
        writer = SceneWriter(scene_dir, depth_scale=manifest.depth_scale)

        kept_rows = []
        drop_rows = []
        clamp_rows = [[-1, w] for w in sample.clamp_warnings]
        im_id = 0
        for sample_idx, t in enumerate(times):
            state = trajectory_sample(job.trajectory, t)
            joints, clamp_w = scene.rig.clamp_joints(state.ecm_joints + sample.joint_offsets)
            clamp_rows.extend([sample_idx, w] for w in clamp_w)
            cam_pose = ecm_forward_kinematics(scene.rig.with_joints(joints))
            cam_from_world = invert(cam_pose)

            posed = [SceneInstance(inst.instance_id, inst.obj_id, inst.mesh,
                                   state.poses[inst.instance_id], inst.material)
                     for inst in scene.instances]
            full = render_frame(posed, cam_pose, scene.camera, sample.light,
                                background=scene.background)

            annotations = []
            target_info = None
            for inst in posed:
                solo = render_frame([inst], cam_pose, scene.camera, sample.light,
                                    background=scene.background)
                pose_cam = compose(cam_from_world, inst.pose_world)
                info = compute_gt_info(full, solo, inst, pose_cam)
                annotations.append(ObjectAnnotation(
                    obj_id=inst.obj_id, pose_cam=pose_cam, info=info,
                    mask=object_mask(solo, inst.instance_id),
                    mask_visib=object_mask(full, inst.instance_id)))
                if inst.obj_id == job.target_obj_id and target_info is None:
                    target_info = info

            keep, reason = frame_filter(target_info, job)
            if keep:
                writer.add_frame(im_id, full.rgb, full.depth,
                                 scene.camera.k_matrix, annotations)
                kept_rows.append([im_id, sample_idx, float(t)])
                im_id += 1
            else:
                drop_rows.append([sample_idx, reason])
            frames_done += 1
            if progress is not None:
                progress(frames_done, frames_total)

        writer.finalize()
        light_dir, light_rgb = sample.light.directional[0]
        manifest.scenes.append(SceneManifest(
            scene_id=scene_id,
            trajectory_name=job.trajectory.name,
            replay_index=replay,
            joint_offsets=[float(v) for v in sample.joint_offsets],
            light_direction=[float(v) for v in light_dir],
            light_intensity=float(light_rgb[0]),
            ambient=[float(v) for v in sample.light.ambient],
            frames_written=len(kept_rows),
            frames_dropped=len(drop_rows),
            drop_reasons=drop_rows,
            clamp_warnings=clamp_rows,
            kept=kept_rows))
        print(f"replay {replay}: kept {len(kept_rows)}/{len(times)} frames "
              f"-> {scene_dir.name}", flush=True)

    dump_json(manifest.to_json(), job.out_root / "manifest.json")
    return manifest


def object_mask(buffers: FrameBuffers, instance_id: int) -> np.ndarray:
    return buffers.instance_id == instance_id
