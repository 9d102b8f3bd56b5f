"""Local HTTP service backing the trajectory-authoring studio.

Single process, loopback by default.  Scene state sits behind one lock;
previews snapshot it; at most one generation job runs at a time, in a
background thread, with progress polled via GET /api/jobs/{id}.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse

from .bop import encode_png
from .errors import SurgiposeError
from .geometry import Pose, compose, invert, pose_from_list, pose_to_list
from .mesh import mesh_diameter
from .pipeline import GenerationJob, compute_gt_info, run_generation
from .render import render_frame
from .scene import (Keyframe, SceneConfig, SceneInstance, Trajectory,
                    ViewpointRandomization, ecm_forward_kinematics,
                    load_scene_config, sample_viewpoint,
                    scene_to_trajectory_instances, trajectory_from_json)


@dataclass
class JobStatus:
    job_id: int
    state: str = "queued"  # queued -> running -> done | failed
    frames_done: int = 0
    frames_total: int = 0
    manifest_path: str | None = None
    error: str | None = None

    def to_json(self) -> dict:
        return {"job_id": self.job_id, "state": self.state,
                "frames_done": self.frames_done, "frames_total": self.frames_total,
                "manifest_path": self.manifest_path, "error": self.error}


class StudioServer:
    """Mutable scene/trajectory state plus the job registry."""

    def __init__(self, config: SceneConfig, data_root: Path):
        self.config = config
        self.data_root = Path(data_root)
        self.lock = threading.RLock()
        self.poses = {inst.instance_id: inst.pose_world for inst in config.instances}
        self.joints = np.array(config.rig.joints)
        self.keyframes: list[Keyframe] = []
        self.trajectory_name = "studio"
        self.jobs: dict[int, JobStatus] = {}
        self._next_job = 1
        self._job_thread: threading.Thread | None = None

    # -- state snapshots ----------------------------------------------------

    def posed_instances(self) -> list[SceneInstance]:
        return [SceneInstance(i.instance_id, i.obj_id, i.mesh,
                              self.poses[i.instance_id], i.material)
                for i in self.config.instances]

    def render_state(self, width=None, height=None):
        """Render the current state exactly as zero-randomization generation would.

        Matching the pipeline, the headlight is anchored at the nominal rig
        (lighting is per replay, fixed in the world while the camera moves);
        the camera itself follows the current joints.
        """
        with self.lock:
            instances = self.posed_instances()
            joints = self.joints.copy()
        neutral = ViewpointRandomization(joint_offset_bounds=np.zeros(4),
                                         light_cone_half_angle_deg=0.0,
                                         light_intensity_range=(1.0, 1.0), seed=0)
        sample = sample_viewpoint(self.config.rig, neutral, 0,
                                  ambient=self.config.ambient)
        clamped, _ = self.config.rig.clamp_joints(joints + sample.joint_offsets)
        cam_pose = ecm_forward_kinematics(self.config.rig.with_joints(clamped))
        cam = self.config.camera
        if width or height:
            cam = cam.scaled(width or cam.width, height or cam.height)
        full = render_frame(instances, cam_pose, cam, sample.light,
                            background=self.config.background)
        infos = []
        cam_from_world = invert(cam_pose)
        for inst in instances:
            solo = render_frame([inst], cam_pose, cam, sample.light,
                                background=self.config.background)
            pose_cam = compose(cam_from_world, inst.pose_world)
            infos.append(compute_gt_info(full, solo, inst, pose_cam))
        return full, infos

    def trajectory(self) -> Trajectory:
        with self.lock:
            return Trajectory(name=self.trajectory_name, source="studio",
                              instances=scene_to_trajectory_instances(self.config),
                              keyframes=tuple(self.keyframes))

    def running_job(self) -> JobStatus | None:
        for status in self.jobs.values():
            if status.state in ("queued", "running"):
                return status
        return None


def _bad_request(message: str) -> JSONResponse:
    return JSONResponse({"error": message}, status_code=400)


def create_app(scene, data_root="datasets", ui_dir=None) -> FastAPI:
    config = scene if isinstance(scene, SceneConfig) else load_scene_config(scene)
    server = StudioServer(config, Path(data_root))
    app = FastAPI(title="surgipose studio service")
    app.state.server = server

    async def read_body(request: Request):
        try:
            return json.loads(await request.body())
        except (json.JSONDecodeError, UnicodeDecodeError):
            return None

    @app.get("/api/scene")
    def get_scene():
        with server.lock:
            cam = config.camera
            limits = config.rig.joint_limits
            return {
                "camera": {"fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
                           "width": cam.width, "height": cam.height,
                           "near_clip": cam.near_clip},
                "ecm": {
                    "joints": [float(q) for q in server.joints],
                    "joint_limits": [[float(lo), float(hi)] for lo, hi in limits],
                    "base_pose": pose_to_list(config.rig.base_pose),
                },
                "instances": [
                    {"instance_id": inst.instance_id, "obj_id": inst.obj_id,
                     "pose": pose_to_list(server.poses[inst.instance_id]),
                     "mesh": {"num_vertices": inst.mesh.num_vertices,
                              "num_triangles": inst.mesh.num_triangles,
                              "diameter": mesh_diameter(inst.mesh)}}
                    for inst in config.instances
                ],
                "ambient": list(config.ambient),
                "background": list(config.background),
                "randomization": {
                    "joint_offset_bounds": [float(b) for b in
                                            config.randomization.joint_offset_bounds],
                    "light_cone_half_angle_deg":
                        config.randomization.light_cone_half_angle_deg,
                    "light_intensity_range": list(config.randomization.light_intensity_range),
                    "seed": config.randomization.seed,
                },
            }

    @app.put("/api/instance/{instance_id}/pose")
    async def put_instance_pose(instance_id: int, request: Request):
        body = await read_body(request)
        if body is None:
            return _bad_request("body must be JSON")
        try:
            if isinstance(body, dict) and "R" in body:
                pose = Pose(np.asarray(body["R"], dtype=float).reshape(3, 3),
                            np.asarray(body["t"], dtype=float).reshape(3))
            else:
                pose = pose_from_list(body)
        except (SurgiposeError, KeyError, TypeError, ValueError) as exc:
            return _bad_request(f"malformed pose: {exc}")
        with server.lock:
            if instance_id not in server.poses:
                return JSONResponse({"error": f"unknown instance {instance_id}"},
                                    status_code=404)
            server.poses[instance_id] = pose
            return {"instance_id": instance_id, "pose": pose_to_list(pose)}

    @app.put("/api/ecm/joints")
    async def put_joints(request: Request):
        body = await read_body(request)
        if not isinstance(body, dict) or "joints" not in body:
            return _bad_request("body must be {\"joints\": [q1, q2, q3, q4]}")
        try:
            joints = np.asarray(body["joints"], dtype=float).reshape(4)
        except (TypeError, ValueError):
            return _bad_request("joints must be 4 numbers")
        limits = config.rig.joint_limits
        if np.any(joints < limits[:, 0]) or np.any(joints > limits[:, 1]):
            return JSONResponse(
                {"error": "joint limit violation",
                 "joints": [float(q) for q in joints],
                 "joint_limits": limits.tolist()},
                status_code=422)
        with server.lock:
            server.joints = joints
            return {"joints": [float(q) for q in joints]}

    @app.get("/api/preview")
    def get_preview(width: int | None = None, height: int | None = None):
        if (width is not None and width <= 0) or (height is not None and height <= 0):
            return _bad_request("width/height must be positive")
        full, infos = server.render_state(width, height)
        summary = [{"instance_id": inst.instance_id, "obj_id": info.obj_id,
                    "px_count_visib": info.px_count_visib,
                    "px_count_all": info.px_count_all,
                    "visib_fract": info.visib_fract}
                   for inst, info in zip(config.instances, infos)]
        return Response(content=encode_png(full.rgb), media_type="image/png",
                        headers={"X-Gt-Info": json.dumps(summary)})

    @app.get("/api/trajectory")
    def get_trajectory():
        with server.lock:
            doc = {
                "version": 1,
                "name": server.trajectory_name,
                "source": "studio",
                "instances": [
                    {"instance_id": inst.instance_id, "obj_id": inst.obj_id,
                     **({"mesh": ref} if (ref := config.mesh_refs.get(inst.instance_id))
                        is not None else {})}
                    for inst in config.instances
                ],
                "keyframes": [
                    {"t": kf.t,
                     "poses": {str(i): pose_to_list(p) for i, p in sorted(kf.poses.items())},
                     "ecm": [float(q) for q in kf.ecm_joints]}
                    for kf in server.keyframes
                ],
            }
            return doc

    @app.put("/api/trajectory")
    async def put_trajectory(request: Request):
        body = await read_body(request)
        if not isinstance(body, dict):
            return _bad_request("body must be a trajectory document")
        try:
            traj = trajectory_from_json(body)
        except SurgiposeError as exc:
            return _bad_request(str(exc))
        scene_ids = {inst.instance_id for inst in config.instances}
        traj_ids = {inst.instance_id for inst in traj.instances}
        if traj_ids != scene_ids:
            return _bad_request(f"trajectory instances {sorted(traj_ids)} do not "
                                f"match the scene ({sorted(scene_ids)})")
        with server.lock:
            server.trajectory_name = traj.name or "studio"
            server.keyframes = list(traj.keyframes)
        return {"keyframes": len(traj.keyframes)}

    @app.post("/api/trajectory/keyframe")
    async def post_keyframe(request: Request):
        body = await read_body(request)
        if not isinstance(body, dict) or "t" not in body:
            return _bad_request("body must be {\"t\": seconds}")
        try:
            t = float(body["t"])
        except (TypeError, ValueError):
            return _bad_request("t must be a number")
        with server.lock:
            if server.keyframes and t <= server.keyframes[-1].t:
                return _bad_request(
                    f"timestamp {t} not after the last keyframe "
                    f"({server.keyframes[-1].t}); timestamps are strictly increasing")
            kf = Keyframe(t, dict(server.poses), server.joints.copy())
            server.keyframes.append(kf)
            return {"keyframes": len(server.keyframes), "t": t}

    @app.post("/api/jobs")
    async def post_job(request: Request):
        body = await read_body(request)
        if not isinstance(body, dict):
            return _bad_request("body must be a job spec")
        with server.lock:
            if server.running_job() is not None:
                return JSONResponse({"error": "a job is already running"},
                                    status_code=409)
            try:
                traj = server.trajectory()
            except SurgiposeError as exc:
                return _bad_request(f"trajectory not ready: {exc}")
            job_id = server._next_job
            server._next_job += 1
            out_root = Path(body.get("out_root", server.data_root / f"job_{job_id:04d}"))
            try:
                base_rand = config.randomization
                randomization = ViewpointRandomization(
                    joint_offset_bounds=np.asarray(
                        body.get("joint_offset_bounds", base_rand.joint_offset_bounds),
                        dtype=float),
                    light_cone_half_angle_deg=float(
                        body.get("light_cone_half_angle_deg",
                                 base_rand.light_cone_half_angle_deg)),
                    light_intensity_range=tuple(
                        body.get("light_intensity_range",
                                 base_rand.light_intensity_range)),
                    seed=int(body.get("seed", base_rand.seed)))
                job = GenerationJob(
                    trajectory=traj,
                    scene=SceneConfig(camera=config.camera, rig=config.rig,
                                      instances=config.instances,
                                      randomization=randomization,
                                      ambient=config.ambient,
                                      background=config.background,
                                      mesh_refs=config.mesh_refs),
                    out_root=out_root,
                    replays=int(body.get("replays", 1)),
                    sample_rate_hz=float(body["sample_rate_hz"])
                        if "sample_rate_hz" in body else
                        (None if "frames_per_replay" in body else 10.0),
                    frames_per_replay=int(body["frames_per_replay"])
                        if "frames_per_replay" in body else None,
                    min_visib_keep=float(body.get("min_visib_keep", 0.0)),
                    scene_id_base=int(body.get("scene_id_base", 0)),
                    target_obj_id=int(body["target_obj_id"])
                        if "target_obj_id" in body else None)
            except (SurgiposeError, TypeError, ValueError) as exc:
                return _bad_request(f"bad job spec: {exc}")
            status = JobStatus(job_id=job_id,
                               frames_total=job.replays * len(job.sample_times()))
            server.jobs[job_id] = status

        def progress(done, total):
            status.frames_done = done
            status.frames_total = total

        def runner():
            status.state = "running"
            try:
                run_generation(job, progress=progress)
                status.manifest_path = str(job.out_root / "manifest.json")
                status.state = "done"
            except Exception as exc:  # job errors land in the status, not the log
                status.error = f"{type(exc).__name__}: {exc}"
                status.state = "failed"

        thread = threading.Thread(target=runner, name=f"surgipose-job-{job_id}",
                                  daemon=True)
        server._job_thread = thread
        thread.start()
        return JSONResponse({"job_id": job_id}, status_code=201)

    @app.get("/api/jobs/{job_id}")
    def get_job(job_id: int):
        status = server.jobs.get(job_id)
        if status is None:
            return JSONResponse({"error": f"unknown job {job_id}"}, status_code=404)
        return status.to_json()

    if ui_dir:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="studio")

    return app


def wait_for_job(server_or_app, job_id: int, timeout: float = 300.0) -> JobStatus:
    """Test helper: block until a job reaches a terminal state."""
    server = getattr(server_or_app, "state", server_or_app)
    server = getattr(server, "server", server)
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        status = server.jobs.get(job_id)
        if status and status.state in ("done", "failed"):
            return status
        time.sleep(0.05)
    raise TimeoutError(f"job {job_id} did not finish within {timeout}s")
