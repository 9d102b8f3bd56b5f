/** Typed client for the surgipose studio service; the UI's only I/O path. */

import type { Pose12 } from "./math.js";

export interface CameraInfo {
  fx: number; fy: number; cx: number; cy: number;
  width: number; height: number; near_clip: number;
}

export interface InstanceInfo {
  instance_id: number;
  obj_id: number;
  pose: Pose12;
  mesh: { num_vertices: number; num_triangles: number; diameter: number };
}

export interface SceneInfo {
  camera: CameraInfo;
  ecm: { joints: number[]; joint_limits: [number, number][]; base_pose: Pose12 };
  instances: InstanceInfo[];
  ambient: number[];
  background: number[];
  randomization: {
    joint_offset_bounds: number[];
    light_cone_half_angle_deg: number;
    light_intensity_range: [number, number];
    seed: number;
  };
}

export interface TrajectoryInstanceDoc {
  instance_id: number;
  obj_id: number;
  mesh?: unknown;
}

export interface KeyframeDoc {
  t: number;
  poses: Record<string, Pose12>;
  ecm: number[];
}

export interface TrajectoryDoc {
  version: number;
  name: string;
  source?: string;
  instances: TrajectoryInstanceDoc[];
  keyframes: KeyframeDoc[];
}

export interface GtSummary {
  instance_id: number;
  obj_id: number;
  px_count_visib: number;
  px_count_all: number;
  visib_fract: number;
}

export interface JobStatus {
  job_id: number;
  state: "queued" | "running" | "done" | "failed";
  frames_done: number;
  frames_total: number;
  manifest_path: string | null;
  error: string | null;
}

export interface JobSpec {
  replays: number;
  seed?: number;
  sample_rate_hz?: number;
  frames_per_replay?: number;
  min_visib_keep?: number;
  scene_id_base?: number;
  target_obj_id?: number;
  out_root?: string;
  joint_offset_bounds?: number[];
  light_cone_half_angle_deg?: number;
  light_intensity_range?: [number, number];
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function errorMessage(resp: Response): Promise<string> {
  try {
    const body = await resp.json();
    if (body && typeof body.error === "string") return body.error;
  } catch {
    /* non-JSON error body */
  }
  return `HTTP ${resp.status}`;
}

export class ApiClient {
  constructor(readonly base: string = "") {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const resp = await fetch(this.base + path, init);
    if (!resp.ok) {
      throw new ApiError(resp.status, await errorMessage(resp));
    }
    return resp;
  }

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.request(path, init);
    return (await resp.json()) as T;
  }

  private put(path: string, body: unknown) {
    return this.json<unknown>(path, {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  getScene(): Promise<SceneInfo> {
    return this.json<SceneInfo>("/api/scene");
  }

  putInstancePose(instanceId: number, pose: Pose12): Promise<unknown> {
    return this.put(`/api/instance/${instanceId}/pose`, pose);
  }

  putJoints(joints: number[]): Promise<unknown> {
    return this.put("/api/ecm/joints", { joints });
  }

  async getPreview(width?: number, height?: number):
      Promise<{ bytes: Uint8Array; gtInfo: GtSummary[] }> {
    const params = new URLSearchParams();
    if (width) params.set("width", String(width));
    if (height) params.set("height", String(height));
    const query = params.size ? `?${params}` : "";
    const resp = await this.request(`/api/preview${query}`);
    const gtHeader = resp.headers.get("X-Gt-Info");
    return {
      bytes: new Uint8Array(await resp.arrayBuffer()),
      gtInfo: gtHeader ? (JSON.parse(gtHeader) as GtSummary[]) : [],
    };
  }

  getTrajectory(): Promise<TrajectoryDoc> {
    return this.json<TrajectoryDoc>("/api/trajectory");
  }

  putTrajectory(doc: TrajectoryDoc): Promise<unknown> {
    return this.put("/api/trajectory", doc);
  }

  postKeyframe(t: number): Promise<{ keyframes: number; t: number }> {
    return this.json("/api/trajectory/keyframe", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ t }),
    });
  }

  async postJob(spec: JobSpec): Promise<number> {
    const body = await this.json<{ job_id: number }>("/api/jobs", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(spec),
    });
    return body.job_id;
  }

  getJob(jobId: number): Promise<JobStatus> {
    return this.json<JobStatus>(`/api/jobs/${jobId}`);
  }
}
