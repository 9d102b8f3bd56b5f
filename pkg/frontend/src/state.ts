/**
 * DOM-free studio state: the working trajectory, the current scene pose, and
 * the validation rules the widgets enforce (sliders clamp to joint limits,
 * keyframe timestamps strictly increase, job forms reject bad replay counts).
 */

import type { KeyframeDoc, SceneInfo, TrajectoryDoc } from "./api.js";
import { interpolatePose, lerp, type Pose12 } from "./math.js";

export interface SampledState {
  poses: Record<string, Pose12>;
  ecm: number[];
}

export interface JobForm {
  replays: number;
  framesPerReplay?: number;
  sampleRateHz?: number;
  seed?: number;
  minVisibKeep?: number;
  outRoot?: string;
}

export class StudioState {
  scene: SceneInfo | null = null;
  selected: number | null = null;
  poses = new Map<number, Pose12>();
  joints: number[] = [0, 0, 0, 0];
  keyframes: KeyframeDoc[] = [];
  trajectoryName = "studio";
  cursor = 0;

  loadScene(scene: SceneInfo): void {
    this.scene = scene;
    this.poses.clear();
    for (const inst of scene.instances) {
      this.poses.set(inst.instance_id, [...inst.pose]);
    }
    this.joints = [...scene.ecm.joints];
    this.selected = scene.instances.length ? scene.instances[0].instance_id : null;
  }

  /** Clamp to the scene's joint limits; the UI never submits out-of-limit joints. */
  clampJoints(joints: number[]): number[] {
    if (!this.scene) return [...joints];
    return joints.map((q, i) => {
      const [lo, hi] = this.scene!.ecm.joint_limits[i];
      return Math.min(hi, Math.max(lo, q));
    });
  }

  /** Reason a keyframe cannot be recorded at `t`, or null when it can. */
  keyframeTimeError(t: number): string | null {
    if (!Number.isFinite(t)) return "timestamp must be a number";
    const last = this.keyframes.at(-1);
    if (last && t <= last.t) {
      return `timestamp must exceed the last keyframe (${last.t})`;
    }
    return null;
  }

  nextKeyframeTime(): number {
    const last = this.keyframes.at(-1);
    return last ? last.t + 1 : 0;
  }

  /** Mirror a keyframe the server accepted. */
  recordKeyframe(t: number): KeyframeDoc {
    const err = this.keyframeTimeError(t);
    if (err) throw new Error(err);
    const poses: Record<string, Pose12> = {};
    for (const [iid, pose] of this.poses) poses[String(iid)] = [...pose];
    const kf: KeyframeDoc = { t, poses, ecm: [...this.joints] };
    this.keyframes.push(kf);
    return kf;
  }

  loadTrajectory(doc: TrajectoryDoc): void {
    this.trajectoryName = doc.name || "studio";
    this.keyframes = doc.keyframes.map((kf) => ({
      t: kf.t,
      poses: Object.fromEntries(
        Object.entries(kf.poses).map(([k, v]) => [k, [...v]])),
      ecm: [...kf.ecm],
    }));
  }

  get timeRange(): [number, number] | null {
    if (this.keyframes.length < 2) return null;
    return [this.keyframes[0].t, this.keyframes.at(-1)!.t];
  }

  /**
   * Interpolated trajectory state at `time` (client-side twin of the server's
   * sampler: linear translation/joints, geodesic rotation, exact at keyframes).
   */
  sampleAt(time: number): SampledState | null {
    const range = this.timeRange;
    if (!range || time < range[0] || time > range[1]) return null;
    const kfs = this.keyframes;
    for (const kf of kfs) {
      if (kf.t === time) {
        return { poses: structuredClone(kf.poses), ecm: [...kf.ecm] };
      }
    }
    let lo = 0;
    while (lo + 1 < kfs.length && kfs[lo + 1].t <= time) lo++;
    const a = kfs[lo];
    const b = kfs[lo + 1];
    const s = (time - a.t) / (b.t - a.t);
    const poses: Record<string, Pose12> = {};
    for (const key of Object.keys(a.poses)) {
      poses[key] = interpolatePose(a.poses[key], b.poses[key], s);
    }
    return { poses, ecm: lerp(a.ecm, b.ecm, s) };
  }

  trajectoryDoc(): TrajectoryDoc {
    if (!this.scene) throw new Error("no scene loaded");
    return {
      version: 1,
      name: this.trajectoryName,
      source: "studio",
      instances: this.scene.instances.map((inst) => ({
        instance_id: inst.instance_id,
        obj_id: inst.obj_id,
      })),
      keyframes: structuredClone(this.keyframes),
    };
  }

  /** Validation errors for the generation form; empty means submit is allowed. */
  validateJobForm(form: JobForm): string[] {
    const errors: string[] = [];
    if (!Number.isInteger(form.replays) || form.replays < 1) {
      errors.push("replays must be a positive integer");
    }
    if (this.keyframes.length < 2) {
      errors.push("trajectory needs at least 2 keyframes");
    }
    if (form.framesPerReplay !== undefined &&
        (!Number.isInteger(form.framesPerReplay) || form.framesPerReplay < 1)) {
      errors.push("frames per replay must be a positive integer");
    }
    if (form.sampleRateHz !== undefined && !(form.sampleRateHz > 0)) {
      errors.push("sample rate must be positive");
    }
    if (form.minVisibKeep !== undefined &&
        !(form.minVisibKeep >= 0 && form.minVisibKeep <= 1)) {
      errors.push("visibility threshold must lie in [0, 1]");
    }
    return errors;
  }
}
