/** Pose / ECM control panels: numeric fields and sliders, no 3D gizmos. */

import { ApiClient, ApiError, GtSummary } from "./api.js";
import { eulerFromRotation, rotationFromEuler, type Pose12 } from "./math.js";
import { StudioState } from "./state.js";

export function showBanner(text: string, kind: "error" | "info" = "error"): void {
  const banner = document.getElementById("banner")!;
  banner.textContent = text;
  banner.className = `banner ${kind}`;
  banner.style.display = "block";
  window.setTimeout(() => { banner.style.display = "none"; }, 6000);
}

export function describeError(err: unknown): string {
  if (err instanceof ApiError) return `${err.status}: ${err.message}`;
  if (err instanceof Error) return err.message || "service unreachable";
  return String(err);
}

export class JointPanel {
  constructor(private readonly root: HTMLElement,
              private readonly state: StudioState,
              private readonly api: ApiClient,
              private readonly onChanged: () => void) {}

  render(): void {
    const scene = this.state.scene;
    if (!scene) return;
    this.root.innerHTML = "";
    const names = ["yaw (rad)", "pitch (rad)", "insertion (mm)", "roll (rad)"];
    scene.ecm.joint_limits.forEach(([lo, hi], idx) => {
      const row = document.createElement("div");
      row.className = "control-row";
      const label = document.createElement("label");
      label.textContent = names[idx];
      const slider = document.createElement("input");
      slider.type = "range";
      slider.min = String(lo);
      slider.max = String(hi);
      slider.step = String((hi - lo) / 400);
      slider.value = String(this.state.joints[idx]);
      const num = document.createElement("input");
      num.type = "number";
      num.step = "0.01";
      num.value = this.state.joints[idx].toFixed(3);
      const push = (value: number) => {
        const joints = [...this.state.joints];
        joints[idx] = value;
        void this.submit(this.state.clampJoints(joints));
      };
      slider.addEventListener("input", () => push(Number(slider.value)));
      num.addEventListener("change", () => push(Number(num.value)));
      row.append(label, slider, num);
      this.root.append(row);
    });
  }

  private async submit(joints: number[]): Promise<void> {
    try {
      await this.api.putJoints(joints);
      this.state.joints = joints;
      this.render();
      this.onChanged();
    } catch (err) {
      showBanner(`joint update rejected — ${describeError(err)}`);
      this.render();  // restore the accepted values
    }
  }
}

export class PosePanel {
  constructor(private readonly root: HTMLElement,
              private readonly state: StudioState,
              private readonly api: ApiClient,
              private readonly onChanged: () => void) {}

  render(): void {
    const scene = this.state.scene;
    if (!scene) return;
    this.root.innerHTML = "";

    const select = document.createElement("select");
    for (const inst of scene.instances) {
      const option = document.createElement("option");
      option.value = String(inst.instance_id);
      option.textContent =
        `instance ${inst.instance_id} (obj ${inst.obj_id}, ` +
        `${inst.mesh.num_triangles} tris)`;
      select.append(option);
    }
    select.value = String(this.state.selected ?? "");
    select.addEventListener("change", () => {
      this.state.selected = Number(select.value);
      this.render();
    });
    this.root.append(select);

    const iid = this.state.selected;
    if (iid === null) return;
    const pose = this.state.poses.get(iid)!;
    const euler = eulerFromRotation(pose.slice(0, 9));
    const fields: Array<[string, number]> = [
      ["x (mm)", pose[9]], ["y (mm)", pose[10]], ["z (mm)", pose[11]],
      ["yaw (deg)", euler.yaw], ["pitch (deg)", euler.pitch], ["roll (deg)", euler.roll],
    ];
    const inputs: HTMLInputElement[] = [];
    for (const [name, value] of fields) {
      const row = document.createElement("div");
      row.className = "control-row";
      const label = document.createElement("label");
      label.textContent = name;
      const num = document.createElement("input");
      num.type = "number";
      num.step = name.endsWith("(mm)") ? "0.5" : "1";
      num.value = value.toFixed(3);
      num.addEventListener("change", () => void this.submit(iid, inputs));
      inputs.push(num);
      row.append(label, num);
      this.root.append(row);
    }
  }

  private async submit(iid: number, inputs: HTMLInputElement[]): Promise<void> {
    const [x, y, z, yaw, pitch, roll] = inputs.map((i) => Number(i.value));
    const pose: Pose12 = [...rotationFromEuler(yaw, pitch, roll), x, y, z];
    try {
      await this.api.putInstancePose(iid, pose);
      this.state.poses.set(iid, pose);
      this.onChanged();
    } catch (err) {
      showBanner(`pose update rejected — ${describeError(err)}`);
    }
  }
}

export function renderVisibility(root: HTMLElement, gtInfo: GtSummary[]): void {
  root.innerHTML = "";
  for (const info of gtInfo) {
    const row = document.createElement("div");
    row.className = "visib-row";
    row.textContent =
      `obj ${info.obj_id}: visibility ${info.visib_fract.toFixed(3)} ` +
      `(${info.px_count_visib}/${info.px_count_all} px)`;
    root.append(row);
  }
}
