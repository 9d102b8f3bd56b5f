/** Keyframe timeline: record, list, and scrub (interpolated replay via preview). */

import { ApiClient } from "./api.js";
import { StudioState } from "./state.js";
import { describeError, showBanner } from "./panels.js";

export class Timeline {
  private scrubbing = false;

  constructor(private readonly root: HTMLElement,
              private readonly state: StudioState,
              private readonly api: ApiClient,
              private readonly onStateApplied: () => void) {}

  render(): void {
    this.root.innerHTML = "";

    const recordRow = document.createElement("div");
    recordRow.className = "control-row";
    const timeInput = document.createElement("input");
    timeInput.type = "number";
    timeInput.step = "0.1";
    timeInput.value = String(this.state.nextKeyframeTime());
    const recordBtn = document.createElement("button");
    recordBtn.textContent = "record keyframe";
    recordBtn.addEventListener("click", () => void this.record(Number(timeInput.value)));
    recordRow.append(timeInput, recordBtn);
    this.root.append(recordRow);

    const list = document.createElement("div");
    list.className = "keyframe-list";
    this.state.keyframes.forEach((kf, idx) => {
      const entry = document.createElement("button");
      entry.className = "keyframe-entry";
      entry.textContent = `#${idx} @ t=${kf.t}`;
      entry.title = "scrub to this keyframe";
      entry.addEventListener("click", () => void this.scrubTo(kf.t));
      list.append(entry);
    });
    this.root.append(list);

    const range = this.state.timeRange;
    if (range) {
      const scrub = document.createElement("input");
      scrub.type = "range";
      scrub.min = String(range[0]);
      scrub.max = String(range[1]);
      scrub.step = String((range[1] - range[0]) / 200);
      scrub.value = String(this.state.cursor);
      scrub.addEventListener("input", () => void this.scrubTo(Number(scrub.value)));
      const label = document.createElement("div");
      label.id = "scrub-label";
      label.textContent = `cursor t=${this.state.cursor.toFixed(3)}`;
      this.root.append(scrub, label);
    }
  }

  private async record(t: number): Promise<void> {
    const reason = this.state.keyframeTimeError(t);
    if (reason) {
      showBanner(reason);
      return;
    }
    try {
      await this.api.postKeyframe(t);
      this.state.recordKeyframe(t);
      this.render();
    } catch (err) {
      showBanner(`keyframe rejected — ${describeError(err)}`);
    }
  }

  /** Apply the interpolated state at `t` to the server, then refresh preview. */
  async scrubTo(t: number): Promise<void> {
    if (this.scrubbing) return;  // latest-wins once the in-flight apply returns
    const sampled = this.state.sampleAt(t);
    if (!sampled) return;
    this.scrubbing = true;
    try {
      for (const [key, pose] of Object.entries(sampled.poses)) {
        await this.api.putInstancePose(Number(key), pose);
        this.state.poses.set(Number(key), pose);
      }
      await this.api.putJoints(this.state.clampJoints(sampled.ecm));
      this.state.joints = this.state.clampJoints(sampled.ecm);
      this.state.cursor = t;
      const label = document.getElementById("scrub-label");
      if (label) label.textContent = `cursor t=${t.toFixed(3)}`;
      this.onStateApplied();
    } catch (err) {
      showBanner(`scrub failed — ${describeError(err)}`);
    } finally {
      this.scrubbing = false;
    }
  }

  async saveToServer(): Promise<void> {
    try {
      await this.api.putTrajectory(this.state.trajectoryDoc());
      showBanner("trajectory saved to the service", "info");
    } catch (err) {
      showBanner(`save failed — ${describeError(err)}`);
    }
  }

  async loadFromServer(): Promise<void> {
    try {
      const doc = await this.api.getTrajectory();
      this.state.loadTrajectory(doc);
      this.render();
    } catch (err) {
      showBanner(`load failed — ${describeError(err)}`);
    }
  }
}
