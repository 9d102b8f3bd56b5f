/** Generation-job form, submission, and 1 s progress polling. */

import { ApiClient, JobSpec } from "./api.js";
import { pollJob } from "./preview.js";
import { StudioState } from "./state.js";
import { describeError, showBanner } from "./panels.js";

export class JobPanel {
  private running = false;

  constructor(private readonly root: HTMLElement,
              private readonly state: StudioState,
              private readonly api: ApiClient) {}

  render(): void {
    this.root.innerHTML = "";
    const fields: Array<[string, string, string]> = [
      ["replays", "number", "2"],
      ["frames per replay", "number", "10"],
      ["seed", "number", String(this.state.scene?.randomization.seed ?? 0)],
      ["min visibility", "number", "0"],
      ["output root", "text", ""],
    ];
    const inputs: HTMLInputElement[] = [];
    for (const [name, type, initial] of fields) {
      const row = document.createElement("div");
      row.className = "control-row";
      const label = document.createElement("label");
      label.textContent = name;
      const input = document.createElement("input");
      input.type = type;
      input.value = initial;
      inputs.push(input);
      row.append(label, input);
      this.root.append(row);
    }
    const errors = document.createElement("div");
    errors.className = "form-errors";
    const submit = document.createElement("button");
    submit.textContent = "launch generation";
    const progress = document.createElement("progress");
    progress.max = 1;
    progress.value = 0;
    progress.style.display = "none";
    const status = document.createElement("div");
    status.className = "job-status";

    const readForm = () => ({
      replays: Number(inputs[0].value),
      framesPerReplay: inputs[1].value ? Number(inputs[1].value) : undefined,
      seed: inputs[2].value ? Number(inputs[2].value) : undefined,
      minVisibKeep: inputs[3].value ? Number(inputs[3].value) : undefined,
      outRoot: inputs[4].value || undefined,
    });

    const revalidate = () => {
      const problems = this.state.validateJobForm(readForm());
      errors.textContent = problems.join("; ");
      submit.disabled = this.running || problems.length > 0;
    };
    inputs.forEach((input) => input.addEventListener("input", revalidate));
    revalidate();

    submit.addEventListener("click", () => void this.launch(
        readForm(), submit, progress, status, revalidate));
    this.root.append(errors, submit, progress, status);
  }

  private async launch(form: ReturnType<JobPanel["readFormType"]>,
                       submit: HTMLButtonElement, progress: HTMLProgressElement,
                       status: HTMLElement, revalidate: () => void): Promise<void> {
    const spec: JobSpec = { replays: form.replays };
    if (form.framesPerReplay !== undefined) spec.frames_per_replay = form.framesPerReplay;
    if (form.seed !== undefined) spec.seed = form.seed;
    if (form.minVisibKeep !== undefined) spec.min_visib_keep = form.minVisibKeep;
    if (form.outRoot) spec.out_root = form.outRoot;

    this.running = true;
    submit.disabled = true;
    progress.style.display = "block";
    status.textContent = "submitting…";
    try {
      const jobId = await this.api.postJob(spec);
      const final = await pollJob(
        () => this.api.getJob(jobId),
        (s) => {
          progress.value = s.frames_total ? s.frames_done / s.frames_total : 0;
          status.textContent =
            `job ${jobId}: ${s.state} (${s.frames_done}/${s.frames_total})`;
        },
        1000);
      if (final.state === "done") {
        status.innerHTML = "";
        const link = document.createElement("a");
        link.href = `file://${final.manifest_path}`;
        link.textContent = `done — manifest: ${final.manifest_path}`;
        status.append(link);
      } else {
        status.textContent = `failed — ${final.error ?? "unknown error"}`;
        showBanner(`job failed — ${final.error ?? "unknown error"}`);
      }
    } catch (err) {
      status.textContent = "";
      showBanner(`job submit failed — ${describeError(err)}`);
    } finally {
      this.running = false;
      revalidate();
    }
  }

  // typing helper only (never called)
  private readFormType() {
    return { replays: 0, framesPerReplay: undefined as number | undefined,
             seed: undefined as number | undefined,
             minVisibKeep: undefined as number | undefined,
             outRoot: undefined as string | undefined };
  }
}
