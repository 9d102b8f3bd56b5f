/**
 * End-to-end studio acceptance against a live surgipose service:
 *   - author a 3-keyframe trajectory through the UI's API client and state
 *     store, launch an N=2 generation job, and watch it complete;
 *   - the saved trajectory validates against the shipped JSON schema and
 *     replays headlessly (CLI) to the same dataset hash with the same seed;
 *   - a UI-requested preview PNG is byte-identical to the offline render of
 *     the same state (a 1-frame zero-randomization generation job).
 */

import { spawn, type ChildProcess } from "node:child_process";
import { createHash } from "node:crypto";
import { mkdtempSync, readFileSync, readdirSync, statSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";
import { afterAll, beforeAll, describe, expect, test } from "vitest";

import { ApiClient } from "../src/api.js";
import { identityPose, rotationFromEuler, type Pose12 } from "../src/math.js";
import { pollJob } from "../src/preview.js";
import { StudioState } from "../src/state.js";

const REPO_ROOT = resolve(__dirname, "..", "..");
const SCHEMA_PATH = join(REPO_ROOT, "src", "surgipose", "schemas", "trajectory.schema.json");
const LONG = 300_000;

const sceneDoc = (seed: number, randomized: boolean) => ({
  version: 1,
  camera: { fx: 500.0, fy: 500.0, cx: 160.0, cy: 120.0, width: 320, height: 240 },
  ecm: {
    base_pose: [1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, -110.0],
    joints: [0, 0, 0, 0],
  },
  instances: [
    {
      instance_id: 1,
      obj_id: 1,
      mesh: { type: "needle", segments: 16, ring_segments: 6 },
      material: { diffuse: [0.75, 0.75, 0.8] },
    },
  ],
  randomization: randomized
    ? { seed, joint_offset_bounds: [0.02, 0.02, 2.0, 0.05] }
    : {
        seed,
        joint_offset_bounds: [0, 0, 0, 0],
        light_cone_half_angle_deg: 0.0,
        light_intensity_range: [1.0, 1.0],
      },
});

function hashTree(root: string): string {
  const hash = createHash("sha256");
  const walk = (dir: string): string[] => {
    const out: string[] = [];
    for (const name of readdirSync(dir)) {
      const full = join(dir, name);
      if (statSync(full).isDirectory()) out.push(...walk(full));
      else out.push(full);
    }
    return out;
  };
  for (const file of walk(root).sort()) {
    hash.update(file.slice(root.length + 1));
    hash.update(readFileSync(file));
  }
  return hash.digest("hex");
}

function runCli(args: string[], cwd: string): Promise<{ code: number; output: string }> {
  return new Promise((resolvePromise) => {
    const proc = spawn("python3", ["-m", "surgipose.cli", ...args], { cwd });
    let output = "";
    proc.stdout.on("data", (chunk) => { output += chunk; });
    proc.stderr.on("data", (chunk) => { output += chunk; });
    proc.on("close", (code) => resolvePromise({ code: code ?? -1, output }));
  });
}

describe("studio end-to-end", () => {
  const tmp = mkdtempSync(join(tmpdir(), "studio-e2e-"));
  const scenePath = join(tmp, "scene.json");
  const port = 20000 + Math.floor(Math.random() * 9000);
  const api = new ApiClient(`http://127.0.0.1:${port}`);
  let server: ChildProcess;

  beforeAll(async () => {
    writeFileSync(scenePath, JSON.stringify(sceneDoc(4242, true)));
    server = spawn("python3", [
      "-m", "surgipose.cli", "serve",
      "--scene", scenePath,
      "--port", String(port),
      "--data-root", join(tmp, "datasets"),
    ], { cwd: tmp });
    let lastError: unknown = null;
    for (let attempt = 0; attempt < 150; attempt++) {
      try {
        await api.getScene();
        return;
      } catch (err) {
        lastError = err;
        await new Promise((r) => setTimeout(r, 100));
      }
    }
    throw new Error(`service did not come up: ${lastError}`);
  }, LONG);

  afterAll(() => {
    server?.kill("SIGTERM");
  });

  async function applyState(state: StudioState, pose: Pose12, joints: number[]) {
    await api.putInstancePose(1, pose);
    state.poses.set(1, pose);
    const clamped = state.clampJoints(joints);
    await api.putJoints(clamped);
    state.joints = clamped;
  }

  test("author, generate, and replay headlessly to the same hash", async () => {
    const state = new StudioState();
    state.loadScene(await api.getScene());

    // three keyframes: needle drifting, scope inserting
    const poses: Array<[Pose12, number[]]> = [
      [identityPose(), [0, 0, 0, 0]],
      [[...rotationFromEuler(15, 0, 5), 4.0, -1.0, 0.0], [0.03, -0.02, 3.0, 0.05]],
      [[...rotationFromEuler(30, 5, 10), 8.0, -2.0, -1.0], [0.06, -0.04, 6.0, 0.1]],
    ];
    for (let k = 0; k < poses.length; k++) {
      await applyState(state, poses[k][0], poses[k][1]);
      await api.postKeyframe(k);
      state.recordKeyframe(k);
    }

    // non-increasing timestamps are rejected and leave the trajectory alone
    await expect(api.postKeyframe(1.5)).rejects.toMatchObject({ status: 400 });
    const doc = await api.getTrajectory();
    expect(doc.keyframes).toHaveLength(3);

    // the saved document validates against the shipped JSON schema
    const Ajv2020 = (await import("ajv/dist/2020.js")).default;
    const ajv = new Ajv2020({ strict: false });
    const schema = JSON.parse(readFileSync(SCHEMA_PATH, "utf-8"));
    const validate = ajv.compile(schema);
    expect(validate(doc), JSON.stringify(validate.errors)).toBe(true);

    // N = 0 never reaches the service: the form validation blocks it
    expect(state.validateJobForm({ replays: 0 }).length).toBeGreaterThan(0);

    // launch N = 2 with a pinned seed through the UI path
    const uiOut = join(tmp, "ui_run");
    const jobId = await api.postJob({
      replays: 2, frames_per_replay: 3, seed: 777, out_root: uiOut,
    });
    let sawProgress = 0;
    const final = await pollJob(
      () => api.getJob(jobId),
      (s) => { sawProgress = Math.max(sawProgress, s.frames_done); },
      200);
    expect(final.state).toBe("done");
    expect(final.manifest_path).toBeTruthy();
    expect(sawProgress).toBe(final.frames_total);

    const manifest = JSON.parse(readFileSync(join(uiOut, "manifest.json"), "utf-8"));
    expect(manifest.scenes.map((s: { scene_id: number }) => s.scene_id)).toEqual([0, 1]);

    // headless replay of the saved trajectory with the same seed
    const trajPath = join(tmp, "saved_traj.json");
    writeFileSync(trajPath, JSON.stringify(doc));
    const cliOut = join(tmp, "cli_run");
    const jobPath = join(tmp, "job.json");
    writeFileSync(jobPath, JSON.stringify({
      trajectory: trajPath,
      scene: scenePath,
      replays: 2,
      frames_per_replay: 3,
      seed: 777,
      out_root: cliOut,
      target_obj_id: 1,
    }));
    const result = await runCli(["generate", "--job", jobPath], tmp);
    expect(result.code, result.output).toBe(0);

    expect(hashTree(cliOut)).toBe(hashTree(uiOut));
  }, LONG);

  test("preview parity: UI preview PNG equals the offline render", async () => {
    const state = new StudioState();
    state.loadScene(await api.getScene());

    const pose: Pose12 = [...rotationFromEuler(20, -10, 35), 2.0, 1.0, -3.0];
    const joints = [0.05, -0.02, 4.0, 0.1];
    await applyState(state, pose, joints);
    const { bytes, gtInfo } = await api.getPreview();
    expect(gtInfo[0].px_count_visib).toBeGreaterThan(0);

    // the same state as a 1-frame zero-randomization generation job
    const zeroScene = join(tmp, "scene_zero.json");
    writeFileSync(zeroScene, JSON.stringify(sceneDoc(1, false)));
    const traj = {
      version: 1,
      name: "parity",
      source: "studio",
      instances: [{ instance_id: 1, obj_id: 1 }],
      keyframes: [
        { t: 0, poses: { "1": pose }, ecm: joints },
        { t: 1, poses: { "1": pose }, ecm: joints },
      ],
    };
    const trajPath = join(tmp, "parity_traj.json");
    writeFileSync(trajPath, JSON.stringify(traj));
    const outRoot = join(tmp, "parity_run");
    const jobPath = join(tmp, "parity_job.json");
    writeFileSync(jobPath, JSON.stringify({
      trajectory: trajPath,
      scene: zeroScene,
      replays: 1,
      frames_per_replay: 1,
      out_root: outRoot,
    }));
    const result = await runCli(["generate", "--job", jobPath], tmp);
    expect(result.code, result.output).toBe(0);

    const rendered = readFileSync(join(outRoot, "000000", "rgb", "000000.png"));
    expect(Buffer.from(bytes).equals(rendered)).toBe(true);
  }, LONG);
});
