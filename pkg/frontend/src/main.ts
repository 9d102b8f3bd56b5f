/** Studio wiring: one API client, one state store, panels around a live preview. */

import { ApiClient } from "./api.js";
import { JobPanel } from "./jobs.js";
import { JointPanel, PosePanel, describeError, renderVisibility, showBanner } from "./panels.js";
import { PreviewLoop } from "./preview.js";
import { StudioState } from "./state.js";
import { Timeline } from "./timeline.js";

const api = new ApiClient("");
const state = new StudioState();

const previewImg = document.getElementById("preview") as HTMLImageElement;
const visibRoot = document.getElementById("visibility")!;

let previewUrl: string | null = null;
const preview = new PreviewLoop(async () => {
  try {
    const { bytes, gtInfo } = await api.getPreview();
    const blob = new Blob([bytes.buffer as ArrayBuffer], { type: "image/png" });
    if (previewUrl) URL.revokeObjectURL(previewUrl);
    previewUrl = URL.createObjectURL(blob);
    previewImg.src = previewUrl;
    renderVisibility(visibRoot, gtInfo);
  } catch (err) {
    showBanner(`preview failed — ${describeError(err)}`);
  }
});

const jointPanel = new JointPanel(document.getElementById("joints")!, state, api,
                                  () => preview.request());
const posePanel = new PosePanel(document.getElementById("poses")!, state, api,
                                () => preview.request());
const timeline = new Timeline(document.getElementById("timeline")!, state, api,
                              () => {
                                jointPanel.render();
                                posePanel.render();
                                preview.request();
                              });
const jobPanel = new JobPanel(document.getElementById("jobs")!, state, api);

document.getElementById("save-trajectory")!
  .addEventListener("click", () => void timeline.saveToServer());
document.getElementById("reload-trajectory")!
  .addEventListener("click", () => void (async () => {
    await timeline.loadFromServer();
    preview.request();
  })());

async function boot(): Promise<void> {
  try {
    state.loadScene(await api.getScene());
    await timeline.loadFromServer();
  } catch (err) {
    showBanner(`cannot reach the surgipose service — ${describeError(err)}`);
    return;
  }
  jointPanel.render();
  posePanel.render();
  timeline.render();
  jobPanel.render();
  preview.request();
}

void boot();
