/** DOM wiring for the fader panel. All behaviour lives in the tested
 * modules (state/panel/spectrogram/api); this file only builds elements and
 * forwards events. */

import { RenderResult, SynthClient, wavBytes } from "./api.js";
import { PanelController } from "./panel.js";
import { drawSpectrogram } from "./spectrogram.js";
import { PanelState, decodeState, encodeState } from "./state.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text) node.textContent = text;
  return node;
}

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app container");

  const apiBase = new URLSearchParams(location.search).get("api") ?? "";
  const client = new SynthClient(apiBase);

  const [{ models }, refs] = await Promise.all([client.models(), client.references()]);
  const labels = refs.class_labels;

  // --- static scaffolding ---------------------------------------------
  const errorBox = el("div", { class: "error", hidden: "" });
  const status = el("span", { class: "status" });
  const modelSelect = el("select", { title: "checkpoint" });
  for (const m of models) {
    modelSelect.append(el("option", { value: m.id }, `${m.id} (${m.kind}, ${m.epochs_completed} epochs)`));
  }
  const refSelect = el("select", { title: "reference clip" });
  for (const r of refs.references) {
    refSelect.append(el("option", { value: r.id }, `${r.id} [${r.label}/${r.split}]`));
  }

  const faderRows: Array<{ input: HTMLInputElement; requested: HTMLElement; measured: HTMLElement }> = [];
  const faderPanel = el("div", { class: "faders" });
  labels.forEach((label, channel) => {
    const input = el("input", { type: "range", min: "0", max: "1", step: "0.01", value: "1" });
    const requested = el("span", { class: "requested" }, "1.00");
    const measured = el("span", { class: "measured" }, "–");
    const row = el("div", { class: "fader" });
    row.append(el("label", {}, label), input, requested, el("span", {}, " ŝ="), measured);
    faderPanel.append(row);
    faderRows.push({ input, requested, measured });
    input.addEventListener("input", () => controller.faderChange(channel, input.valueAsNumber));
  });

  const interpI = el("select", { title: "channel A" });
  const interpJ = el("select", { title: "channel B" });
  labels.forEach((label, idx) => {
    interpI.append(el("option", { value: String(idx) }, label));
    interpJ.append(el("option", { value: String(idx) }, label));
  });
  interpJ.selectedIndex = Math.min(1, labels.length - 1);
  const interpT = el("input", { type: "range", min: "0", max: "1", step: "0.01", value: "0" });
  const scrub = () => {
    const i = Number(interpI.value);
    const j = Number(interpJ.value);
    if (i !== j) controller.interpolationScrub(i, j, interpT.valueAsNumber);
  };
  interpT.addEventListener("input", scrub);
  interpI.addEventListener("change", scrub);
  interpJ.addEventListener("change", scrub);

  const audio = el("audio", { controls: "" });
  const canvas = el("canvas", { class: "spectrogram", width: "690", height: "128" });
  const meta = el("div", { class: "meta" });

  const interpRow = el("div", { class: "interp" });
  interpRow.append(el("span", {}, "morph "), interpI, el("span", {}, " ↔ "), interpJ, interpT);
  root.append(
    errorBox,
    el("h1", {}, "simsynth panel"),
    modelSelect, refSelect, status,
    faderPanel,
    interpRow,
    audio, canvas, meta,
  );

  // --- controller wiring ------------------------------------------------
  let lastAudioUrl: string | null = null;

  const syncDom = (state: PanelState) => {
    state.faders.forEach((value, idx) => {
      faderRows[idx].input.value = String(value);
      faderRows[idx].requested.textContent = value.toFixed(2);
    });
    if (state.model) modelSelect.value = state.model;
    if (state.reference) refSelect.value = state.reference;
    status.textContent = state.inFlight ? " rendering…" : "";
    history.replaceState(null, "", "?" + encodeState(state)
      + (apiBase ? `&api=${encodeURIComponent(apiBase)}` : ""));
  };

  const showRender = (result: RenderResult) => {
    errorBox.hidden = true;
    result.measured_similarity.forEach((value, idx) => {
      faderRows[idx].measured.textContent = value.toFixed(3);
    });
    if (lastAudioUrl) URL.revokeObjectURL(lastAudioUrl);
    const blob = new Blob([wavBytes(result.audio_wav_base64) as BlobPart], { type: "audio/wav" });
    lastAudioUrl = URL.createObjectURL(blob);
    audio.src = lastAudioUrl;
    void audio.play().catch(() => undefined); // autoplay may need a gesture
    if (result.spectrogram) drawSpectrogram(canvas, result.spectrogram);
    meta.textContent = `render ${result.render_id} · model ${result.model}`
      + ` · checkpoint ${result.checkpoint_hash.slice(0, 12)}`
      + ` · ${result.latency_ms.toFixed(1)} ms`;
  };

  const controller = new PanelController(client, labels.length, {
    onState: syncDom,
    onRender: showRender,
    onError: (message) => {
      errorBox.textContent = message;
      errorBox.hidden = false;
    },
  });

  modelSelect.addEventListener("change", () => controller.setModel(modelSelect.value));
  refSelect.addEventListener("change", () => controller.setReference(refSelect.value));

  // --- deep-link restore -------------------------------------------------
  const restored = decodeState(location.search, labels.length);
  controller.state = {
    ...restored,
    model: restored.model ?? models[models.length - 1]?.id ?? null,
    reference: restored.reference ?? refs.references[0]?.id ?? null,
  };
  syncDom(controller.state);
  if (restored.interpolation) interpT.value = String(restored.interpolation.t);
  controller.renderNow();
}

boot().catch((error) => {
  const root = document.getElementById("app");
  if (root) root.textContent = `failed to start: ${error instanceof Error ? error.message : error}`;
});
