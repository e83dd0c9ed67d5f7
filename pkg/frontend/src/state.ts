/** Panel state: what the faders say, plus URL (de)serialization so a
 * deep-linked reload reproduces the same render request. */

import type { SynthesizeRequest } from "./api.js";

export interface InterpolationPair {
  i: number;
  j: number;
  t: number;
}

export interface PanelState {
  model: string | null;
  reference: string | null;
  faders: number[]; // one per class channel, each in [0, 1]
  interpolation: InterpolationPair | null;
  inFlight: boolean;
}

export function clamp01(value: number): number {
  if (Number.isNaN(value)) return 0;
  return Math.min(1, Math.max(0, value));
}

export function initialState(nChannels: number): PanelState {
  return {
    model: null,
    reference: null,
    faders: new Array(nChannels).fill(1),
    interpolation: null,
    inFlight: false,
  };
}

export function withFader(state: PanelState, channel: number, value: number): PanelState {
  if (channel < 0 || channel >= state.faders.length) {
    throw new RangeError(`channel ${channel} out of range`);
  }
  const faders = state.faders.slice();
  faders[channel] = clamp01(value);
  return { ...state, faders, interpolation: null };
}

/** Channel i tracks t, channel j its complement, everything else pinned
 * fully dissimilar — the A↔B morph between two classes. */
export function withInterpolation(state: PanelState, i: number, j: number, t: number): PanelState {
  const n = state.faders.length;
  if (i === j) throw new RangeError("interpolation channels must differ");
  if (i < 0 || i >= n || j < 0 || j >= n) {
    throw new RangeError(`interpolation pair (${i}, ${j}) out of range`);
  }
  const tc = clamp01(t);
  const faders = new Array(n).fill(1);
  faders[i] = tc;
  faders[j] = 1 - tc;
  return { ...state, faders, interpolation: { i, j, t: tc } };
}

export function requestBody(state: PanelState, opts: { seed?: number; spectrogram?: boolean } = {}): SynthesizeRequest {
  if (!state.reference) throw new Error("no reference selected");
  const body: SynthesizeRequest = {
    reference: state.reference,
    similarity: state.faders.map(clamp01),
    seed: opts.seed ?? 0,
    spectrogram: opts.spectrogram ?? true,
  };
  if (state.model) body.model = state.model;
  return body;
}

// URL round trip -----------------------------------------------------------

export function encodeState(state: PanelState): string {
  const params = new URLSearchParams();
  if (state.model) params.set("model", state.model);
  if (state.reference) params.set("ref", state.reference);
  params.set("f", state.faders.map((v) => String(v)).join(","));
  if (state.interpolation) {
    const { i, j, t } = state.interpolation;
    params.set("interp", `${i}:${j}:${t}`);
  }
  return params.toString();
}

export function decodeState(query: string, nChannels: number): PanelState {
  const params = new URLSearchParams(query);
  let state = initialState(nChannels);
  state.model = params.get("model");
  state.reference = params.get("ref");
  const faders = params.get("f");
  if (faders !== null) {
    const values = faders.split(",").map(Number);
    if (values.length === nChannels) {
      state.faders = values.map(clamp01);
    }
  }
  const interp = params.get("interp");
  if (interp !== null) {
    const [i, j, t] = interp.split(":").map(Number);
    if (Number.isInteger(i) && Number.isInteger(j) && i !== j
        && i >= 0 && i < nChannels && j >= 0 && j < nChannels) {
      state = withInterpolation(state, i, j, t);
    }
  }
  return state;
}
