/** Panel controller: immediate state updates, debounced render dispatch,
 * and latest-wins response handling.
 *
 * Every gesture bumps the state right away (the fader must track the
 * pointer), but requests only fire after the gesture has rested for the
 * debounce window. Each dispatched request carries a sequence number; a
 * response is dropped unless its number still matches the newest dispatch,
 * so a slow early render can never overwrite a fast later one. The
 * superseded request is also aborted outright.
 */

import type { RenderResult, SynthesizeRequest } from "./api.js";
import {
  PanelState,
  initialState,
  requestBody,
  withFader,
  withInterpolation,
} from "./state.js";

export const DEBOUNCE_MS = 150;

export interface RenderBackend {
  synthesize(body: SynthesizeRequest, signal?: AbortSignal): Promise<RenderResult>;
}

export interface PanelEvents {
  /** Fired on every state transition, including in-flight toggles. */
  onState(state: PanelState): void;
  /** Fired only for responses that are still the latest. */
  onRender(result: RenderResult): void;
  /** Service or network failure for the latest request. */
  onError(message: string): void;
}

export interface PanelOptions {
  debounceMs?: number;
  seed?: number;
  spectrogram?: boolean;
}

export class PanelController {
  state: PanelState;

  private seq = 0;
  private timer: ReturnType<typeof setTimeout> | undefined;
  private abort: AbortController | null = null;
  private readonly debounceMs: number;
  private readonly seed: number;
  private readonly spectrogram: boolean;

  constructor(
    private readonly backend: RenderBackend,
    nChannels: number,
    private readonly events: PanelEvents,
    opts: PanelOptions = {},
  ) {
    this.state = initialState(nChannels);
    this.debounceMs = opts.debounceMs ?? DEBOUNCE_MS;
    this.seed = opts.seed ?? 0;
    this.spectrogram = opts.spectrogram ?? true;
  }

  setModel(id: string | null): void {
    this.transition({ ...this.state, model: id });
    this.schedule();
  }

  setReference(id: string): void {
    this.transition({ ...this.state, reference: id });
    this.schedule();
  }

  faderChange(channel: number, value: number): void {
    this.transition(withFader(this.state, channel, value));
    this.schedule();
  }

  interpolationScrub(i: number, j: number, t: number): void {
    this.transition(withInterpolation(this.state, i, j, t));
    this.schedule();
  }

  /** Skip the debounce — used when restoring a deep link on page load. */
  renderNow(): void {
    if (this.timer !== undefined) clearTimeout(this.timer);
    this.timer = undefined;
    void this.dispatch();
  }

  private transition(next: PanelState): void {
    this.state = next;
    this.events.onState(this.state);
  }

  private schedule(): void {
    if (this.timer !== undefined) clearTimeout(this.timer);
    this.timer = setTimeout(() => {
      this.timer = undefined;
      void this.dispatch();
    }, this.debounceMs);
  }

  private async dispatch(): Promise<void> {
    if (!this.state.reference) return;
    const mine = ++this.seq;
    this.abort?.abort();
    this.abort = new AbortController();
    const body = requestBody(this.state, { seed: this.seed, spectrogram: this.spectrogram });
    this.transition({ ...this.state, inFlight: true });
    try {
      const result = await this.backend.synthesize(body, this.abort.signal);
      if (mine !== this.seq) return; // superseded while in flight
      this.transition({ ...this.state, inFlight: false });
      this.events.onRender(result);
    } catch (error) {
      if (mine !== this.seq) return; // stale failures (incl. aborts) are silent
      this.transition({ ...this.state, inFlight: false });
      this.events.onError(error instanceof Error ? error.message : String(error));
    }
  }
}
