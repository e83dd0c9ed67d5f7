/** Typed client for the synthesis service. The panel talks to the service
 * through this module and nothing else. */

export interface ModelInfo {
  id: string;
  kind: string;
  n_channels: number;
  epochs_completed: number;
  checkpoint_hash: string;
}

export interface ReferenceInfo {
  id: string;
  label: string;
  split: string;
}

export interface ReferencesResponse {
  references: ReferenceInfo[];
  class_labels: string[];
}

export interface SynthesizeRequest {
  reference: string;
  similarity: number[];
  model?: string;
  seed?: number;
  spectrogram?: boolean;
}

export interface RenderResult {
  render_id: string;
  model: string;
  reference: string;
  similarity: number[];
  measured_similarity: number[];
  checkpoint_hash: string;
  sample_rate: number;
  n_samples: number;
  latency_ms: number;
  audio_wav_base64: string;
  spectrogram: number[][] | null;
}

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(detail);
    this.name = "ApiError";
  }
}

async function asError(response: Response): Promise<ApiError> {
  let detail = response.statusText || `HTTP ${response.status}`;
  try {
    const body = await response.json();
    if (typeof body?.detail === "string") detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(response.status, detail);
}

export class SynthClient {
  constructor(readonly baseUrl: string = "") {}

  private async getJson<T>(path: string): Promise<T> {
    const response = await fetch(this.baseUrl + path);
    if (!response.ok) throw await asError(response);
    return response.json() as Promise<T>;
  }

  models(): Promise<{ models: ModelInfo[] }> {
    return this.getJson("/v1/models");
  }

  references(): Promise<ReferencesResponse> {
    return this.getJson("/v1/references");
  }

  async synthesize(body: SynthesizeRequest, signal?: AbortSignal): Promise<RenderResult> {
    const response = await fetch(this.baseUrl + "/v1/synthesize", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
      signal,
    });
    if (!response.ok) throw await asError(response);
    return response.json() as Promise<RenderResult>;
  }

  audioUrl(renderId: string): string {
    return `${this.baseUrl}/v1/audio/${renderId}`;
  }
}

/** Decode the base64 WAV payload of a render into raw bytes. */
export function wavBytes(base64: string): Uint8Array {
  const binary = atob(base64);
  const bytes = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) bytes[i] = binary.charCodeAt(i);
  return bytes;
}
