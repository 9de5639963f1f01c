// Typed client for the synthesis service. All requests go through here so the
// bias payload is always a complete, clamped five-feature record.

export const FEATURES = ["pitch", "pitch_range", "duration", "energy", "tilt"] as const;
export type FeatureName = (typeof FEATURES)[number];

export type BiasRecord = Record<FeatureName, number>;
export type Mode = "absolute" | "additive";

export interface SynthesisRequest {
    phone_labels: string;
    bias: BiasRecord;
    mode: Mode;
    want_audio: boolean;
    max_frames: number;
}

export interface SynthesisResponse {
    mel: number[][];
    num_frames: number;
    predicted: BiasRecord;
    applied: BiasRecord;
    measured?: Partial<Record<FeatureName, number | null>>;
    wav_base64?: string;
    truncated: boolean;
    timing_ms: number;
}

export interface ModelInfo {
    config: { n_mels: number; [key: string]: unknown };
    step: number;
    vocab: string[];
}

export class ApiError extends Error {
    constructor(public status: number, public detail: string) {
        super(`HTTP ${status}: ${detail}`);
    }
}

export function clamp(value: number): number {
    return Math.min(1, Math.max(-1, value));
}

export function clampBias(bias: BiasRecord): BiasRecord {
    const out = {} as BiasRecord;
    for (const name of FEATURES) {
        out[name] = clamp(bias[name] ?? 0);
    }
    return out;
}

async function parseError(res: Response): Promise<ApiError> {
    let detail = res.statusText;
    try {
        const body = await res.json();
        detail = typeof body.detail === "string" ? body.detail : JSON.stringify(body.detail);
    } catch {
        // keep statusText
    }
    return new ApiError(res.status, detail);
}

export class Client {
    constructor(private baseUrl: string = "", private fetchFn: typeof fetch = fetch) {}

    async modelInfo(): Promise<ModelInfo> {
        const res = await this.fetchFn(`${this.baseUrl}/model/info`);
        if (!res.ok) throw await parseError(res);
        return res.json();
    }

    async synthesize(req: SynthesisRequest, signal?: AbortSignal): Promise<SynthesisResponse> {
        const body: SynthesisRequest = { ...req, bias: clampBias(req.bias) };
        const res = await this.fetchFn(`${this.baseUrl}/synthesize`, {
            method: "POST",
            headers: { "content-type": "application/json" },
            body: JSON.stringify(body),
            signal,
        });
        if (!res.ok) throw await parseError(res);
        return res.json();
    }
}

export function wavObjectUrl(wavBase64: string): string {
    const bytes = Uint8Array.from(atob(wavBase64), (c) => c.charCodeAt(0));
    return URL.createObjectURL(new Blob([bytes], { type: "audio/wav" }));
}
