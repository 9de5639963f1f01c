import { describe, expect, it, vi } from "vitest";
import { ApiError, Client, FEATURES } from "../src/api.js";
import { gaugeRows } from "../src/gauges.js";

function jsonResponse(body: unknown, status = 200): Response {
    return new Response(JSON.stringify(body), {
        status,
        headers: { "content-type": "application/json" },
    });
}

const okBody = {
    mel: [[1, 2], [3, 4]],
    num_frames: 2,
    predicted: { pitch: 0.1, pitch_range: 0.2, duration: 0.3, energy: -0.4, tilt: 0.5 },
    applied: { pitch: 0, pitch_range: 0, duration: 0, energy: 0, tilt: 0 },
    truncated: false,
    timing_ms: 12.5,
};

describe("Client.synthesize", () => {
    it("sends a complete clamped bias record", async () => {
        const fetchFn = vi.fn(async (_url: RequestInfo | URL, init?: RequestInit) => {
            return jsonResponse(okBody);
        });
        const client = new Client("", fetchFn as unknown as typeof fetch);
        await client.synthesize({
            phone_labels: "AA BB",
            bias: { pitch: 4, pitch_range: -4, duration: 0.5, energy: 0, tilt: 0 },
            mode: "absolute",
            want_audio: false,
            max_frames: 600,
        });
        const body = JSON.parse((fetchFn.mock.calls[0][1] as RequestInit).body as string);
        expect(Object.keys(body.bias).sort()).toEqual([...FEATURES].sort());
        expect(body.bias.pitch).toBe(1);
        expect(body.bias.pitch_range).toBe(-1);
        expect(body.mode).toBe("absolute");
    });

    it("raises ApiError with the service detail on 422", async () => {
        const fetchFn = vi.fn(async () => jsonResponse({ detail: "unknown phone labels: ['XX']" }, 422));
        const client = new Client("", fetchFn as unknown as typeof fetch);
        await expect(client.synthesize({
            phone_labels: "XX",
            bias: { pitch: 0, pitch_range: 0, duration: 0, energy: 0, tilt: 0 },
            mode: "absolute",
            want_audio: false,
            max_frames: 600,
        })).rejects.toMatchObject({ status: 422 });
    });
});

describe("gaugeRows", () => {
    it("shows response fields verbatim without recomputation", () => {
        const rows = gaugeRows({ ...okBody });
        const pitch = rows.find((r) => r.feature === "pitch")!;
        expect(pitch.predicted).toBe("0.100");
        expect(pitch.applied).toBe("0.000");
        expect(pitch.measured).toBe("–");
        expect(pitch.delta).toBe("–");
    });

    it("computes only the measured-minus-applied delta", () => {
        const rows = gaugeRows({
            ...okBody,
            applied: { pitch: 0.2, pitch_range: 0, duration: 0, energy: 0, tilt: 0 },
            measured: { pitch: 0.35, pitch_range: null, duration: 0.1, energy: 0, tilt: 0 },
        });
        const pitch = rows.find((r) => r.feature === "pitch")!;
        expect(pitch.measured).toBe("0.350");
        expect(pitch.delta).toBe("0.150");
        const range = rows.find((r) => r.feature === "pitch_range")!;
        expect(range.measured).toBe("–");
    });

    it("always yields one row per feature", () => {
        expect(gaugeRows({ ...okBody }).map((r) => r.feature)).toEqual([...FEATURES]);
    });
});
