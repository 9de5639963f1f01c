// DOM wiring for the lever panel: sliders steer live synthesis through a
// debounced scheduler; results render as spectrogram, gauges, and audio.

import {
    ApiError,
    Client,
    FEATURES,
    FeatureName,
    SynthesisRequest,
    SynthesisResponse,
    wavObjectUrl,
} from "./api.js";
import { gaugeRows } from "./gauges.js";
import { ColorScale, melColorScale, renderHeatmap } from "./heatmap.js";
import { DebouncedScheduler } from "./scheduler.js";
import { LeverState, PresetSlots, initialState, validatePhones, withSlider, zeroBias } from "./state.js";

const client = new Client("");
let state: LeverState = initialState();
let vocab: string[] = [];
const presets = new PresetSlots();

function el<T extends HTMLElement>(id: string): T {
    const node = document.getElementById(id);
    if (!node) throw new Error(`missing element #${id}`);
    return node as T;
}

function drawMel(canvas: HTMLCanvasElement, mel: number[][], scale?: ColorScale): void {
    const image = renderHeatmap(mel, scale);
    if (image.width === 0 || image.height === 0) return;
    canvas.width = image.width;
    canvas.height = image.height;
    const ctx = canvas.getContext("2d");
    if (!ctx) return;
    // Fresh copy pins the backing store to a plain ArrayBuffer for ImageData.
    const pixels = new Uint8ClampedArray(image.pixels);
    ctx.putImageData(new ImageData(pixels, image.width, image.height), 0, 0);
}

function setBanner(message: string | null): void {
    const banner = el<HTMLDivElement>("banner");
    banner.textContent = message ?? "";
    banner.style.display = message ? "block" : "none";
}

function setFieldError(message: string | null): void {
    const node = el<HTMLDivElement>("field-error");
    node.textContent = message ?? "";
    node.style.display = message ? "block" : "none";
}

function renderResult(res: SynthesisResponse): void {
    drawMel(el<HTMLCanvasElement>("spectrogram"), res.mel);
    const table = el<HTMLTableSectionElement>("gauge-body");
    table.innerHTML = "";
    for (const row of gaugeRows(res)) {
        const tr = document.createElement("tr");
        for (const cell of [row.feature, row.predicted, row.applied, row.measured, row.delta]) {
            const td = document.createElement("td");
            td.textContent = cell;
            tr.appendChild(td);
        }
        table.appendChild(tr);
    }
    el<HTMLSpanElement>("status").textContent =
        `${res.num_frames} frames in ${res.timing_ms.toFixed(0)} ms` +
        (res.truncated ? " (truncated)" : "");
    const audio = el<HTMLAudioElement>("player");
    if (res.wav_base64) {
        if (audio.src.startsWith("blob:")) URL.revokeObjectURL(audio.src);
        audio.src = wavObjectUrl(res.wav_base64);
        audio.style.display = "block";
    }
}

function currentRequest(): SynthesisRequest {
    return {
        phone_labels: state.phones.trim(),
        bias: { ...state.bias },
        mode: state.mode,
        want_audio: el<HTMLInputElement>("want-audio").checked,
        max_frames: 600,
    };
}

const scheduler = new DebouncedScheduler<SynthesisRequest, SynthesisResponse>(
    (req) => client.synthesize(req),
    (res) => {
        setBanner(null);
        setFieldError(null);
        renderResult(res);
    },
    (err) => {
        if (err instanceof ApiError && err.status < 500) {
            setFieldError(err.detail);
        } else {
            setBanner(`Service unavailable: ${err instanceof Error ? err.message : err}. Retry by moving a lever.`);
        }
    },
    300,
);

function requestSynthesis(): void {
    const phones = state.phones.trim();
    if (!phones) {
        setFieldError("Enter a phone sequence first.");
        return;
    }
    const unknown = validatePhones(phones, vocab);
    if (unknown.length > 0) {
        setFieldError(`Unknown phones: ${unknown.join(" ")}`);
        return;
    }
    setFieldError(null);
    scheduler.request(currentRequest());
}

function buildSliders(): void {
    const host = el<HTMLDivElement>("sliders");
    for (const name of FEATURES) {
        const row = document.createElement("div");
        row.className = "slider-row";
        const label = document.createElement("label");
        label.textContent = name.replace("_", " ");
        label.htmlFor = `lever-${name}`;
        const input = document.createElement("input");
        input.type = "range";
        input.id = `lever-${name}`;
        input.min = "-1";
        input.max = "1";
        input.step = "0.05";
        input.value = "0";
        const readout = document.createElement("span");
        readout.id = `readout-${name}`;
        readout.textContent = "0.00";
        input.addEventListener("input", () => {
            state = withSlider(state, name as FeatureName, parseFloat(input.value));
            readout.textContent = state.bias[name as FeatureName].toFixed(2);
            requestSynthesis();
        });
        row.append(label, input, readout);
        host.appendChild(row);
    }
}

function applyState(next: LeverState): void {
    state = next;
    for (const name of FEATURES) {
        el<HTMLInputElement>(`lever-${name}`).value = String(state.bias[name]);
        el<HTMLSpanElement>(`readout-${name}`).textContent = state.bias[name].toFixed(2);
    }
    el<HTMLInputElement>("phones").value = state.phones;
    el<HTMLSelectElement>("mode").value = state.mode;
}

async function comparePresets(): Promise<void> {
    const a = presets.get("A");
    const b = presets.get("B");
    if (!a || !b) return;
    setBanner(null);
    try {
        const [resA, resB] = await Promise.all([
            client.synthesize({ phone_labels: a.phones.trim(), bias: a.bias, mode: a.mode, want_audio: false, max_frames: 600 }),
            client.synthesize({ phone_labels: b.phones.trim(), bias: b.bias, mode: b.mode, want_audio: false, max_frames: 600 }),
        ]);
        const scale = melColorScale([resA.mel, resB.mel]);
        drawMel(el<HTMLCanvasElement>("compare-a"), resA.mel, scale);
        drawMel(el<HTMLCanvasElement>("compare-b"), resB.mel, scale);
        const body = el<HTMLTableSectionElement>("compare-body");
        body.innerHTML = "";
        for (const name of FEATURES) {
            const tr = document.createElement("tr");
            const delta = resB.applied[name] - resA.applied[name];
            for (const cell of [name.replace("_", " "),
                                resA.applied[name].toFixed(3),
                                resB.applied[name].toFixed(3),
                                delta.toFixed(3)]) {
                const td = document.createElement("td");
                td.textContent = cell;
                tr.appendChild(td);
            }
            body.appendChild(tr);
        }
        el<HTMLDivElement>("compare-panel").style.display = "block";
    } catch (err) {
        setBanner(`Comparison failed: ${err instanceof Error ? err.message : err}`);
    }
}

function refreshCompareButton(): void {
    el<HTMLButtonElement>("compare").disabled = !presets.compareReady;
}

async function boot(): Promise<void> {
    buildSliders();
    try {
        const info = await client.modelInfo();
        vocab = info.vocab;
        el<HTMLSpanElement>("model-label").textContent =
            `model step ${info.step}, vocab ${vocab.filter((v) => v !== "sil").join(" ")}`;
        const phones = vocab.filter((v) => v !== "sil").slice(0, 5).join(" ");
        applyState({ ...state, phones });
    } catch (err) {
        setBanner(`Cannot reach service: ${err instanceof Error ? err.message : err}`);
    }
    el<HTMLInputElement>("phones").addEventListener("input", (e) => {
        state = { ...state, phones: (e.target as HTMLInputElement).value };
        requestSynthesis();
    });
    el<HTMLSelectElement>("mode").addEventListener("change", (e) => {
        state = { ...state, mode: (e.target as HTMLSelectElement).value as LeverState["mode"] };
        requestSynthesis();
    });
    el<HTMLButtonElement>("store-a").addEventListener("click", () => {
        presets.store("A", state);
        refreshCompareButton();
    });
    el<HTMLButtonElement>("store-b").addEventListener("click", () => {
        presets.store("B", state);
        refreshCompareButton();
    });
    el<HTMLButtonElement>("compare").addEventListener("click", () => void comparePresets());
    el<HTMLButtonElement>("reset").addEventListener("click", () => {
        applyState({ ...state, bias: zeroBias() });
        requestSynthesis();
    });
    refreshCompareButton();
}

void boot();
