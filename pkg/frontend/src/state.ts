// Lever state: five sliders, mode toggle, phone input, and two preset slots.

import { BiasRecord, FEATURES, FeatureName, Mode, clamp } from "./api.js";

export const SLIDER_STEP = 0.05;

export interface LeverState {
    bias: BiasRecord;
    mode: Mode;
    phones: string;
}

export function zeroBias(): BiasRecord {
    const out = {} as BiasRecord;
    for (const name of FEATURES) out[name] = 0;
    return out;
}

export function initialState(): LeverState {
    return { bias: zeroBias(), mode: "absolute", phones: "" };
}

export function withSlider(state: LeverState, name: FeatureName, value: number): LeverState {
    // Snap to the slider step, then clamp; out-of-range values can never leave
    // the control layer.
    const snapped = Math.round(value / SLIDER_STEP) * SLIDER_STEP;
    return {
        ...state,
        bias: { ...state.bias, [name]: clamp(Number(snapped.toFixed(2))) },
    };
}

export function snapshot(state: LeverState): LeverState {
    return { bias: { ...state.bias }, mode: state.mode, phones: state.phones };
}

export class PresetSlots {
    private slots: { A: LeverState | null; B: LeverState | null } = { A: null, B: null };

    store(which: "A" | "B", state: LeverState): void {
        this.slots[which] = snapshot(state);
    }

    get(which: "A" | "B"): LeverState | null {
        const s = this.slots[which];
        return s ? snapshot(s) : null;
    }

    get compareReady(): boolean {
        return this.slots.A !== null && this.slots.B !== null;
    }
}

export function validatePhones(phones: string, vocab: string[]): string[] {
    // Returns the offending tokens; empty array means the input is valid.
    const known = new Set(vocab);
    return phones.split(/\s+/).filter((t) => t.length > 0 && !known.has(t));
}
