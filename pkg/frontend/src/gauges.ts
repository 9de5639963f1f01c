// Gauge rows show service response fields verbatim; the only client-side
// arithmetic is the measured-minus-applied delta column.

import { BiasRecord, FEATURES, FeatureName, SynthesisResponse } from "./api.js";

export interface GaugeRow {
    feature: FeatureName;
    predicted: string;
    applied: string;
    measured: string;
    delta: string;
}

export function formatValue(value: number | null | undefined): string {
    if (value === null || value === undefined) return "–";
    return value.toFixed(3);
}

export function gaugeRows(res: SynthesisResponse): GaugeRow[] {
    return FEATURES.map((feature) => {
        const measured = res.measured ? res.measured[feature] ?? null : null;
        const delta = measured === null || measured === undefined
            ? "–"
            : (measured - res.applied[feature]).toFixed(3);
        return {
            feature,
            predicted: formatValue(res.predicted[feature]),
            applied: formatValue(res.applied[feature]),
            measured: formatValue(measured),
            delta,
        };
    });
}

export function deltaTable(a: BiasRecord, b: BiasRecord): { feature: FeatureName; delta: string }[] {
    return FEATURES.map((feature) => ({
        feature,
        delta: (b[feature] - a[feature]).toFixed(3),
    }));
}
