// Mel-spectrogram to RGBA pixel buffer: time on x, mel band on y (low bands
// at the bottom), viridis-style perceptual color map.

export interface HeatmapImage {
    width: number;   // time frames
    height: number;  // mel bands
    pixels: Uint8ClampedArray; // RGBA, row-major from the top row
}

// Sparse viridis anchors; interpolated linearly.
const STOPS: [number, [number, number, number]][] = [
    [0.0, [68, 1, 84]],
    [0.25, [59, 82, 139]],
    [0.5, [33, 145, 140]],
    [0.75, [94, 201, 98]],
    [1.0, [253, 231, 37]],
];

export function colorOf(t: number): [number, number, number] {
    const x = Math.min(1, Math.max(0, t));
    for (let i = 1; i < STOPS.length; i++) {
        const [t1, c1] = STOPS[i];
        if (x <= t1) {
            const [t0, c0] = STOPS[i - 1];
            const u = t1 === t0 ? 0 : (x - t0) / (t1 - t0);
            return [
                Math.round(c0[0] + u * (c1[0] - c0[0])),
                Math.round(c0[1] + u * (c1[1] - c0[1])),
                Math.round(c0[2] + u * (c1[2] - c0[2])),
            ];
        }
    }
    return STOPS[STOPS.length - 1][1];
}

export interface ColorScale {
    lo: number;
    hi: number;
}

export function melColorScale(mels: number[][][]): ColorScale {
    // Shared scale across one or more mel payloads (A/B comparison).
    let lo = Infinity;
    let hi = -Infinity;
    for (const mel of mels) {
        for (const frame of mel) {
            for (const v of frame) {
                if (v < lo) lo = v;
                if (v > hi) hi = v;
            }
        }
    }
    if (!isFinite(lo) || !isFinite(hi)) return { lo: 0, hi: 1 };
    if (hi <= lo) hi = lo + 1e-6;
    return { lo, hi };
}

export function renderHeatmap(mel: number[][], scale?: ColorScale): HeatmapImage {
    const width = mel.length;
    const height = width > 0 ? mel[0].length : 0;
    const s = scale ?? melColorScale([mel]);
    const pixels = new Uint8ClampedArray(width * height * 4);
    for (let x = 0; x < width; x++) {
        for (let band = 0; band < height; band++) {
            const t = (mel[x][band] - s.lo) / (s.hi - s.lo);
            const [r, g, b] = colorOf(t);
            const y = height - 1 - band; // low mel bands at the bottom
            const offset = (y * width + x) * 4;
            pixels[offset] = r;
            pixels[offset + 1] = g;
            pixels[offset + 2] = b;
            pixels[offset + 3] = 255;
        }
    }
    return { width, height, pixels };
}
