/** Jitter series helpers: percentile highlighting for the per-frame plot. */

import { OverlayBundle } from "./types.js";

export function jitterSeries(bundle: OverlayBundle, variant: string): number[] {
    const entry = bundle.variants[variant];
    if (!entry) {
        throw new Error(`variant ${variant} not in bundle`);
    }
    return entry.frames.map((f) => f.jitter);
}

/** Linear-interpolated percentile, q in [0, 1]. */
export function percentile(values: number[], q: number): number {
    if (values.length === 0) {
        throw new Error("percentile of empty series");
    }
    const sorted = values.slice().sort((a, b) => a - b);
    const pos = q * (sorted.length - 1);
    const lo = Math.floor(pos);
    const hi = Math.ceil(pos);
    const frac = pos - lo;
    return sorted[lo]! * (1 - frac) + sorted[hi]! * frac;
}

/** Frames whose jitter exceeds the q-quantile of the series. */
export function peakFrames(
    bundle: OverlayBundle,
    variant: string,
    q = 0.95,
): number[] {
    const series = jitterSeries(bundle, variant);
    const bound = percentile(series, q);
    const out: number[] = [];
    series.forEach((value, k) => {
        if (value > bound) {
            out.push(bundle.frame_indices[k]!);
        }
    });
    return out;
}

/** Plot geometry: series -> points in a w x h box (pure, testable). */
export function plotPoints(
    series: number[],
    width: number,
    height: number,
): [number, number][] {
    const top = Math.max(...series, 1e-12);
    const dx = series.length > 1 ? width / (series.length - 1) : 0;
    return series.map((v, k) => [k * dx, height - (v / top) * height]);
}
