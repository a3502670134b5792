import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { jitterSeries, peakFrames, percentile, plotPoints } from
    "../src/jitter.js";
import { OverlayBundle } from "../src/types.js";

const bundle: OverlayBundle = JSON.parse(readFileSync(
    new URL("./fixtures/ten_frame_bundle.json", import.meta.url), "utf8"));

describe("percentile", () => {
    it("interpolates linearly", () => {
        expect(percentile([0, 10], 0.5)).toBe(5);
        expect(percentile([1, 2, 3, 4], 0)).toBe(1);
        expect(percentile([1, 2, 3, 4], 1)).toBe(4);
    });

    it("rejects empty input", () => {
        expect(() => percentile([], 0.5)).toThrow();
    });
});

describe("peakFrames", () => {
    it("flags exactly the frames above the 95th percentile", () => {
        for (const variant of Object.keys(bundle.variants)) {
            const series = jitterSeries(bundle, variant);
            const bound = percentile(series, 0.95);
            const expected = bundle.frame_indices.filter(
                (_, k) => series[k]! > bound);
            expect(peakFrames(bundle, variant)).toEqual(expected);
        }
    });

    it("raw jitter dominates the smoothed variant on the fixture", () => {
        const raw = jitterSeries(bundle, "raw");
        const smoothed = jitterSeries(bundle, "smoothed");
        const mean = (xs: number[]) =>
            xs.reduce((a, b) => a + b, 0) / xs.length;
        expect(mean(raw.slice(1))).toBeGreaterThan(mean(smoothed.slice(1)));
    });

    it("unknown variant raises", () => {
        expect(() => jitterSeries(bundle, "nope")).toThrow();
    });
});

describe("plotPoints", () => {
    it("spans the box and puts the maximum at the top", () => {
        const pts = plotPoints([0, 2, 1], 100, 50);
        expect(pts[0]).toEqual([0, 50]);
        expect(pts[1]).toEqual([50, 0]);
        expect(pts[2]).toEqual([100, 25]);
    });
});
