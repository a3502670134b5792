import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { overlayScene } from "../src/overlay.js";
import { OverlayBundle } from "../src/types.js";

const bundle: OverlayBundle = JSON.parse(readFileSync(
    new URL("./fixtures/ten_frame_bundle.json", import.meta.url), "utf8"));

const ALL = new Set(Object.keys(bundle.variants));

describe("overlayScene", () => {
    it("is a pure function of bundle, frame and enabled variants", () => {
        const a = overlayScene(bundle, 3, ALL);
        const b = overlayScene(bundle, 3, new Set(ALL));
        expect(b).toEqual(a);
    });

    it("renders the 10-frame fixture snapshot", () => {
        // frame 0 and a mid-sequence frame, all variants on
        expect(overlayScene(bundle, 0, ALL)).toMatchSnapshot();
        expect(overlayScene(bundle, 5, ALL)).toMatchSnapshot();
    });

    it("box and axes counts match a fully visible object", () => {
        const scene = overlayScene(bundle, 0, ALL);
        const variants = Object.keys(bundle.variants);
        const boxes = scene.polylines.filter((p) => p.kind === "box");
        const axes = scene.polylines.filter((p) => p.kind === "axis");
        expect(boxes).toHaveLength(12 * variants.length);
        expect(axes).toHaveLength(3 * variants.length);
    });

    it("toggling a variant hides exactly that layer", () => {
        const full = overlayScene(bundle, 2, ALL);
        const without = new Set(ALL);
        without.delete("raw");
        const reduced = overlayScene(bundle, 2, without);
        expect(reduced.polylines.every((p) => p.variant !== "raw"))
            .toBe(true);
        const fullOthers = full.polylines.filter((p) => p.variant !== "raw");
        expect(reduced.polylines).toEqual(fullOthers);
    });

    it("no variants enabled gives an empty scene", () => {
        const scene = overlayScene(bundle, 0, new Set());
        expect(scene.polylines).toEqual([]);
        expect(scene.width).toBe(bundle.width);
    });

    it("unknown frame index yields no polylines", () => {
        expect(overlayScene(bundle, 999, ALL).polylines).toEqual([]);
    });
});
