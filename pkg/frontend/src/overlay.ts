/** Pure overlay geometry: (bundle, frame, enabled variants) -> Scene.
 *
 * The server precomputes every projection; this module only collects the
 * polylines of the enabled variants for one frame, so rendering is a pure
 * function and snapshot-testable.
 */

import { OverlayBundle, Polyline, Scene } from "./types.js";

export const VARIANT_COLORS: Record<string, string> = {
    raw: "#e0a030",
    smoothed: "#4090e0",
    pgo: "#40c060",
    gt: "#e05050",
};

export function variantColor(name: string): string {
    return VARIANT_COLORS[name] ?? "#b080d0";
}

export function overlayScene(
    bundle: OverlayBundle,
    frameIndex: number,
    enabled: Set<string>,
): Scene {
    const polylines: Polyline[] = [];
    for (const name of Object.keys(bundle.variants).sort()) {
        if (!enabled.has(name)) {
            continue;
        }
        const frames = bundle.variants[name]!.frames;
        const at = bundle.frame_indices.indexOf(frameIndex);
        const overlay = at >= 0 ? frames[at] : undefined;
        if (!overlay) {
            continue;
        }
        for (const seg of overlay.box) {
            polylines.push({ variant: name, kind: "box", points: seg });
        }
        for (const seg of overlay.axes) {
            polylines.push({ variant: name, kind: "axis", points: seg });
        }
    }
    return { width: bundle.width, height: bundle.height, polylines };
}

/** Thin canvas layer; everything drawable was decided in overlayScene. */
export function drawScene(
    ctx: CanvasRenderingContext2D,
    scene: Scene,
    scale: number,
): void {
    ctx.clearRect(0, 0, scene.width * scale, scene.height * scale);
    for (const line of scene.polylines) {
        ctx.strokeStyle = variantColor(line.variant);
        ctx.lineWidth = line.kind === "axis" ? 2 : 1;
        ctx.beginPath();
        line.points.forEach(([x, y], k) => {
            if (k === 0) {
                ctx.moveTo(x * scale, y * scale);
            } else {
                ctx.lineTo(x * scale, y * scale);
            }
        });
        ctx.stroke();
    }
}
