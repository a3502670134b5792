/** Shared types mirroring the server's overlay bundle and override file. */

export type Segment = [[number, number], [number, number]];

export interface FrameOverlay {
    frame: number;
    box: Segment[];
    axes: Segment[];
    jitter_rot_deg: number;
    jitter_trans_mm: number;
    jitter: number;
}

export interface OverlayBundle {
    sequence: string;
    frame_indices: number[];
    width: number;
    height: number;
    variants: Record<string, { frames: FrameOverlay[] }>;
}

export type Tier = "default" | "downweighted" | "removed";

export const TIERS: Tier[] = ["default", "downweighted", "removed"];

/** One annotator decision: a frame range of absolute edges gets a tier. */
export interface Selection {
    start: number;
    end: number;
    tier: Tier;
    weight?: number;
}

export interface Polyline {
    variant: string;
    kind: "box" | "axis";
    points: [number, number][];
}

/** Everything the canvas layer needs to draw one frame. */
export interface Scene {
    width: number;
    height: number;
    polylines: Polyline[];
}
