/** Range-selection logic and the override file format.
 *
 * Selections are kept canonical: sorted by start, non-overlapping, and
 * adjacent ranges with identical tier/weight coalesced. When a new mark
 * overlaps existing ones, each overlapping frame keeps the stronger
 * downweight (removed beats downweighted; a lower weight beats a higher
 * one within the downweighted tier).
 */

import { Selection, Tier, TIERS } from "./types.js";

const DOWNWEIGHT_DEFAULT = 500; // server-side midpoint of the 1e2-1e3 band

function tierRank(tier: Tier): number {
    return TIERS.indexOf(tier);
}

/** True when `a` downweights at least as strongly as `b`. */
export function atLeastAsStrong(a: Selection, b: Selection): boolean {
    if (tierRank(a.tier) !== tierRank(b.tier)) {
        return tierRank(a.tier) > tierRank(b.tier);
    }
    if (a.tier === "downweighted") {
        const wa = a.weight ?? DOWNWEIGHT_DEFAULT;
        const wb = b.weight ?? DOWNWEIGHT_DEFAULT;
        return wa <= wb;
    }
    return true;
}

function sameStyle(a: Selection, b: Selection): boolean {
    return a.tier === b.tier && (a.weight ?? null) === (b.weight ?? null);
}

/** Canonicalize: sort, drop empties and explicit defaults, coalesce. */
export function normalize(selections: Selection[]): Selection[] {
    const kept = selections
        .filter((s) => s.tier !== "default" && s.end >= s.start)
        .slice()
        .sort((a, b) => a.start - b.start || a.end - b.end);
    const out: Selection[] = [];
    for (const sel of kept) {
        const last = out[out.length - 1];
        if (last && sameStyle(last, sel) && sel.start <= last.end + 1) {
            last.end = Math.max(last.end, sel.end);
        } else {
            out.push({ ...sel });
        }
    }
    return out;
}

/** Apply a new mark; overlaps keep the stronger downweight per frame. */
export function markRange(
    selections: Selection[],
    mark: Selection,
): Selection[] {
    if (mark.end < mark.start) {
        throw new Error(`invalid range [${mark.start}, ${mark.end}]`);
    }
    const pieces: Selection[] = [];
    for (const existing of selections) {
        if (existing.end < mark.start || existing.start > mark.end) {
            pieces.push({ ...existing });
            continue;
        }
        // non-overlapping parts of the existing range survive unchanged
        if (existing.start < mark.start) {
            pieces.push({ ...existing, end: mark.start - 1 });
        }
        if (existing.end > mark.end) {
            pieces.push({ ...existing, start: mark.end + 1 });
        }
        // the overlapped part keeps the stronger of the two
        const lap = {
            ...(atLeastAsStrong(existing, mark) ? existing : mark),
            start: Math.max(existing.start, mark.start),
            end: Math.min(existing.end, mark.end),
        };
        pieces.push(lap);
    }
    // parts of the mark not covered by any existing selection
    let cursor = mark.start;
    const covered = selections
        .filter((s) => s.end >= mark.start && s.start <= mark.end)
        .sort((a, b) => a.start - b.start);
    for (const s of covered) {
        if (s.start > cursor) {
            pieces.push({ ...mark, start: cursor, end: s.start - 1 });
        }
        cursor = Math.max(cursor, s.end + 1);
    }
    if (cursor <= mark.end) {
        pieces.push({ ...mark, start: cursor, end: mark.end });
    }
    return normalize(pieces);
}

/** Clear every selection within [start, end], splitting as needed. */
export function unmarkRange(
    selections: Selection[],
    start: number,
    end: number,
): Selection[] {
    const pieces: Selection[] = [];
    for (const s of selections) {
        if (s.end < start || s.start > end) {
            pieces.push({ ...s });
            continue;
        }
        if (s.start < start) {
            pieces.push({ ...s, end: start - 1 });
        }
        if (s.end > end) {
            pieces.push({ ...s, start: end + 1 });
        }
    }
    return normalize(pieces);
}

/** Python-repr-compatible float text so saved files match the server's. */
export function formatWeight(w: number): string {
    if (Number.isInteger(w) && Math.abs(w) < 1e16) {
        return `${w.toFixed(1)}`;
    }
    return String(w);
}

/** Serialize to the override file format, byte-compatible with dataio. */
export function serializeOverrides(selections: Selection[]): string {
    const lines = ["# start,end,tier[,weight]"];
    for (const s of normalize(selections)) {
        let row = `${s.start},${s.end},${s.tier}`;
        if (s.weight !== undefined && s.weight !== null) {
            row += `,${formatWeight(s.weight)}`;
        }
        lines.push(row);
    }
    return lines.join("\n") + "\n";
}

export function parseOverrides(text: string): Selection[] {
    const out: Selection[] = [];
    const lines = text.split("\n");
    for (let k = 0; k < lines.length; k++) {
        const line = (lines[k] ?? "").trim();
        if (!line || line.startsWith("#")) {
            continue;
        }
        const parts = line.split(",").map((p) => p.trim());
        if (parts.length !== 3 && parts.length !== 4) {
            throw new Error(`line ${k + 1}: expected start,end,tier[,weight]`);
        }
        const start = Number(parts[0]);
        const end = Number(parts[1]);
        const tier = parts[2] as Tier;
        if (!Number.isInteger(start) || !Number.isInteger(end)) {
            throw new Error(`line ${k + 1}: bad frame range`);
        }
        if (!TIERS.includes(tier)) {
            throw new Error(`line ${k + 1}: unknown tier ${parts[2]}`);
        }
        const sel: Selection = { start, end, tier };
        if (parts.length === 4) {
            const weight = Number(parts[3]);
            if (!(weight > 0)) {
                throw new Error(`line ${k + 1}: bad weight ${parts[3]}`);
            }
            sel.weight = weight;
        }
        out.push(sel);
    }
    return out;
}

/** Tier covering one frame, for timeline coloring. */
export function tierAt(selections: Selection[], frame: number): Tier {
    for (const s of selections) {
        if (s.start <= frame && frame <= s.end) {
            return s.tier;
        }
    }
    return "default";
}
