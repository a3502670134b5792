import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import {
    atLeastAsStrong,
    markRange,
    normalize,
    parseOverrides,
    serializeOverrides,
    tierAt,
    unmarkRange,
} from "../src/overrides.js";
import { Selection, Tier } from "../src/types.js";

const FIXTURE = readFileSync(
    new URL("./fixtures/sample_overrides.csv", import.meta.url), "utf8");

/** Tiny deterministic PRNG for the property checks. */
function lcg(seed: number): () => number {
    let state = seed >>> 0;
    return () => {
        state = (state * 1664525 + 1013904223) >>> 0;
        return state / 2 ** 32;
    };
}

describe("markRange", () => {
    it("merges overlapping ranges of the same tier", () => {
        let sel = markRange([], { start: 10, end: 20, tier: "downweighted" });
        sel = markRange(sel, { start: 15, end: 25, tier: "downweighted" });
        expect(sel).toEqual([{ start: 10, end: 25, tier: "downweighted" }]);
    });

    it("mark then unmark leaves an empty set", () => {
        let sel = markRange([], { start: 5, end: 9, tier: "removed" });
        sel = unmarkRange(sel, 5, 9);
        expect(sel).toEqual([]);
    });

    it("keeps the stronger tier on overlap", () => {
        let sel = markRange([], { start: 12, end: 14, tier: "removed" });
        sel = markRange(sel, { start: 10, end: 20, tier: "downweighted" });
        expect(sel).toEqual([
            { start: 10, end: 11, tier: "downweighted" },
            { start: 12, end: 14, tier: "removed" },
            { start: 15, end: 20, tier: "downweighted" },
        ]);
    });

    it("lower weight wins within the downweighted tier", () => {
        let sel = markRange([],
            { start: 0, end: 9, tier: "downweighted", weight: 100 });
        sel = markRange(sel,
            { start: 5, end: 12, tier: "downweighted", weight: 800 });
        expect(tierAt(sel, 7)).toBe("downweighted");
        expect(sel[0]).toEqual(
            { start: 0, end: 9, tier: "downweighted", weight: 100 });
        expect(sel[1]).toEqual(
            { start: 10, end: 12, tier: "downweighted", weight: 800 });
    });

    it("adjacent equal-style ranges coalesce", () => {
        let sel = markRange([], { start: 0, end: 4, tier: "removed" });
        sel = markRange(sel, { start: 5, end: 8, tier: "removed" });
        expect(sel).toEqual([{ start: 0, end: 8, tier: "removed" }]);
    });

    it("rejects inverted ranges", () => {
        expect(() => markRange([], { start: 5, end: 2, tier: "removed" }))
            .toThrow();
    });
});

describe("serialization", () => {
    it("empty selections give a valid file with only the header", () => {
        const text = serializeOverrides([]);
        expect(text).toBe("# start,end,tier[,weight]\n");
        expect(parseOverrides(text)).toEqual([]);
    });

    it("round-trips bit-exactly", () => {
        const sel: Selection[] = [
            { start: 2, end: 4, tier: "downweighted", weight: 250.0 },
            { start: 6, end: 6, tier: "removed" },
            { start: 8, end: 9, tier: "downweighted", weight: 333.25 },
        ];
        const text = serializeOverrides(sel);
        const back = parseOverrides(text);
        expect(serializeOverrides(back)).toBe(text);
        expect(normalize(back)).toEqual(normalize(sel));
    });

    it("re-serializes the server-written fixture byte-identically", () => {
        const parsed = parseOverrides(FIXTURE);
        expect(parsed).toHaveLength(3);
        expect(serializeOverrides(parsed)).toBe(FIXTURE);
    });

    it("rejects malformed lines with their number", () => {
        expect(() => parseOverrides("1,2,bogus\n")).toThrow(/line 1/);
        expect(() => parseOverrides("ok\n")).toThrow(/line 1/);
        expect(() => parseOverrides("1,2,downweighted,-4\n"))
            .toThrow(/weight/);
    });
});

describe("selection invariants (property)", () => {
    it("random mark/unmark sequences stay canonical and frame-consistent",
        () => {
            const tiers: Tier[] = ["downweighted", "removed"];
            for (let trial = 0; trial < 50; trial++) {
                const rand = lcg(1000 + trial);
                let sel: Selection[] = [];
                // brute-force per-frame model of the same edits
                const frames = new Map<number, Selection>();
                for (let edit = 0; edit < 30; edit++) {
                    const a = Math.floor(rand() * 60);
                    const b = a + Math.floor(rand() * 10);
                    if (rand() < 0.25) {
                        sel = unmarkRange(sel, a, b);
                        for (let f = a; f <= b; f++) {
                            frames.delete(f);
                        }
                        continue;
                    }
                    const mark: Selection = {
                        start: a, end: b,
                        tier: tiers[Math.floor(rand() * 2)]!,
                    };
                    if (mark.tier === "downweighted" && rand() < 0.5) {
                        mark.weight = 100 + Math.floor(rand() * 900);
                    }
                    sel = markRange(sel, mark);
                    for (let f = a; f <= b; f++) {
                        const cur = frames.get(f);
                        if (!cur || !atLeastAsStrong(cur, mark)) {
                            frames.set(f, mark);
                        }
                    }
                }
                // canonical: sorted, non-overlapping
                for (let k = 1; k < sel.length; k++) {
                    expect(sel[k]!.start).toBeGreaterThan(sel[k - 1]!.end);
                }
                // per-frame agreement with the brute-force model
                for (let f = 0; f < 75; f++) {
                    const want = frames.get(f);
                    expect(tierAt(sel, f)).toBe(want ? want.tier : "default");
                }
                // serialization round trip at every state
                expect(parseOverrides(serializeOverrides(sel)))
                    .toEqual(sel);
            }
        });
});
