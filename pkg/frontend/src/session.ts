/** Review session state: one loaded sequence, scrub position, variant
 * toggles, pending override selections, save lifecycle.
 *
 * Optimistic local state: selections always reflect the last edit; a
 * successful save clears the dirty flag, a failed one keeps everything.
 * At most one save is in flight at a time.
 */

import { fetchBundle, putOverrides } from "./api.js";
import { markRange, serializeOverrides, unmarkRange } from "./overrides.js";
import { OverlayBundle, Selection, Tier } from "./types.js";

export class UiSession {
    readonly bundle: OverlayBundle;
    readonly sequence: string;
    currentFrame: number;
    enabledVariants: Set<string>;
    selections: Selection[] = [];
    dirty = false;
    saving = false;
    lastError: string | null = null;

    private constructor(sequence: string, bundle: OverlayBundle,
                        private readonly base: string) {
        this.sequence = sequence;
        this.bundle = bundle;
        this.currentFrame = bundle.frame_indices[0] ?? 0;
        this.enabledVariants = new Set(Object.keys(bundle.variants));
    }

    static async load(base: string, sequence: string): Promise<UiSession> {
        const bundle = await fetchBundle(base, sequence);
        return new UiSession(sequence, bundle, base);
    }

    frameCount(): number {
        return this.bundle.frame_indices.length;
    }

    firstFrame(): number {
        return this.bundle.frame_indices[0] ?? 0;
    }

    lastFrame(): number {
        const ids = this.bundle.frame_indices;
        return ids[ids.length - 1] ?? 0;
    }

    setFrame(frame: number): void {
        this.currentFrame = Math.min(Math.max(frame, this.firstFrame()),
            this.lastFrame());
    }

    /** Keyboard scrubbing step; shift multiplies by 10. */
    step(direction: 1 | -1, shift = false): void {
        this.setFrame(this.currentFrame + direction * (shift ? 10 : 1));
    }

    toggleVariant(name: string): void {
        if (this.enabledVariants.has(name)) {
            this.enabledVariants.delete(name);
        } else if (name in this.bundle.variants) {
            this.enabledVariants.add(name);
        }
    }

    markRange(start: number, end: number, tier: Tier, weight?: number): void {
        if (start < this.firstFrame() || end > this.lastFrame()) {
            throw new Error(
                `range [${start}, ${end}] outside the loaded sequence`);
        }
        const mark: Selection = { start, end, tier };
        if (weight !== undefined) {
            mark.weight = weight;
        }
        this.selections = markRange(this.selections, mark);
        this.dirty = true;
    }

    unmarkRange(start: number, end: number): void {
        this.selections = unmarkRange(this.selections, start, end);
        this.dirty = true;
    }

    serialized(): string {
        return serializeOverrides(this.selections);
    }

    async saveOverrides(): Promise<boolean> {
        if (this.saving) {
            return false;
        }
        this.saving = true;
        this.lastError = null;
        try {
            await putOverrides(this.base, this.sequence, this.serialized());
            this.dirty = false;
            return true;
        } catch (err) {
            this.lastError = err instanceof Error ? err.message : String(err);
            return false;  // selections stay untouched
        } finally {
            this.saving = false;
        }
    }
}
