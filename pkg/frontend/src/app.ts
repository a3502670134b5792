/** DOM wiring for the review tool. All decisions live in the pure
 * modules; this file only moves values between them and the page.
 */

import { fetchSequences, frameUrl } from "./api.js";
import { peakFrames, jitterSeries, plotPoints } from "./jitter.js";
import { drawScene, overlayScene, variantColor } from "./overlay.js";
import { tierAt } from "./overrides.js";
import { UiSession } from "./session.js";
import { Tier } from "./types.js";

const SCALE = 3;

function el<T extends HTMLElement>(id: string): T {
    const node = document.getElementById(id);
    if (!node) {
        throw new Error(`missing element #${id}`);
    }
    return node as T;
}

class App {
    private session: UiSession | null = null;
    private base = `${location.protocol}//${location.hostname}:8731`;

    private readonly seqSelect = el<HTMLSelectElement>("sequence");
    private readonly frameImage = el<HTMLImageElement>("frame-image");
    private readonly overlayCanvas = el<HTMLCanvasElement>("overlay");
    private readonly jitterCanvas = el<HTMLCanvasElement>("jitter-plot");
    private readonly timeline = el<HTMLInputElement>("timeline");
    private readonly tierStrip = el<HTMLCanvasElement>("tier-strip");
    private readonly frameLabel = el<HTMLSpanElement>("frame-label");
    private readonly variantBox = el<HTMLDivElement>("variants");
    private readonly jitterVariant = el<HTMLSelectElement>("jitter-variant");
    private readonly markStart = el<HTMLInputElement>("mark-start");
    private readonly markEnd = el<HTMLInputElement>("mark-end");
    private readonly markTier = el<HTMLSelectElement>("mark-tier");
    private readonly markWeight = el<HTMLInputElement>("mark-weight");
    private readonly selectionList = el<HTMLUListElement>("selections");
    private readonly status = el<HTMLSpanElement>("status");

    async start(): Promise<void> {
        try {
            const seqs = await fetchSequences(this.base);
            for (const seq of seqs) {
                const opt = document.createElement("option");
                opt.value = seq;
                opt.textContent = seq;
                this.seqSelect.appendChild(opt);
            }
            if (seqs.length) {
                await this.loadSequence(seqs[0]!);
            } else {
                this.setStatus("no sequences on the server", true);
            }
        } catch (err) {
            this.setStatus(String(err), true);
        }

        this.seqSelect.addEventListener("change", () => {
            void this.loadSequence(this.seqSelect.value);
        });
        this.timeline.addEventListener("input", () => {
            this.session?.setFrame(Number(this.timeline.value));
            this.render();
        });
        document.addEventListener("keydown", (ev) => {
            if (ev.target instanceof HTMLInputElement) {
                return;
            }
            if (ev.key === "ArrowRight" || ev.key === "ArrowLeft") {
                this.session?.step(ev.key === "ArrowRight" ? 1 : -1,
                    ev.shiftKey);
                this.render();
                ev.preventDefault();
            }
        });
        el<HTMLButtonElement>("mark-here-start").addEventListener(
            "click", () => {
                this.markStart.value = String(this.session?.currentFrame ?? 0);
            });
        el<HTMLButtonElement>("mark-here-end").addEventListener(
            "click", () => {
                this.markEnd.value = String(this.session?.currentFrame ?? 0);
            });
        el<HTMLButtonElement>("mark").addEventListener("click", () => {
            this.withSession((s) => {
                const weight = this.markWeight.value
                    ? Number(this.markWeight.value) : undefined;
                s.markRange(Number(this.markStart.value),
                    Number(this.markEnd.value),
                    this.markTier.value as Tier, weight);
            });
        });
        el<HTMLButtonElement>("unmark").addEventListener("click", () => {
            this.withSession((s) => s.unmarkRange(
                Number(this.markStart.value), Number(this.markEnd.value)));
        });
        el<HTMLButtonElement>("save").addEventListener("click", () => {
            void this.save();
        });
        this.jitterVariant.addEventListener("change", () => this.render());
    }

    private withSession(fn: (s: UiSession) => void): void {
        if (!this.session) {
            return;
        }
        try {
            fn(this.session);
            this.setStatus(this.session.dirty ? "unsaved changes" : "");
        } catch (err) {
            this.setStatus(String(err), true);
        }
        this.render();
    }

    private async save(): Promise<void> {
        if (!this.session) {
            return;
        }
        const ok = await this.session.saveOverrides();
        this.setStatus(ok ? "overrides saved"
            : `save failed: ${this.session.lastError}`, !ok);
        this.render();
    }

    private async loadSequence(seq: string): Promise<void> {
        try {
            this.session = await UiSession.load(this.base, seq);
            const bundle = this.session.bundle;
            this.timeline.min = String(this.session.firstFrame());
            this.timeline.max = String(this.session.lastFrame());
            this.overlayCanvas.width = bundle.width * SCALE;
            this.overlayCanvas.height = bundle.height * SCALE;
            this.frameImage.width = bundle.width * SCALE;
            this.frameImage.height = bundle.height * SCALE;
            this.variantBox.textContent = "";
            this.jitterVariant.textContent = "";
            for (const name of Object.keys(bundle.variants).sort()) {
                const label = document.createElement("label");
                const check = document.createElement("input");
                check.type = "checkbox";
                check.checked = true;
                check.addEventListener("change", () => {
                    this.session?.toggleVariant(name);
                    this.render();
                });
                label.appendChild(check);
                label.append(` ${name}`);
                label.style.color = variantColor(name);
                this.variantBox.appendChild(label);
                const opt = document.createElement("option");
                opt.value = name;
                opt.textContent = name;
                this.jitterVariant.appendChild(opt);
            }
            this.setStatus(`loaded ${seq}`);
            this.render();
        } catch (err) {
            this.session = null;
            this.setStatus(`cannot load ${seq}: ${String(err)}`, true);
        }
    }

    private setStatus(text: string, isError = false): void {
        this.status.textContent = text;
        this.status.className = isError ? "error" : "";
    }

    private render(): void {
        const s = this.session;
        if (!s) {
            return;
        }
        this.timeline.value = String(s.currentFrame);
        this.frameLabel.textContent =
            `frame ${s.currentFrame} / ${s.lastFrame()}`
            + (s.dirty ? " *" : "");
        this.frameImage.src = frameUrl(this.base, s.sequence, s.currentFrame);

        const ctx = this.overlayCanvas.getContext("2d")!;
        drawScene(ctx, overlayScene(s.bundle, s.currentFrame,
            s.enabledVariants), SCALE);

        this.renderTierStrip();
        this.renderJitter();
        this.renderSelections();
    }

    private renderTierStrip(): void {
        const s = this.session!;
        const ctx = this.tierStrip.getContext("2d")!;
        const w = this.tierStrip.width;
        const n = s.frameCount();
        ctx.clearRect(0, 0, w, this.tierStrip.height);
        const colors: Record<string, string> = {
            default: "#2a4", downweighted: "#ca2", removed: "#c33",
        };
        s.bundle.frame_indices.forEach((frame, k) => {
            ctx.fillStyle = colors[tierAt(s.selections, frame)]!;
            ctx.fillRect((k / n) * w, 0, w / n + 1, this.tierStrip.height);
        });
    }

    private renderJitter(): void {
        const s = this.session!;
        const variant = this.jitterVariant.value
            || Object.keys(s.bundle.variants)[0]!;
        const ctx = this.jitterCanvas.getContext("2d")!;
        const w = this.jitterCanvas.width;
        const h = this.jitterCanvas.height;
        ctx.clearRect(0, 0, w, h);
        const series = jitterSeries(s.bundle, variant);
        const points = plotPoints(series, w, h - 4);
        ctx.strokeStyle = variantColor(variant);
        ctx.beginPath();
        points.forEach(([x, y], k) => {
            if (k === 0) {
                ctx.moveTo(x, y + 2);
            } else {
                ctx.lineTo(x, y + 2);
            }
        });
        ctx.stroke();
        const peaks = new Set(peakFrames(s.bundle, variant));
        ctx.fillStyle = "#c33";
        s.bundle.frame_indices.forEach((frame, k) => {
            if (peaks.has(frame)) {
                const [x, y] = points[k]!;
                ctx.beginPath();
                ctx.arc(x, y + 2, 3, 0, 2 * Math.PI);
                ctx.fill();
            }
        });
        // playhead
        const at = s.bundle.frame_indices.indexOf(s.currentFrame);
        if (at >= 0 && series.length > 1) {
            ctx.strokeStyle = "#888";
            ctx.beginPath();
            const x = (at / (series.length - 1)) * w;
            ctx.moveTo(x, 0);
            ctx.lineTo(x, h);
            ctx.stroke();
        }
    }

    private renderSelections(): void {
        const s = this.session!;
        this.selectionList.textContent = "";
        for (const sel of s.selections) {
            const item = document.createElement("li");
            const weight = sel.weight !== undefined ? ` w=${sel.weight}` : "";
            item.textContent =
                `[${sel.start}, ${sel.end}] ${sel.tier}${weight}`;
            this.selectionList.appendChild(item);
        }
    }
}

new App().start();
