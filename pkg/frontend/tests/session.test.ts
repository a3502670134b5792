import { readFileSync } from "node:fs";
import { afterEach, describe, expect, it, vi } from "vitest";

import { parseOverrides } from "../src/overrides.js";
import { UiSession } from "../src/session.js";
import { OverlayBundle } from "../src/types.js";

const bundleText = readFileSync(
    new URL("./fixtures/ten_frame_bundle.json", import.meta.url), "utf8");
const bundle: OverlayBundle = JSON.parse(bundleText);

function mockServer(opts: { failPut?: boolean } = {}) {
    const puts: { url: string; body: string }[] = [];
    const fetchMock = vi.fn(async (url: string | URL, init?: RequestInit) => {
        const path = String(url);
        if (init?.method === "PUT") {
            if (opts.failPut) {
                return new Response("{\"error\": \"disk full\"}",
                    { status: 500 });
            }
            puts.push({ url: path, body: String(init.body) });
            return new Response("{\"ok\": true}", { status: 200 });
        }
        if (path.endsWith("/bundle/seq0")) {
            return new Response(bundleText, { status: 200 });
        }
        return new Response("{\"error\": \"nope\"}", { status: 404 });
    });
    vi.stubGlobal("fetch", fetchMock);
    return { puts, fetchMock };
}

afterEach(() => {
    vi.unstubAllGlobals();
});

describe("UiSession.load", () => {
    it("exposes one timeline tick per bundle frame", async () => {
        mockServer();
        const session = await UiSession.load("http://x", "seq0");
        expect(session.frameCount()).toBe(10);
        expect(session.firstFrame()).toBe(0);
        expect(session.lastFrame()).toBe(9);
        expect(session.enabledVariants).toEqual(
            new Set(Object.keys(bundle.variants)));
    });

    it("missing sequence surfaces an error", async () => {
        mockServer();
        await expect(UiSession.load("http://x", "ghost")).rejects.toThrow(
            /no overlay bundle/);
    });
});

describe("scrubbing", () => {
    it("clamps and steps with the shift multiplier", async () => {
        mockServer();
        const s = await UiSession.load("http://x", "seq0");
        s.setFrame(500);
        expect(s.currentFrame).toBe(9);
        s.setFrame(-3);
        expect(s.currentFrame).toBe(0);
        s.step(1);
        expect(s.currentFrame).toBe(1);
        s.step(1, true);
        expect(s.currentFrame).toBe(9); // clamped 1 + 10
        s.step(-1, true);
        expect(s.currentFrame).toBe(0);
    });

    it("toggles only known variants", async () => {
        mockServer();
        const s = await UiSession.load("http://x", "seq0");
        s.toggleVariant("raw");
        expect(s.enabledVariants.has("raw")).toBe(false);
        s.toggleVariant("raw");
        expect(s.enabledVariants.has("raw")).toBe(true);
        s.toggleVariant("made-up");
        expect(s.enabledVariants.has("made-up")).toBe(false);
    });
});

describe("marking and saving", () => {
    it("rejects ranges outside the sequence", async () => {
        mockServer();
        const s = await UiSession.load("http://x", "seq0");
        expect(() => s.markRange(5, 25, "removed")).toThrow(/outside/);
        expect(s.dirty).toBe(false);
    });

    it("a successful save clears the dirty flag and writes the format",
        async () => {
            const { puts } = mockServer();
            const s = await UiSession.load("http://x", "seq0");
            s.markRange(2, 4, "downweighted", 250.0);
            s.markRange(7, 8, "removed");
            expect(s.dirty).toBe(true);
            expect(await s.saveOverrides()).toBe(true);
            expect(s.dirty).toBe(false);
            expect(puts).toHaveLength(1);
            expect(puts[0]!.url).toBe("http://x/overrides/seq0");
            const back = parseOverrides(puts[0]!.body);
            expect(back).toEqual(s.selections);
        });

    it("round-trips selections through the file format exactly",
        async () => {
            mockServer();
            const s = await UiSession.load("http://x", "seq0");
            s.markRange(1, 3, "downweighted");
            s.markRange(2, 5, "removed");
            s.unmarkRange(5, 5);
            const text = s.serialized();
            expect(parseOverrides(text)).toEqual(s.selections);
        });

    it("a failed save keeps selections and the dirty flag", async () => {
        mockServer({ failPut: true });
        const s = await UiSession.load("http://x", "seq0");
        s.markRange(0, 2, "removed");
        const before = JSON.parse(JSON.stringify(s.selections));
        expect(await s.saveOverrides()).toBe(false);
        expect(s.dirty).toBe(true);
        expect(s.selections).toEqual(before);
        expect(s.lastError).toMatch(/500/);
    });

    it("empty selections save a valid empty override file", async () => {
        const { puts } = mockServer();
        const s = await UiSession.load("http://x", "seq0");
        expect(await s.saveOverrides()).toBe(true);
        expect(puts[0]!.body).toBe("# start,end,tier[,weight]\n");
    });

    it("allows at most one in-flight save", async () => {
        const { fetchMock } = mockServer();
        const s = await UiSession.load("http://x", "seq0");
        const callsBefore = fetchMock.mock.calls.length;
        const first = s.saveOverrides();
        const second = s.saveOverrides(); // rejected locally
        expect(await second).toBe(false);
        expect(await first).toBe(true);
        expect(fetchMock.mock.calls.length).toBe(callsBefore + 1);
    });
});
