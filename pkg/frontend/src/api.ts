/** HTTP client for the review server endpoints. */

import { OverlayBundle } from "./types.js";

export class ApiError extends Error {
    constructor(message: string, readonly status?: number) {
        super(message);
    }
}

export async function fetchSequences(base: string): Promise<string[]> {
    const resp = await fetch(`${base}/sequences`);
    if (!resp.ok) {
        throw new ApiError(`listing sequences failed (${resp.status})`,
            resp.status);
    }
    return (await resp.json()) as string[];
}

export async function fetchBundle(
    base: string,
    sequence: string,
): Promise<OverlayBundle> {
    const resp = await fetch(`${base}/bundle/${sequence}`);
    if (!resp.ok) {
        throw new ApiError(`no overlay bundle for ${sequence}`, resp.status);
    }
    return (await resp.json()) as OverlayBundle;
}

export function frameUrl(
    base: string,
    sequence: string,
    frame: number,
): string {
    return `${base}/frame/${sequence}/${frame}`;
}

export async function putOverrides(
    base: string,
    sequence: string,
    body: string,
): Promise<void> {
    const resp = await fetch(`${base}/overrides/${sequence}`, {
        method: "PUT",
        headers: { "Content-Type": "text/plain" },
        body,
    });
    if (!resp.ok) {
        throw new ApiError(`saving overrides failed (${resp.status})`,
            resp.status);
    }
}
