/** Promptable mask decoder over frozen patch embeddings.
 *
 * Checkpoints hold only the trainable parts: three decoder heads (linear over
 * [embedding | prompt features] through a sigmoid) and two prompt-feature
 * gains. The frozen encoder is reconstructed from the backbone name and
 * cross-checked via its checksum.
 */
import * as fs from "node:fs";
import * as path from "node:path";

import { encoderChecksum } from "./encoder.js";
import { seededRng } from "./rng.js";
import { BACKBONES, BackboneName, BackboneSpec, TaskPrompt } from "./types.js";

export const HEAD_COUNT = 3;
export const PROMPT_DIM = 2; // inside-box indicator, point proximity bump

export interface DecoderHead {
    w: Float64Array; // featureDim + PROMPT_DIM
    b: number;
}

export interface Checkpoint {
    formatVersion: 1;
    backbone: BackboneName;
    inputSize: number;
    encoderChecksum: string;
    promptGains: { box: number; point: number };
    heads: DecoderHead[];
}

export function initCheckpoint(backbone: BackboneName, inputSize = 1024, seed = 0): Checkpoint {
    const spec = BACKBONES[backbone];
    const heads: DecoderHead[] = [];
    for (let h = 0; h < HEAD_COUNT; h++) {
        const rng = seededRng(`decoder:${backbone}:${seed}:${h}`);
        const w = new Float64Array(spec.featureDim + PROMPT_DIM);
        for (let i = 0; i < w.length; i++) {
            w[i] = (rng() * 2 - 1) * 0.01;
        }
        heads.push({ w, b: 0 });
    }
    return {
        formatVersion: 1,
        backbone,
        inputSize,
        encoderChecksum: encoderChecksum(spec),
        promptGains: { box: 1.0, point: 1.0 },
        heads,
    };
}

export function saveCheckpoint(checkpoint: Checkpoint, file: string): void {
    fs.mkdirSync(path.dirname(file), { recursive: true });
    const payload = {
        format_version: checkpoint.formatVersion,
        backbone: checkpoint.backbone,
        input_size: checkpoint.inputSize,
        encoder_checksum: checkpoint.encoderChecksum,
        prompt_gains: checkpoint.promptGains,
        heads: checkpoint.heads.map((h) => ({ w: Array.from(h.w), b: h.b })),
    };
    fs.writeFileSync(file, JSON.stringify(payload, null, 2) + "\n");
}

export function loadCheckpoint(file: string): Checkpoint {
    const payload = JSON.parse(fs.readFileSync(file, "utf-8"));
    const backbone = payload.backbone as BackboneName;
    if (!(backbone in BACKBONES)) {
        throw new Error(`checkpoint names unknown backbone ${payload.backbone}`);
    }
    const expected = encoderChecksum(BACKBONES[backbone]);
    if (payload.encoder_checksum !== expected) {
        throw new Error("checkpoint encoder checksum does not match this backbone");
    }
    return {
        formatVersion: payload.format_version,
        backbone,
        inputSize: payload.input_size,
        encoderChecksum: payload.encoder_checksum,
        promptGains: payload.prompt_gains,
        heads: payload.heads.map((h: { w: number[]; b: number }) => ({
            w: Float64Array.from(h.w),
            b: h.b,
        })),
    };
}

/**
 * Per-patch prompt features in the image frame. A null prompt gives all-zero
 * features (the promptless arm supplies synthetic grid points instead).
 */
export function promptFeatures(
    prompt: TaskPrompt | null,
    spec: BackboneSpec,
    imageW: number,
    imageH: number,
): Float64Array {
    const grid = spec.gridSize;
    const out = new Float64Array(grid * grid * PROMPT_DIM);
    if (prompt === null) {
        return out;
    }
    const [bx0, by0, bx1, by1] = prompt.box;
    const [px, py] = prompt.point;
    // point bump width: a quarter of the box diagonal, floor of two patches
    const boxDiag = Math.hypot(bx1 - bx0 + 1, by1 - by0 + 1);
    const sigma = Math.max(boxDiag / 4, (2 * Math.max(imageW, imageH)) / grid);
    for (let gy = 0; gy < grid; gy++) {
        const cy = ((gy + 0.5) * imageH) / grid;
        for (let gx = 0; gx < grid; gx++) {
            const cx = ((gx + 0.5) * imageW) / grid;
            const base = (gy * grid + gx) * PROMPT_DIM;
            out[base] = cx >= bx0 && cx <= bx1 && cy >= by0 && cy <= by1 ? 1 : 0;
            const d2 = (cx - px) * (cx - px) + (cy - py) * (cy - py);
            out[base + 1] = Math.exp(-d2 / (2 * sigma * sigma));
        }
    }
    return out;
}

/** Sigmoid head over [embedding | gains * prompt features], per patch. */
export function decoderForward(
    embedding: Float64Array,
    prompts: Float64Array,
    head: DecoderHead,
    gains: { box: number; point: number },
    spec: BackboneSpec,
): Float64Array {
    const patches = spec.gridSize * spec.gridSize;
    const fd = spec.featureDim;
    const probs = new Float64Array(patches);
    for (let p = 0; p < patches; p++) {
        let z = head.b;
        for (let f = 0; f < fd; f++) {
            z += head.w[f] * embedding[p * fd + f];
        }
        z += head.w[fd] * gains.box * prompts[p * PROMPT_DIM];
        z += head.w[fd + 1] * gains.point * prompts[p * PROMPT_DIM + 1];
        probs[p] = 1 / (1 + Math.exp(-z));
    }
    return probs;
}

/** Mean confidence: how far each patch probability sits from 0.5. */
export function candidateScore(probs: Float64Array): number {
    let acc = 0;
    for (let i = 0; i < probs.length; i++) {
        acc += Math.abs(2 * probs[i] - 1);
    }
    return acc / probs.length;
}

/** Synthetic point prompts on a uniform grid, for the promptless arm. */
export function automaticGridPrompts(
    imageW: number,
    imageH: number,
    pointsPerSide = 3,
): TaskPrompt[] {
    const prompts: TaskPrompt[] = [];
    for (let iy = 0; iy < pointsPerSide; iy++) {
        for (let ix = 0; ix < pointsPerSide; ix++) {
            const px = Math.round(((ix + 0.5) * imageW) / pointsPerSide);
            const py = Math.round(((iy + 0.5) * imageH) / pointsPerSide);
            prompts.push({
                point: [px, py],
                point_label: 1,
                // no box information in automatic mode
                box: [0, 0, 0, 0],
            });
        }
    }
    return prompts;
}

export interface Candidate {
    probs: Float64Array;
    score: number;
}

/** Prompted: one candidate per head. Promptless: one per grid point. */
export function candidatesForTask(
    checkpoint: Checkpoint,
    embedding: Float64Array,
    prompt: TaskPrompt | null,
    imageW: number,
    imageH: number,
): Candidate[] {
    const spec = BACKBONES[checkpoint.backbone];
    const candidates: Candidate[] = [];
    if (prompt !== null) {
        const features = promptFeatures(prompt, spec, imageW, imageH);
        for (const head of checkpoint.heads) {
            const probs = decoderForward(embedding, features, head, checkpoint.promptGains, spec);
            candidates.push({ probs, score: candidateScore(probs) });
        }
        return candidates;
    }
    for (const gridPrompt of automaticGridPrompts(imageW, imageH)) {
        const features = promptFeatures(gridPrompt, spec, imageW, imageH);
        // zero out the box channel: automatic mode has no box intent
        for (let i = 0; i < features.length; i += PROMPT_DIM) {
            features[i] = 0;
        }
        const probs = decoderForward(
            embedding, features, checkpoint.heads[0], checkpoint.promptGains, spec,
        );
        candidates.push({ probs, score: candidateScore(probs) });
    }
    return candidates;
}
