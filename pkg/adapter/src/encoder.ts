/** Frozen image encoder: patch statistics through a fixed random projection.
 *
 * The projection matrix is derived deterministically from the backbone name,
 * never written to checkpoints, and never updated; its checksum is stored so
 * fine-tuning can prove the encoder stayed frozen.
 */
import { createHash } from "node:crypto";

import { gridPatchStats, RgbImage } from "./image.js";
import { seededRng } from "./rng.js";
import { BackboneSpec } from "./types.js";

const STAT_DIM = 5; // r, g, b, cx, cy

export function encoderWeights(backbone: BackboneSpec): Float64Array {
    const rng = seededRng(`encoder:${backbone.name}:${backbone.featureDim}`);
    const weights = new Float64Array(backbone.featureDim * STAT_DIM);
    const scale = 1.0 / Math.sqrt(STAT_DIM);
    for (let i = 0; i < weights.length; i++) {
        weights[i] = (rng() * 2 - 1) * scale;
    }
    return weights;
}

export function encoderChecksum(backbone: BackboneSpec): string {
    const weights = encoderWeights(backbone);
    return createHash("sha256").update(Buffer.from(weights.buffer)).digest("hex");
}

/** Per-patch embedding: tanh(W . stats), flattened grid-major. */
export function computeEmbedding(
    image: RgbImage,
    backbone: BackboneSpec,
    inputSize: number,
): Float64Array {
    const stats = gridPatchStats(image, inputSize, backbone.gridSize);
    const weights = encoderWeights(backbone);
    const patches = backbone.gridSize * backbone.gridSize;
    const out = new Float64Array(patches * backbone.featureDim);
    for (let p = 0; p < patches; p++) {
        for (let f = 0; f < backbone.featureDim; f++) {
            let acc = 0;
            for (let s = 0; s < STAT_DIM; s++) {
                acc += weights[f * STAT_DIM + s] * stats[p * STAT_DIM + s];
            }
            out[p * backbone.featureDim + f] = Math.tanh(acc);
        }
    }
    return out;
}
