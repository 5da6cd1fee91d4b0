/** Offline embedding cache, keyed by (image_id, backbone). */
import * as fs from "node:fs";
import * as path from "node:path";

import { computeEmbedding } from "./encoder.js";
import { readPng } from "./image.js";
import { BACKBONES, BackboneName, ManifestEntry } from "./types.js";

function cacheFile(cacheDir: string, backbone: BackboneName, imageId: string): string {
    return path.join(cacheDir, backbone, `${imageId}.json`);
}

export interface PrecomputeStats {
    computed: number;
    hits: number;
}

export function precomputeEmbeddings(
    entries: ManifestEntry[],
    cacheDir: string,
    backbone: BackboneName,
    inputSize = 1024,
): PrecomputeStats {
    const spec = BACKBONES[backbone];
    fs.mkdirSync(path.join(cacheDir, backbone), { recursive: true });
    const stats: PrecomputeStats = { computed: 0, hits: 0 };
    for (const entry of entries) {
        const file = cacheFile(cacheDir, backbone, entry.image_id);
        if (fs.existsSync(file)) {
            stats.hits += 1;
            continue;
        }
        const embedding = computeEmbedding(readPng(entry.image_path), spec, inputSize);
        const payload = {
            image_id: entry.image_id,
            backbone,
            grid_size: spec.gridSize,
            feature_dim: spec.featureDim,
            input_size: inputSize,
            embedding: Buffer.from(embedding.buffer).toString("base64"),
        };
        fs.writeFileSync(file, JSON.stringify(payload) + "\n");
        stats.computed += 1;
    }
    return stats;
}

export interface CachedEmbedding {
    imageId: string;
    backbone: BackboneName;
    gridSize: number;
    featureDim: number;
    data: Float64Array;
}

export function loadEmbedding(
    cacheDir: string,
    backbone: BackboneName,
    imageId: string,
): CachedEmbedding {
    const file = cacheFile(cacheDir, backbone, imageId);
    if (!fs.existsSync(file)) {
        throw new Error(`embedding cache miss for ${imageId} (${backbone}); run precompute-embeddings`);
    }
    const payload = JSON.parse(fs.readFileSync(file, "utf-8"));
    const buffer = Buffer.from(payload.embedding, "base64");
    const data = new Float64Array(buffer.buffer, buffer.byteOffset, buffer.byteLength / 8);
    const spec = BACKBONES[backbone];
    if (payload.grid_size !== spec.gridSize || payload.feature_dim !== spec.featureDim) {
        throw new Error(`cached embedding for ${imageId} does not match ${backbone} spec`);
    }
    return {
        imageId,
        backbone,
        gridSize: payload.grid_size,
        featureDim: payload.feature_dim,
        data: new Float64Array(data),
    };
}
