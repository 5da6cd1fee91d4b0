/** Embedding cache behavior and the fine-tuning loop's contract. */
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { afterAll, describe, expect, it } from "vitest";

import { loadEmbedding, precomputeEmbeddings } from "../src/embeddings.js";
import { encoderChecksum, encoderWeights } from "../src/encoder.js";
import { finetune, FinetuneDivergence } from "../src/finetune.js";
import { initCheckpoint } from "../src/model.js";
import { BACKBONES, DEFAULT_FINETUNE } from "../src/types.js";
import { buildFixture } from "./helpers.js";

const workDir = fs.mkdtempSync(path.join(os.tmpdir(), "adapter-finetune-"));
afterAll(() => fs.rmSync(workDir, { recursive: true, force: true }));

const fixture = buildFixture(path.join(workDir, "data"), 6, 96, 88, 33);
const cacheDir = path.join(workDir, "cache");
const ids = fixture.entries.map((e) => e.image_id);

describe("embedding cache", () => {
    it("computes one entry per image, then hits on rerun", () => {
        const first = precomputeEmbeddings(fixture.entries, cacheDir, "vit_b");
        expect(first).toEqual({ computed: 6, hits: 0 });
        const second = precomputeEmbeddings(fixture.entries, cacheDir, "vit_b");
        expect(second).toEqual({ computed: 0, hits: 6 });
    });

    it("cached embeddings match the backbone spec shape", () => {
        const spec = BACKBONES.vit_b;
        const embedding = loadEmbedding(cacheDir, "vit_b", ids[0]);
        expect(embedding.data.length).toBe(spec.gridSize * spec.gridSize * spec.featureDim);
        expect(embedding.featureDim).toBe(spec.featureDim);
    });

    it("misses raise a clear error", () => {
        expect(() => loadEmbedding(cacheDir, "vit_l", ids[0])).toThrow(/cache miss/);
    });
});

describe("fine-tuning", () => {
    it("overfits a 4-image subset: combined loss drops at least 90%", () => {
        precomputeEmbeddings(fixture.entries, cacheDir, "vit_b");
        const checkpoint = initCheckpoint("vit_b");
        const sumBefore = encoderChecksum(BACKBONES.vit_b);
        const weightsBefore = Float64Array.from(encoderWeights(BACKBONES.vit_b));
        const log = finetune(fixture.entries, ids.slice(0, 4), [], cacheDir, checkpoint, {
            ...DEFAULT_FINETUNE,
            learningRate: 0.15,
            epochs: 100,
        });
        const first = log.epochs[0].train_loss;
        const last = log.epochs[log.epochs.length - 1].train_loss;
        expect(log.epochs).toHaveLength(100);
        expect(last).toBeLessThanOrEqual(first * 0.1);
        // encoder stayed frozen, bit for bit
        expect(encoderChecksum(BACKBONES.vit_b)).toBe(sumBefore);
        expect(checkpoint.encoderChecksum).toBe(sumBefore);
        expect(Float64Array.from(encoderWeights(BACKBONES.vit_b))).toEqual(weightsBefore);
    });

    it("plateau with patience 0 stops at the first non-improving epoch", () => {
        precomputeEmbeddings(fixture.entries, cacheDir, "vit_b");
        const checkpoint = initCheckpoint("vit_b");
        const log = finetune(
            fixture.entries, ids.slice(0, 4), ids.slice(4, 6), cacheDir, checkpoint,
            {
                ...DEFAULT_FINETUNE,
                learningRate: 1e-12, // no visible progress; dice is flat from epoch 2
                epochs: 50,
                patienceEpochs: 0,
            },
        );
        expect(log.stop_reason).toBe("plateau");
        expect(log.epochs).toHaveLength(2);
        expect(log.epochs.every((e) => e.val_dice !== null)).toBe(true);
    });

    it("aborts with a diverged log when the loss goes non-finite", () => {
        precomputeEmbeddings(fixture.entries, cacheDir, "vit_b");
        const checkpoint = initCheckpoint("vit_b");
        checkpoint.heads[0].w[0] = Number.NaN;
        checkpoint.heads[1].w[0] = Number.NaN;
        checkpoint.heads[2].w[0] = Number.NaN;
        let caught: FinetuneDivergence | null = null;
        try {
            finetune(fixture.entries, ids.slice(0, 4), [], cacheDir, checkpoint, {
                ...DEFAULT_FINETUNE,
                epochs: 10,
            });
        } catch (err) {
            if (err instanceof FinetuneDivergence) caught = err;
            else throw err;
        }
        expect(caught).not.toBeNull();
        expect(caught!.log.stop_reason).toBe("diverged");
    });

    it("requires the embedding cache to be complete for the training split", () => {
        const checkpoint = initCheckpoint("vit_l");
        expect(() =>
            finetune(fixture.entries, ids.slice(0, 2), [], cacheDir, checkpoint, {
                ...DEFAULT_FINETUNE,
                epochs: 1,
            }),
        ).toThrow(/cache miss/);
    });
});
