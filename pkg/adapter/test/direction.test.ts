/** Prompt-vs-no-prompt direction: after fine-tuning, prompted inference must
 * beat promptless inference by a wide dice margin on held-out images.
 */
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { afterAll, describe, expect, it } from "vitest";

import { precomputeEmbeddings } from "../src/embeddings.js";
import { finetune } from "../src/finetune.js";
import { Mask, maskDice, readMask } from "../src/image.js";
import { initCheckpoint, saveCheckpoint } from "../src/model.js";
import { runPredict } from "../src/predict.js";
import { DEFAULT_FINETUNE } from "../src/types.js";
import { buildFixture, writeTasks } from "./helpers.js";

const workDir = fs.mkdtempSync(path.join(os.tmpdir(), "adapter-direction-"));
afterAll(() => fs.rmSync(workDir, { recursive: true, force: true }));

function meanDiceOfBest(outDir: string, ids: string[], gts: Map<string, Mask>): number {
    let total = 0;
    for (const imageId of ids) {
        const scores = JSON.parse(
            fs.readFileSync(path.join(outDir, imageId, "scores.json"), "utf-8"),
        ).scores as number[];
        let bestIdx = 0;
        for (let k = 1; k < scores.length; k++) {
            if (scores[k] > scores[bestIdx]) bestIdx = k;
        }
        const mask = readMask(path.join(outDir, imageId, `cand_${bestIdx}.png`));
        total += maskDice(mask, gts.get(imageId)!);
    }
    return total / ids.length;
}

describe("prompt interaction direction", () => {
    it("prompted mean dice exceeds promptless by at least 0.3 on 20+ images", () => {
        const fixture = buildFixture(path.join(workDir, "data"), 40, 128, 112, 55);
        const ids = fixture.entries.map((e) => e.image_id);
        const trainIds = ids.slice(0, 14);
        const valIds = ids.slice(14, 18);
        const evalIds = ids.slice(18); // 22 held-out images

        const cacheDir = path.join(workDir, "cache");
        precomputeEmbeddings(fixture.entries, cacheDir, "vit_b");

        const checkpoint = initCheckpoint("vit_b");
        const log = finetune(fixture.entries, trainIds, valIds, cacheDir, checkpoint, {
            ...DEFAULT_FINETUNE,
            learningRate: 0.05,
            epochs: 250,
            patienceEpochs: 250, // run to completion; this test is about the gap
        });
        expect(log.epochs[log.epochs.length - 1].train_loss).toBeLessThan(
            log.epochs[0].train_loss,
        );
        const checkpointPath = path.join(workDir, "tuned.json");
        saveCheckpoint(checkpoint, checkpointPath);

        const promptedTasks = writeTasks(
            path.join(workDir, "tasks_prompted.jsonl"), fixture, evalIds, true,
        );
        const promptlessTasks = writeTasks(
            path.join(workDir, "tasks_promptless.jsonl"), fixture, evalIds, false,
        );
        const promptedOut = path.join(workDir, "out_prompted");
        const promptlessOut = path.join(workDir, "out_promptless");
        runPredict(promptedTasks, promptedOut, { backbone: "vit_b", checkpointPath });
        runPredict(promptlessTasks, promptlessOut, { backbone: "vit_b", checkpointPath });

        const promptedMean = meanDiceOfBest(promptedOut, evalIds, fixture.masks);
        const promptlessMean = meanDiceOfBest(promptlessOut, evalIds, fixture.masks);
        expect(evalIds.length).toBeGreaterThanOrEqual(20);
        expect(promptedMean).toBeGreaterThan(0.5);
        expect(promptedMean - promptlessMean).toBeGreaterThanOrEqual(0.3);
    }, 180_000);
});
