/** Protocol-facing inference: tasks JSONL in, result directories out. */

import { computeEmbedding } from "./encoder.js";
import { probsToMask, readPng } from "./image.js";
import { candidatesForTask, Checkpoint, initCheckpoint, loadCheckpoint } from "./model.js";
import { parseTasks, writeResult } from "./protocol.js";
import { BACKBONES, BackboneName } from "./types.js";

export interface PredictOptions {
    checkpointPath?: string;
    backbone: BackboneName;
    /** Inference is deterministic by construction; the flag is accepted for
     * interface compatibility. */
    deterministic?: boolean;
}

export function resolveCheckpoint(options: PredictOptions): Checkpoint {
    if (options.checkpointPath) {
        const checkpoint = loadCheckpoint(options.checkpointPath);
        if (checkpoint.backbone !== options.backbone) {
            throw new Error(
                `checkpoint is for ${checkpoint.backbone}, requested ${options.backbone}`,
            );
        }
        return checkpoint;
    }
    return initCheckpoint(options.backbone);
}

export function runPredict(tasksPath: string, outDir: string, options: PredictOptions): number {
    const checkpoint = resolveCheckpoint(options);
    const spec = BACKBONES[checkpoint.backbone];
    const tasks = parseTasks(tasksPath);
    for (const task of tasks) {
        const image = readPng(task.image_path);
        const embedding = computeEmbedding(image, spec, checkpoint.inputSize);
        const candidates = candidatesForTask(
            checkpoint, embedding, task.prompt ?? null, image.width, image.height,
        );
        const masks = candidates.map((c) =>
            probsToMask(c.probs, spec.gridSize, image.width, image.height),
        );
        writeResult(outDir, task.image_id, masks, candidates.map((c) => c.score));
    }
    return tasks.length;
}
