/** Fine-tuning driver: frozen encoder, trainable decoder heads, Adam,
 * unweighted dice+CE objective, validation-plateau early stopping.
 *
 * Box prompts are derived from the ground-truth masks (margin-expanded tight
 * bounding box, unperturbed unless augmentation is enabled). Each sample
 * supervises its highest-scoring candidate head.
 */
import * as fs from "node:fs";
import * as path from "node:path";

import { Adam } from "./adam.js";
import { loadEmbedding } from "./embeddings.js";
import { encoderChecksum } from "./encoder.js";
import { gridPoolMask, Mask, maskDice, probsToMask, readMask, tightBbox } from "./image.js";
import { combinedWithGrad } from "./loss.js";
import {
    candidateScore,
    Checkpoint,
    decoderForward,
    PROMPT_DIM,
    promptFeatures,
} from "./model.js";
import { seededRng } from "./rng.js";
import { BACKBONES, FinetuneConfig, ManifestEntry, TaskPrompt } from "./types.js";

const BOX_MARGIN_PX = 20;
const AUGMENT_MAX_SHIFT_PX = 30;
const AUGMENT_MAX_SCALE = 0.1;

export interface EpochLog {
    epoch: number;
    train_loss: number;
    val_dice: number | null;
}

export interface TrainLog {
    epochs: EpochLog[];
    stop_reason: "max_epochs" | "plateau" | "diverged";
    encoder_checksum: string;
    learning_rate: number;
}

interface TrainSample {
    entry: ManifestEntry;
    embedding: Float64Array;
    target: Float64Array; // patch-grid ground truth
    mask: Mask; // full-resolution ground truth
    basePrompt: TaskPrompt;
}

function derivePrompt(entry: ManifestEntry, mask: Mask, usePoint: boolean): TaskPrompt {
    const [x0, y0, x1, y1] = tightBbox(mask);
    const box: [number, number, number, number] = [
        Math.max(0, x0 - BOX_MARGIN_PX),
        Math.max(0, y0 - BOX_MARGIN_PX),
        Math.min(entry.width - 1, x1 + BOX_MARGIN_PX),
        Math.min(entry.height - 1, y1 + BOX_MARGIN_PX),
    ];
    let point: [number, number] = [
        Math.round((box[0] + box[2]) / 2),
        Math.round((box[1] + box[3]) / 2),
    ];
    if (usePoint) {
        // deterministic foreground point per image
        const rng = seededRng(`ft-point:${entry.image_id}`);
        const fg: number[] = [];
        for (let i = 0; i < mask.data.length; i++) {
            if (mask.data[i]) fg.push(i);
        }
        const pick = fg[Math.floor(rng() * fg.length)];
        point = [pick % mask.width, Math.floor(pick / mask.width)];
    }
    return { point, point_label: 1, box };
}

function augmentBox(
    prompt: TaskPrompt,
    rng: () => number,
    width: number,
    height: number,
): TaskPrompt {
    const [x0, y0, x1, y1] = prompt.box;
    const dx = Math.round((rng() * 2 - 1) * AUGMENT_MAX_SHIFT_PX);
    const dy = Math.round((rng() * 2 - 1) * AUGMENT_MAX_SHIFT_PX);
    const factor = 1 + (rng() * 2 - 1) * AUGMENT_MAX_SCALE;
    const cx = (x0 + x1) / 2 + dx;
    const cy = (y0 + y1) / 2 + dy;
    const hw = ((x1 - x0 + 1) * factor) / 2;
    const hh = ((y1 - y0 + 1) * factor) / 2;
    const box: [number, number, number, number] = [
        Math.max(0, Math.round(cx - hw)),
        Math.max(0, Math.round(cy - hh)),
        Math.min(width - 1, Math.round(cx + hw)),
        Math.min(height - 1, Math.round(cy + hh)),
    ];
    return { ...prompt, box };
}

/** Pack trainable parameters into one flat vector for the optimizer. */
function packParams(checkpoint: Checkpoint): Float64Array {
    const headSize = checkpoint.heads[0].w.length + 1;
    const out = new Float64Array(checkpoint.heads.length * headSize + 2);
    checkpoint.heads.forEach((head, h) => {
        out.set(head.w, h * headSize);
        out[h * headSize + head.w.length] = head.b;
    });
    out[out.length - 2] = checkpoint.promptGains.box;
    out[out.length - 1] = checkpoint.promptGains.point;
    return out;
}

function unpackParams(params: Float64Array, checkpoint: Checkpoint): void {
    const headSize = checkpoint.heads[0].w.length + 1;
    checkpoint.heads.forEach((head, h) => {
        head.w.set(params.subarray(h * headSize, h * headSize + head.w.length));
        head.b = params[h * headSize + head.w.length];
    });
    checkpoint.promptGains.box = params[params.length - 2];
    checkpoint.promptGains.point = params[params.length - 1];
}

export function finetune(
    entries: ManifestEntry[],
    trainIds: string[],
    valIds: string[],
    cacheDir: string,
    checkpoint: Checkpoint,
    config: FinetuneConfig,
): TrainLog {
    const spec = BACKBONES[checkpoint.backbone];
    const byId = new Map(entries.map((e) => [e.image_id, e]));

    const load = (imageId: string): TrainSample => {
        const entry = byId.get(imageId);
        if (!entry) throw new Error(`split names unknown image_id ${imageId}`);
        if (entry.empty_mask) throw new Error(`${imageId}: empty mask cannot derive a box prompt`);
        const embedding = loadEmbedding(cacheDir, checkpoint.backbone, imageId).data;
        const mask = readMask(entry.mask_path);
        return {
            entry,
            embedding,
            target: gridPoolMask(mask, spec.gridSize),
            mask,
            basePrompt: derivePrompt(entry, mask, config.usePointPrompt),
        };
    };
    const trainSet = trainIds.map(load);
    const valSet = valIds.map(load);

    const headSize = spec.featureDim + PROMPT_DIM + 1;
    const params = packParams(checkpoint);
    const optimizer = new Adam(params.length, config.learningRate);

    const epochs: EpochLog[] = [];
    let stopReason: TrainLog["stop_reason"] = "max_epochs";
    let bestVal = -Infinity;
    let wait = 0;

    for (let epoch = 1; epoch <= config.epochs; epoch++) {
        const grads = new Float64Array(params.length);
        let totalLoss = 0;
        const epochRng = seededRng(`augment:${config.seed}:${epoch}`);

        for (const sample of trainSet) {
            const { width, height } = sample.entry;
            let prompt = sample.basePrompt;
            if (config.augmentPrompts) {
                prompt = augmentBox(prompt, epochRng, width, height);
            }
            if (!config.usePointPrompt) {
                // box-only fine-tuning: suppress the point channel
                prompt = { ...prompt, point: [-1e6, -1e6] };
            }
            const features = promptFeatures(prompt, spec, width, height);

            // supervise the highest-scoring candidate head (head 0 on ties/NaN)
            const headOutputs = checkpoint.heads.map((head) =>
                decoderForward(sample.embedding, features, head, checkpoint.promptGains, spec),
            );
            let headIdx = 0;
            let headScore = candidateScore(headOutputs[0]);
            for (let h = 1; h < headOutputs.length; h++) {
                const score = candidateScore(headOutputs[h]);
                if (score > headScore) {
                    headScore = score;
                    headIdx = h;
                }
            }
            const probs = headOutputs[headIdx];
            const report = combinedWithGrad(probs, sample.target);
            totalLoss += report.combined;

            const head = checkpoint.heads[headIdx];
            const base = headIdx * headSize;
            for (let p = 0; p < probs.length; p++) {
                const dz = (report.gradient[p] * probs[p] * (1 - probs[p])) / trainSet.length;
                if (dz === 0) continue;
                for (let f = 0; f < spec.featureDim; f++) {
                    grads[base + f] += dz * sample.embedding[p * spec.featureDim + f];
                }
                const boxFeat = features[p * PROMPT_DIM];
                const pointFeat = features[p * PROMPT_DIM + 1];
                grads[base + spec.featureDim] += dz * checkpoint.promptGains.box * boxFeat;
                grads[base + spec.featureDim + 1] += dz * checkpoint.promptGains.point * pointFeat;
                grads[base + spec.featureDim + 2] += dz; // bias
                if (config.trainPromptEncoder) {
                    grads[grads.length - 2] += dz * head.w[spec.featureDim] * boxFeat;
                    grads[grads.length - 1] += dz * head.w[spec.featureDim + 1] * pointFeat;
                }
            }
        }

        const trainLoss = totalLoss / trainSet.length;
        if (!Number.isFinite(trainLoss)) {
            epochs.push({ epoch, train_loss: trainLoss, val_dice: null });
            stopReason = "diverged";
            break;
        }
        optimizer.step(params, grads);
        unpackParams(params, checkpoint);

        let valDice: number | null = null;
        if (valSet.length > 0) {
            let acc = 0;
            for (const sample of valSet) {
                const { width, height } = sample.entry;
                let prompt = sample.basePrompt;
                if (!config.usePointPrompt) {
                    prompt = { ...prompt, point: [-1e6, -1e6] };
                }
                const features = promptFeatures(prompt, spec, width, height);
                const outputs = checkpoint.heads.map((head) =>
                    decoderForward(sample.embedding, features, head, checkpoint.promptGains, spec),
                );
                let best = outputs[0];
                let bestScore = candidateScore(outputs[0]);
                for (let h = 1; h < outputs.length; h++) {
                    const score = candidateScore(outputs[h]);
                    if (score > bestScore) {
                        bestScore = score;
                        best = outputs[h];
                    }
                }
                const predicted = probsToMask(best, spec.gridSize, width, height);
                acc += maskDice(predicted, sample.mask);
            }
            valDice = acc / valSet.length;
        }
        epochs.push({ epoch, train_loss: trainLoss, val_dice: valDice });

        if (valDice !== null) {
            if (valDice > bestVal + config.minDelta) {
                bestVal = valDice;
                wait = 0;
            } else {
                wait += 1;
                if (wait > config.patienceEpochs) {
                    stopReason = "plateau";
                    break;
                }
            }
        }
    }

    const checksum = encoderChecksum(spec);
    if (checksum !== checkpoint.encoderChecksum) {
        throw new Error("encoder changed during fine-tuning; refusing to save");
    }
    const log: TrainLog = {
        epochs,
        stop_reason: stopReason,
        encoder_checksum: checksum,
        learning_rate: config.learningRate,
    };
    if (stopReason === "diverged") {
        throw new FinetuneDivergence(log);
    }
    return log;
}

export class FinetuneDivergence extends Error {
    constructor(public readonly log: TrainLog) {
        super("training loss became non-finite");
    }
}

export function writeTrainLog(log: TrainLog, file: string): void {
    fs.mkdirSync(path.dirname(file), { recursive: true });
    fs.writeFileSync(file, JSON.stringify(log, null, 2) + "\n");
}
