#!/usr/bin/env node
/** Subcommands: predict (wire protocol), precompute-embeddings, finetune,
 * init-checkpoint. `predict --tasks <file> --out <dir>` is the contract the
 * evaluation harness invokes over a subprocess boundary.
 */
import { parseArgs } from "node:util";

import { precomputeEmbeddings } from "./embeddings.js";
import { finetune, FinetuneDivergence, writeTrainLog } from "./finetune.js";
import { initCheckpoint, loadCheckpoint, saveCheckpoint } from "./model.js";
import { readManifest, readSplit } from "./protocol.js";
import { runPredict } from "./predict.js";
import { BACKBONES, BackboneName, DEFAULT_FINETUNE } from "./types.js";

function fail(message: string): never {
    console.error(`error: ${message}`);
    process.exit(1);
}

function requireOption(value: string | undefined, name: string): string {
    if (value === undefined) fail(`missing required option --${name}`);
    return value;
}

function parseBackbone(value: string | undefined): BackboneName {
    const name = value ?? "vit_b";
    if (!(name in BACKBONES)) fail(`unknown backbone ${name}; choose vit_b|vit_l|vit_h`);
    return name as BackboneName;
}

function cmdPredict(argv: string[]): void {
    const { values } = parseArgs({
        args: argv,
        options: {
            tasks: { type: "string" },
            out: { type: "string" },
            checkpoint: { type: "string" },
            backbone: { type: "string" },
            deterministic: { type: "boolean", default: false },
        },
    });
    const n = runPredict(
        requireOption(values.tasks, "tasks"),
        requireOption(values.out, "out"),
        {
            checkpointPath: values.checkpoint,
            backbone: parseBackbone(values.backbone),
            deterministic: values.deterministic,
        },
    );
    console.error(JSON.stringify({ event: "predict", tasks: n }));
}

function cmdPrecompute(argv: string[]): void {
    const { values } = parseArgs({
        args: argv,
        options: {
            manifest: { type: "string" },
            cache: { type: "string" },
            backbone: { type: "string" },
            "input-size": { type: "string", default: "1024" },
        },
    });
    const entries = readManifest(requireOption(values.manifest, "manifest"));
    const stats = precomputeEmbeddings(
        entries,
        requireOption(values.cache, "cache"),
        parseBackbone(values.backbone),
        Number(values["input-size"]),
    );
    console.error(JSON.stringify({ event: "precompute", ...stats }));
}

function cmdFinetune(argv: string[]): void {
    const { values } = parseArgs({
        args: argv,
        options: {
            manifest: { type: "string" },
            split: { type: "string" },
            cache: { type: "string" },
            checkpoint: { type: "string" },
            backbone: { type: "string" },
            "out-checkpoint": { type: "string" },
            log: { type: "string" },
            lr: { type: "string" },
            epochs: { type: "string" },
            patience: { type: "string" },
            "min-delta": { type: "string" },
            "train-prompt-encoder": { type: "boolean", default: false },
            "augment-prompts": { type: "boolean", default: false },
            "use-point-prompt": { type: "boolean", default: false },
            seed: { type: "string", default: "0" },
        },
    });
    const entries = readManifest(requireOption(values.manifest, "manifest"));
    const split = readSplit(requireOption(values.split, "split"));
    const outCheckpoint = requireOption(values["out-checkpoint"], "out-checkpoint");
    const checkpoint = values.checkpoint
        ? loadCheckpoint(values.checkpoint)
        : initCheckpoint(parseBackbone(values.backbone));
    const config = {
        ...DEFAULT_FINETUNE,
        learningRate: values.lr ? Number(values.lr) : DEFAULT_FINETUNE.learningRate,
        epochs: values.epochs ? Number(values.epochs) : DEFAULT_FINETUNE.epochs,
        patienceEpochs: values.patience
            ? Number(values.patience)
            : DEFAULT_FINETUNE.patienceEpochs,
        minDelta: values["min-delta"] ? Number(values["min-delta"]) : DEFAULT_FINETUNE.minDelta,
        trainPromptEncoder: values["train-prompt-encoder"] ?? false,
        augmentPrompts: values["augment-prompts"] ?? false,
        usePointPrompt: values["use-point-prompt"] ?? false,
        seed: Number(values.seed),
    };
    try {
        const log = finetune(
            entries, split.train_ids, split.val_ids,
            requireOption(values.cache, "cache"), checkpoint, config,
        );
        saveCheckpoint(checkpoint, outCheckpoint);
        if (values.log) writeTrainLog(log, values.log);
        const last = log.epochs[log.epochs.length - 1];
        console.error(JSON.stringify({
            event: "finetune", epochs: log.epochs.length,
            stop_reason: log.stop_reason, final_train_loss: last?.train_loss,
        }));
    } catch (err) {
        if (err instanceof FinetuneDivergence) {
            if (values.log) writeTrainLog(err.log, values.log);
            fail("training diverged (non-finite loss); log written");
        }
        throw err;
    }
}

function cmdInitCheckpoint(argv: string[]): void {
    const { values } = parseArgs({
        args: argv,
        options: {
            backbone: { type: "string" },
            out: { type: "string" },
            seed: { type: "string", default: "0" },
        },
    });
    const checkpoint = initCheckpoint(parseBackbone(values.backbone), 1024, Number(values.seed));
    saveCheckpoint(checkpoint, requireOption(values.out, "out"));
    console.error(JSON.stringify({ event: "init_checkpoint", backbone: checkpoint.backbone }));
}

function main(): void {
    const [command, ...rest] = process.argv.slice(2);
    switch (command) {
        case "predict":
            return cmdPredict(rest);
        case "precompute-embeddings":
            return cmdPrecompute(rest);
        case "finetune":
            return cmdFinetune(rest);
        case "init-checkpoint":
            return cmdInitCheckpoint(rest);
        default:
            fail(
                `unknown command ${command ?? "<none>"}; ` +
                "expected predict | precompute-embeddings | finetune | init-checkpoint",
            );
    }
}

main();
