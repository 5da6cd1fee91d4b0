/** Wire-format I/O shared with the evaluation harness.
 *
 * Tasks arrive as JSON Lines ({image_id, image_path, prompt?}); results are
 * written one directory per image: scores.json with the candidate scores and
 * cand_<k>.png grayscale masks (0 background, 255 foreground).
 */
import * as fs from "node:fs";
import * as path from "node:path";

import { Mask, writeMaskPng } from "./image.js";
import { ManifestEntry, TaskRecord } from "./types.js";

export function parseTasks(tasksPath: string): TaskRecord[] {
    const tasks: TaskRecord[] = [];
    for (const line of fs.readFileSync(tasksPath, "utf-8").split("\n")) {
        const trimmed = line.trim();
        if (!trimmed) continue;
        const record = JSON.parse(trimmed);
        if (typeof record.image_id !== "string" || typeof record.image_path !== "string") {
            throw new Error(`bad task line: ${trimmed.slice(0, 80)}`);
        }
        tasks.push(record as TaskRecord);
    }
    if (tasks.length === 0) {
        throw new Error(`no tasks in ${tasksPath}`);
    }
    return tasks;
}

export function writeResult(outDir: string, imageId: string, masks: Mask[], scores: number[]): void {
    if (masks.length !== scores.length || masks.length === 0) {
        throw new Error(`result for ${imageId} needs matching masks and scores`);
    }
    const target = path.join(outDir, imageId);
    fs.mkdirSync(target, { recursive: true });
    masks.forEach((mask, k) => writeMaskPng(path.join(target, `cand_${k}.png`), mask));
    fs.writeFileSync(path.join(target, "scores.json"), JSON.stringify({ scores }) + "\n");
}

/** Read the harness's dataset manifest, resolving relative paths. */
export function readManifest(manifestPath: string): ManifestEntry[] {
    const payload = JSON.parse(fs.readFileSync(manifestPath, "utf-8"));
    const root = payload.source_root as string;
    const resolve = (p: string) => (path.isAbsolute(p) ? p : path.join(root, p));
    return (payload.entries as ManifestEntry[]).map((e) => ({
        ...e,
        image_path: resolve(e.image_path),
        mask_path: resolve(e.mask_path),
    }));
}

export interface SplitSpec {
    train_ids: string[];
    val_ids: string[];
}

export function readSplit(splitPath: string): SplitSpec {
    const payload = JSON.parse(fs.readFileSync(splitPath, "utf-8"));
    return { train_ids: payload.train_ids, val_ids: payload.val_ids };
}
