/** Fixture builders: procedural blob datasets in the harness's on-disk layout. */
import * as fs from "node:fs";
import * as path from "node:path";

import { Mask, RgbImage, tightBbox, writeMaskPng, writeRgbPng } from "../src/image.js";
import { mulberry32 } from "../src/rng.js";
import { ManifestEntry, TaskPrompt, TaskRecord } from "../src/types.js";

export function makeBlobMask(width: number, height: number, rng: () => number): Mask {
    const cx = (0.3 + rng() * 0.4) * width;
    const cy = (0.3 + rng() * 0.4) * height;
    const rx = (0.14 + rng() * 0.16) * width;
    const ry = (0.14 + rng() * 0.16) * height;
    const data = new Uint8Array(width * height);
    for (let y = 0; y < height; y++) {
        for (let x = 0; x < width; x++) {
            const dx = (x - cx) / rx;
            const dy = (y - cy) / ry;
            data[y * width + x] = dx * dx + dy * dy <= 1 ? 1 : 0;
        }
    }
    if (!data.some((v) => v === 1)) {
        data[Math.floor(cy) * width + Math.floor(cx)] = 1;
    }
    return { width, height, data };
}

export function blobImage(mask: Mask, rng: () => number): RgbImage {
    const data = new Uint8Array(mask.width * mask.height * 4);
    for (let i = 0; i < mask.width * mask.height; i++) {
        const noise = Math.floor(rng() * 90);
        const lift = mask.data[i] ? 120 : 0;
        data[i * 4] = Math.min(255, noise + lift);
        data[i * 4 + 1] = Math.min(255, noise + lift);
        data[i * 4 + 2] = Math.min(255, Math.floor(noise / 2) + lift);
        data[i * 4 + 3] = 255;
    }
    return { width: mask.width, height: mask.height, data };
}

const CLASSES = ["MEL", "NV", "BCC", "AKIEC", "BKL", "DF", "VASC"];

export interface Fixture {
    root: string;
    manifestPath: string;
    entries: ManifestEntry[];
    masks: Map<string, Mask>;
}

export function buildFixture(
    root: string,
    n: number,
    width = 96,
    height = 88,
    seed = 1,
): Fixture {
    const rng = mulberry32(seed);
    fs.mkdirSync(path.join(root, "images"), { recursive: true });
    fs.mkdirSync(path.join(root, "masks"), { recursive: true });
    const entries: ManifestEntry[] = [];
    const masks = new Map<string, Mask>();
    for (let i = 0; i < n; i++) {
        const imageId = `FIX_${String(i).padStart(4, "0")}`;
        const mask = makeBlobMask(width, height, rng);
        const image = blobImage(mask, rng);
        const imagePath = path.join(root, "images", `${imageId}.png`);
        const maskPath = path.join(root, "masks", `${imageId}_segmentation.png`);
        writeRgbPng(imagePath, image);
        writeMaskPng(maskPath, mask);
        masks.set(imageId, mask);
        entries.push({
            image_id: imageId,
            image_path: imagePath,
            mask_path: maskPath,
            lesion_class: CLASSES[i % CLASSES.length],
            width,
            height,
            empty_mask: false,
        });
    }
    const manifestPath = path.join(root, "manifest.json");
    fs.writeFileSync(
        manifestPath,
        JSON.stringify(
            {
                source_root: root,
                entries: entries.map((e) => ({
                    ...e,
                    image_path: path.relative(root, e.image_path),
                    mask_path: path.relative(root, e.mask_path),
                })),
            },
            null,
            2,
        ) + "\n",
    );
    return { root, manifestPath, entries, masks };
}

/** Margin-expanded tight box plus a deterministic interior point. */
export function promptFor(mask: Mask, margin = 20): TaskPrompt {
    const [x0, y0, x1, y1] = tightBbox(mask);
    const box: [number, number, number, number] = [
        Math.max(0, x0 - margin),
        Math.max(0, y0 - margin),
        Math.min(mask.width - 1, x1 + margin),
        Math.min(mask.height - 1, y1 + margin),
    ];
    const point: [number, number] = [
        Math.round((x0 + x1) / 2),
        Math.round((y0 + y1) / 2),
    ];
    return { point, point_label: 1, box };
}

export function writeTasks(
    file: string,
    fixture: Fixture,
    ids: string[],
    withPrompts: boolean,
): string {
    const lines = ids.map((imageId) => {
        const entry = fixture.entries.find((e) => e.image_id === imageId)!;
        const record: TaskRecord = { image_id: imageId, image_path: entry.image_path };
        if (withPrompts) {
            record.prompt = promptFor(fixture.masks.get(imageId)!);
        }
        return JSON.stringify(record);
    });
    fs.mkdirSync(path.dirname(file), { recursive: true });
    fs.writeFileSync(file, lines.join("\n") + "\n");
    return file;
}

export function writeSplit(file: string, trainIds: string[], valIds: string[]): string {
    fs.mkdirSync(path.dirname(file), { recursive: true });
    fs.writeFileSync(
        file,
        JSON.stringify({ train_fraction: 0.8, seed: 0, train_ids: trainIds, val_ids: valIds }) +
            "\n",
    );
    return file;
}
