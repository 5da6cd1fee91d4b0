/** PNG I/O and the resize/pool steps feeding the encoder. */
import * as fs from "node:fs";
import pngjs from "pngjs";

const { PNG } = pngjs;

export interface RgbImage {
    width: number;
    height: number;
    /** RGBA interleaved, as decoded by pngjs. */
    data: Uint8Array;
}

export interface Mask {
    width: number;
    height: number;
    /** Row-major 0/1 values. */
    data: Uint8Array;
}

export function readPng(path: string): RgbImage {
    const png = PNG.sync.read(fs.readFileSync(path));
    return { width: png.width, height: png.height, data: new Uint8Array(png.data) };
}

/** Binarize the first channel at the harness's threshold (strictly > 127). */
export function readMask(path: string): Mask {
    const img = readPng(path);
    const out = new Uint8Array(img.width * img.height);
    for (let i = 0; i < out.length; i++) {
        out[i] = img.data[i * 4] > 127 ? 1 : 0;
    }
    return { width: img.width, height: img.height, data: out };
}

/** Write a 0/1 mask as an 8-bit grayscale-looking PNG (0 or 255 in RGB). */
export function writeMaskPng(path: string, mask: Mask): void {
    const png = new PNG({ width: mask.width, height: mask.height, colorType: 0 });
    for (let i = 0; i < mask.data.length; i++) {
        const v = mask.data[i] ? 255 : 0;
        png.data[i * 4] = v;
        png.data[i * 4 + 1] = v;
        png.data[i * 4 + 2] = v;
        png.data[i * 4 + 3] = 255;
    }
    fs.writeFileSync(path, PNG.sync.write(png, { colorType: 0 }));
}

export function writeRgbPng(path: string, image: RgbImage): void {
    const png = new PNG({ width: image.width, height: image.height });
    Buffer.from(image.data).copy(png.data);
    fs.writeFileSync(path, PNG.sync.write(png));
}

/**
 * Normalize to the configured square input size (nearest neighbor), then
 * average-pool RGB plus patch-center coordinates onto a gridSize x gridSize
 * grid. Returns gridSize*gridSize rows of [r, g, b, cx, cy], all in [0, 1].
 */
export function gridPatchStats(
    image: RgbImage,
    inputSize: number,
    gridSize: number,
): Float64Array {
    const patch = inputSize / gridSize;
    const stats = new Float64Array(gridSize * gridSize * 5);
    for (let gy = 0; gy < gridSize; gy++) {
        for (let gx = 0; gx < gridSize; gx++) {
            let r = 0;
            let g = 0;
            let b = 0;
            let n = 0;
            const y0 = Math.floor(gy * patch);
            const y1 = Math.floor((gy + 1) * patch);
            const x0 = Math.floor(gx * patch);
            const x1 = Math.floor((gx + 1) * patch);
            for (let y = y0; y < y1; y++) {
                const srcY = Math.min(image.height - 1, Math.floor((y * image.height) / inputSize));
                for (let x = x0; x < x1; x++) {
                    const srcX = Math.min(image.width - 1, Math.floor((x * image.width) / inputSize));
                    const idx = (srcY * image.width + srcX) * 4;
                    r += image.data[idx];
                    g += image.data[idx + 1];
                    b += image.data[idx + 2];
                    n++;
                }
            }
            const base = (gy * gridSize + gx) * 5;
            stats[base] = r / n / 255;
            stats[base + 1] = g / n / 255;
            stats[base + 2] = b / n / 255;
            stats[base + 3] = (gx + 0.5) / gridSize;
            stats[base + 4] = (gy + 0.5) / gridSize;
        }
    }
    return stats;
}

/** Pool a full-resolution mask onto the patch grid: 1 iff coverage > 0.5. */
export function gridPoolMask(mask: Mask, gridSize: number): Float64Array {
    const out = new Float64Array(gridSize * gridSize);
    for (let gy = 0; gy < gridSize; gy++) {
        const y0 = Math.floor((gy * mask.height) / gridSize);
        const y1 = Math.max(y0 + 1, Math.floor(((gy + 1) * mask.height) / gridSize));
        for (let gx = 0; gx < gridSize; gx++) {
            const x0 = Math.floor((gx * mask.width) / gridSize);
            const x1 = Math.max(x0 + 1, Math.floor(((gx + 1) * mask.width) / gridSize));
            let on = 0;
            let n = 0;
            for (let y = y0; y < y1; y++) {
                for (let x = x0; x < x1; x++) {
                    on += mask.data[y * mask.width + x];
                    n++;
                }
            }
            out[gy * gridSize + gx] = on / n > 0.5 ? 1 : 0;
        }
    }
    return out;
}

/** Nearest-neighbor upsample of patch probabilities to a full-size 0/1 mask. */
export function probsToMask(
    probs: Float64Array,
    gridSize: number,
    width: number,
    height: number,
    threshold = 0.5,
): Mask {
    const data = new Uint8Array(width * height);
    for (let y = 0; y < height; y++) {
        const gy = Math.min(gridSize - 1, Math.floor((y * gridSize) / height));
        for (let x = 0; x < width; x++) {
            const gx = Math.min(gridSize - 1, Math.floor((x * gridSize) / width));
            data[y * width + x] = probs[gy * gridSize + gx] > threshold ? 1 : 0;
        }
    }
    return { width, height, data };
}

/** Tight bounding box of a non-empty mask: [x0, y0, x1, y1] inclusive. */
export function tightBbox(mask: Mask): [number, number, number, number] {
    let x0 = mask.width;
    let y0 = mask.height;
    let x1 = -1;
    let y1 = -1;
    for (let y = 0; y < mask.height; y++) {
        for (let x = 0; x < mask.width; x++) {
            if (mask.data[y * mask.width + x]) {
                if (x < x0) x0 = x;
                if (x > x1) x1 = x;
                if (y < y0) y0 = y;
                if (y > y1) y1 = y;
            }
        }
    }
    if (x1 < 0) throw new Error("tightBbox: mask has no foreground");
    return [x0, y0, x1, y1];
}

export function maskDice(a: Mask, b: Mask): number {
    if (a.width !== b.width || a.height !== b.height) {
        throw new Error("maskDice: dimension mismatch");
    }
    let inter = 0;
    let sum = 0;
    for (let i = 0; i < a.data.length; i++) {
        inter += a.data[i] & b.data[i];
        sum += a.data[i] + b.data[i];
    }
    return sum === 0 ? 1 : (2 * inter) / sum;
}
