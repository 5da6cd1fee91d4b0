/** Training objective: soft dice plus per-pixel-mean cross-entropy, unweighted.
 *
 * Formulas (p = probabilities, g = binary target, N pixels, smoothing s):
 *   dice = 1 - (2*sum(p*g) + s) / (sum(p) + sum(g) + s)
 *   ce   = -(1/N) * sum(g*ln(p) + (1-g)*ln(1-p)), p clamped to [EPS, 1-EPS]
 *
 * Must agree with the harness's reference implementation to 1e-6 on the
 * exported test vectors; keep the evaluation order aligned with it.
 */

export const EPSILON = 1e-7;
export const DEFAULT_SMOOTH = 1.0;

export interface LossReport {
    dice: number;
    ce: number;
    combined: number;
    /** d(combined)/dp per pixel; zero where the input was clamped. */
    gradient: Float64Array;
}

function clamped(p: Float64Array): { data: Float64Array; wasClamped: Uint8Array } {
    const data = new Float64Array(p.length);
    const wasClamped = new Uint8Array(p.length);
    for (let i = 0; i < p.length; i++) {
        let v = p[i];
        if (v < EPSILON) {
            v = EPSILON;
            wasClamped[i] = 1;
        } else if (v > 1 - EPSILON) {
            v = 1 - EPSILON;
            wasClamped[i] = 1;
        }
        data[i] = v;
    }
    return { data, wasClamped };
}

export function diceLoss(rawP: Float64Array, g: Float64Array, smooth = DEFAULT_SMOOTH): number {
    const { data: p } = clamped(rawP);
    let intersection = 0;
    let sums = 0;
    for (let i = 0; i < p.length; i++) {
        intersection += p[i] * g[i];
        sums += p[i] + g[i];
    }
    return 1 - (2 * intersection + smooth) / (sums + smooth);
}

export function ceLoss(rawP: Float64Array, g: Float64Array): number {
    const { data: p } = clamped(rawP);
    let total = 0;
    for (let i = 0; i < p.length; i++) {
        total += g[i] * Math.log(p[i]) + (1 - g[i]) * Math.log(1 - p[i]);
    }
    return -total / p.length;
}

export function combinedWithGrad(
    rawP: Float64Array,
    g: Float64Array,
    smooth = DEFAULT_SMOOTH,
): LossReport {
    if (rawP.length !== g.length) {
        throw new Error(`loss: length mismatch ${rawP.length} vs ${g.length}`);
    }
    const { data: p, wasClamped } = clamped(rawP);
    const n = p.length;
    let intersection = 0;
    let sums = 0;
    for (let i = 0; i < n; i++) {
        intersection += p[i] * g[i];
        sums += p[i] + g[i];
    }
    const dice = 1 - (2 * intersection + smooth) / (sums + smooth);
    let ceTotal = 0;
    for (let i = 0; i < n; i++) {
        ceTotal += g[i] * Math.log(p[i]) + (1 - g[i]) * Math.log(1 - p[i]);
    }
    const ce = -ceTotal / n;

    const denom = (sums + smooth) * (sums + smooth);
    const gradient = new Float64Array(n);
    for (let i = 0; i < n; i++) {
        const diceGrad = -(2 * g[i] * (sums + smooth) - (2 * intersection + smooth)) / denom;
        const ceGrad = (-g[i] / p[i] + (1 - g[i]) / (1 - p[i])) / n;
        gradient[i] = wasClamped[i] ? 0 : diceGrad + ceGrad;
    }
    return { dice, ce, combined: dice + ce, gradient };
}
