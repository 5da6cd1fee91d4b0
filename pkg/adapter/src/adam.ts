/** Adam optimizer over a flat parameter vector. */

export class Adam {
    private m: Float64Array;
    private v: Float64Array;
    private t = 0;

    constructor(
        size: number,
        private lr: number,
        private beta1 = 0.9,
        private beta2 = 0.999,
        private eps = 1e-8,
    ) {
        this.m = new Float64Array(size);
        this.v = new Float64Array(size);
    }

    step(params: Float64Array, grads: Float64Array): void {
        if (params.length !== this.m.length || grads.length !== this.m.length) {
            throw new Error("adam: parameter/gradient size mismatch");
        }
        this.t += 1;
        const bc1 = 1 - Math.pow(this.beta1, this.t);
        const bc2 = 1 - Math.pow(this.beta2, this.t);
        for (let i = 0; i < params.length; i++) {
            this.m[i] = this.beta1 * this.m[i] + (1 - this.beta1) * grads[i];
            this.v[i] = this.beta2 * this.v[i] + (1 - this.beta2) * grads[i] * grads[i];
            const mHat = this.m[i] / bc1;
            const vHat = this.v[i] / bc2;
            params[i] -= (this.lr * mHat) / (Math.sqrt(vHat) + this.eps);
        }
    }
}
