/**
 * Deterministic stand-in for a diffusion MLLM: no weights, no GPU, but the
 * same packing structure.  Image and prompt tokens form a fixed prefix; the
 * response denoises in a KV-cached window, so only the earliest
 * conditioning step still exposes the full image-token span.
 */

export interface MockModelOptions {
    gridH?: number;
    gridW?: number;
    nBase?: number;
    hiddenDim?: number;
    denoisingSteps?: number;
    responseWindow?: number;
    responsePad?: number;
    /** simulate a model whose hook never sees the full span */
    noValidStep?: boolean;
}

export interface StepTrace {
    t: number;
    seqLen: number;
    imgEnd: number;
}

/** mulberry32: tiny deterministic PRNG, plenty for synthetic activations */
export function prng(seed: number): () => number {
    let a = seed >>> 0;
    return () => {
        a |= 0;
        a = (a + 0x6d2b79f5) | 0;
        let t = Math.imul(a ^ (a >>> 15), 1 | a);
        t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
        return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
    };
}

export class MockDiffusionMLLM {
    readonly gridH: number;
    readonly gridW: number;
    readonly nBase: number;
    readonly hiddenDim: number;
    readonly denoisingSteps: number;
    readonly responseWindow: number;
    readonly responsePad: number;
    readonly noValidStep: boolean;
    readonly seed: number;

    private channelGain: Float64Array;
    private blobField: Float64Array; // gridH x gridW scene the channels share

    constructor(seed: number, opts: MockModelOptions = {}) {
        this.seed = seed;
        this.gridH = opts.gridH ?? 22;
        this.gridW = opts.gridW ?? 24;
        this.nBase = opts.nBase ?? 23;
        this.hiddenDim = opts.hiddenDim ?? 32;
        this.denoisingSteps = opts.denoisingSteps ?? 32;
        this.responseWindow = opts.responseWindow ?? 64;
        this.responsePad = opts.responsePad ?? 28;
        this.noValidStep = opts.noValidStep ?? false;

        const rand = prng(seed * 2654435761 + 1);
        this.channelGain = new Float64Array(this.hiddenDim);
        for (let c = 0; c < this.hiddenDim; c++) {
            this.channelGain[c] = 0.2 + rand() * 0.8;
        }
        this.blobField = new Float64Array(this.gridH * this.gridW);
    }

    get imgEnd(): number {
        return this.nBase + this.gridH * this.gridW;
    }

    get prefixSeqLen(): number {
        return this.imgEnd + this.responsePad;
    }

    /** One prefix record plus the KV-cached denoising trajectory. */
    stepTrace(): StepTrace[] {
        const steps: StepTrace[] = [];
        const prefixLen = this.noValidStep ? this.responseWindow : this.prefixSeqLen;
        steps.push({ t: 0, seqLen: prefixLen, imgEnd: this.imgEnd });
        for (let t = 1; t <= this.denoisingSteps; t++) {
            steps.push({ t, seqLen: this.responseWindow, imgEnd: this.imgEnd });
        }
        return steps;
    }

    /** Gaussian bump center for a response token, deterministic per seed. */
    tokenCenter(tokenIndex: number): { cy: number; cx: number; sigma: number } {
        const rand = prng((this.seed * 31 + tokenIndex + 1) * 1103515245 + 12345);
        const sigma = 1.5 + rand() * 1.5;
        const margin = 2 * sigma;
        const cy = margin + rand() * Math.max(this.gridH - 1 - 2 * margin, 0);
        const cx = margin + rand() * Math.max(this.gridW - 1 - 2 * margin, 0);
        return { cy, cx, sigma };
    }

    private tokenBump(tokenIndex: number): Float64Array {
        const { cy, cx, sigma } = this.tokenCenter(tokenIndex);
        const out = new Float64Array(this.gridH * this.gridW);
        for (let i = 0; i < this.gridH; i++) {
            for (let j = 0; j < this.gridW; j++) {
                const r2 = (i - cy) * (i - cy) + (j - cx) * (j - cx);
                out[i * this.gridW + j] = Math.exp(-r2 / (2 * sigma * sigma));
            }
        }
        return out;
    }

    /**
     * Hidden states captured by a forward hook at one step: (seqLen x D),
     * row-major.  Image-span rows carry the shared scene modulated per
     * channel; everything else is low-amplitude noise.
     */
    hiddenStates(layer: number, step: StepTrace, answerTokens: number[]): Float64Array {
        const L = step.seqLen;
        const D = this.hiddenDim;
        const out = new Float64Array(L * D);
        const rand = prng((this.seed ^ (layer * 7919)) + step.t * 104729);
        // the scene is the union of the answer tokens' grounded regions
        this.blobField.fill(0);
        for (const t of answerTokens) {
            const bump = this.tokenBump(t);
            for (let k = 0; k < bump.length; k++) {
                this.blobField[k] = Math.max(this.blobField[k], bump[k]);
            }
        }
        for (let row = 0; row < L; row++) {
            const inSpan = L >= step.imgEnd && row >= this.nBase && row < step.imgEnd;
            const cell = row - this.nBase;
            for (let c = 0; c < D; c++) {
                let v = 0.05 * rand();
                if (inSpan) {
                    v += this.channelGain[c] * this.blobField[cell];
                }
                out[row * D + c] = v;
            }
        }
        return out;
    }

    /**
     * Pseudo-backward pass: gradient of the summed final logits of the
     * given answer tokens with respect to the hooked hidden states.
     * Nonzero only inside the image span, shaped by each token's grounded
     * region.
     */
    backward(layer: number, step: StepTrace, answerTokens: number[]): Float64Array {
        const L = step.seqLen;
        const D = this.hiddenDim;
        const out = new Float64Array(L * D);
        if (L < step.imgEnd || answerTokens.length === 0) {
            return out; // structurally invalid step: nothing to attribute
        }
        const field = new Float64Array(this.gridH * this.gridW);
        for (const t of answerTokens) {
            const bump = this.tokenBump(t);
            for (let k = 0; k < bump.length; k++) {
                field[k] += bump[k];
            }
        }
        for (let cell = 0; cell < field.length; cell++) {
            const row = this.nBase + cell;
            for (let c = 0; c < D; c++) {
                out[row * D + c] = this.channelGain[c] * field[cell];
            }
        }
        return out;
    }
}
