/**
 * Hook bookkeeping around one model run: captures the hooked hidden states
 * per step at the target layer, replays the backward pass for gradient
 * capture, and releases everything after export.
 */

import { MockDiffusionMLLM, StepTrace } from './mockModel.js';

export class HookSession {
    readonly layer: number;
    private model: MockDiffusionMLLM | null;
    private captures: Map<number, Float64Array> = new Map();
    private steps: StepTrace[] = [];

    constructor(model: MockDiffusionMLLM, layer = 10) {
        this.model = model;
        this.layer = layer;
    }

    /** Run the denoising trajectory, capturing one hidden state per step. */
    run(answerTokens: number[]): StepTrace[] {
        const model = this.ensureLive();
        this.steps = model.stepTrace();
        for (const step of this.steps) {
            if (this.captures.has(step.t)) {
                throw new Error(`duplicate capture for step ${step.t}`);
            }
            this.captures.set(step.t, model.hiddenStates(this.layer, step, answerTokens));
        }
        return this.steps;
    }

    /** Earliest step whose hooked sequence still spans the image tokens. */
    firstValidStep(): StepTrace | null {
        for (const step of this.steps) {
            if (step.seqLen >= step.imgEnd) return step;
        }
        return null;
    }

    hiddenAt(t: number): Float64Array {
        const data = this.captures.get(t);
        if (!data) throw new Error(`no capture for step ${t}`);
        return data;
    }

    gradientsAt(step: StepTrace, answerTokens: number[]): Float64Array {
        return this.ensureLive().backward(this.layer, step, answerTokens);
    }

    release(): void {
        this.captures.clear();
        this.steps = [];
        this.model = null;
    }

    get released(): boolean {
        return this.model === null;
    }

    private ensureLive(): MockDiffusionMLLM {
        if (!this.model) throw new Error('hook session already released');
        return this.model;
    }
}
