/**
 * Export pipeline: run the (mock) model under a hook session, tag the
 * teacher-forced response, build the answer-token target, capture hidden
 * states and gradients at the structurally valid step, and write the
 * toolkit's interchange files.  All writes are atomic
 * (write-temp-then-rename).
 */

import { mkdirSync, renameSync, writeFileSync } from 'node:fs';
import { dirname, join } from 'node:path';

import { MockDiffusionMLLM, MockModelOptions, StepTrace } from './mockModel.js';
import { encodeNpy } from './npy.js';
import { encodeGrayPng } from './png.js';
import { TaggedToken, tagCaption } from './pos.js';
import { HookSession } from './session.js';
import { VariantLabel, makeVariants } from './variants.js';

export interface ExportOptions {
    outDir: string;
    sampleId: string;
    caption: string;
    prompt?: string;
    seed?: number;
    layer?: number;
    perToken?: boolean;
    maskScale?: number;
    model?: MockModelOptions;
    variantLabel?: VariantLabel;
}

export interface ManifestEntry {
    sample_id: string;
    features_path: string;
    gradients_path: string;
    meta_path: string;
    mask_dir: string;
    variant_label?: VariantLabel;
}

function atomicWrite(path: string, data: Buffer | string): void {
    mkdirSync(dirname(path), { recursive: true });
    const tmp = `${path}.tmp`;
    writeFileSync(tmp, data);
    renameSync(tmp, path);
}

/** Grad-CAM style aggregation over the extracted image span, min-max
 *  normalized; used for the optional per-token map export. */
export function camFromSpan(
    features: Float64Array,
    gradients: Float64Array,
    nBase: number,
    gridH: number,
    gridW: number,
    hiddenDim: number,
): Float64Array {
    const cells = gridH * gridW;
    const weights = new Float64Array(hiddenDim);
    for (let cell = 0; cell < cells; cell++) {
        const row = nBase + cell;
        for (let c = 0; c < hiddenDim; c++) {
            weights[c] += gradients[row * hiddenDim + c];
        }
    }
    for (let c = 0; c < hiddenDim; c++) {
        weights[c] /= cells;
    }
    const out = new Float64Array(cells);
    let lo = Infinity;
    let hi = -Infinity;
    for (let cell = 0; cell < cells; cell++) {
        const row = nBase + cell;
        let v = 0;
        for (let c = 0; c < hiddenDim; c++) {
            v += weights[c] * features[row * hiddenDim + c];
        }
        v = Math.max(v, 0);
        out[cell] = v;
        lo = Math.min(lo, v);
        hi = Math.max(hi, v);
    }
    if (hi > lo) {
        for (let cell = 0; cell < cells; cell++) {
            out[cell] = (out[cell] - lo) / (hi - lo);
        }
    } else if (hi > 0) {
        out.fill(1);
    }
    return out;
}

function tokenMask(
    model: MockDiffusionMLLM,
    tokenIndex: number,
    scale: number,
): { pixels: Uint8Array; width: number; height: number } {
    const { cy, cx, sigma } = model.tokenCenter(tokenIndex);
    const height = model.gridH * scale;
    const width = model.gridW * scale;
    const pixels = new Uint8Array(width * height);
    const radius = 2 * sigma * scale;
    const cyImg = cy * scale;
    const cxImg = cx * scale;
    for (let y = 0; y < height; y++) {
        for (let x = 0; x < width; x++) {
            const r2 = (y - cyImg) * (y - cyImg) + (x - cxImg) * (x - cxImg);
            if (r2 <= radius * radius) {
                pixels[y * width + x] = 255;
            }
        }
    }
    return { pixels, width, height };
}

function metadataDoc(
    model: MockDiffusionMLLM,
    sampleId: string,
    steps: StepTrace[],
    tokens: TaggedToken[],
    perTokenMaps: Map<number, string>,
    caption: string,
    variantLabel: VariantLabel | undefined,
    maskManifest: { class: string; path: string }[],
) {
    return {
        sample_id: sampleId,
        n_base: model.nBase,
        grid: [model.gridH, model.gridW],
        hidden_dim: model.hiddenDim,
        steps: steps.map((s) => ({ t: s.t, seq_len: s.seqLen, img_end: s.imgEnd })),
        tokens: tokens.map((t) => ({
            index: t.index,
            text: t.text,
            pos_tag: t.posTag,
            is_answer: t.isAnswer,
            repeat_count: t.repeatCount,
            per_token_map: perTokenMaps.get(t.index) ?? null,
        })),
        response_text: caption,
        variant_label: variantLabel ?? null,
        mask_manifest: maskManifest,
    };
}

/**
 * Export one sample.  When no denoising step is structurally valid the
 * metadata still records the all-FAIL trace and the hidden states of the
 * first step are exported as-is; the downstream toolkit surfaces the
 * span error.
 */
export function exportSample(opts: ExportOptions): ManifestEntry {
    const seed = opts.seed ?? 0;
    const layer = opts.layer ?? 10;
    const maskScale = opts.maskScale ?? 4;
    const model = new MockDiffusionMLLM(seed, opts.model);
    const session = new HookSession(model, layer);

    const tokens = tagCaption(opts.caption);
    const answerTokens = tokens.filter((t) => t.isAnswer).map((t) => t.index);
    const steps = session.run(answerTokens);
    const valid = session.firstValidStep();
    const attributionStep = valid ?? steps[0];
    const hidden = session.hiddenAt(attributionStep.t);
    const gradients = session.gradientsAt(attributionStep, answerTokens);

    const id = opts.sampleId;
    const featuresRel = join('features', `${id}.npy`);
    const gradientsRel = join('gradients', `${id}.npy`);
    const metaRel = join('meta', `${id}.json`);
    const L = attributionStep.seqLen;
    const D = model.hiddenDim;
    atomicWrite(join(opts.outDir, featuresRel), encodeNpy(Float32Array.from(hidden), [L, D]));
    atomicWrite(join(opts.outDir, gradientsRel), encodeNpy(Float32Array.from(gradients), [L, D]));

    const perTokenMaps = new Map<number, string>();
    if (opts.perToken && valid) {
        for (const tok of tokens) {
            const grad = session.gradientsAt(attributionStep, [tok.index]);
            const cam = camFromSpan(hidden, grad, model.nBase, model.gridH, model.gridW, D);
            const rel = join('maps', `${id}_tok${tok.index}.npy`);
            atomicWrite(
                join(opts.outDir, rel),
                encodeNpy(Float32Array.from(cam), [model.gridH, model.gridW]),
            );
            // referenced relative to the metadata file's directory
            perTokenMaps.set(tok.index, join('..', rel));
        }
    }

    const maskManifest: { class: string; path: string }[] = [];
    for (const t of answerTokens) {
        const tok = tokens[t];
        const { pixels, width, height } = tokenMask(model, t, maskScale);
        const name = `${id}_${tok.text}${t}.png`;
        atomicWrite(join(opts.outDir, 'masks', name), encodeGrayPng(pixels, width, height));
        maskManifest.push({ class: `${tok.text}${t}`, path: name });
    }

    const doc = metadataDoc(
        model, id, steps, tokens, perTokenMaps, opts.caption, opts.variantLabel, maskManifest,
    );
    atomicWrite(join(opts.outDir, metaRel), JSON.stringify(doc, null, 1));
    session.release();

    return {
        sample_id: id,
        features_path: featuresRel,
        gradients_path: gradientsRel,
        meta_path: metaRel,
        mask_dir: 'masks',
        ...(opts.variantLabel ? { variant_label: opts.variantLabel } : {}),
    };
}

/**
 * Teacher-forced variant study: the response text is fixed to each of the
 * four caption variants and only attribution is recomputed; image (seed),
 * hook layer and packing stay identical.
 */
export function exportWithVariants(opts: ExportOptions): ManifestEntry[] {
    const variants = makeVariants(opts.caption);
    const entries: ManifestEntry[] = [];
    for (const label of ['concise', 'original', 'verbose', 'repeated'] as VariantLabel[]) {
        entries.push(
            exportSample({
                ...opts,
                sampleId: `${opts.sampleId}_${label}`,
                caption: variants[label],
                variantLabel: label,
            }),
        );
    }
    return entries;
}

export function writeManifest(outDir: string, entries: ManifestEntry[]): string {
    const path = join(outDir, 'manifest.jsonl');
    const lines = entries.map((e) => JSON.stringify(e)).join('\n') + '\n';
    atomicWrite(path, lines);
    return path;
}
