/**
 * Caption variants for the teacher-forced intervention study: the same
 * description expressed with increasing function-word redundancy.
 */

import { STOPLIST, tokenize } from './pos.js';

export type VariantLabel = 'concise' | 'original' | 'verbose' | 'repeated';

export const VARIANT_LABELS: VariantLabel[] = ['concise', 'original', 'verbose', 'repeated'];

/** Fixed scaffolding inserted by the verbose variant. */
export const VERBOSE_PREFIX = ['in', 'the', 'image', 'that', 'is', 'shown'];
export const VERBOSE_SUFFIX = ['that', 'is', 'in', 'the', 'scene'];

export function makeVariants(caption: string): Record<VariantLabel, string> {
    const words = tokenize(caption);
    const concise = words.filter((w) => !STOPLIST.has(w));
    const verbose = [...VERBOSE_PREFIX, ...words, ...VERBOSE_SUFFIX];
    const repeated: string[] = [];
    for (const w of words) {
        repeated.push(w);
        if (STOPLIST.has(w)) {
            repeated.push(w); // each function word duplicated exactly once
        }
    }
    return {
        concise: concise.join(' '),
        original: words.join(' '),
        verbose: verbose.join(' '),
        repeated: repeated.join(' '),
    };
}
