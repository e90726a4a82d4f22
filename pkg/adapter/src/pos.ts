/**
 * Rule-based Penn-style part-of-speech tagging, sufficient for routing
 * caption tokens into answer (noun) and function-word sets without any
 * model download.
 */

export const STOPLIST = new Set([
    'a', 'an', 'the', 'of', 'in', 'on', 'at', 'to', 'and', 'or', 'with', 'that', 'is', 'are',
]);

const TAG_TABLE: Record<string, string> = {
    a: 'DT', an: 'DT', the: 'DT', that: 'DT', this: 'DT', these: 'DT', those: 'DT',
    of: 'IN', in: 'IN', on: 'IN', at: 'IN', with: 'IN', by: 'IN', from: 'IN',
    near: 'IN', under: 'IN', over: 'IN', into: 'IN',
    to: 'TO',
    and: 'CC', or: 'CC', but: 'CC',
    is: 'VBZ', are: 'VBP', was: 'VBD', were: 'VBD', be: 'VB', been: 'VBN',
    it: 'PRP', he: 'PRP', she: 'PRP', they: 'PRP', there: 'EX',
    very: 'RB', not: 'RB',
    one: 'CD', two: 'CD', three: 'CD', four: 'CD', five: 'CD',
};

const IRREGULAR_PLURALS = new Set(['children', 'men', 'women', 'people', 'sheep', 'feet', 'geese']);

export function tokenize(text: string): string[] {
    const matches = text.toLowerCase().match(/[a-z0-9']+/g);
    return matches ?? [];
}

export function tagToken(word: string): string {
    const w = word.toLowerCase();
    if (TAG_TABLE[w] !== undefined) return TAG_TABLE[w];
    if (/^[0-9]+$/.test(w)) return 'CD';
    if (IRREGULAR_PLURALS.has(w)) return 'NNS';
    if (w.endsWith('ing') && w.length > 4) return 'VBG';
    if (w.endsWith('ed') && w.length > 3) return 'VBD';
    if (w.endsWith('ly') && w.length > 3) return 'RB';
    if (w.endsWith('s') && !w.endsWith('ss') && w.length > 3) return 'NNS';
    return 'NN';
}

export interface TaggedToken {
    index: number;
    text: string;
    posTag: string;
    isAnswer: boolean;
    repeatCount: number;
}

/** Tag a caption; nouns become the answer set, repeat counts are
 *  occurrences of the same token string anywhere in the caption. */
export function tagCaption(caption: string): TaggedToken[] {
    const words = tokenize(caption);
    const counts = new Map<string, number>();
    for (const w of words) {
        counts.set(w, (counts.get(w) ?? 0) + 1);
    }
    return words.map((w, i) => {
        const tag = tagToken(w);
        return {
            index: i,
            text: w,
            posTag: tag,
            isAnswer: tag === 'NN' || tag === 'NNS',
            repeatCount: counts.get(w) ?? 1,
        };
    });
}
