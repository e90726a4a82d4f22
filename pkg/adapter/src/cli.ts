/**
 * Command-line entry point.
 *
 *   export   --out-dir DIR [--caption TEXT] [--sample-id ID] [--seed N]
 *            [--layer N] [--steps N] [--variants] [--per-token]
 *            [--no-valid-step]
 *   variants --caption TEXT
 */

import { exit } from 'node:process';

import { ExportOptions, exportSample, exportWithVariants, writeManifest } from './exporter.js';
import { makeVariants } from './variants.js';

const DEFAULT_CAPTION =
    'a large brown dog sits on the green grass next to a small red ball ' +
    'and a wooden bench in the quiet park with trees in the background';

function parseArgs(argv: string[]): { command: string; flags: Map<string, string | boolean> } {
    const [command, ...rest] = argv;
    const flags = new Map<string, string | boolean>();
    for (let i = 0; i < rest.length; i++) {
        const arg = rest[i];
        if (!arg.startsWith('--')) {
            throw new Error(`unexpected argument ${arg}`);
        }
        const key = arg.slice(2);
        const next = rest[i + 1];
        if (next !== undefined && !next.startsWith('--')) {
            flags.set(key, next);
            i++;
        } else {
            flags.set(key, true);
        }
    }
    return { command, flags };
}

function str(flags: Map<string, string | boolean>, key: string, fallback: string): string {
    const v = flags.get(key);
    return typeof v === 'string' ? v : fallback;
}

function num(flags: Map<string, string | boolean>, key: string, fallback: number): number {
    const v = flags.get(key);
    if (typeof v !== 'string') return fallback;
    const n = Number(v);
    if (!Number.isFinite(n)) throw new Error(`--${key} expects a number, got ${v}`);
    return n;
}

export function main(argv: string[]): number {
    let parsed;
    try {
        parsed = parseArgs(argv);
    } catch (err) {
        console.error(String(err));
        return 2;
    }
    const { command, flags } = parsed;

    if (command === 'variants') {
        const caption = str(flags, 'caption', DEFAULT_CAPTION);
        console.log(JSON.stringify(makeVariants(caption), null, 1));
        return 0;
    }

    if (command === 'export') {
        const outDir = flags.get('out-dir');
        if (typeof outDir !== 'string') {
            console.error('--out-dir is required');
            return 2;
        }
        const opts: ExportOptions = {
            outDir,
            sampleId: str(flags, 'sample-id', 'mock0000'),
            caption: str(flags, 'caption', DEFAULT_CAPTION),
            seed: num(flags, 'seed', 0),
            layer: num(flags, 'layer', 10),
            perToken: flags.get('per-token') === true,
            model: {
                denoisingSteps: num(flags, 'steps', 32),
                noValidStep: flags.get('no-valid-step') === true,
            },
        };
        try {
            const entries =
                flags.get('variants') === true ? exportWithVariants(opts) : [exportSample(opts)];
            const manifest = writeManifest(outDir, entries);
            console.log(`wrote ${entries.length} sample(s), manifest ${manifest}`);
            return 0;
        } catch (err) {
            console.error(String(err));
            return 1;
        }
    }

    console.error(`unknown command ${command ?? '(none)'}; use export or variants`);
    return 2;
}

const invokedDirectly = process.argv[1]?.endsWith('cli.js') || process.argv[1]?.endsWith('cli.ts');
if (invokedDirectly) {
    exit(main(process.argv.slice(2)));
}
