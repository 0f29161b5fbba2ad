#!/usr/bin/env node
/**
 * export-gwtc --ckpt model.safetensors --family g-yolov11 --scale n --nc 9 \
 *             --out weights.gwtc [--arch arch.json] [--gyolo gyolo]
 *
 * Converts a reference training checkpoint into a GWTC v1 container. The
 * parameter manifest comes from the detector CLI's `export-arch` JSON; it
 * is fetched by spawning `gyolo export-arch` unless --arch points at a
 * saved document. Exit codes: 0 ok, 1 conversion error, 2 usage error.
 *
 * Producing the checkpoint inside the training environment is one line:
 *   from safetensors.torch import save_file
 *   save_file({k: v.float().contiguous() for k, v in model.model.state_dict().items()}, "ckpt.safetensors")
 */

import { spawnSync } from 'node:child_process';
import { readFileSync, renameSync, rmSync, writeFileSync } from 'node:fs';

import { exportContainer } from './export.js';
import { parseArchDoc } from './mapping.js';
import { parseSafetensors } from './safetensors.js';

interface Args {
  ckpt?: string;
  family?: string;
  scale?: string;
  nc?: number;
  out?: string;
  arch?: string;
  gyolo: string;
}

const USAGE =
  'usage: export-gwtc --ckpt <model.safetensors> --family <yolov11|g-yolov11> ' +
  '--scale <n|s|m|l|x> --nc <classes> --out <weights.gwtc> [--arch <arch.json>] [--gyolo <cli>]';

function parseArgs(argv: string[]): Args {
  const args: Args = { gyolo: 'gyolo' };
  for (let i = 0; i < argv.length; i++) {
    const next = () => {
      const v = argv[++i];
      if (v === undefined) usageError(`${argv[i - 1]} needs a value`);
      return v!;
    };
    switch (argv[i]) {
      case '--ckpt':
        args.ckpt = next();
        break;
      case '--family':
        args.family = next();
        break;
      case '--scale':
        args.scale = next();
        break;
      case '--nc':
        args.nc = Number(next());
        break;
      case '--out':
        args.out = next();
        break;
      case '--arch':
        args.arch = next();
        break;
      case '--gyolo':
        args.gyolo = next();
        break;
      case '--help':
      case '-h':
        console.log(USAGE);
        process.exit(0);
        break;
      default:
        usageError(`unknown argument ${argv[i]}`);
    }
  }
  return args;
}

function usageError(msg: string): never {
  console.error(`error: ${msg}`);
  console.error(USAGE);
  process.exit(2);
}

function fetchArchDoc(args: Args): string {
  if (args.arch) return readFileSync(args.arch, 'utf8');
  const run = spawnSync(
    args.gyolo,
    ['export-arch', '--family', args.family!, '--scale', args.scale!, '--nc', String(args.nc)],
    { encoding: 'utf8', maxBuffer: 64 * 1024 * 1024 },
  );
  if (run.error || run.status !== 0) {
    const why = run.error ? run.error.message : (run.stderr || `exit ${run.status}`).trim();
    throw new Error(
      `could not obtain the architecture document from "${args.gyolo}" (${why}); ` +
        'pass --arch with a saved `export-arch` JSON instead',
    );
  }
  return run.stdout;
}

export function main(argv: string[]): number {
  const args = parseArgs(argv);
  for (const key of ['ckpt', 'family', 'scale', 'nc', 'out'] as const) {
    if (args[key] === undefined || (key === 'nc' && !Number.isInteger(args.nc))) {
      usageError(`--${key} is required`);
    }
  }
  try {
    const arch = parseArchDoc(fetchArchDoc(args));
    if (arch.family !== args.family || arch.scale !== args.scale || arch.nc !== args.nc) {
      throw new Error(
        `architecture document is ${arch.family}-${arch.scale} nc=${arch.nc}, ` +
          `flags say ${args.family}-${args.scale} nc=${args.nc}`,
      );
    }
    const ckpt = parseSafetensors(readFileSync(args.ckpt!));
    const result = exportContainer(arch, ckpt);
    // stage next to the target then rename, so a failed run never leaves
    // a partial output file
    const tmpFile = `${args.out}.tmp-${process.pid}`;
    try {
      writeFileSync(tmpFile, result.bytes);
      renameSync(tmpFile, args.out!);
    } catch (e) {
      rmSync(tmpFile, { force: true });
      throw e;
    }
    console.log(
      `wrote ${args.out}: ${result.entryCount} tensors, ` +
        `${result.learnableElements} learnable elements (${result.totalElements} total)`,
    );
    return 0;
  } catch (e) {
    console.error(`error: ${(e as Error).message}`);
    return 1;
  }
}

import { fileURLToPath } from 'node:url';

if (process.argv[1] && fileURLToPath(import.meta.url) === process.argv[1]) {
  process.exit(main(process.argv.slice(2)));
}
