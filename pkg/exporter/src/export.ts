/**
 * Checkpoint -> GWTC conversion: walk the architecture's parameter
 * manifest in order, pull each tensor from the checkpoint under its
 * translated name, validate dtype/shape, and emit GWTC v1 bytes.
 * All offenders are collected before aborting so one run reports the
 * complete damage.
 */

import { GwtcEntry, encodeGwtc, elementCount } from './gwtc.js';
import { ArchDoc, isIgnorableSourceKey, normalizePrefixes, toSourceName } from './mapping.js';
import { SafeTensorMap } from './safetensors.js';

export interface ExportResult {
  bytes: Buffer;
  entryCount: number;
  learnableElements: number;
  totalElements: number;
}

export function exportContainer(arch: ArchDoc, ckpt: SafeTensorMap): ExportResult {
  const strip = normalizePrefixes([...ckpt.keys()]);
  const byNormalizedKey = new Map<string, { key: string; dtype: string; shape: number[]; data: Buffer }>();
  for (const [key, tensor] of ckpt) {
    const norm = strip(key);
    if (byNormalizedKey.has(norm)) {
      throw new Error(`checkpoint keys collide after prefix normalization: ${norm}`);
    }
    byNormalizedKey.set(norm, { key, ...tensor });
  }

  const problems: string[] = [];
  const entries: GwtcEntry[] = [];
  const consumed = new Set<string>();
  let learnable = 0;
  let total = 0;

  for (const param of arch.params) {
    const sourceName = toSourceName(param.name);
    const tensor = byNormalizedKey.get(sourceName);
    if (!tensor) {
      problems.push(`missing: ${param.name} (expected checkpoint key ${sourceName})`);
      continue;
    }
    consumed.add(sourceName);
    if (tensor.dtype !== 'F32') {
      problems.push(
        `dtype: ${tensor.key} is ${tensor.dtype}, expected F32 ` +
          '(re-dump the checkpoint with float() applied)',
      );
      continue;
    }
    const want = JSON.stringify(param.shape);
    const got = JSON.stringify(tensor.shape);
    if (want !== got) {
      problems.push(`shape: ${param.name} expects ${want}, checkpoint has ${got}`);
      continue;
    }
    const n = elementCount(param.shape);
    total += n;
    if (!param.name.endsWith('.mean') && !param.name.endsWith('.var')) {
      learnable += n;
    }
    entries.push({
      name: param.name,
      dtype: 'f32',
      dims: param.shape,
      data: tensor.data,
    });
  }

  for (const [norm, tensor] of byNormalizedKey) {
    if (!consumed.has(norm) && !isIgnorableSourceKey(norm)) {
      problems.push(`unmapped checkpoint tensor: ${tensor.key}`);
    }
  }

  if (problems.length > 0) {
    throw new Error(
      `checkpoint does not bind to ${arch.family}-${arch.scale} (nc=${arch.nc}), ` +
        `${problems.length} problem(s):\n  ${problems.join('\n  ')}`,
    );
  }
  return {
    bytes: encodeGwtc(entries),
    entryCount: entries.length,
    learnableElements: learnable,
    totalElements: total,
  };
}
