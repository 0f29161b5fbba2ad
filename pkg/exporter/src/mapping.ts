/**
 * Name mapping between the reference training environment's state-dict
 * paths ("model.{i}....") and GWTC names ("node{i}...."), driven by the
 * architecture JSON document the detector CLI exports.
 */

export interface ArchParam {
  name: string;
  shape: number[];
}

export interface ArchDoc {
  schema_version: number;
  family: string;
  scale: string;
  nc: number;
  nodes: { index: number; kind: string; inputs: number[]; args: Record<string, unknown> }[];
  params: ArchParam[];
}

export function parseArchDoc(text: string): ArchDoc {
  let doc: ArchDoc;
  try {
    doc = JSON.parse(text);
  } catch (e) {
    throw new Error(`invalid architecture JSON: ${(e as Error).message}`);
  }
  for (const key of ['schema_version', 'family', 'scale', 'nc', 'nodes', 'params'] as const) {
    if (!(key in doc)) throw new Error(`architecture JSON missing key "${key}"`);
  }
  if (doc.schema_version !== 1) {
    throw new Error(`unsupported arch schema version ${doc.schema_version}`);
  }
  if (!Array.isArray(doc.params) || doc.params.length === 0) {
    throw new Error('architecture JSON has no parameter manifest (re-export without --no-params)');
  }
  return doc;
}

// role suffix translation: GWTC role -> state-dict suffix
const ROLE_MAP: Record<string, string> = {
  gamma: 'weight',
  beta: 'bias',
  mean: 'running_mean',
  var: 'running_var',
  weight: 'weight',
  bias: 'bias',
};

// structural segment renames; {k} marks an indexed segment
const SEGMENT_MAP: Record<string, string> = {
  primary: 'cv1', // ghost conv dense half
  cheap: 'cv2', // ghost conv depthwise half
  expand: 'conv.0', // ghost bottleneck stages live in a 3-slot chain
  reduce: 'conv.2',
  ffn1: 'ffn.0',
  ffn2: 'ffn.1',
  c1: '0', // detect branch stages are bare sequential slots
  c2: '1',
  final: '2',
  dw1: '0.0', // lightweight class branch pairs
  pw1: '0.1',
  dw2: '1.0',
  pw2: '1.1',
};

const INDEXED = [
  { re: /^node(\d+)$/, to: 'model.$1' },
  { re: /^m(\d+)$/, to: 'm.$1' },
  { re: /^box(\d+)$/, to: 'cv2.$1' },
  { re: /^cls(\d+)$/, to: 'cv3.$1' },
];

/** GWTC parameter name -> reference state-dict key. */
export function toSourceName(gwtcName: string): string {
  const segments = gwtcName.split('.');
  const out: string[] = [];
  for (let i = 0; i < segments.length; i++) {
    const seg = segments[i];
    const isLast = i === segments.length - 1;
    if (isLast) {
      const role = ROLE_MAP[seg];
      if (!role) throw new Error(`${gwtcName}: unknown parameter role "${seg}"`);
      out.push(role);
      continue;
    }
    if (seg === 'bn' || seg === 'conv') {
      out.push(seg);
      continue;
    }
    if (seg in SEGMENT_MAP) {
      out.push(SEGMENT_MAP[seg]);
      continue;
    }
    const indexed = INDEXED.find((r) => r.re.test(seg));
    if (indexed) {
      out.push(seg.replace(indexed.re, indexed.to));
      continue;
    }
    out.push(seg); // cv1/cv2/cv3, qkv, proj, pe, attn
  }
  return out.join('.');
}

/** Source keys carrying no learnable/runtime content for GWTC purposes. */
export function isIgnorableSourceKey(key: string): boolean {
  return key.endsWith('.num_batches_tracked') || /(^|\.)dfl\./.test(key);
}

/**
 * Checkpoints dumped from different wrappers nest the core module under
 * zero or more "model." prefixes; normalize to keys starting "model.{i}.".
 */
export function normalizePrefixes(keys: string[]): (key: string) => string {
  const candidates = ['', 'model.', 'model.model.'];
  for (const strip of candidates) {
    const usable = keys.filter((k) => !isIgnorableSourceKey(k));
    if (
      usable.length > 0 &&
      usable.every((k) => k.startsWith(strip) && /^model\.\d+\./.test(k.slice(strip.length)))
    ) {
      return (key) => (key.startsWith(strip) ? key.slice(strip.length) : key);
    }
  }
  throw new Error(
    'checkpoint keys do not look like a detector state dict (expected "model.{index}...." paths)',
  );
}
