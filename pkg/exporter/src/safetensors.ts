/**
 * Minimal safetensors reader/writer: u64-LE header length, JSON header
 * mapping tensor names to { dtype, shape, data_offsets } relative to the
 * byte buffer that follows, optional "__metadata__" entry.
 */

export interface SafeTensor {
  dtype: string;
  shape: number[];
  /** view into the file buffer, little-endian raw values */
  data: Buffer;
}

export type SafeTensorMap = Map<string, SafeTensor>;

interface HeaderEntry {
  dtype: string;
  shape: number[];
  data_offsets: [number, number];
}

export function parseSafetensors(buf: Buffer): SafeTensorMap {
  if (buf.length < 8) throw new Error(`file too short for safetensors: ${buf.length} bytes`);
  const headerLen = Number(buf.readBigUInt64LE(0));
  if (headerLen <= 0 || 8 + headerLen > buf.length) {
    throw new Error(`corrupt safetensors header length ${headerLen}`);
  }
  let header: Record<string, HeaderEntry>;
  try {
    header = JSON.parse(buf.toString('utf8', 8, 8 + headerLen));
  } catch (e) {
    throw new Error(`invalid safetensors header JSON: ${(e as Error).message}`);
  }
  const payload = buf.subarray(8 + headerLen);
  const out: SafeTensorMap = new Map();
  for (const [name, entry] of Object.entries(header)) {
    if (name === '__metadata__') continue;
    const [start, end] = entry.data_offsets;
    if (!(start >= 0 && end >= start && end <= payload.length)) {
      throw new Error(`tensor ${name}: data_offsets [${start}, ${end}] out of range`);
    }
    out.set(name, {
      dtype: entry.dtype,
      shape: entry.shape,
      data: payload.subarray(start, end),
    });
  }
  return out;
}

export function encodeSafetensors(tensors: Map<string, { dtype: string; shape: number[]; data: Buffer }>): Buffer {
  const header: Record<string, HeaderEntry> = {};
  const buffers: Buffer[] = [];
  let offset = 0;
  for (const [name, t] of tensors) {
    header[name] = {
      dtype: t.dtype,
      shape: t.shape,
      data_offsets: [offset, offset + t.data.length],
    };
    buffers.push(t.data);
    offset += t.data.length;
  }
  let json = JSON.stringify(header);
  while ((8 + Buffer.byteLength(json)) % 8 !== 0) json += ' ';
  const head = Buffer.alloc(8 + Buffer.byteLength(json));
  head.writeBigUInt64LE(BigInt(Buffer.byteLength(json)), 0);
  head.write(json, 8, 'utf8');
  return Buffer.concat([head, ...buffers]);
}
