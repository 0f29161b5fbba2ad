/**
 * GWTC v1 binary container, little-endian throughout:
 *
 *   magic   "GWTC"
 *   version u32 = 1
 *   count   u32
 *   entry*  { name_len u32, name utf8,
 *             dtype u8 (0 = f32, 1 = f16), ndim u8, dims u32 * ndim,
 *             raw values }
 */

export const GWTC_MAGIC = 'GWTC';
export const GWTC_VERSION = 1;

export interface GwtcEntry {
  name: string;
  dtype: 'f32' | 'f16';
  dims: number[];
  /** raw little-endian values, dims product * (4 | 2) bytes */
  data: Buffer;
}

const DTYPE_CODE = { f32: 0, f16: 1 } as const;
const CODE_DTYPE: Record<number, 'f32' | 'f16'> = { 0: 'f32', 1: 'f16' };
const ITEM_SIZE = { f32: 4, f16: 2 } as const;

export function elementCount(dims: number[]): number {
  return dims.reduce((a, b) => a * b, 1);
}

export function encodeGwtc(entries: GwtcEntry[]): Buffer {
  const parts: Buffer[] = [];
  const header = Buffer.alloc(12);
  header.write(GWTC_MAGIC, 0, 'ascii');
  header.writeUInt32LE(GWTC_VERSION, 4);
  header.writeUInt32LE(entries.length, 8);
  parts.push(header);
  const seen = new Set<string>();
  for (const e of entries) {
    if (seen.has(e.name)) throw new Error(`duplicate weight name: ${e.name}`);
    seen.add(e.name);
    const expected = elementCount(e.dims) * ITEM_SIZE[e.dtype];
    if (e.data.length !== expected) {
      throw new Error(
        `${e.name}: payload is ${e.data.length} bytes, dims ${JSON.stringify(e.dims)} need ${expected}`,
      );
    }
    const nameBytes = Buffer.from(e.name, 'utf8');
    const meta = Buffer.alloc(4 + nameBytes.length + 2 + 4 * e.dims.length);
    let off = 0;
    meta.writeUInt32LE(nameBytes.length, off);
    off += 4;
    nameBytes.copy(meta, off);
    off += nameBytes.length;
    meta.writeUInt8(DTYPE_CODE[e.dtype], off++);
    meta.writeUInt8(e.dims.length, off++);
    for (const d of e.dims) {
      meta.writeUInt32LE(d, off);
      off += 4;
    }
    parts.push(meta, e.data);
  }
  return Buffer.concat(parts);
}

export function decodeGwtc(buf: Buffer): GwtcEntry[] {
  if (buf.length < 12) throw new Error(`truncated file: ${buf.length} bytes`);
  if (buf.toString('ascii', 0, 4) !== GWTC_MAGIC) {
    throw new Error(`bad magic ${JSON.stringify(buf.toString('ascii', 0, 4))}`);
  }
  const version = buf.readUInt32LE(4);
  if (version !== GWTC_VERSION) throw new Error(`unsupported version ${version}`);
  const count = buf.readUInt32LE(8);
  const entries: GwtcEntry[] = [];
  let pos = 12;
  const need = (n: number, what: string) => {
    if (pos + n > buf.length) throw new Error(`truncated file in ${what}`);
  };
  for (let i = 0; i < count; i++) {
    need(4, 'name length');
    const nameLen = buf.readUInt32LE(pos);
    pos += 4;
    need(nameLen + 2, 'entry header');
    const name = buf.toString('utf8', pos, pos + nameLen);
    pos += nameLen;
    const code = buf.readUInt8(pos++);
    const ndim = buf.readUInt8(pos++);
    const dtype = CODE_DTYPE[code];
    if (!dtype) throw new Error(`unknown dtype code ${code} for ${name}`);
    need(4 * ndim, `dims of ${name}`);
    const dims: number[] = [];
    for (let d = 0; d < ndim; d++) {
      dims.push(buf.readUInt32LE(pos));
      pos += 4;
    }
    const nbytes = elementCount(dims) * ITEM_SIZE[dtype];
    need(nbytes, `values of ${name}`);
    entries.push({ name, dtype, dims, data: buf.subarray(pos, pos + nbytes) });
    pos += nbytes;
  }
  if (pos !== buf.length) throw new Error(`${buf.length - pos} trailing bytes`);
  return entries;
}
