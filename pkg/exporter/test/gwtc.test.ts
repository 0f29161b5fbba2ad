import assert from 'node:assert/strict';
import { test } from 'node:test';

import { decodeGwtc, encodeGwtc, GwtcEntry } from '../src/gwtc.js';

function f32(values: number[]): Buffer {
  const b = Buffer.alloc(values.length * 4);
  values.forEach((v, i) => b.writeFloatLE(v, i * 4));
  return b;
}

test('empty container is exactly 12 bytes', () => {
  const bytes = encodeGwtc([]);
  assert.equal(bytes.length, 12);
  assert.equal(bytes.toString('ascii', 0, 4), 'GWTC');
  assert.equal(bytes.readUInt32LE(4), 1);
  assert.equal(bytes.readUInt32LE(8), 0);
});

test('single f32 (2,2) entry named "w" is 43 bytes', () => {
  const bytes = encodeGwtc([{ name: 'w', dtype: 'f32', dims: [2, 2], data: f32([1, 2, 3, 4]) }]);
  assert.equal(bytes.length, 12 + (4 + 1) + 1 + 1 + 8 + 16);
});

test('round trip preserves order, dims and raw bytes', () => {
  const entries: GwtcEntry[] = [
    { name: 'node0.conv.weight', dtype: 'f32', dims: [2, 3], data: f32([1, -2, 3.5, 0, 7, -0.25]) },
    { name: 'node0.bn.gamma', dtype: 'f32', dims: [2], data: f32([1, 1]) },
    { name: 'half', dtype: 'f16', dims: [3], data: Buffer.from([0, 60, 0, 188, 0, 0]) },
  ];
  const decoded = decodeGwtc(encodeGwtc(entries));
  assert.deepEqual(
    decoded.map((e) => e.name),
    entries.map((e) => e.name),
  );
  decoded.forEach((e, i) => {
    assert.deepEqual(e.dims, entries[i].dims);
    assert.equal(e.dtype, entries[i].dtype);
    assert.ok(e.data.equals(entries[i].data));
  });
});

test('re-encoding a decoded container is byte-identical', () => {
  const entries: GwtcEntry[] = [
    { name: 'a', dtype: 'f32', dims: [4], data: f32([9, 8, 7, 6]) },
    { name: 'b', dtype: 'f32', dims: [1, 2], data: f32([0.5, -0.5]) },
  ];
  const once = encodeGwtc(entries);
  const twice = encodeGwtc(decodeGwtc(once));
  assert.ok(once.equals(twice));
});

test('duplicate names are rejected', () => {
  const e: GwtcEntry = { name: 'w', dtype: 'f32', dims: [1], data: f32([1]) };
  assert.throws(() => encodeGwtc([e, e]), /duplicate/);
});

test('payload size must match dims', () => {
  assert.throws(
    () => encodeGwtc([{ name: 'w', dtype: 'f32', dims: [3], data: f32([1]) }]),
    /need 12/,
  );
});

test('decoder rejects bad magic, version and truncation', () => {
  const good = encodeGwtc([{ name: 'w', dtype: 'f32', dims: [2], data: f32([1, 2]) }]);
  const badMagic = Buffer.from(good);
  badMagic.write('NOPE', 0, 'ascii');
  assert.throws(() => decodeGwtc(badMagic), /magic/);
  const badVersion = Buffer.from(good);
  badVersion.writeUInt32LE(3, 4);
  assert.throws(() => decodeGwtc(badVersion), /version/);
  for (const cut of [4, 13, good.length - 1]) {
    assert.throws(() => decodeGwtc(good.subarray(0, cut)), /truncated/);
  }
  assert.throws(() => decodeGwtc(Buffer.concat([good, Buffer.from([0])])), /trailing/);
});
