/** Hand-built .npy buffers for tests, written straight from the format spec. */

export function writeNpy(descr: string, shape: number[], data: Buffer): Buffer {
  const shapeRepr = shape.length === 1 ? `(${shape[0]},)` : `(${shape.join(", ")})`;
  const header = `{'descr': '${descr}', 'fortran_order': False, 'shape': ${shapeRepr}, }`;
  const pad = (64 - ((10 + header.length + 1) % 64)) % 64;
  const padded = header + " ".repeat(pad) + "\n";
  const out = Buffer.alloc(10 + padded.length + data.length);
  Buffer.from("\x93NUMPY", "latin1").copy(out, 0);
  out[6] = 1;
  out[7] = 0;
  out.writeUInt16LE(padded.length, 8);
  Buffer.from(padded, "latin1").copy(out, 10);
  data.copy(out, 10 + padded.length);
  return out;
}

export function float32Buffer(values: number[]): Buffer {
  const buf = Buffer.alloc(values.length * 4);
  values.forEach((v, i) => buf.writeFloatLE(Math.fround(v), i * 4));
  return buf;
}

export function float64Buffer(values: number[]): Buffer {
  const buf = Buffer.alloc(values.length * 8);
  values.forEach((v, i) => buf.writeDoubleLE(v, i * 8));
  return buf;
}

export function int64Buffer(values: number[]): Buffer {
  const buf = Buffer.alloc(values.length * 8);
  values.forEach((v, i) => buf.writeBigInt64LE(BigInt(v), i * 8));
  return buf;
}
