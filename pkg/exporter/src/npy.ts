/**
 * Minimal reader for NumPy .npy files (format versions 1.0 and 2.0).
 *
 * Supports C-ordered little-endian numeric arrays, which is what
 * np.save writes by default on every mainstream platform.
 */

export interface NpyArray {
  /** dtype string from the header, e.g. "<f4" */
  descr: string;
  shape: number[];
  /** raw element bytes (header stripped) */
  data: Buffer;
}

const MAGIC = Buffer.from("\x93NUMPY", "latin1");

const ELEMENT_SIZES: Record<string, number> = {
  "<f4": 4,
  "<f8": 8,
  "|i1": 1,
  "<i2": 2,
  "<i4": 4,
  "<i8": 8,
  "|u1": 1,
  "<u2": 2,
  "<u4": 4,
  "<u8": 8,
};

export function elementCount(shape: number[]): number {
  return shape.reduce((a, b) => a * b, 1);
}

/** Parse a .npy buffer into its dtype, shape, and raw data bytes. */
export function parseNpy(buffer: Buffer, name = "array"): NpyArray {
  if (buffer.length < 10 || !buffer.subarray(0, 6).equals(MAGIC)) {
    throw new Error(`${name}: not a .npy file (bad magic)`);
  }
  const major = buffer[6];
  let headerLen: number;
  let headerStart: number;
  if (major === 1) {
    headerLen = buffer.readUInt16LE(8);
    headerStart = 10;
  } else if (major === 2) {
    headerLen = buffer.readUInt32LE(8);
    headerStart = 12;
  } else {
    throw new Error(`${name}: unsupported .npy version ${major}.${buffer[7]}`);
  }
  const header = buffer.subarray(headerStart, headerStart + headerLen).toString("latin1");

  const descrMatch = header.match(/'descr':\s*'([^']+)'/);
  const orderMatch = header.match(/'fortran_order':\s*(True|False)/);
  const shapeMatch = header.match(/'shape':\s*\(([^)]*)\)/);
  if (!descrMatch || !orderMatch || !shapeMatch) {
    throw new Error(`${name}: malformed .npy header: ${header.trim()}`);
  }
  if (orderMatch[1] === "True") {
    throw new Error(`${name}: fortran-ordered arrays are not supported`);
  }
  const descr = descrMatch[1];
  if (!(descr in ELEMENT_SIZES)) {
    throw new Error(`${name}: unsupported dtype '${descr}' (need little-endian numeric)`);
  }
  const shape = shapeMatch[1]
    .split(",")
    .map((s) => s.trim())
    .filter((s) => s.length > 0)
    .map((s) => {
      const n = Number(s);
      if (!Number.isInteger(n) || n < 0) {
        throw new Error(`${name}: bad shape entry '${s}'`);
      }
      return n;
    });

  const data = buffer.subarray(headerStart + headerLen);
  const expected = elementCount(shape) * ELEMENT_SIZES[descr];
  if (data.length !== expected) {
    throw new Error(
      `${name}: expected ${expected} data bytes for shape (${shape.join(", ")}) ` +
      `dtype ${descr}, found ${data.length}`,
    );
  }
  return { descr, shape, data };
}

function readElement(arr: NpyArray, index: number): number {
  const d = arr.data;
  switch (arr.descr) {
    case "<f4": return d.readFloatLE(index * 4);
    case "<f8": return d.readDoubleLE(index * 8);
    case "|i1": return d.readInt8(index);
    case "<i2": return d.readInt16LE(index * 2);
    case "<i4": return d.readInt32LE(index * 4);
    case "<i8": return Number(d.readBigInt64LE(index * 8));
    case "|u1": return d.readUInt8(index);
    case "<u2": return d.readUInt16LE(index * 2);
    case "<u4": return d.readUInt32LE(index * 4);
    case "<u8": return Number(d.readBigUInt64LE(index * 8));
    default: throw new Error(`unsupported dtype ${arr.descr}`);
  }
}

/**
 * Array contents as float32 blob bytes (little-endian).
 *
 * float32 sources are copied bit for bit; float64 sources are downcast with
 * `downcast` flagged true so callers can warn. Integer sources convert
 * exactly where float32 can represent them.
 */
export function toFloat32Bytes(arr: NpyArray, name = "array"): { bytes: Buffer; downcast: boolean } {
  const count = elementCount(arr.shape);
  if (arr.descr === "<f4") {
    return { bytes: Buffer.from(arr.data), downcast: false };
  }
  const out = Buffer.alloc(count * 4);
  for (let i = 0; i < count; i++) {
    out.writeFloatLE(Math.fround(readElement(arr, i)), i * 4);
  }
  return { bytes: out, downcast: arr.descr === "<f8" };
}

/** Array contents as non-negative integers (for labels). */
export function toUint32(arr: NpyArray, name = "labels"): Uint32Array {
  const count = elementCount(arr.shape);
  const out = new Uint32Array(count);
  for (let i = 0; i < count; i++) {
    const v = readElement(arr, i);
    if (!Number.isInteger(v) || v < 0 || v > 0xffffffff) {
      throw new Error(`${name}: value ${v} at index ${i} is not a valid class index`);
    }
    out[i] = v;
  }
  return out;
}

/** Scan float32 blob bytes for NaN/Inf; returns the first bad index or -1. */
export function firstNonFinite(bytes: Buffer): number {
  for (let i = 0; i * 4 < bytes.length; i++) {
    if (!Number.isFinite(bytes.readFloatLE(i * 4))) {
      return i;
    }
  }
  return -1;
}
