import { describe, expect, it } from "vitest";

import { elementCount, parseNpy, toFloat32Bytes, toUint32 } from "../src/npy.js";
import { float32Buffer, float64Buffer, int64Buffer, writeNpy } from "./helpers.js";

describe("parseNpy", () => {
  it("round-trips a float32 matrix", () => {
    const data = float32Buffer([1.5, -2.25, 3, 0.1, -0, 7]);
    const arr = parseNpy(writeNpy("<f4", [3, 2], data));
    expect(arr.descr).toBe("<f4");
    expect(arr.shape).toEqual([3, 2]);
    expect(Buffer.from(arr.data)).toEqual(data);
  });

  it("parses 1-D int64 arrays", () => {
    const arr = parseNpy(writeNpy("<i8", [4], int64Buffer([0, 1, 2, 1])));
    expect(arr.shape).toEqual([4]);
    expect(Array.from(toUint32(arr))).toEqual([0, 1, 2, 1]);
  });

  it("rejects bad magic", () => {
    expect(() => parseNpy(Buffer.from("not an npy file at all"))).toThrow(/magic/);
  });

  it("rejects fortran order", () => {
    const buf = writeNpy("<f4", [2, 2], float32Buffer([1, 2, 3, 4]));
    const patched = Buffer.from(
      buf.toString("latin1").replace("'fortran_order': False", "'fortran_order': True "),
      "latin1",
    );
    expect(() => parseNpy(patched)).toThrow(/fortran/);
  });

  it("rejects truncated data", () => {
    const buf = writeNpy("<f4", [3, 2], float32Buffer([1, 2, 3, 4, 5, 6]));
    expect(() => parseNpy(buf.subarray(0, buf.length - 4))).toThrow(/expected 24 data bytes/);
  });

  it("rejects big-endian dtypes", () => {
    const buf = writeNpy(">f4", [2], float32Buffer([1, 2]));
    expect(() => parseNpy(buf)).toThrow(/unsupported dtype/);
  });
});

describe("toFloat32Bytes", () => {
  it("copies float32 sources bit for bit", () => {
    const data = float32Buffer([0.1, -1e-38, 42]);
    const arr = parseNpy(writeNpy("<f4", [3], data));
    const { bytes, downcast } = toFloat32Bytes(arr);
    expect(downcast).toBe(false);
    expect(bytes).toEqual(data);
  });

  it("downcasts float64 with the flag set", () => {
    const arr = parseNpy(writeNpy("<f8", [2], float64Buffer([0.1, 2.5])));
    const { bytes, downcast } = toFloat32Bytes(arr);
    expect(downcast).toBe(true);
    expect(bytes.readFloatLE(0)).toBe(Math.fround(0.1));
    expect(bytes.readFloatLE(4)).toBe(2.5);
  });
});

describe("toUint32", () => {
  it("rejects negatives", () => {
    const arr = parseNpy(writeNpy("<i8", [2], int64Buffer([1, -1])));
    expect(() => toUint32(arr)).toThrow(/not a valid class index/);
  });
});

it("elementCount multiplies the shape", () => {
  expect(elementCount([3, 2])).toBe(6);
  expect(elementCount([7])).toBe(7);
});
