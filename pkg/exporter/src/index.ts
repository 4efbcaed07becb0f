export { parseNpy, toFloat32Bytes, toUint32, elementCount, firstNonFinite } from "./npy.js";
export type { NpyArray } from "./npy.js";
export { exportPool, parseEntrySpec } from "./pool.js";
export type { ExportEntry, ExportJob } from "./pool.js";
