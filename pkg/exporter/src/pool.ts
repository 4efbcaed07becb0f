/**
 * Writes the cascadekit pool format: pool.json manifest plus raw
 * little-endian blobs (<entry>.f32 logits, labels.u32). Output is
 * byte-identical across runs for identical inputs.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { NpyArray, elementCount, firstNonFinite, parseNpy, toFloat32Bytes, toUint32 } from "./npy.js";

export interface ExportEntry {
  modelId: string;
  modelType: string;
  cost: number;
  logitsPath: string;
  resolution?: number;
  replicateIndex?: number;
}

export interface ExportJob {
  labelsPath: string;
  outDir: string;
  entries: ExportEntry[];
  /** called once per float64 source that was downcast to float32 */
  warn?: (message: string) => void;
}

function loadNpyFile(filePath: string, name: string): NpyArray {
  if (!fs.existsSync(filePath)) {
    throw new Error(`${name}: file not found: ${filePath}`);
  }
  return parseNpy(fs.readFileSync(filePath), name);
}

function blobName(index: number, modelId: string): string {
  const safe = modelId.replace(/[^A-Za-z0-9._-]/g, "_");
  return `${String(index).padStart(3, "0")}_${safe}.f32`;
}

/**
 * Validate the job's arrays and write a loadable pool directory.
 * Returns the manifest path.
 */
export function exportPool(job: ExportJob): string {
  if (job.entries.length === 0) {
    throw new Error("export needs at least one --entry");
  }
  const warn = job.warn ?? ((m) => console.warn(m));

  const labelsArr = loadNpyFile(job.labelsPath, "labels");
  if (labelsArr.shape.length !== 1) {
    throw new Error(`labels: expected a 1-D array, got shape (${labelsArr.shape.join(", ")})`);
  }
  const labels = toUint32(labelsArr, "labels");
  const n = labels.length;
  if (n === 0) {
    throw new Error("labels: empty array");
  }

  let numClasses = -1;
  const seen = new Set<string>();
  const blobs: { name: string; bytes: Buffer }[] = [];
  const records = [];
  for (let i = 0; i < job.entries.length; i++) {
    const entry = job.entries[i];
    const label = `entry '${entry.modelId}'`;
    if (seen.has(entry.modelId)) {
      throw new Error(`duplicate model_id '${entry.modelId}'`);
    }
    seen.add(entry.modelId);
    if (!(entry.cost > 0)) {
      throw new Error(`${label}: cost must be > 0, got ${entry.cost}`);
    }
    const arr = loadNpyFile(entry.logitsPath, label);
    if (arr.shape.length !== 2) {
      throw new Error(`${label}: expected a (N, C) array, got shape (${arr.shape.join(", ")})`);
    }
    const [rows, cols] = arr.shape;
    if (rows !== n) {
      throw new Error(`${label}: ${rows} examples but labels have ${n}`);
    }
    if (numClasses === -1) {
      numClasses = cols;
    } else if (cols !== numClasses) {
      throw new Error(`${label}: ${cols} classes but earlier entries have ${numClasses}`);
    }
    const { bytes, downcast } = toFloat32Bytes(arr, label);
    if (downcast) {
      warn(`${label}: float64 logits downcast to float32`);
    }
    const bad = firstNonFinite(bytes);
    if (bad !== -1) {
      throw new Error(
        `${label}: non-finite logit at example ${Math.floor(bad / cols)}, class ${bad % cols}`,
      );
    }
    const name = blobName(i, entry.modelId);
    blobs.push({ name, bytes });
    records.push({
      model_id: entry.modelId,
      model_type: entry.modelType,
      cost: entry.cost,
      resolution: entry.resolution ?? null,
      replicate_index: entry.replicateIndex ?? 0,
      logits: name,
    });
  }

  for (const v of labels) {
    if (v >= numClasses) {
      throw new Error(`labels: class ${v} out of range (num_classes=${numClasses})`);
    }
  }

  fs.mkdirSync(job.outDir, { recursive: true });
  for (const blob of blobs) {
    fs.writeFileSync(path.join(job.outDir, blob.name), blob.bytes);
  }
  fs.writeFileSync(path.join(job.outDir, "labels.u32"), Buffer.from(labels.buffer));

  const manifest = {
    version: 1,
    num_examples: n,
    num_classes: numClasses,
    labels: "labels.u32",
    entries: records,
  };
  const manifestPath = path.join(job.outDir, "pool.json");
  fs.writeFileSync(manifestPath, JSON.stringify(manifest, null, 2) + "\n");
  return manifestPath;
}

/** Parse one --entry spec: model_id=...,type=...,cost=...,logits=path[,resolution=N][,replicate=N] */
export function parseEntrySpec(spec: string): ExportEntry {
  const fields = new Map<string, string>();
  for (const part of spec.split(",")) {
    const eq = part.indexOf("=");
    if (eq === -1) {
      throw new Error(`bad entry field '${part}' in: ${spec}`);
    }
    fields.set(part.slice(0, eq).trim(), part.slice(eq + 1).trim());
  }
  for (const required of ["model_id", "type", "cost", "logits"]) {
    if (!fields.has(required)) {
      throw new Error(`entry spec missing '${required}': ${spec}`);
    }
  }
  const cost = Number(fields.get("cost"));
  if (!Number.isFinite(cost)) {
    throw new Error(`entry cost is not a number: ${fields.get("cost")}`);
  }
  const entry: ExportEntry = {
    modelId: fields.get("model_id")!,
    modelType: fields.get("type")!,
    cost,
    logitsPath: fields.get("logits")!,
  };
  if (fields.has("resolution")) {
    entry.resolution = Number(fields.get("resolution"));
  }
  if (fields.has("replicate")) {
    entry.replicateIndex = Number(fields.get("replicate"));
  }
  return entry;
}
