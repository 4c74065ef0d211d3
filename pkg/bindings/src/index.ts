/** Array-in/array-out access to the setok tokenizer.
 *
 * Every call round-trips through the CLI and its file formats: inputs
 * are copied into SETK tensors in a scratch directory, the CLI runs,
 * and outputs are copied back out, so results are byte-identical to
 * driving the CLI directly. Shapes and dtypes are validated strictly
 * at this boundary.
 */
import { mkdtemp, readFile, rm, writeFile } from "node:fs/promises";
import { tmpdir } from "node:os";
import path from "node:path";

import { ShapeError } from "./errors.js";
import { checkTensor, decodeSetk, encodeSetk, type Tensor } from "./setk.js";
import { runCli } from "./runner.js";

export { Tensor, checkTensor, decodeSetk, encodeSetk } from "./setk.js";
export * from "./errors.js";
export { cliCommand, runCli } from "./runner.js";

export const REMAINDER = "REMAINDER";

export type Seed = [number, number] | typeof REMAINDER;

export interface MaskStack {
  /** (k, h, w) mask tensor. */
  masks: Tensor;
  mode: "hard" | "soft";
  seeds: Seed[];
}

export interface TokenizeConfig {
  knn?: number;
  bandwidth?: number;
  stopTau?: number;
  maxClusters?: number;
  mode?: "hard" | "soft";
  merge?: "attention" | "mean";
  seed?: number;
  weights?: string;
  ppm?: boolean;
}

export interface TokenizeResult {
  masks: MaskStack;
  /** (k, d) pooled tokens. */
  tokens: Tensor;
  /** Per-token member locations, raster order. */
  sources: [number, number][][];
  k: number;
  remainderMass: number;
  /** Raw PPM preview bytes when config.ppm was set. */
  ppm?: Buffer;
}

export interface FixtureParams {
  blobs: number;
  h?: number;
  w?: number;
  d?: number;
  sep?: number;
  seed?: number;
}

export interface FixtureResult {
  grid: Tensor;
  ref: Tensor;
  meta: Record<string, unknown>;
}

export interface MetricsReport {
  kl: number;
  bce: number;
  dice: number;
  miou: number;
  ciou: number;
  k_pred: number;
  k_ref: number;
}

async function withScratch<T>(fn: (dir: string) => Promise<T>): Promise<T> {
  const dir = await mkdtemp(path.join(tmpdir(), "setok-"));
  try {
    return await fn(dir);
  } finally {
    await rm(dir, { recursive: true, force: true });
  }
}

function configFlags(config: TokenizeConfig): string[] {
  const flags: string[] = [];
  if (config.knn !== undefined) flags.push("--knn", String(config.knn));
  if (config.bandwidth !== undefined) flags.push("--bandwidth", String(config.bandwidth));
  if (config.stopTau !== undefined) flags.push("--stop-tau", String(config.stopTau));
  if (config.maxClusters !== undefined) {
    flags.push("--max-clusters", String(config.maxClusters));
  }
  if (config.mode !== undefined) flags.push("--mode", config.mode);
  if (config.merge !== undefined) flags.push("--merge", config.merge);
  if (config.seed !== undefined) flags.push("--seed", String(config.seed));
  if (config.weights !== undefined) flags.push("--weights", config.weights);
  return flags;
}

function parseSeeds(sidecar: string): { mode: "hard" | "soft"; seeds: Seed[] } {
  const lines = sidecar.trim().split("\n");
  const head = JSON.parse(lines[0]) as { mode: "hard" | "soft" };
  const seeds: Seed[] = lines.slice(1).map((line) => {
    const entry = JSON.parse(line) as { seed: [number, number] | string };
    return entry.seed === REMAINDER ? REMAINDER : (entry.seed as [number, number]);
  });
  return { mode: head.mode, seeds };
}

function maskSidecar(stack: MaskStack): string {
  const lines = [JSON.stringify({ config: {}, mode: stack.mode })];
  stack.seeds.forEach((seed, index) => {
    lines.push(JSON.stringify({ index, seed }));
  });
  return lines.join("\n") + "\n";
}

function checkMaskStack(stack: MaskStack): void {
  checkTensor(stack.masks, 3);
  if (stack.seeds.length !== stack.masks.shape[0]) {
    throw new ShapeError(
      `${stack.seeds.length} seeds for ${stack.masks.shape[0]} masks`,
    );
  }
}

/** Cluster a grid and pool its tokens. `grid` must be a rank-3 float32
 * tensor shaped (h, w, d). */
export async function tokenize(
  grid: Tensor,
  config: TokenizeConfig = {},
): Promise<TokenizeResult> {
  checkTensor(grid, 3);
  return withScratch(async (dir) => {
    const gridPath = path.join(dir, "grid.setk");
    const outDir = path.join(dir, "out");
    await writeFile(gridPath, encodeSetk(grid));
    const args = ["tokenize", "--input", gridPath, "--out-dir", outDir];
    if (config.ppm) args.push("--ppm");
    args.push(...configFlags(config));
    const result = await runCli(args);
    const summary = result.json as { k: number; remainder_mass: number };

    const masks = decodeSetk(await readFile(path.join(outDir, "masks.setk")));
    const sidecar = parseSeeds(
      await readFile(path.join(outDir, "masks.meta.jsonl"), "utf8"),
    );
    const tokens = decodeSetk(await readFile(path.join(outDir, "tokens.setk")));
    const sourcesMeta = JSON.parse(
      await readFile(path.join(outDir, "tokens.sources.json"), "utf8"),
    ) as { sources: [number, number][][] };

    const out: TokenizeResult = {
      masks: { masks, mode: sidecar.mode, seeds: sidecar.seeds },
      tokens,
      sources: sourcesMeta.sources,
      k: summary.k,
      remainderMass: summary.remainder_mass,
    };
    if (config.ppm) {
      out.ppm = await readFile(path.join(outDir, "masks.ppm"));
    }
    return out;
  });
}

/** Pool an existing mask stack into tokens. */
export async function merge(
  grid: Tensor,
  stack: MaskStack,
  options: { merge?: "attention" | "mean"; seed?: number; weights?: string } = {},
): Promise<{ tokens: Tensor; sources: [number, number][][] }> {
  checkTensor(grid, 3);
  checkMaskStack(stack);
  if (
    stack.masks.shape[1] !== grid.shape[0] ||
    stack.masks.shape[2] !== grid.shape[1]
  ) {
    throw new ShapeError(
      `mask grid [${stack.masks.shape.slice(1)}] != grid [${grid.shape.slice(0, 2)}]`,
    );
  }
  return withScratch(async (dir) => {
    const gridPath = path.join(dir, "grid.setk");
    const masksPath = path.join(dir, "masks.setk");
    const outDir = path.join(dir, "out");
    await writeFile(gridPath, encodeSetk(grid));
    await writeFile(masksPath, encodeSetk(stack.masks));
    await writeFile(path.join(dir, "masks.meta.jsonl"), maskSidecar(stack));
    const args = ["merge", "--input", gridPath, "--masks", masksPath,
                  "--out-dir", outDir];
    if (options.merge) args.push("--merge", options.merge);
    if (options.seed !== undefined) args.push("--seed", String(options.seed));
    if (options.weights) args.push("--weights", options.weights);
    await runCli(args);
    const tokens = decodeSetk(await readFile(path.join(outDir, "tokens.setk")));
    const sourcesMeta = JSON.parse(
      await readFile(path.join(outDir, "tokens.sources.json"), "utf8"),
    ) as { sources: [number, number][][] };
    return { tokens, sources: sourcesMeta.sources };
  });
}

/** Score a predicted mask stack against reference masks shaped (h, w, n). */
export async function metrics(
  stack: MaskStack,
  ref: Tensor,
): Promise<MetricsReport> {
  checkMaskStack(stack);
  checkTensor(ref, 3);
  if (
    ref.shape[0] !== stack.masks.shape[1] ||
    ref.shape[1] !== stack.masks.shape[2]
  ) {
    throw new ShapeError(
      `reference grid [${ref.shape.slice(0, 2)}] != mask grid [${stack.masks.shape.slice(1)}]`,
    );
  }
  return withScratch(async (dir) => {
    const masksPath = path.join(dir, "masks.setk");
    const refPath = path.join(dir, "ref.setk");
    await writeFile(masksPath, encodeSetk(stack.masks));
    await writeFile(path.join(dir, "masks.meta.jsonl"), maskSidecar(stack));
    await writeFile(refPath, encodeSetk(ref));
    const result = await runCli(["metrics", "--input", masksPath, "--ref", refPath]);
    return result.json as MetricsReport;
  });
}

/** Generate a seeded blob fixture (grid + one-hot reference masks). */
export async function genFixture(params: FixtureParams): Promise<FixtureResult> {
  if (!Number.isInteger(params.blobs) || params.blobs < 1) {
    throw new ShapeError(`blobs must be a positive integer, got ${params.blobs}`);
  }
  return withScratch(async (dir) => {
    const args = [
      "gen-fixture", "--out-dir", dir, "--blobs", String(params.blobs),
    ];
    if (params.h !== undefined) args.push("--h", String(params.h));
    if (params.w !== undefined) args.push("--w", String(params.w));
    if (params.d !== undefined) args.push("--d", String(params.d));
    if (params.sep !== undefined) args.push("--sep", String(params.sep));
    if (params.seed !== undefined) args.push("--seed", String(params.seed));
    await runCli(args);
    const grid = decodeSetk(await readFile(path.join(dir, "grid.setk")));
    const ref = decodeSetk(await readFile(path.join(dir, "ref.setk")));
    const meta = JSON.parse(await readFile(path.join(dir, "meta.json"), "utf8"));
    return { grid, ref, meta };
  });
}
