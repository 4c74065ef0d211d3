/** SETK tensor files in TypeScript, byte-compatible with the Python
 * implementation: "SETK" magic, u16 version (=1), u16 rank (2 or 3),
 * rank x u32 dims, little-endian float32 payload in row-major order.
 */
import {
  BadMagicError,
  DtypeError,
  NonFiniteValueError,
  RankMismatchError,
  ShapeError,
  TruncatedPayloadError,
  UnsupportedVersionError,
} from "./errors.js";

export const MAGIC = "SETK";
export const VERSION = 1;

const OFF_VERSION = 4;
const OFF_RANK = 6;
const OFF_DIMS = 8;

/** A dense float32 tensor exchanged by copy. */
export interface Tensor {
  data: Float32Array;
  shape: number[];
}

export function checkTensor(t: Tensor, expectRank?: number): void {
  if (!(t.data instanceof Float32Array)) {
    throw new DtypeError(
      `expected Float32Array payload, got ${Object.prototype.toString.call(t.data)}`,
    );
  }
  if (expectRank !== undefined && t.shape.length !== expectRank) {
    throw new ShapeError(`expected rank ${expectRank}, got shape [${t.shape}]`);
  }
  if (t.shape.length !== 2 && t.shape.length !== 3) {
    throw new ShapeError(`rank must be 2 or 3, got shape [${t.shape}]`);
  }
  let count = 1;
  for (const dim of t.shape) {
    if (!Number.isInteger(dim) || dim < 1) {
      throw new ShapeError(`dimensions must be positive integers, got [${t.shape}]`);
    }
    count *= dim;
  }
  if (t.data.length !== count) {
    throw new ShapeError(
      `payload holds ${t.data.length} values but shape [${t.shape}] needs ${count}`,
    );
  }
}

export function encodeSetk(t: Tensor): Buffer {
  checkTensor(t);
  const rank = t.shape.length;
  const headerSize = OFF_DIMS + 4 * rank;
  const buf = Buffer.alloc(headerSize + 4 * t.data.length);
  buf.write(MAGIC, 0, "ascii");
  buf.writeUInt16LE(VERSION, OFF_VERSION);
  buf.writeUInt16LE(rank, OFF_RANK);
  t.shape.forEach((dim, i) => buf.writeUInt32LE(dim, OFF_DIMS + 4 * i));
  for (let i = 0; i < t.data.length; i++) {
    const v = t.data[i];
    if (!Number.isFinite(v)) {
      throw new NonFiniteValueError(`value #${i} is ${v}`, headerSize + 4 * i);
    }
    buf.writeFloatLE(v, headerSize + 4 * i);
  }
  return buf;
}

export function decodeSetk(buf: Buffer): Tensor {
  if (buf.length < OFF_VERSION || buf.toString("ascii", 0, 4) !== MAGIC) {
    throw new BadMagicError(`expected magic "${MAGIC}"`, 0);
  }
  if (buf.length < OFF_RANK) {
    throw new TruncatedPayloadError("header ends inside version field", buf.length);
  }
  const version = buf.readUInt16LE(OFF_VERSION);
  if (version !== VERSION) {
    throw new UnsupportedVersionError(
      `version ${version}, expected ${VERSION}`,
      OFF_VERSION,
    );
  }
  if (buf.length < OFF_DIMS) {
    throw new TruncatedPayloadError("header ends inside rank field", buf.length);
  }
  const rank = buf.readUInt16LE(OFF_RANK);
  if (rank !== 2 && rank !== 3) {
    throw new RankMismatchError(`rank ${rank} not in {2, 3}`, OFF_RANK);
  }
  const headerSize = OFF_DIMS + 4 * rank;
  if (buf.length < headerSize) {
    throw new TruncatedPayloadError("header ends inside dims field", buf.length);
  }
  const shape: number[] = [];
  for (let i = 0; i < rank; i++) {
    const dim = buf.readUInt32LE(OFF_DIMS + 4 * i);
    if (dim === 0) {
      throw new RankMismatchError(`dimension ${i} is zero`, OFF_DIMS + 4 * i);
    }
    shape.push(dim);
  }
  const count = shape.reduce((a, b) => a * b, 1);
  const expected = headerSize + 4 * count;
  if (buf.length < expected) {
    throw new TruncatedPayloadError(
      `payload holds ${Math.floor((buf.length - headerSize) / 4)} of ${count} values`,
      buf.length,
    );
  }
  if (buf.length > expected) {
    throw new TruncatedPayloadError(
      `${buf.length - expected} trailing bytes after payload`,
      expected,
    );
  }
  const data = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    const v = buf.readFloatLE(headerSize + 4 * i);
    if (!Number.isFinite(v)) {
      throw new NonFiniteValueError(`value #${i} is ${v}`, headerSize + 4 * i);
    }
    data[i] = v;
  }
  return { data, shape };
}
