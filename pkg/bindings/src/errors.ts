/** Typed boundary errors; format errors mirror the core error names and
 * carry the byte offset where the problem was detected. */

export class SetokBindingError extends Error {
  constructor(message: string) {
    super(message);
    this.name = new.target.name;
  }
}

export class FormatError extends SetokBindingError {
  readonly offset: number;
  constructor(message: string, offset: number) {
    super(`${message} (at byte offset ${offset})`);
    this.offset = offset;
  }
}

export class BadMagicError extends FormatError {}
export class UnsupportedVersionError extends FormatError {}
export class RankMismatchError extends FormatError {}
export class NonFiniteValueError extends FormatError {}
export class TruncatedPayloadError extends FormatError {}

/** Input array has the wrong element type. */
export class DtypeError extends SetokBindingError {}

/** Input array disagrees with its declared shape. */
export class ShapeError extends SetokBindingError {}

/** The underlying CLI exited non-zero. */
export class CliError extends SetokBindingError {
  readonly exitCode: number;
  readonly stderr: string;
  constructor(message: string, exitCode: number, stderr: string) {
    super(message);
    this.exitCode = exitCode;
    this.stderr = stderr;
  }
}
