/** Drives the setok CLI as a subprocess. The command defaults to
 * `python3 -m setok` and can be overridden with the SETOK_CLI env var
 * (whitespace-separated). */
import { execFile } from "node:child_process";
import { promisify } from "node:util";

import { CliError } from "./errors.js";

const execFileAsync = promisify(execFile);

export function cliCommand(): string[] {
  const env = process.env.SETOK_CLI;
  if (env && env.trim().length > 0) {
    return env.trim().split(/\s+/);
  }
  return ["python3", "-m", "setok"];
}

export interface CliResult {
  stdout: string;
  stderr: string;
  json: unknown;
}

export async function runCli(args: string[]): Promise<CliResult> {
  const [cmd, ...prefix] = cliCommand();
  try {
    const { stdout, stderr } = await execFileAsync(cmd, [...prefix, ...args], {
      maxBuffer: 64 * 1024 * 1024,
    });
    return { stdout, stderr, json: JSON.parse(stdout) };
  } catch (err) {
    const e = err as NodeJS.ErrnoException & {
      code?: number | string;
      stderr?: string;
    };
    const exitCode = typeof e.code === "number" ? e.code : -1;
    throw new CliError(
      `setok ${args[0] ?? ""} failed (exit ${e.code}): ${e.stderr ?? e.message}`,
      exitCode,
      e.stderr ?? "",
    );
  }
}
