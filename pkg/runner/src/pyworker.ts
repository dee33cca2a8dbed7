/**
 * Runs one generated test in a fresh python3 harness process.
 *
 * The harness enforces the per-test timeout internally (interval timer) so
 * it can report partial coverage; this side adds a hard kill with a small
 * grace period as the backstop for tests that block signal delivery.
 */
import { spawn } from "child_process";
import * as path from "path";

export interface HarnessResult {
  program_ok: boolean;
  diagnostic: string | null;
  total_lines: number;
  total_branches: number;
  syntax_ok: boolean;
  exec_ok: boolean;
  timed_out: boolean;
  covered_lines: number[];
  covered_branches: number[];
}

export const HARNESS_PATH = path.resolve(__dirname, "..", "py", "harness.py");
const KILL_GRACE_MS = 1500;

export function pythonBinary(): string {
  return process.env.COVERAGE_RUNNER_PYTHON || "python3";
}

const KILLED_RESULT: Omit<HarnessResult, "total_lines" | "total_branches"> = {
  program_ok: true,
  diagnostic: "hard-killed after timeout grace period",
  syntax_ok: true,
  exec_ok: false,
  timed_out: true,
  covered_lines: [],
  covered_branches: [],
};

export function runTest(
  programSource: string,
  testCode: string,
  timeoutS: number,
): Promise<HarnessResult> {
  return new Promise((resolve, reject) => {
    const child = spawn(pythonBinary(), [HARNESS_PATH], {
      stdio: ["pipe", "pipe", "pipe"],
    });
    const stdout: Buffer[] = [];
    const stderr: Buffer[] = [];
    let killed = false;

    const killTimer = setTimeout(() => {
      killed = true;
      child.kill("SIGKILL");
    }, (timeoutS + KILL_GRACE_MS / 1000) * 1000);

    child.stdout.on("data", (chunk: Buffer) => stdout.push(chunk));
    child.stderr.on("data", (chunk: Buffer) => stderr.push(chunk));
    child.on("error", (err) => {
      clearTimeout(killTimer);
      reject(new Error(`cannot spawn ${pythonBinary()}: ${err.message}`));
    });
    child.on("close", (code) => {
      clearTimeout(killTimer);
      if (killed) {
        resolve({ ...KILLED_RESULT, total_lines: 0, total_branches: 0 });
        return;
      }
      const out = Buffer.concat(stdout).toString("utf-8");
      if (code !== 0 || !out.trim()) {
        reject(
          new Error(
            `harness exited with code ${code}: ${Buffer.concat(stderr).toString("utf-8").slice(0, 400)}`,
          ),
        );
        return;
      }
      try {
        resolve(JSON.parse(out) as HarnessResult);
      } catch (err) {
        reject(new Error(`harness produced invalid JSON: ${err}`));
      }
    });

    child.stdin.write(
      JSON.stringify({ program_source: programSource, test_code: testCode, timeout_s: timeoutS }),
    );
    child.stdin.end();
  });
}
