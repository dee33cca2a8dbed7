/** Wire types shared by the serve loop and the self-test. */

export const PROTO_VERSION = 1;
export const RUNNER_VERSION = "coverage-runner/0.1.0";

export interface WireTest {
  index: number;
  code: string;
}

export interface CoverageRequest {
  task_id: string;
  program_source: string;
  tests: WireTest[];
  timeout_s: number;
}

export interface PerTestResult {
  index: number;
  syntax_ok: boolean;
  exec_ok: boolean;
  covered_lines: number[];
  covered_branches: number[];
}

export interface CoverageResponse {
  task_id: string;
  total_lines: number;
  total_branches: number;
  per_test: PerTestResult[];
  runner_version: string;
  diagnostic?: string;
}

/** Returns the validated request or an error message. */
export function parseRequest(obj: unknown): CoverageRequest | string {
  if (typeof obj !== "object" || obj === null) return "request is not an object";
  const rec = obj as Record<string, unknown>;
  if (typeof rec.task_id !== "string") return "missing task_id";
  if (typeof rec.program_source !== "string") return "missing program_source";
  if (!Array.isArray(rec.tests) || rec.tests.length === 0) return "tests must be a nonempty array";
  const tests: WireTest[] = [];
  const seen = new Set<number>();
  for (const entry of rec.tests) {
    const t = entry as Record<string, unknown>;
    if (typeof t.index !== "number" || typeof t.code !== "string") {
      return "each test needs {index, code}";
    }
    if (seen.has(t.index)) return `duplicate test index ${t.index}`;
    seen.add(t.index);
    tests.push({ index: t.index, code: t.code });
  }
  const timeout = typeof rec.timeout_s === "number" ? rec.timeout_s : 10;
  if (!(timeout > 0)) return "timeout_s must be positive";
  return {
    task_id: rec.task_id,
    program_source: rec.program_source,
    tests,
    timeout_s: timeout,
  };
}
