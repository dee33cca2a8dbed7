/**
 * The serve loop: one handshake frame, then one response frame per request
 * frame, in order. A malformed frame produces an error frame and the
 * session continues.
 */
import { Readable, Writable } from "stream";

import { FrameDecoder, FrameItem, encodeFrame } from "./frames";
import {
  CoverageRequest,
  CoverageResponse,
  PROTO_VERSION,
  PerTestResult,
  RUNNER_VERSION,
  parseRequest,
} from "./protocol";
import { runTest } from "./pyworker";

export async function evaluateRequest(req: CoverageRequest): Promise<CoverageResponse> {
  const perTest: PerTestResult[] = [];
  let totalLines = 0;
  let totalBranches = 0;
  let diagnostic: string | undefined;
  for (const test of req.tests) {
    const result = await runTest(req.program_source, test.code, req.timeout_s);
    if (!result.program_ok) {
      // program itself does not compile: all-false flags plus diagnostic
      diagnostic = result.diagnostic ?? "program does not compile";
      perTest.push({
        index: test.index,
        syntax_ok: false,
        exec_ok: false,
        covered_lines: [],
        covered_branches: [],
      });
      continue;
    }
    totalLines = Math.max(totalLines, result.total_lines);
    totalBranches = Math.max(totalBranches, result.total_branches);
    perTest.push({
      index: test.index,
      syntax_ok: result.syntax_ok,
      exec_ok: result.exec_ok,
      covered_lines: result.covered_lines,
      covered_branches: result.covered_branches,
    });
  }
  const response: CoverageResponse = {
    task_id: req.task_id,
    total_lines: totalLines,
    total_branches: totalBranches,
    per_test: perTest,
    runner_version: RUNNER_VERSION,
  };
  if (diagnostic !== undefined) response.diagnostic = diagnostic;
  return response;
}

export async function serve(input: Readable, output: Writable): Promise<void> {
  const decoder = new FrameDecoder();
  const queue: FrameItem[] = [];
  let wake: (() => void) | null = null;
  let ended = false;

  input.on("data", (chunk: Buffer) => {
    queue.push(...decoder.push(chunk));
    wake?.();
  });
  input.on("end", () => {
    ended = true;
    wake?.();
  });
  input.on("error", () => {
    ended = true;
    wake?.();
  });

  const nextItem = async (): Promise<FrameItem | null> => {
    for (;;) {
      const item = queue.shift();
      if (item) return item;
      if (ended) return null;
      await new Promise<void>((resolve) => {
        wake = resolve;
      });
      wake = null;
    }
  };

  const send = (obj: unknown) =>
    new Promise<void>((resolve, reject) => {
      output.write(encodeFrame(obj), (err) => (err ? reject(err) : resolve()));
    });

  let handshaken = false;
  for (;;) {
    const item = await nextItem();
    if (item === null) return;
    if (item.kind === "error") {
      await send({ error: item.message });
      continue;
    }
    if (!handshaken) {
      const hello = item.value as Record<string, unknown>;
      if (typeof hello !== "object" || hello === null || hello.proto !== PROTO_VERSION) {
        await send({ error: `unsupported handshake ${JSON.stringify(item.value)}` });
        continue;
      }
      handshaken = true;
      await send({ proto: PROTO_VERSION, runner_version: RUNNER_VERSION });
      continue;
    }
    const parsed = parseRequest(item.value);
    if (typeof parsed === "string") {
      await send({ error: parsed });
      continue;
    }
    try {
      await send(await evaluateRequest(parsed));
    } catch (err) {
      await send({ error: `runner fault: ${err instanceof Error ? err.message : err}` });
    }
  }
}
