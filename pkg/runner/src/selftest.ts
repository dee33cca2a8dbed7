/**
 * --self-test: run the committed toy fixtures through the evaluator and
 * compare line/branch bitmaps against the hand-traced expectations.
 */
import * as fs from "fs";
import * as path from "path";

import { CoverageResponse } from "./protocol";
import { evaluateRequest } from "./server";

interface Fixture {
  name: string;
  program: string;
  tests: string[];
  expected: {
    total_lines: number;
    total_branches: number;
    per_test: {
      syntax_ok: boolean;
      exec_ok: boolean;
      covered_lines: number[];
      covered_branches: number[];
    }[];
  };
}

export const FIXTURES_DIR = path.resolve(__dirname, "..", "fixtures");

export function loadFixtures(): Fixture[] {
  return fs
    .readdirSync(FIXTURES_DIR)
    .filter((name) => name.endsWith(".json"))
    .sort()
    .map((name) => JSON.parse(fs.readFileSync(path.join(FIXTURES_DIR, name), "utf-8")) as Fixture);
}

function sameNumbers(a: number[], b: number[]): boolean {
  return a.length === b.length && a.every((x, i) => x === b[i]);
}

export function checkFixture(fixture: Fixture, response: CoverageResponse): string[] {
  const problems: string[] = [];
  if (response.total_lines !== fixture.expected.total_lines) {
    problems.push(`total_lines ${response.total_lines} != ${fixture.expected.total_lines}`);
  }
  if (response.total_branches !== fixture.expected.total_branches) {
    problems.push(`total_branches ${response.total_branches} != ${fixture.expected.total_branches}`);
  }
  fixture.expected.per_test.forEach((want, i) => {
    const got = response.per_test[i];
    if (!got) {
      problems.push(`test ${i}: missing result`);
      return;
    }
    if (got.syntax_ok !== want.syntax_ok) problems.push(`test ${i}: syntax_ok ${got.syntax_ok}`);
    if (got.exec_ok !== want.exec_ok) problems.push(`test ${i}: exec_ok ${got.exec_ok}`);
    if (!sameNumbers(got.covered_lines, want.covered_lines)) {
      problems.push(`test ${i}: lines [${got.covered_lines}] != [${want.covered_lines}]`);
    }
    if (!sameNumbers(got.covered_branches, want.covered_branches)) {
      problems.push(`test ${i}: branches [${got.covered_branches}] != [${want.covered_branches}]`);
    }
  });
  return problems;
}

export async function selfTest(): Promise<number> {
  let failures = 0;
  for (const fixture of loadFixtures()) {
    const response = await evaluateRequest({
      task_id: fixture.name,
      program_source: fixture.program,
      tests: fixture.tests.map((code, index) => ({ index, code })),
      timeout_s: 5,
    });
    const problems = checkFixture(fixture, response);
    if (problems.length === 0) {
      console.log(`[PASS] ${fixture.name}: bitmaps match hand-traced expectations`);
      for (const t of response.per_test) {
        console.log(
          `       test ${t.index}: lines=[${t.covered_lines}] branches=[${t.covered_branches}]`,
        );
      }
    } else {
      failures += 1;
      console.log(`[FAIL] ${fixture.name}:`);
      for (const p of problems) console.log(`       ${p}`);
    }
  }
  return failures === 0 ? 0 : 1;
}
