/**
 * Coverage ground truth on the committed toy programs: reported line and
 * branch bitmaps must equal the hand-traced expectations exactly, an
 * infinite-looping test must come back exec_ok=false within timeout_s + 2s,
 * and a syntactically broken test reports syntax_ok=false with no coverage.
 */
import { describe, expect, it } from "vitest";

import { evaluateRequest } from "../src/server";
import { checkFixture, loadFixtures } from "../src/selftest";

describe("toy-program ground truth", () => {
  for (const fixture of loadFixtures()) {
    it(`matches hand-traced bitmaps: ${fixture.name}`, async () => {
      const response = await evaluateRequest({
        task_id: fixture.name,
        program_source: fixture.program,
        tests: fixture.tests.map((code, index) => ({ index, code })),
        timeout_s: 5,
      });
      expect(checkFixture(fixture, response)).toEqual([]);
    }, 30_000);
  }

  it("isolates tests from each other (globals do not leak)", async () => {
    const response = await evaluateRequest({
      task_id: "isolation",
      program_source: "counter = 0\n",
      tests: [
        { index: 0, code: "counter = 99\nleaked = True" },
        { index: 1, code: "assert counter == 0\nassert 'leaked' not in dir()" },
      ],
      timeout_s: 5,
    });
    expect(response.per_test[1].exec_ok).toBe(true);
  }, 30_000);

  it("returns exec_ok=false for an infinite loop within timeout_s + 2s", async () => {
    const timeoutS = 1;
    const started = Date.now();
    const response = await evaluateRequest({
      task_id: "spin",
      program_source: "ready = True\n",
      tests: [{ index: 0, code: "while True:\n    pass" }],
      timeout_s: timeoutS,
    });
    const elapsedS = (Date.now() - started) / 1000;
    expect(response.per_test[0].syntax_ok).toBe(true);
    expect(response.per_test[0].exec_ok).toBe(false);
    // partial coverage survives the interrupt: the module line ran
    expect(response.per_test[0].covered_lines).toEqual([1]);
    expect(elapsedS).toBeLessThan(timeoutS + 2);
  }, 30_000);

  it("reports syntax_ok=false with empty coverage for broken tests", async () => {
    const response = await evaluateRequest({
      task_id: "broken",
      program_source: "value = 41\n",
      tests: [{ index: 0, code: "assert value ==" }],
      timeout_s: 5,
    });
    expect(response.per_test[0]).toEqual({
      index: 0,
      syntax_ok: false,
      exec_ok: false,
      covered_lines: [],
      covered_branches: [],
    });
  }, 30_000);

  it("answers all-false flags and a diagnostic for a broken program", async () => {
    const response = await evaluateRequest({
      task_id: "bad-program",
      program_source: "def broken(:\n",
      tests: [{ index: 0, code: "assert True" }],
      timeout_s: 5,
    });
    expect(response.diagnostic).toContain("compile");
    expect(response.per_test[0].syntax_ok).toBe(false);
    expect(response.per_test[0].exec_ok).toBe(false);
  }, 30_000);
});
