#!/usr/bin/env node
/**
 * Entry point. Default mode serves the frame protocol on stdin/stdout;
 * --self-test runs the committed toy fixtures and prints their bitmaps.
 */
import { selfTest } from "./selftest";
import { serve } from "./server";

async function main(): Promise<number> {
  if (process.argv.includes("--self-test")) {
    return selfTest();
  }
  await serve(process.stdin, process.stdout);
  return 0;
}

main().then(
  (code) => process.exit(code),
  (err) => {
    console.error(`coverage-runner fatal: ${err}`);
    process.exit(1);
  },
);
