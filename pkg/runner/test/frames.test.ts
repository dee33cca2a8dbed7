import { describe, expect, it } from "vitest";

import { FrameDecoder, encodeFrame } from "../src/frames";

describe("frame encoding", () => {
  it("round-trips an object", () => {
    const decoder = new FrameDecoder();
    const items = decoder.push(encodeFrame({ proto: 1, xs: [1, 2] }));
    expect(items).toEqual([{ kind: "frame", value: { proto: 1, xs: [1, 2] } }]);
  });

  it("uses a 4-byte big-endian length prefix", () => {
    const frame = encodeFrame({});
    expect(frame.readUInt32BE(0)).toBe(frame.length - 4);
  });

  it("reassembles frames split across chunks", () => {
    const decoder = new FrameDecoder();
    const frame = encodeFrame({ id: "split" });
    const first = decoder.push(frame.subarray(0, 3));
    expect(first).toEqual([]);
    const rest = decoder.push(frame.subarray(3));
    expect(rest).toEqual([{ kind: "frame", value: { id: "split" } }]);
  });

  it("decodes back-to-back frames from one chunk", () => {
    const decoder = new FrameDecoder();
    const chunk = Buffer.concat([encodeFrame({ n: 1 }), encodeFrame({ n: 2 })]);
    const items = decoder.push(chunk);
    expect(items.map((i) => (i.kind === "frame" ? (i.value as { n: number }).n : -1))).toEqual([1, 2]);
  });

  it("reports undecodable payloads but keeps the stream in sync", () => {
    const decoder = new FrameDecoder();
    const garbage = Buffer.from("not json", "utf-8");
    const header = Buffer.alloc(4);
    header.writeUInt32BE(garbage.length, 0);
    const items = decoder.push(
      Buffer.concat([header, garbage, encodeFrame({ fine: true })]),
    );
    expect(items[0].kind).toBe("error");
    expect(items[1]).toEqual({ kind: "frame", value: { fine: true } });
  });

  it("discards oversized frames and recovers", () => {
    const decoder = new FrameDecoder();
    const header = Buffer.alloc(4);
    header.writeUInt32BE(0xffffffff, 0);
    const first = decoder.push(header);
    expect(first[0].kind).toBe("error");
    // the decoder now discards the announced bytes as they stream in
    const drained = decoder.push(Buffer.alloc(1024));
    expect(drained).toEqual([]);
  });
});
