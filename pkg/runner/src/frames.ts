/**
 * Length-prefixed JSON framing: 4-byte big-endian payload length, then the
 * UTF-8 JSON payload. The decoder is incremental and survives malformed
 * payloads: an undecodable frame or an oversized length is reported as an
 * error item while the stream stays in sync (oversized payloads are
 * consumed and discarded).
 */

export const MAX_FRAME_BYTES = 64 * 1024 * 1024;

export function encodeFrame(obj: unknown): Buffer {
  const payload = Buffer.from(JSON.stringify(obj), "utf-8");
  const header = Buffer.alloc(4);
  header.writeUInt32BE(payload.length, 0);
  return Buffer.concat([header, payload]);
}

export type FrameItem =
  | { kind: "frame"; value: unknown }
  | { kind: "error"; message: string };

export class FrameDecoder {
  private buffer: Buffer = Buffer.alloc(0);
  private discardRemaining = 0;

  push(chunk: Buffer): FrameItem[] {
    this.buffer = this.buffer.length ? Buffer.concat([this.buffer, chunk]) : chunk;
    const items: FrameItem[] = [];
    for (;;) {
      if (this.discardRemaining > 0) {
        const drop = Math.min(this.discardRemaining, this.buffer.length);
        this.buffer = this.buffer.subarray(drop);
        this.discardRemaining -= drop;
        if (this.discardRemaining > 0) return items; // need more bytes
        continue;
      }
      if (this.buffer.length < 4) return items;
      const length = this.buffer.readUInt32BE(0);
      if (length > MAX_FRAME_BYTES) {
        items.push({ kind: "error", message: `frame length ${length} exceeds limit` });
        this.buffer = this.buffer.subarray(4);
        this.discardRemaining = length;
        continue;
      }
      if (this.buffer.length < 4 + length) return items;
      const payload = this.buffer.subarray(4, 4 + length);
      this.buffer = this.buffer.subarray(4 + length);
      try {
        items.push({ kind: "frame", value: JSON.parse(payload.toString("utf-8")) });
      } catch (err) {
        items.push({ kind: "error", message: `undecodable frame payload: ${err}` });
      }
    }
  }
}
