/**
 * Wire protocol shared with the acquisition engine: newline-delimited JSON
 * over a socket, or one JSON document per WebSocket text frame.
 *
 * Unknown fields on known message types are ignored; unknown types and
 * malformed documents are rejected (never silently dropped into the state
 * machine).
 */

export interface StimulusMsg {
  type: "stimulus";
  pattern_id: number;
  level: number;
  freq_hz: number;
  dwell_s: number;
}

export interface ErrorMsg {
  type: "error";
  reason?: string;
}

export interface DoneMsg {
  type: "done";
  patterns_used?: number;
}

export interface PausedMsg {
  type: "paused";
  reason?: string;
  checkpoint?: string;
}

export interface HeartbeatMsg {
  type: "heartbeat";
}

export type ServerMessage = StimulusMsg | ErrorMsg | DoneMsg | PausedMsg | HeartbeatMsg;

export interface ResponseMsg {
  type: "response";
  pattern_id: number;
  value: number;
}

export interface ResumeMsg {
  type: "resume";
  checkpoint: string;
}

export type ClientMessage = ResponseMsg | ResumeMsg | HeartbeatMsg;

export class ProtocolError extends Error {}

const isFiniteNumber = (x: unknown): x is number =>
  typeof x === "number" && Number.isFinite(x);

/** Validate one decoded document from the server. Throws on anything unusable. */
export function parseServerMessage(doc: unknown): ServerMessage {
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    throw new ProtocolError("message is not an object");
  }
  const msg = doc as Record<string, unknown>;
  switch (msg.type) {
    case "stimulus": {
      if (
        !isFiniteNumber(msg.pattern_id) ||
        !isFiniteNumber(msg.level) ||
        !isFiniteNumber(msg.freq_hz) ||
        !isFiniteNumber(msg.dwell_s)
      ) {
        throw new ProtocolError("stimulus with missing or non-numeric fields");
      }
      return {
        type: "stimulus",
        pattern_id: msg.pattern_id,
        level: msg.level,
        freq_hz: msg.freq_hz,
        dwell_s: msg.dwell_s,
      };
    }
    case "error":
      return { type: "error", reason: typeof msg.reason === "string" ? msg.reason : undefined };
    case "done":
      return {
        type: "done",
        patterns_used: isFiniteNumber(msg.patterns_used) ? msg.patterns_used : undefined,
      };
    case "paused":
      return {
        type: "paused",
        reason: typeof msg.reason === "string" ? msg.reason : undefined,
        checkpoint: typeof msg.checkpoint === "string" ? msg.checkpoint : undefined,
      };
    case "heartbeat":
      return { type: "heartbeat" };
    default:
      throw new ProtocolError(`unknown message type ${String(msg.type)}`);
  }
}

export const encodeLine = (msg: ClientMessage): string => `${JSON.stringify(msg)}\n`;

/** Incremental ndjson splitter for stream transports. */
export function createNdjsonParser(onDocument: (doc: unknown) => void, onBad: (line: string) => void) {
  let buffer = "";
  return {
    push(chunk: string): void {
      buffer += chunk;
      for (;;) {
        const idx = buffer.indexOf("\n");
        if (idx === -1) break;
        const line = buffer.slice(0, idx).trim();
        buffer = buffer.slice(idx + 1);
        if (!line) continue;
        try {
          onDocument(JSON.parse(line));
        } catch {
          onBad(line);
        }
      }
    },
  };
}
