/**
 * Client-side session state machine.
 *
 * Strictly request/response: the engine pushes one stimulus, the session
 * presents it and returns exactly one typed response; nothing is buffered
 * beyond the single outstanding stimulus. Every stimulus is accounted for:
 * it resolves as responded, or as a timeout event when the session ends
 * (done/paused/error/disconnect) before an answer was sent. Malformed or
 * unknown server messages are rejected and leave the state untouched.
 */

import {
  ClientMessage,
  ProtocolError,
  ServerMessage,
  StimulusMsg,
  parseServerMessage,
} from "./protocol.js";

export type SessionState = "idle" | "awaiting-stimulus" | "presenting" | "done" | "paused" | "failed";

export interface ResponseEntry {
  pattern_id: number;
  value: number;
  latency_ms: number;
}

export type StimulusResolution = "pending" | "responded" | "timeout";

export interface SessionCallbacks {
  send: (msg: ClientMessage) => void;
  /** A stimulus should start flickering. Re-sent stimuli re-present. */
  present?: (stimulus: StimulusMsg) => void;
  onEntry?: (entry: ResponseEntry) => void;
  onRejected?: (reason: string) => void;
  onDone?: (patternsUsed?: number) => void;
  onPaused?: (reason?: string, checkpoint?: string) => void;
  onProtocolFault?: (reason: string) => void;
  now?: () => number;
}

export class ClientSession {
  state: SessionState = "idle";
  private outstanding: StimulusMsg | null = null;
  private presentedAt = 0;
  private readonly resolutions = new Map<number, StimulusResolution>();
  private readonly cb: SessionCallbacks;
  readonly faults: string[] = [];
  checkpoint: string | undefined;

  constructor(callbacks: SessionCallbacks) {
    this.cb = callbacks;
  }

  /** Stimuli seen so far and how each one resolved (audit surface). */
  ledger(): Map<number, StimulusResolution> {
    return new Map(this.resolutions);
  }

  get outstandingStimulus(): StimulusMsg | null {
    return this.outstanding;
  }

  private now(): number {
    return this.cb.now ? this.cb.now() : Date.now();
  }

  /** Open a fresh session (heartbeat) or resume from a checkpoint token. */
  open(checkpoint?: string): void {
    if (this.state !== "idle") return;
    if (checkpoint) {
      this.cb.send({ type: "resume", checkpoint });
    } else {
      this.cb.send({ type: "heartbeat" });
    }
    this.state = "awaiting-stimulus";
  }

  /** Feed one decoded (but unvalidated) server document. */
  handleDocument(doc: unknown): void {
    let msg: ServerMessage;
    try {
      msg = parseServerMessage(doc);
    } catch (err) {
      const reason = err instanceof ProtocolError ? err.message : String(err);
      this.faults.push(reason);
      this.cb.onProtocolFault?.(reason);
      return; // rejected; state untouched
    }
    this.handleMessage(msg);
  }

  handleMessage(msg: ServerMessage): void {
    switch (msg.type) {
      case "stimulus":
        this.onStimulus(msg);
        break;
      case "heartbeat":
        break;
      case "error":
        // advisory (e.g. out-of-range response); the engine re-prompts
        this.cb.onRejected?.(msg.reason ?? "rejected");
        break;
      case "done":
        this.resolveOutstanding("timeout");
        this.state = "done";
        this.cb.onDone?.(msg.patterns_used);
        break;
      case "paused":
        this.resolveOutstanding("timeout");
        this.state = "paused";
        this.checkpoint = msg.checkpoint;
        this.cb.onPaused?.(msg.reason, msg.checkpoint);
        break;
    }
  }

  private onStimulus(msg: StimulusMsg): void {
    if (this.state === "done" || this.state === "paused" || this.state === "failed") {
      this.faults.push(`stimulus ${msg.pattern_id} after session end`);
      this.cb.onProtocolFault?.(`stimulus ${msg.pattern_id} after session end`);
      return;
    }
    if (this.outstanding !== null && this.outstanding.pattern_id !== msg.pattern_id) {
      // the engine never overlaps stimuli; account for the orphan
      this.resolveOutstanding("timeout");
      this.faults.push(`stimulus ${msg.pattern_id} while ${this.outstanding?.pattern_id} pending`);
    }
    this.outstanding = msg;
    this.resolutions.set(msg.pattern_id, "pending");
    this.presentedAt = this.now();
    this.state = "presenting";
    this.cb.present?.(msg);
  }

  /** Submit a validated 0..15 value for the outstanding stimulus. */
  submit(value: number): boolean {
    if (this.outstanding === null) {
      this.cb.onRejected?.("no stimulus awaiting a response");
      return false;
    }
    if (!Number.isInteger(value) || value < 0 || value > 15) {
      this.cb.onRejected?.(`value ${value} outside 0-15`);
      return false;
    }
    const entry: ResponseEntry = {
      pattern_id: this.outstanding.pattern_id,
      value,
      latency_ms: this.now() - this.presentedAt,
    };
    this.cb.send({ type: "response", pattern_id: entry.pattern_id, value });
    this.resolutions.set(entry.pattern_id, "responded");
    this.outstanding = null;
    this.state = "awaiting-stimulus";
    this.cb.onEntry?.(entry);
    return true;
  }

  /** Transport dropped; any outstanding stimulus becomes a timeout event. */
  handleDisconnect(): void {
    this.resolveOutstanding("timeout");
    if (this.state !== "done" && this.state !== "paused") {
      this.state = "failed";
    }
  }

  private resolveOutstanding(resolution: StimulusResolution): void {
    if (this.outstanding !== null) {
      this.resolutions.set(this.outstanding.pattern_id, resolution);
      this.outstanding = null;
    }
  }

  /** True when every stimulus seen has exactly one recorded resolution. */
  allStimuliAccounted(): boolean {
    for (const value of this.resolutions.values()) {
      if (value === "pending") return false;
    }
    return this.outstanding === null;
  }
}
