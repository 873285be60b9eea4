/** Transports that carry the wire protocol to the engine. */

import { ClientMessage, encodeLine } from "./protocol.js";

export interface Transport {
  send(msg: ClientMessage): void;
  close(): void;
}

export interface TransportEvents {
  onDocument: (doc: unknown) => void;
  onBadLine?: (line: string) => void;
  onClose?: () => void;
}

/**
 * Browser WebSocket transport. The engine auto-detects the HTTP upgrade on
 * its ndjson port, and each text frame carries one JSON document (a
 * trailing newline is tolerated).
 */
export class WebSocketTransport implements Transport {
  private readonly socket: WebSocket;

  constructor(url: string, events: TransportEvents, socketFactory?: (url: string) => WebSocket) {
    this.socket = socketFactory ? socketFactory(url) : new WebSocket(url);
    this.socket.addEventListener("message", (event: MessageEvent) => {
      const text = typeof event.data === "string" ? event.data : "";
      for (const line of text.split("\n")) {
        if (!line.trim()) continue;
        try {
          events.onDocument(JSON.parse(line));
        } catch {
          events.onBadLine?.(line);
        }
      }
    });
    this.socket.addEventListener("close", () => events.onClose?.());
  }

  whenOpen(): Promise<void> {
    if (this.socket.readyState === 1) return Promise.resolve();
    return new Promise((resolve, reject) => {
      this.socket.addEventListener("open", () => resolve());
      this.socket.addEventListener("error", () => reject(new Error("connect failed")));
    });
  }

  send(msg: ClientMessage): void {
    this.socket.send(encodeLine(msg));
  }

  close(): void {
    this.socket.close();
  }
}

/** In-memory transport for tests: scripted server, captured client sends. */
export class LoopbackTransport implements Transport {
  readonly sent: ClientMessage[] = [];
  private readonly events: TransportEvents;

  constructor(events: TransportEvents) {
    this.events = events;
  }

  send(msg: ClientMessage): void {
    this.sent.push(msg);
  }

  close(): void {
    this.events.onClose?.();
  }

  /** Deliver a document as if the server pushed it. */
  deliver(doc: unknown): void {
    this.events.onDocument(doc);
  }

  deliverRaw(line: string): void {
    try {
      this.events.onDocument(JSON.parse(line));
    } catch {
      this.events.onBadLine?.(line);
    }
  }
}
