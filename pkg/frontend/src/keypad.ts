/**
 * Numeric entry for perceived intensity, 0..15.
 *
 * Digits echo into a peripheral buffer so the viewer never shifts gaze;
 * Enter submits, Backspace edits, anything out of range or non-numeric is
 * rejected inline without touching the wire.
 */

export type KeypadResult =
  | { kind: "echo"; buffer: string }
  | { kind: "reject"; reason: string; buffer: string }
  | { kind: "submit"; value: number };

export class Keypad {
  private buffer = "";

  get current(): string {
    return this.buffer;
  }

  clear(): void {
    this.buffer = "";
  }

  press(key: string): KeypadResult {
    if (/^[0-9]$/.test(key)) {
      if (this.buffer.length >= 2) {
        return { kind: "reject", reason: "at most two digits", buffer: this.buffer };
      }
      this.buffer += key;
      return { kind: "echo", buffer: this.buffer };
    }
    if (key === "Backspace") {
      this.buffer = this.buffer.slice(0, -1);
      return { kind: "echo", buffer: this.buffer };
    }
    if (key === "Enter") {
      if (this.buffer === "") {
        return { kind: "reject", reason: "enter a value 0-15", buffer: "" };
      }
      const value = Number(this.buffer);
      if (!Number.isInteger(value) || value < 0 || value > 15) {
        const rejected = this.buffer;
        this.buffer = "";
        return { kind: "reject", reason: `${rejected} outside 0-15`, buffer: "" };
      }
      this.buffer = "";
      return { kind: "submit", value };
    }
    return { kind: "reject", reason: `key ${key} is not numeric`, buffer: this.buffer };
  }
}
