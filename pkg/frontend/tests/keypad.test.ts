import { describe, expect, it } from "vitest";

import { Keypad } from "../src/keypad.js";

describe("keypad entry", () => {
  it("1, 5, Enter submits 15", () => {
    const pad = new Keypad();
    expect(pad.press("1")).toEqual({ kind: "echo", buffer: "1" });
    expect(pad.press("5")).toEqual({ kind: "echo", buffer: "15" });
    expect(pad.press("Enter")).toEqual({ kind: "submit", value: 15 });
  });

  it("Enter on an empty buffer re-prompts", () => {
    const pad = new Keypad();
    const result = pad.press("Enter");
    expect(result.kind).toBe("reject");
  });

  it("16 is rejected client-side", () => {
    const pad = new Keypad();
    pad.press("1");
    pad.press("6");
    const result = pad.press("Enter");
    expect(result.kind).toBe("reject");
    expect(pad.current).toBe("");
  });

  it("non-numeric keys are rejected without clearing the buffer", () => {
    const pad = new Keypad();
    pad.press("7");
    const result = pad.press("x");
    expect(result.kind).toBe("reject");
    expect(pad.current).toBe("7");
  });

  it("backspace edits the buffer", () => {
    const pad = new Keypad();
    pad.press("1");
    pad.press("2");
    expect(pad.press("Backspace")).toEqual({ kind: "echo", buffer: "1" });
    expect(pad.press("Enter")).toEqual({ kind: "submit", value: 1 });
  });

  it("caps the buffer at two digits", () => {
    const pad = new Keypad();
    pad.press("1");
    pad.press("2");
    expect(pad.press("3").kind).toBe("reject");
    expect(pad.current).toBe("12");
  });

  it("zero submits", () => {
    const pad = new Keypad();
    pad.press("0");
    expect(pad.press("Enter")).toEqual({ kind: "submit", value: 0 });
  });
});
