import { describe, expect, it } from "vitest";

import { ANCHOR_LEVELS, practiceBlock } from "../src/anchors.js";

describe("practice anchors", () => {
  it("presents the five scale anchors in order", () => {
    const block = practiceBlock(6.0, 2.0);
    expect(block.map((a) => a.expected)).toEqual([...ANCHOR_LEVELS]);
    expect(block.map((a) => a.view.level)).toEqual([0, 4 / 15, 8 / 15, 12 / 15, 1]);
  });

  it("uses the session's flicker parameters", () => {
    for (const anchor of practiceBlock(15.0, 2.0)) {
      expect(anchor.view.freqHz).toBe(15.0);
      expect(anchor.view.dwellS).toBe(2.0);
    }
  });
});
