/**
 * Practice block shown before each session: five anchor flashes spanning
 * the 0..15 reporting scale so the viewer calibrates their own mapping
 * from perceived brightness to typed numbers.
 */

import { StimulusView } from "./flicker.js";

export const ANCHOR_LEVELS = [0, 4, 8, 12, 15] as const;

export interface AnchorStimulus {
  expected: number; // the number the viewer should associate with it
  view: StimulusView;
}

export function practiceBlock(freqHz: number, dwellS: number): AnchorStimulus[] {
  return ANCHOR_LEVELS.map((expected) => ({
    expected,
    view: { level: expected / 15, freqHz, dwellS },
  }));
}
