/**
 * Frame-scheduled square-wave flicker.
 *
 * Scheduling runs against the display clock (requestAnimationFrame
 * timestamps), never timers, so the on/off phase derives from elapsed time
 * and stays within one frame of the ideal square wave. Every phase
 * transition is logged with its timestamp so a session can audit the
 * frequency actually rendered.
 */

export interface StimulusView {
  level: number; // 0..1 display luminance
  freqHz: number;
  dwellS: number;
  duty?: number; // defaults to 0.5
}

export interface FrameLogEntry {
  timeMs: number;
  on: boolean;
}

export interface FlickerCallbacks {
  /** Called every frame with the current phase state and luminance. */
  onFrame?: (on: boolean, luminance: number) => void;
  /** Refresh rate too low for the commanded frequency. */
  onWarning?: (message: string) => void;
  /** Dwell elapsed; receives the full transition log. */
  onComplete?: (log: FrameLogEntry[]) => void;
}

const REFRESH_ESTIMATE_FRAMES = 13;

export class FlickerScheduler {
  readonly view: Required<StimulusView>;
  private readonly cb: FlickerCallbacks;
  private startMs: number | null = null;
  private lastTickMs: number | null = null;
  private frameDeltas: number[] = [];
  private warned = false;
  private lastOn: boolean | null = null;
  private log: FrameLogEntry[] = [];
  private finished = false;
  flagged = false;

  constructor(view: StimulusView, callbacks: FlickerCallbacks = {}) {
    this.view = { duty: 0.5, ...view };
    this.cb = callbacks;
  }

  get transitions(): FrameLogEntry[] {
    return this.log;
  }

  /** Advance to a display-clock timestamp; returns false once the dwell ends. */
  tick(timestampMs: number): boolean {
    if (this.finished) return false;
    if (this.startMs === null) {
      this.startMs = timestampMs;
    }
    if (this.lastTickMs !== null && timestampMs > this.lastTickMs) {
      this.frameDeltas.push(timestampMs - this.lastTickMs);
      if (this.frameDeltas.length === REFRESH_ESTIMATE_FRAMES && !this.warned) {
        const mean = this.frameDeltas.reduce((a, b) => a + b, 0) / this.frameDeltas.length;
        const refreshHz = 1000 / mean;
        if (refreshHz < 2 * this.view.freqHz) {
          this.warned = true;
          this.flagged = true;
          this.cb.onWarning?.(
            `display refresh ${refreshHz.toFixed(1)} Hz cannot render ` +
              `${this.view.freqHz} Hz flicker (need >= ${2 * this.view.freqHz} Hz)`,
          );
        }
      }
    }
    this.lastTickMs = timestampMs;

    const elapsedS = (timestampMs - this.startMs) / 1000;
    if (elapsedS >= this.view.dwellS) {
      if (this.lastOn) {
        this.log.push({ timeMs: timestampMs, on: false });
      }
      this.finished = true;
      this.cb.onComplete?.(this.log);
      return false;
    }
    // epsilon absorbs float drift from accumulated frame timestamps, so
    // frames landing exactly on a phase boundary resolve deterministically
    const phase = (elapsedS * this.view.freqHz + 1e-9) % 1;
    const on = phase < this.view.duty;
    if (on !== this.lastOn) {
      this.log.push({ timeMs: timestampMs, on });
      this.lastOn = on;
    }
    this.cb.onFrame?.(on, on ? this.view.level : 0);
    return true;
  }
}

/**
 * Estimate the rendered flicker frequency from a transition log: rising
 * edges per second between the first and last rise.
 */
export function reconstructFrequency(log: FrameLogEntry[]): number {
  const rises = log.filter((e) => e.on).map((e) => e.timeMs);
  if (rises.length < 2) return 0;
  const spanS = (rises[rises.length - 1] - rises[0]) / 1000;
  return (rises.length - 1) / spanS;
}

/** Drive a scheduler with requestAnimationFrame until the dwell completes. */
export function runFlicker(
  scheduler: FlickerScheduler,
  raf: (cb: (t: number) => void) => void = (cb) => requestAnimationFrame(cb),
): Promise<FrameLogEntry[]> {
  return new Promise((resolve) => {
    const step = (t: number) => {
      if (scheduler.tick(t)) {
        raf(step);
      } else {
        resolve(scheduler.transitions);
      }
    };
    raf(step);
  });
}
