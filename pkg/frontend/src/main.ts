/**
 * Browser bootstrap: full-viewport flicker patch, peripheral keypad echo,
 * and the session loop. Configured through the URL query:
 *
 *   index.html?service=ws://127.0.0.1:8765&token=abc[&checkpoint=PATH]
 *
 * A practice block of five anchor flashes (scale values 0, 4, 8, 12, 15)
 * runs before the session opens so the viewer calibrates their 0-15
 * mapping.
 */

import { practiceBlock } from "./anchors.js";
import { FlickerScheduler, runFlicker } from "./flicker.js";
import { Keypad } from "./keypad.js";
import { StimulusMsg } from "./protocol.js";
import { ClientSession } from "./session.js";
import { WebSocketTransport } from "./transport.js";

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

export async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const service = params.get("service") ?? "ws://127.0.0.1:8765";
  const token = params.get("token") ?? "";
  const checkpoint = params.get("checkpoint") ?? undefined;

  const patch = el("patch");
  const echo = el("echo");
  const banner = el("banner");
  const status = el("status");

  const setLuminance = (on: boolean, luminance: number) => {
    const v = Math.round((on ? luminance : 0) * 255);
    patch.style.backgroundColor = `rgb(${v},${v},${v})`;
  };
  const warn = (message: string) => {
    banner.textContent = message;
    banner.style.display = "block";
  };

  status.textContent = "practice block: remember these anchors (0, 4, 8, 12, 15)";
  for (const anchor of practiceBlock(6.0, 2.0)) {
    echo.textContent = `anchor = ${anchor.expected}`;
    const scheduler = new FlickerScheduler(anchor.view, { onFrame: setLuminance, onWarning: warn });
    await runFlicker(scheduler);
  }
  echo.textContent = "";

  const keypad = new Keypad();
  const session = new ClientSession({
    send: (msg) => transport.send(msg),
    present: (stimulus: StimulusMsg) => {
      status.textContent = `pattern ${stimulus.pattern_id}: type perceived intensity 0-15, Enter to send`;
      const scheduler = new FlickerScheduler(
        { level: stimulus.level, freqHz: stimulus.freq_hz, dwellS: stimulus.dwell_s },
        { onFrame: setLuminance, onWarning: warn },
      );
      void runFlicker(scheduler);
    },
    onEntry: () => {
      echo.textContent = "";
    },
    onRejected: (reason) => {
      echo.textContent = reason;
    },
    onDone: (patternsUsed) => {
      status.textContent = `session complete (${patternsUsed ?? "?"} patterns)`;
      transport.close();
    },
    onPaused: (reason, checkpointToken) => {
      status.textContent = `session paused: ${reason ?? ""}`;
      if (checkpointToken) {
        warn(`resume with &checkpoint=${encodeURIComponent(checkpointToken)}`);
      }
    },
    onProtocolFault: (reason) => warn(`protocol fault: ${reason}`),
  });

  const url = token ? `${service}/?token=${encodeURIComponent(token)}` : service;
  const transport = new WebSocketTransport(url, {
    onDocument: (doc) => session.handleDocument(doc),
    onBadLine: () => warn("malformed message from service"),
    onClose: () => session.handleDisconnect(),
  });
  await transport.whenOpen();
  session.open(checkpoint);
  status.textContent = "connected; waiting for the first pattern";

  window.addEventListener("keydown", (event) => {
    const result = keypad.press(event.key);
    if (result.kind === "echo") {
      echo.textContent = result.buffer;
    } else if (result.kind === "reject") {
      echo.textContent = result.reason;
    } else {
      session.submit(result.value);
    }
  });
}

if (typeof document !== "undefined" && document.getElementById("patch")) {
  void boot();
}
