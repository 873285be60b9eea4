"""Command-line entry points: calibrate, run, conscious, serve, replay."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .corpus import corpus_names, scene_path
from .detector import (
    NoiseModel,
    ResponseModel,
    calibrate,
    heatmap_rows,
    write_energy_csv,
)
from .errors import GhostcarveError, SessionPaused
from .harness import (
    ExperimentConfig,
    SessionLog,
    conscious_protocol,
    load_scene,
    replay_experiment,
    run_experiment,
)
from .session import serve_session

DETECTOR_NAMES = {"sim": "simulated", "human": "human", "ideal": "ideal"}


def _noise_flag(value: str) -> bool:
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return value == "on"


def _resolve_scene(token: str) -> str:
    path = Path(token)
    if path.exists():
        return str(path)
    try:
        return str(scene_path(token))
    except KeyError:
        raise argparse.ArgumentTypeError(
            f"scene {token!r} is neither a file nor a bundled scene "
            f"(bundled: {', '.join(corpus_names())})"
        ) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ghostcarve",
        description=(
            "Adaptive ghost imaging: Hadamard pattern carving with a simulated "
            "evoked-energy detector or a human typing perceived intensities."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scene=True):
        if scene:
            p.add_argument("--scene", required=True, type=_resolve_scene,
                           help="scene file (PGM or 0/1 text grid) or bundled scene name")
        p.add_argument("--freq", type=float, default=6.0, help="flicker frequency in Hz")
        p.add_argument("--dwell", type=float, default=2.0, help="seconds per pattern")
        p.add_argument("--pause", type=float, default=0.5, help="seconds between patterns")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--noise", type=_noise_flag, default=True, metavar="on|off")
        p.add_argument("--out", default=None, metavar="DIR", help="artifact directory")
        p.add_argument("--model", default=None, metavar="FILE",
                       help="INI file with detector response parameters")

    p_cal = sub.add_parser("calibrate", help="sweep the detector and locate its linear range")
    common(p_cal, scene=False)
    p_cal.add_argument("--levels", type=int, default=33, help="sweep level count")
    p_cal.add_argument("--repeats", type=int, default=30, help="noisy draws per level")
    p_cal.add_argument("--heatmap", action="store_true",
                       help="also write the frequency x intensity energy heatmap")

    p_run = sub.add_parser("run", help="adaptive acquisition and reconstruction of a scene")
    common(p_run)
    p_run.add_argument("--detector", choices=sorted(DETECTOR_NAMES), default="sim")
    p_run.add_argument("--bind", default="127.0.0.1:0",
                       help="host:port for the human-loop session (detector=human)")
    p_run.add_argument("--timeout", type=float, default=30.0,
                       help="seconds to wait for each typed response")

    p_con = sub.add_parser("conscious", help="full-basis 8x8 explicit/implicit readout comparison")
    common(p_con)
    p_con.add_argument("--channels", default="sim",
                       help="comma list from: sim, typed (e.g. 'sim,typed')")
    p_con.add_argument("--typed-replay", default=None, metavar="FILE",
                       help="JSON file with 64 integers 0..15 for the typed channel")
    p_con.add_argument("--transcribed", action="store_true",
                       help="tag the replayed channel as transcribed speech")

    p_srv = sub.add_parser("serve", help="run the human-loop session service")
    common(p_srv)
    p_srv.add_argument("--bind", default="127.0.0.1:8765", help="host:port to listen on")
    p_srv.add_argument("--timeout", type=float, default=30.0)

    p_rep = sub.add_parser("replay", help="re-run a recorded session log")
    p_rep.add_argument("--log", required=True, help="session_log.json from a previous run")
    p_rep.add_argument("--out", default=None, metavar="DIR")

    return parser


def cmd_calibrate(args) -> int:
    if args.model:
        model = ResponseModel.from_config(args.model, freq_hz=args.freq)
    else:
        model = ResponseModel(freq_hz=args.freq)
    noise = NoiseModel(0.4, args.seed) if args.noise else None
    curve = calibrate(model, noise, sweep_levels=args.levels, repeats=args.repeats)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    curve.write_csv(out / "calibration.csv", harmonic_weights=model.harmonic_weights)
    if args.heatmap:
        rows = heatmap_rows(model, np.arange(3.0, 30.5, 0.5), np.linspace(0, 1, 33))
        write_energy_csv(out / "heatmap.csv", rows)
    print(
        f"calibrated at {model.freq_hz:g} Hz: linear range "
        f"[{curve.linear_range[0]:.4g}, {curve.linear_range[1]:.4g}], "
        f"gain {curve.gain:.4g}, bias {curve.bias:.4g} -> {out / 'calibration.csv'}"
    )
    return 0


def cmd_run(args) -> int:
    config = ExperimentConfig(
        scene_path=args.scene,
        freq_hz=args.freq,
        dwell_s=args.dwell,
        pause_s=args.pause,
        detector=DETECTOR_NAMES[args.detector],
        noise=args.noise,
        seed=args.seed,
        response_timeout_s=args.timeout,
        model_config=args.model,
    )
    if config.detector == "human":
        service = serve_session(args.bind, config, args.out)
        print(f"waiting for one human session on {service.host}:{service.port} ...")
        service.serve_forever(max_sessions=1)
        if isinstance(service.last_error, SessionPaused):
            print(f"session paused: {service.last_error} "
                  f"(checkpoint: {service.last_error.checkpoint})")
            return 2
        if service.last_result is None:
            print(f"session failed: {service.last_error}")
            return 1
        log = service.last_result
    else:
        log = run_experiment(config, out_dir=args.out)
    for rec in log.reconstructions:
        print(
            f"{rec['method']:>8}: ssim {rec['ssim']:.4f}  "
            f"patterns {rec['patterns_used']}  time {rec['simulated_time_s']:.1f} s"
        )
    if args.out:
        print(f"artifacts in {args.out}")
    return 0


def cmd_conscious(args) -> int:
    scene = load_scene(args.scene)
    channels = []
    for tok in args.channels.split(","):
        tok = tok.strip()
        if tok == "sim":
            channels.append("simulated")
        elif tok == "typed":
            channels.append("typed")
        elif tok:
            print(f"unknown channel {tok!r} (expected sim/typed)", file=sys.stderr)
            return 2
    typed_values = None
    if "typed" in channels:
        if not args.typed_replay:
            print("typed channel needs --typed-replay FILE", file=sys.stderr)
            return 2
        doc = json.loads(Path(args.typed_replay).read_text())
        typed_values = doc["values"] if isinstance(doc, dict) else doc
    result = conscious_protocol(
        scene,
        channels=tuple(channels),
        seed=args.seed,
        noise=args.noise,
        typed_values=typed_values,
        typed_channel="transcribed" if args.transcribed else "typed",
        out_dir=args.out,
    )
    for ch, res in result["results"].items():
        print(f"{ch:>12}: ssim {res['ssim']:.4f}")
    return 0


def cmd_serve(args) -> int:
    config = ExperimentConfig(
        scene_path=args.scene,
        freq_hz=args.freq,
        dwell_s=args.dwell,
        pause_s=args.pause,
        detector="human",
        noise=args.noise,
        seed=args.seed,
        response_timeout_s=args.timeout,
        model_config=args.model,
    )
    service = serve_session(args.bind, config, args.out)
    print(f"session service on {service.host}:{service.port} (ndjson or websocket)")
    try:
        service.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        service.stop()
    return 0


def cmd_replay(args) -> int:
    log = SessionLog.load(args.log)
    replayed = replay_experiment(log, out_dir=args.out)
    for rec in replayed.reconstructions:
        print(f"{rec['method']:>8}: ssim {rec['ssim']:.4f}")
    if args.out:
        print(f"artifacts in {args.out}")
    return 0


COMMANDS = {
    "calibrate": cmd_calibrate,
    "run": cmd_run,
    "conscious": cmd_conscious,
    "serve": cmd_serve,
    "replay": cmd_replay,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except GhostcarveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
