"""Experiment orchestration.

Scene ingestion, the simulated-time ledger, per-stripe adaptive acquisition
with pluggable detectors (simulated evoked-energy, ideal photodiode, or a
live human typing perceived intensities), reconstruction with each requested
method, the conscious/nonconscious comparison protocol on full-basis 8x8
scenes, session logging and byte-stable artifact emission, and replay of
recorded sessions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import imageio
from .carving import BucketRecord, CarveState, adaptive_acquire, surviving_record, zero_threshold
from .detector import (
    CalibrationCurve,
    NoiseModel,
    ResponseModel,
    calibrate,
    measure_bucket,
)
from .errors import ReplayError, SceneFormatError, SessionPaused
from .patterns import binarize, hadamard, make_scan_plan
from .reconstruct import (
    Reconstruction,
    SceneImage,
    apply_zero_masks,
    assemble,
    carved_gi,
    ssim,
    standard_gi,
)

METHODS = ("GI", "CGI", "CGI+mask")
TYPED_LEVELS = 15  # responses are integers 0..15
SNR_REFERENCE_PIXELS = 16


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def load_scene(path) -> SceneImage:
    """Read a PGM (P2/P5) or text 0/1 grid and binarize at 0.5.

    Scene sides must each be a power of two so column stripes admit full
    Hadamard pattern sets.
    """
    values = imageio.read_image(path)
    h, w = values.shape
    if not _is_power_of_two(w) or not _is_power_of_two(h):
        raise SceneFormatError(
            f"scene is {w}x{h}; sides must be powers of 2", path=path
        )
    return SceneImage((values >= 0.5).astype(float))


def acquisition_time(
    patterns_used: int,
    dwell_s: float,
    pause_s: float,
    pixel_count: int,
    reference: int = SNR_REFERENCE_PIXELS,
) -> float:
    """Simulated acquisition time with SNR-compensated dwell.

    Per-pattern dwell scales with pixel count relative to the reference
    (constant per-pixel SNR needs dwell proportional to N, hence total time
    proportional to N^2 unsegmented, N^2/q with q stripe segments):
    T = patterns * (dwell * N / N_ref + pause).
    """
    if patterns_used < 0 or dwell_s < 0 or pause_s < 0 or pixel_count <= 0 or reference <= 0:
        raise ValueError("acquisition_time inputs must be positive")
    dwell_scaled = dwell_s * (pixel_count / reference)
    return patterns_used * (dwell_scaled + pause_s)


@dataclass
class ExperimentConfig:
    """Everything a run needs; defaults mirror the standard operating point."""

    scene_path: str
    freq_hz: float = 6.0
    dwell_s: float = 2.0
    pause_s: float = 0.5
    detector: str = "simulated"  # simulated | ideal | human
    noise: bool = True
    seed: int = 0
    methods: tuple = METHODS
    response_timeout_s: float = 30.0
    model_config: str | None = None

    def __post_init__(self):
        if self.detector not in ("simulated", "ideal", "human"):
            raise ValueError(f"unknown detector kind {self.detector!r}")
        if self.detector == "simulated" and self.dwell_s < 2.0:
            raise ValueError(
                "simulated evoked readout needs >= 2 s dwell per pattern for "
                "spectral extraction"
            )
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown reconstruction methods {bad}")

    def to_jsonable(self) -> dict:
        d = asdict(self)
        d["scene_path"] = str(d["scene_path"])
        d["methods"] = list(self.methods)
        return d


@dataclass
class SessionEvent:
    t_s: float
    duration_s: float
    stripe: int
    column_id: int
    pattern_id: int
    level: float
    value: float
    channel: str

    def to_jsonable(self) -> dict:
        return {
            "t_s": self.t_s,
            "duration_s": self.duration_s,
            "stripe": self.stripe,
            "column_id": self.column_id,
            "pattern_id": self.pattern_id,
            "level": self.level,
            "value": self.value,
            "channel": self.channel,
        }


@dataclass
class SessionLog:
    """Everything recorded during a run, sufficient to replay it exactly."""

    config: dict
    scene_rows: list
    events: list = field(default_factory=list)
    per_stripe: list = field(default_factory=list)  # {"state":..., "record":...}
    reconstructions: list = field(default_factory=list)
    patterns_used: int = 0
    simulated_time_s: float = 0.0

    def to_jsonable(self) -> dict:
        return {
            "config": self.config,
            "scene_rows": self.scene_rows,
            "events": [e.to_jsonable() for e in self.events],
            "per_stripe": self.per_stripe,
            "reconstructions": self.reconstructions,
            "patterns_used": self.patterns_used,
            "simulated_time_s": self.simulated_time_s,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_jsonable(), sort_keys=True, indent=1)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def from_jsonable(cls, d: dict) -> "SessionLog":
        log = cls(config=d["config"], scene_rows=list(d["scene_rows"]))
        log.events = [SessionEvent(**e) for e in d["events"]]
        log.per_stripe = list(d["per_stripe"])
        log.reconstructions = list(d["reconstructions"])
        log.patterns_used = int(d["patterns_used"])
        log.simulated_time_s = float(d["simulated_time_s"])
        return log

    @classmethod
    def load(cls, path) -> "SessionLog":
        return cls.from_jsonable(json.loads(Path(path).read_text()))

    def scene(self) -> SceneImage:
        rows = [[float(ch) for ch in row] for row in self.scene_rows]
        return SceneImage(np.asarray(rows))


def scene_to_rows(scene: SceneImage) -> list:
    return ["".join("1" if v >= 0.5 else "0" for v in row) for row in scene.values]


def typed_to_energy(value: int, calib: CalibrationCurve) -> float:
    """Map a typed 0..15 intensity estimate onto the energy scale.

    Affine onto the calibration linear range, then through the measured
    curve, so thresholding and inversion treat typed values exactly like
    measured energies (a typed 0 lands on the zero-stimulus baseline and
    fires the carve threshold).
    """
    if not (0 <= int(value) <= TYPED_LEVELS):
        raise ValueError(f"typed value {value} outside 0..{TYPED_LEVELS}")
    lo, hi = calib.linear_range
    intensity = lo + (hi - lo) * (int(value) / TYPED_LEVELS)
    return float(calib.energy_at(intensity))


def quantize_level(bucket: float, bucket_max: float) -> int:
    """Bucket value -> displayed/typable 0..15 level (endpoints map exactly)."""
    if bucket_max <= 0:
        return 0
    return int(round(TYPED_LEVELS * min(max(bucket / bucket_max, 0.0), 1.0)))


class _SimulatedStripeDetector:
    def __init__(self, model, calib, noise_model):
        self.model = model
        self.calib = calib
        self.noise_model = noise_model

    def __call__(self, pattern, obj) -> float:
        return measure_bucket(pattern, obj, self.model, self.noise_model, self.calib)


def _stripe_reconstructions(states, records, plan, methods, to_overlap, baseline):
    """Per-method assembled images from per-stripe acquisition results.

    ``to_overlap`` maps raw bucket energies to pattern-overlap units (pixel
    counts), so carved solves land directly on the object's 0/1 scale and
    need no data-driven renormalization; values are clipped to [0, 1].
    """
    images = {}
    if "GI" in methods:
        stripes = []
        for state, record in zip(states, records):
            energies = np.array([e.energy for e in record.entries])
            pats = np.stack([e.pattern for e in record.entries], axis=1)
            stripes.append(standard_gi(energies, pats, baseline=baseline))
        images["GI"] = assemble(stripes, plan)
    need_cgi = [m for m in ("CGI", "CGI+mask") if m in methods]
    if need_cgi:
        raw = []
        for i, (state, record) in enumerate(zip(states, records)):
            if state.empty:
                raw.append(np.zeros(state.n_pixels))
                continue
            energies, _ = surviving_record(state, record)
            buckets = to_overlap(energies)
            # A bucket cannot exceed the lit-pixel count of its pattern.
            lit = state.current.entries.sum(axis=0).astype(float)
            buckets = np.clip(buckets, 0.0, lit)
            raw.append(
                carved_gi(buckets, state.current, state.n_pixels, stripe_label=str(i))
            )
        for method in need_cgi:
            stripes = raw
            if method == "CGI+mask":
                stripes = [
                    apply_zero_masks(est, st.dropped_masks) for est, st in zip(raw, states)
                ]
            images[method] = assemble([np.clip(s, 0.0, 1.0) for s in stripes], plan)
    return images


def run_experiment(
    config: ExperimentConfig, responder=None, out_dir=None, resume=None
) -> SessionLog:
    """Per-stripe adaptive acquisition plus every requested reconstruction.

    ``responder(pattern_id, level, column_id, stripe)`` supplies typed 0..15
    values when the detector is human (the session service provides one); a
    response timeout checkpoints the stripe state and pauses the session.
    ``resume`` takes a checkpoint document (or its path) and continues at
    the exact pattern the pause interrupted. Simulated runs are
    deterministic for a fixed seed.
    """
    scene = load_scene(config.scene_path)
    plan = make_scan_plan(scene.width, scene.height)
    stripe_len = plan.stripe_length

    if config.model_config:
        model = ResponseModel.from_config(config.model_config, freq_hz=config.freq_hz)
    else:
        model = ResponseModel(freq_hz=config.freq_hz)
    calib = calibrate(model, None)
    if config.detector == "ideal":
        threshold = 0.5
        baseline = 0.0
        to_overlap = lambda energies: np.asarray(energies, dtype=float)  # noqa: E731
    else:
        threshold = zero_threshold(model.mu0)
        baseline = model.mu0
        to_overlap = lambda energies: calib.invert_energy(energies) * (  # noqa: E731
            stripe_len / calib.span
        )

    log = SessionLog(config=config.to_jsonable(), scene_rows=scene_to_rows(scene))
    dwell_scaled = config.dwell_s * (stripe_len / SNR_REFERENCE_PIXELS)
    step = dwell_scaled + config.pause_s
    clock = {"t": 0.0}

    states, records = [], []
    start_stripe = 0
    resume_state = resume_record = None
    if resume is not None:
        if isinstance(resume, (str, Path)):
            resume = json.loads(Path(resume).read_text())
        start_stripe = int(resume["stripe"])
        resume_state = CarveState.from_jsonable(resume["state"])
        resume_record = BucketRecord.from_jsonable(resume["record"])
        for item in resume["completed"]:
            states.append(CarveState.from_jsonable(item["state"]))
            records.append(BucketRecord.from_jsonable(item["record"]))
        log.events = [SessionEvent(**e) for e in resume["events"]]
        clock["t"] = len(log.events) * step

    for x in range(start_stripe, plan.segment_count):
        obj = scene.values[:, x].astype(np.int64)
        if x == start_stripe and resume_state is not None:
            state, record = resume_state, resume_record
        else:
            state = CarveState.fresh(stripe_len, threshold)
            record = BucketRecord()

        if config.detector == "simulated":
            noise_model = NoiseModel(0.4, [config.seed, x]) if config.noise else None
            det = _SimulatedStripeDetector(model, calib, noise_model)
        elif config.detector == "ideal":
            det = lambda pat, ob: float(np.dot(pat, ob))  # noqa: E731
        else:
            if responder is None:
                raise ValueError("human detector needs a responder (session service)")
            det = _HumanStripeDetector(responder, state, calib, x, stripe_len)

        def on_measure(entry, stripe=x):
            lo, hi = calib.linear_range
            level = lo + (hi - lo) * float(np.mean(entry.pattern))
            log.events.append(
                SessionEvent(
                    t_s=clock["t"],
                    duration_s=step,
                    stripe=stripe,
                    column_id=int(entry.column_id),
                    pattern_id=stripe * stripe_len + int(entry.column_id) - 1,
                    level=level,
                    value=float(entry.energy),
                    channel=config.detector,
                )
            )
            clock["t"] += step

        try:
            state, record = adaptive_acquire(
                det, obj, threshold, state=state, record=record, on_measure=on_measure
            )
        except SessionPaused as paused:
            paused.checkpoint = _checkpoint(out_dir, log, states, records, state, record, x)
            raise
        states.append(state)
        records.append(record)

    log.per_stripe = [
        {"state": st.to_jsonable(), "record": rec.to_jsonable()}
        for st, rec in zip(states, records)
    ]
    log.patterns_used = sum(len(r) for r in records)
    log.simulated_time_s = acquisition_time(
        log.patterns_used, config.dwell_s, config.pause_s, stripe_len
    )

    images = _stripe_reconstructions(states, records, plan, config.methods, to_overlap, baseline)
    params = {
        "freq_hz": config.freq_hz,
        "dwell_s": config.dwell_s,
        "pause_s": config.pause_s,
        "seed": config.seed,
        "noise": config.noise,
        "detector": config.detector,
        "linear_range": list(calib.linear_range),
        "threshold": threshold,
        "ssim_window": {"size": 11, "sigma": 1.5, "k1": 0.01, "k2": 0.03, "range": 1.0},
    }
    for method, image in images.items():
        _, entry = _reconstruction_entry(
            method, image, scene, log.patterns_used, log.simulated_time_s, params
        )
        log.reconstructions.append(entry)

    if out_dir is not None:
        write_artifacts(out_dir, log, images)
    return log


def scene_to_rows_float(image: SceneImage) -> list:
    return [[round(float(v), 12) for v in row] for row in image.values]


def _reconstruction_entry(method, image, truth, patterns_used, simulated_time_s, parameters):
    """Build the Reconstruction record and its JSON-able log entry."""
    recon = Reconstruction(
        image=image,
        method=method,
        ssim=ssim(image, truth),
        patterns_used=patterns_used,
        simulated_time_s=simulated_time_s,
        parameters=parameters,
    )
    entry = {
        "method": recon.method,
        "ssim": recon.ssim,
        "patterns_used": recon.patterns_used,
        "simulated_time_s": recon.simulated_time_s,
        "rows": scene_to_rows_float(recon.image),
        "parameters": recon.parameters,
    }
    return recon, entry


METHOD_SLUGS = {"GI": "gi", "CGI": "cgi", "CGI+mask": "cgi_mask"}


def write_artifacts(out_dir, log: SessionLog, images: dict) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for rec in log.reconstructions:
        slug = METHOD_SLUGS[rec["method"]]
        imageio.write_pgm(out / f"recon_{slug}.pgm", images[rec["method"]].values)
        sidecar = {k: v for k, v in rec.items() if k != "rows"}
        (out / f"recon_{slug}.json").write_text(
            json.dumps(sidecar, sort_keys=True, indent=1)
        )
    log.save(out / "session_log.json")


def _checkpoint(out_dir, log, states, records, state, record, stripe):
    doc = {
        "stripe": stripe,
        "state": state.to_jsonable(),
        "record": record.to_jsonable(),
        "completed": [
            {"state": st.to_jsonable(), "record": rec.to_jsonable()}
            for st, rec in zip(states, records)
        ],
        "events": [e.to_jsonable() for e in log.events],
    }
    if out_dir is None:
        return doc
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"checkpoint_stripe{stripe}.json"
    path.write_text(json.dumps(doc, sort_keys=True, indent=1))
    return str(path)


class _HumanStripeDetector:
    """Bridges the acquisition loop to a typed-response session.

    Derives the next column id the same way the loop does (smallest pending
    id against the shared state), pushes a stimulus, and maps the typed
    0..15 reply onto the energy scale.
    """

    def __init__(self, responder, state, calib, stripe, stripe_len):
        self.responder = responder
        self.state = state
        self.calib = calib
        self.stripe = stripe
        self.stripe_len = stripe_len

    def __call__(self, pattern, obj) -> float:
        pending = [
            c
            for c in sorted(self.state.current.column_ids.tolist())
            if c not in self.state.projected
        ]
        column_id = pending[0]
        pattern_id = self.stripe * self.stripe_len + column_id - 1
        lo, hi = self.calib.linear_range
        level = lo + (hi - lo) * float(np.mean(pattern))
        value = self.responder(pattern_id, level, column_id, self.stripe)
        return typed_to_energy(value, self.calib)


def replay_experiment(log: SessionLog, out_dir=None) -> SessionLog:
    """Re-run a recorded session's responses through the engine.

    The recorded per-stripe energies drive a fresh acquisition; carving
    decisions and reconstructions are recomputed, so a faithful engine
    reproduces the original artifacts byte for byte.
    """
    cfg_dict = dict(log.config)
    scene = log.scene()
    plan = make_scan_plan(scene.width, scene.height)
    stripe_len = plan.stripe_length
    if len(log.per_stripe) != plan.segment_count:
        raise ReplayError(
            f"log has {len(log.per_stripe)} stripes for a {scene.width}-column scene"
        )

    model = ResponseModel(freq_hz=float(cfg_dict.get("freq_hz", 6.0)))
    calib = calibrate(model, None)
    if cfg_dict.get("detector") == "ideal":
        threshold = 0.5
        baseline = 0.0
        to_overlap = lambda energies: np.asarray(energies, dtype=float)  # noqa: E731
    else:
        threshold = zero_threshold(model.mu0)
        baseline = model.mu0
        to_overlap = lambda energies: calib.invert_energy(energies) * (  # noqa: E731
            stripe_len / calib.span
        )

    replay_log = SessionLog(config=cfg_dict, scene_rows=list(log.scene_rows))
    dwell_scaled = float(cfg_dict.get("dwell_s", 2.0)) * (stripe_len / SNR_REFERENCE_PIXELS)
    step = dwell_scaled + float(cfg_dict.get("pause_s", 0.5))
    clock = {"t": 0.0}

    states, records = [], []
    for x in range(plan.segment_count):
        recorded = BucketRecord.from_jsonable(log.per_stripe[x]["record"])
        queue = [e.energy for e in recorded.entries]
        it = iter(queue)
        obj = scene.values[:, x].astype(np.int64)

        def det(pattern, ob, _it=it):
            try:
                return next(_it)
            except StopIteration:
                raise ReplayError("recorded session ended before acquisition did") from None

        def on_measure(entry, stripe=x):
            lo, hi = calib.linear_range
            level = lo + (hi - lo) * float(np.mean(entry.pattern))
            replay_log.events.append(
                SessionEvent(
                    t_s=clock["t"],
                    duration_s=step,
                    stripe=stripe,
                    column_id=int(entry.column_id),
                    pattern_id=stripe * stripe_len + int(entry.column_id) - 1,
                    level=level,
                    value=float(entry.energy),
                    channel=str(cfg_dict.get("detector", "simulated")),
                )
            )
            clock["t"] += step

        state, record = adaptive_acquire(det, obj, threshold, on_measure=on_measure)
        states.append(state)
        records.append(record)

    replay_log.per_stripe = [
        {"state": st.to_jsonable(), "record": rec.to_jsonable()}
        for st, rec in zip(states, records)
    ]
    replay_log.patterns_used = sum(len(r) for r in records)
    replay_log.simulated_time_s = acquisition_time(
        replay_log.patterns_used,
        float(cfg_dict.get("dwell_s", 2.0)),
        float(cfg_dict.get("pause_s", 0.5)),
        stripe_len,
    )

    methods = tuple(cfg_dict.get("methods", list(METHODS)))
    images = _stripe_reconstructions(states, records, plan, methods, to_overlap, baseline)
    params = None
    for rec in log.reconstructions:
        params = rec.get("parameters")
        break
    params = params or {
        "freq_hz": cfg_dict.get("freq_hz"),
        "detector": cfg_dict.get("detector"),
    }
    for method, image in images.items():
        _, entry = _reconstruction_entry(
            method, image, scene, replay_log.patterns_used, replay_log.simulated_time_s, params
        )
        replay_log.reconstructions.append(entry)
    if out_dir is not None:
        write_artifacts(out_dir, replay_log, images)
    return replay_log


def conscious_protocol(
    scene: SceneImage,
    channels=("simulated",),
    seed: int = 0,
    typed_values=None,
    typed_channel: str = "typed",
    noise: bool = True,
    model: ResponseModel | None = None,
    out_dir=None,
) -> dict:
    """Full-basis comparison of implicit and explicit intensity readouts.

    The scene must be 8x8: its 64 ideal bucket values (full Hadamard basis
    on the unwrapped image) are presented as flicker intensities at 2 s
    dwell / 0.5 s pause. The simulated channel measures each presentation
    through the detector model; the typed channel takes integers 0..15 from
    a replay list or a live responder callable. Each enabled channel gets
    its own weighted-sum reconstruction and SSIM against ground truth.

    A missing typed value is re-prompted once (live) and then substituted
    with the channel mean.
    """
    values = scene.values if isinstance(scene, SceneImage) else np.asarray(scene, dtype=float)
    if values.shape != (8, 8):
        raise ValueError(f"conscious protocol expects an 8x8 scene, got {values.shape}")
    unknown = [c for c in channels if c not in ("simulated", "typed")]
    if unknown:
        raise ValueError(f"unknown channels {unknown}")

    flat = values.reshape(-1).astype(np.int64)
    basis = binarize(hadamard(6))
    buckets = basis.entries.T @ flat
    bmax = float(buckets.max())

    mdl = model or ResponseModel(freq_hz=6.0)
    calib = calibrate(mdl, None)
    lo, hi = calib.linear_range
    levels = lo + (hi - lo) * (buckets / bmax if bmax > 0 else np.zeros_like(buckets, dtype=float))

    log = SessionLog(
        config={
            "protocol": "conscious",
            "channels": list(channels),
            "seed": seed,
            "noise": noise,
            "freq_hz": mdl.freq_hz,
            "typed_channel": typed_channel,
        },
        scene_rows=scene_to_rows(SceneImage(values)),
    )
    step = 2.0 + 0.5
    results = {}

    if "simulated" in channels:
        noise_model = NoiseModel(0.4, [seed, 0xE]) if noise else None
        energies = []
        for n, level in enumerate(levels):
            mu = mdl.mean_energy(float(level))
            e = noise_model.draw(mu) if noise_model else mu
            energies.append(e)
            log.events.append(
                SessionEvent(
                    t_s=n * step,
                    duration_s=step,
                    stripe=0,
                    column_id=n + 1,
                    pattern_id=n,
                    level=float(level),
                    value=float(e),
                    channel="simulated",
                )
            )
        recon = standard_gi(np.asarray(energies), basis.entries, baseline=mdl.mu0)
        image = SceneImage(recon.reshape(8, 8))
        results["simulated"] = {"image": image, "ssim": ssim(image, SceneImage(values))}

    if "typed" in channels:
        if typed_values is None:
            raise ValueError("typed channel enabled but no typed values or responder given")
        collected = []
        for n in range(64):
            v = _typed_value_at(typed_values, n, levels[n])
            collected.append(v)
        present = [v for v in collected if v is not None]
        fallback = float(np.mean(present)) if present else 0.0
        typed = np.array([fallback if v is None else float(v) for v in collected])
        for n, v in enumerate(typed):
            log.events.append(
                SessionEvent(
                    t_s=n * step,
                    duration_s=step,
                    stripe=0,
                    column_id=n + 1,
                    pattern_id=n,
                    level=float(levels[n]),
                    value=float(v),
                    channel=typed_channel,
                )
            )
        recon = standard_gi(typed / TYPED_LEVELS, basis.entries, baseline=0.0)
        image = SceneImage(recon.reshape(8, 8))
        results[typed_channel] = {"image": image, "ssim": ssim(image, SceneImage(values))}

    log.patterns_used = 64
    log.simulated_time_s = 64 * step
    for ch, res in results.items():
        _, entry = _reconstruction_entry(
            "GI",
            res["image"],
            SceneImage(values),
            64,
            log.simulated_time_s,
            {"protocol": "conscious", "typed_scale": TYPED_LEVELS},
        )
        entry["channel"] = ch
        log.reconstructions.append(entry)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for ch, res in results.items():
            imageio.write_pgm(out / f"conscious_{ch}.pgm", res["image"].values)
        log.save(out / "conscious_log.json")
    return {"log": log, "results": results}


def _typed_value_at(typed_values, index: int, level: float):
    """One typed response; callables are re-prompted once on a miss."""
    if callable(typed_values):
        v = typed_values(index, float(level))
        if v is None:
            v = typed_values(index, float(level))  # single re-prompt
        return v
    seq = list(typed_values)
    if index >= len(seq):
        return None
    return seq[index]
