"""Seeded synthetic vibration generator and labelled benchmark datasets.

Each record is Gaussian noise plus a weak shaft tone, with fault
signatures added on top:

* bearing faults: impulse trains at the defect rate (1 % period jitter)
  ringing a damped structural resonance;
* gear faults: mesh tone and its second harmonic with +/- fr sidebands;
* unbalance: 1x fr; misalignment: 2x and 3x fr;
* looseness: 1x..4x fr plus a 0.5x fr subharmonic.

Randomness comes from Philox streams spawned from one seed, so every row
of a dataset can be regenerated on its own.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from ._parallel import pmap
from .errors import InvalidConfig, InvalidSpec
from .features import FeatureSpec, FeatureTable, bearing_spec, extract, gearbox_spec, harmonic_spec
from .signal import VibrationSignal

BEARING_FAULTS = {"outer_race": "bpfo_hz", "inner_race": "bpfi_hz", "ball": "bsf_hz"}
GEAR_FAULTS = {"gear_stage1": "gmf1_hz", "gear_stage2": "gmf2_hz"}
SHAFT_FAULTS = ("unbalance", "misalignment", "looseness")
FAULTS = ("none", *BEARING_FAULTS, *GEAR_FAULTS, *SHAFT_FAULTS)

# fault type -> label used by the feature specs
FAULT_LABELS = {
    "none": "normal", "outer_race": "outer race", "inner_race": "inner race", "ball": "ball",
    "gear_stage1": "1st stage", "gear_stage2": "2nd stage",
    "unbalance": "unbalance", "misalignment": "misalignment", "looseness": "looseness",
}


@dataclass(frozen=True)
class MachineParams:
    fr_hz: float
    bpfo_hz: float | None = None
    bpfi_hz: float | None = None
    bsf_hz: float | None = None
    gmf1_hz: float | None = None
    gmf2_hz: float | None = None
    resonance_hz: float | None = None

    def frequencies(self) -> dict[str, float]:
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass(frozen=True)
class Amplitudes:
    """Signature amplitudes at severity 1 (signal units)."""

    shaft_tone: float = 0.1
    impulse: float = 3.0
    gear_mesh: float = 0.25
    harmonic: float = 0.3
    damping_ratio: float = 0.1


@dataclass(frozen=True)
class SynthFaultSpec:
    """``fault`` is one fault name or a tuple of them (a combined fault)."""

    fault: str | tuple[str, ...] = "none"
    severity: float = 1.0
    machine: MachineParams = field(default_factory=lambda: MachineParams(fr_hz=30.0))
    noise_rms: float = 1.0
    seed: int | np.random.SeedSequence = 0
    amplitudes: Amplitudes = field(default_factory=Amplitudes)

    @property
    def faults(self) -> tuple[str, ...]:
        parts = (self.fault,) if isinstance(self.fault, str) else tuple(self.fault)
        return tuple(p for p in parts if p != "none")

    def validate(self, sample_rate: float) -> None:
        for f in ((self.fault,) if isinstance(self.fault, str) else tuple(self.fault)):
            if f not in FAULTS:
                raise InvalidSpec(f"fault: unknown fault {f!r}; choose from {FAULTS}")
        if self.severity < 0:
            raise InvalidSpec("severity must be >= 0")
        if not self.noise_rms > 0:
            raise InvalidSpec("noise_rms must be > 0")
        nyquist = sample_rate / 2.0
        for name, hz in self.machine.frequencies().items():
            if not 0 < hz < nyquist:
                raise InvalidSpec(f"machine.{name}={hz} must lie in (0, {nyquist}) Hz")
        need = []
        for f in self.faults:
            if f in BEARING_FAULTS:
                need += [BEARING_FAULTS[f], "resonance_hz"]
            elif f in GEAR_FAULTS:
                need.append(GEAR_FAULTS[f])
        for name in need:
            if getattr(self.machine, name) is None:
                raise InvalidSpec(f"machine.{name} is required for faults {list(self.faults)}")
        highest = {"gear_stage1": 2 * (self.machine.gmf1_hz or 0) + self.machine.fr_hz,
                   "gear_stage2": 2 * (self.machine.gmf2_hz or 0) + self.machine.fr_hz,
                   "misalignment": 3 * self.machine.fr_hz, "looseness": 4 * self.machine.fr_hz}
        for f in self.faults:
            if highest.get(f, 0) >= nyquist:
                raise InvalidSpec(f"{f}: signature at {highest[f]} Hz exceeds Nyquist {nyquist} Hz")


def _tone(t, hz, amp, rng):
    return amp * np.sin(2 * np.pi * hz * t + rng.uniform(0, 2 * np.pi))


def _impulse_train(n, fs, rate_hz, amp, resonance_hz, zeta, rng):
    period = fs / rate_hz
    n_imp = int(np.ceil(n / period)) + 2
    gaps = period * (1.0 + 0.01 * rng.standard_normal(n_imp))  # slip
    pos = rng.uniform(0, period) + np.concatenate(([0.0], np.cumsum(gaps[:-1])))
    pos = np.rint(pos).astype(int)
    pos = pos[pos < n]
    train = np.zeros(n)
    train[pos] = amp * (1.0 + 0.02 * rng.standard_normal(pos.size))
    decay = 2 * np.pi * zeta * resonance_hz
    th = np.arange(int(np.ceil(5.0 / decay * fs)) + 1) / fs
    ring = np.exp(-decay * th) * np.sin(2 * np.pi * resonance_hz * th)
    return fftconvolve(train, ring)[:n]


def generate(spec: SynthFaultSpec, n_samples: int, sample_rate: float) -> VibrationSignal:
    if n_samples < 1:
        raise InvalidSpec("n_samples must be >= 1")
    spec.validate(sample_rate)
    seed = spec.seed if isinstance(spec.seed, np.random.SeedSequence) else np.random.SeedSequence(spec.seed)
    rng = np.random.Generator(np.random.Philox(seed))
    m, a, sev = spec.machine, spec.amplitudes, spec.severity
    t = np.arange(n_samples) / sample_rate
    x = spec.noise_rms * rng.standard_normal(n_samples)
    x += _tone(t, m.fr_hz, a.shaft_tone * spec.noise_rms, rng)
    for fault in spec.faults:
        if fault in BEARING_FAULTS:
            rate = getattr(m, BEARING_FAULTS[fault])
            x += _impulse_train(n_samples, sample_rate, rate, sev * a.impulse * spec.noise_rms,
                                m.resonance_hz, a.damping_ratio, rng)
        elif fault in GEAR_FAULTS:
            gmf = getattr(m, GEAR_FAULTS[fault])
            amp = sev * a.gear_mesh * spec.noise_rms
            for h, scale in ((1, 1.0), (2, 0.5)):
                x += _tone(t, h * gmf, scale * amp, rng)
                x += _tone(t, h * gmf - m.fr_hz, 0.5 * scale * amp, rng)
                x += _tone(t, h * gmf + m.fr_hz, 0.5 * scale * amp, rng)
        else:
            amp = sev * a.harmonic * spec.noise_rms
            parts = {"unbalance": ((1, 1.0),),
                     "misalignment": ((2, 1.0), (3, 0.8)),
                     "looseness": ((0.5, 0.5), (1, 0.8), (2, 0.8), (3, 0.7), (4, 0.6))}[fault]
            for h, scale in parts:
                x += _tone(t, h * m.fr_hz, scale * amp, rng)
    label = "+".join(spec.faults) or "none"
    return VibrationSignal(x, sample_rate, {"fault": label, "severity": sev})


# ---------------------------------------------------------------------------
# benchmark datasets


CASE_STYLES = ("bearing_runto_failure", "gearbox_static", "mechanical_static")


@dataclass(frozen=True)
class BenchParams:
    """Knobs for one dataset style; unset fields take style defaults.

    ``counts`` (static styles) maps fault type to number of rows.
    ``n_rows`` / ``onset`` / ``ramp_rows`` / ``max_severity`` shape the
    run-to-failure stream, whose severity rises linearly from 0 at
    ``onset`` to ``max_severity`` after ``ramp_rows`` rows. Static rows draw
    their severity uniformly from ``severity_range``.
    """

    sample_rate: float | None = None
    n_samples: int | None = None
    noise_rms: float = 1.0
    machine: MachineParams | None = None
    envelope_band: tuple[float, float] | None = None
    counts: dict | None = None
    n_rows: int = 700
    onset: int = 500
    ramp_rows: int = 5
    max_severity: float = 1.5
    fault: str = "outer_race"
    severity_range: tuple[float, float] = (0.8, 1.6)
    amplitudes: Amplitudes = field(default_factory=Amplitudes)

    @classmethod
    def from_dict(cls, d: dict | None) -> "BenchParams":
        d = dict(d or {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidConfig(f"params: unknown dataset parameter(s) {sorted(unknown)}")
        if isinstance(d.get("machine"), dict):
            d["machine"] = MachineParams(**d["machine"])
        if isinstance(d.get("amplitudes"), dict):
            d["amplitudes"] = Amplitudes(**d["amplitudes"])
        for key in ("envelope_band", "severity_range"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


STYLE_DEFAULTS = {
    "bearing_runto_failure": dict(
        sample_rate=20000.0, n_samples=20480, envelope_band=(3000.0, 5000.0),
        machine=MachineParams(fr_hz=33.3, bpfo_hz=236.4, bpfi_hz=296.9, bsf_hz=139.9, resonance_hz=4000.0)),
    "gearbox_static": dict(
        sample_rate=8192.0, n_samples=8192,
        machine=MachineParams(fr_hz=20.0, gmf1_hz=400.0, gmf2_hz=1000.0),
        counts={"none": 104, "gear_stage1": 104, "gear_stage2": 104}),
    "mechanical_static": dict(
        sample_rate=2048.0, n_samples=4096, machine=MachineParams(fr_hz=28.625),
        counts={"none": 200, "unbalance": 50, "misalignment": 50}),
}


def resolve_params(case_style: str, params=None) -> BenchParams:
    if case_style not in CASE_STYLES:
        raise InvalidConfig(f"case_style: unknown style {case_style!r}; choose from {CASE_STYLES}")
    p = params if isinstance(params, BenchParams) else BenchParams.from_dict(params)
    fill = {k: v for k, v in STYLE_DEFAULTS[case_style].items() if getattr(p, k) is None}
    p = replace(p, **fill)
    if p.counts is not None:
        for k, v in p.counts.items():
            if k not in FAULTS:
                raise InvalidConfig(f"counts: unknown fault {k!r}")
            if not isinstance(v, (int, np.integer)) or v < 0:
                raise InvalidConfig(f"counts.{k}: must be a non-negative integer, got {v!r}")
        if sum(p.counts.values()) == 0:
            raise InvalidConfig("counts: dataset would be empty")
    if case_style == "bearing_runto_failure":
        if p.n_rows < 1 or not 0 <= p.onset <= p.n_rows:
            raise InvalidConfig("onset: must lie in [0, n_rows]")
        if p.ramp_rows < 1:
            raise InvalidConfig("ramp_rows: must be >= 1")
        if p.fault not in BEARING_FAULTS:
            raise InvalidConfig(f"fault: run-to-failure streams need a bearing fault, got {p.fault!r}")
    lo, hi = p.severity_range
    if not 0 <= lo <= hi:
        raise InvalidConfig("severity_range: need 0 <= low <= high")
    return p


def case_spec(case_style: str, params=None) -> FeatureSpec:
    """Feature spec matching a dataset style."""
    p = resolve_params(case_style, params)
    df = p.sample_rate / p.n_samples
    m = p.machine
    if case_style == "bearing_runto_failure":
        return bearing_spec(m.bpfo_hz, m.bpfi_hz, m.bsf_hz, df=df, envelope_band=p.envelope_band)
    if case_style == "gearbox_static":
        return gearbox_spec(m.fr_hz, m.gmf1_hz, m.gmf2_hz)
    return harmonic_spec(m.fr_hz, df=df)


def _row_plan(case_style: str, p: BenchParams, rng: np.random.Generator):
    if case_style == "bearing_runto_failure":
        faults, sev = [], []
        for i in range(p.n_rows):
            k = i - p.onset
            if k < 0:
                faults.append("none")
                sev.append(0.0)
            else:
                faults.append(p.fault)
                sev.append(p.max_severity * min(1.0, (k + 1) / p.ramp_rows))
        return faults, sev
    faults = [f for f, c in p.counts.items() for _ in range(int(c))]
    rng.shuffle(faults)
    lo, hi = p.severity_range
    sev = [0.0 if f == "none" else float(rng.uniform(lo, hi)) for f in faults]
    return faults, sev


def generate_signals(case_style: str, params=None, seed: int = 0):
    """Signals, per-row fault names and severities for a dataset style."""
    p = resolve_params(case_style, params)
    root = np.random.SeedSequence(seed)
    plan_seed, row_seed = root.spawn(2)
    faults, sev = _row_plan(case_style, p, np.random.Generator(np.random.Philox(plan_seed)))
    seeds = row_seed.spawn(len(faults))

    def one(i):
        spec = SynthFaultSpec(faults[i], sev[i], p.machine, p.noise_rms, seeds[i], p.amplitudes)
        return generate(spec, p.n_samples, p.sample_rate)

    return pmap(one, range(len(faults))), faults, sev


def generate_dataset(case_style: str, params=None, seed: int = 0) -> tuple[FeatureTable, dict]:
    """Labelled feature table plus ground-truth metadata for one style."""
    p = resolve_params(case_style, params)
    spec = case_spec(case_style, p)
    signals, faults, sev = generate_signals(case_style, p, seed)
    values = np.vstack(pmap(lambda s: extract(s, spec).values, signals))
    labels = np.array([f != "none" for f in faults])
    table = FeatureTable(spec.names, values, labels)
    truth = {
        "case_style": case_style,
        "seed": seed,
        "n_rows": len(faults),
        "faults": faults,
        "fault_labels": [FAULT_LABELS[f] for f in faults],
        "severity": sev,
        "sample_rate": p.sample_rate,
        "n_samples": p.n_samples,
        "machine": p.machine.frequencies(),
        "feature_spec": spec.to_dict(),
    }
    if case_style == "bearing_runto_failure":
        truth["onset"] = p.onset
    else:
        truth["counts"] = {k: int(v) for k, v in p.counts.items()}
    return table, truth


def write_dataset(table: FeatureTable, truth: dict, out_dir: str | Path) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table.to_csv(out / "features.csv")
    (out / "truth.json").write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n")
    FeatureSpec.from_dict(truth["feature_spec"]).save(out / "feature_spec.json")
    return out / "features.csv", out / "truth.json"
