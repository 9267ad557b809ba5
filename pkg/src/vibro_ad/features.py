"""Named, tagged feature vectors extracted from vibration signals."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateSignal, FormatError, InvalidSpec
from .signal import (
    Spectrum,
    VibrationSignal,
    band_energy,
    compute_spectrum,
    envelope_spectrum,
)

GENERAL = "general"
SPECIFIC = "specific"
TIME_STATISTICS = ("rms", "kurtosis")


# ---------------------------------------------------------------------------
# time-domain statistics


def rms(signal: VibrationSignal) -> float:
    x = signal.samples
    return float(np.sqrt(np.mean(x * x)))


def kurtosis(signal: VibrationSignal) -> float:
    """Population (non-excess) kurtosis m4 / m2**2; a Gaussian gives ~3."""
    x = signal.samples
    if x.size < 4:
        raise DegenerateSignal(f"kurtosis needs at least 4 samples, got {x.size}")
    d = x - x.mean()
    m2 = np.mean(d * d)
    scale = max(float(np.max(np.abs(x))), 1e-300)
    if m2 <= (1e-14 * scale) ** 2:
        raise DegenerateSignal("kurtosis undefined for a signal with zero variance")
    return float(np.mean(d**4) / m2**2)


_STATISTICS = {"rms": rms, "kurtosis": kurtosis}


# ---------------------------------------------------------------------------
# specs


@dataclass(frozen=True)
class FeatureDef:
    name: str
    kind: str
    params: dict
    tag: str = GENERAL
    fault_label: str | tuple[str, ...] | None = None

    @property
    def fault_labels(self) -> tuple[str, ...]:
        if self.fault_label is None:
            return ()
        if isinstance(self.fault_label, str):
            return (self.fault_label,)
        return tuple(self.fault_label)

    @property
    def is_specific(self) -> bool:
        return self.tag == SPECIFIC

    def validate(self) -> None:
        if not self.name:
            raise InvalidSpec("feature name must be non-empty")
        if self.tag not in (GENERAL, SPECIFIC):
            raise InvalidSpec(f"{self.name}: tag must be 'general' or 'specific', got {self.tag!r}")
        if self.tag == SPECIFIC and not self.fault_labels:
            raise InvalidSpec(f"{self.name}: specific features need a fault_label")
        if self.tag == GENERAL and self.fault_labels:
            raise InvalidSpec(f"{self.name}: general features carry no fault_label")
        if self.kind == "time_stat":
            if self.params.get("statistic") not in TIME_STATISTICS:
                raise InvalidSpec(f"{self.name}: statistic must be one of {TIME_STATISTICS}")
        elif self.kind == "band_energy":
            try:
                center = float(self.params["center_hz"])
                half = float(self.params["half_width_hz"])
            except (KeyError, TypeError, ValueError):
                raise InvalidSpec(f"{self.name}: band_energy needs center_hz and half_width_hz") from None
            if center < 0 or half <= 0:
                raise InvalidSpec(f"{self.name}: need center_hz >= 0 and half_width_hz > 0")
            basis = self.params.get("basis", "direct")
            if basis not in ("direct", "envelope"):
                raise InvalidSpec(f"{self.name}: basis must be 'direct' or 'envelope'")
            if basis == "envelope":
                band = self.params.get("band")
                if band is None or len(band) != 2 or not 0 <= band[0] < band[1]:
                    raise InvalidSpec(f"{self.name}: envelope basis needs band=[low, high]")
        else:
            raise InvalidSpec(f"{self.name}: unknown feature kind {self.kind!r}")

    def to_dict(self) -> dict:
        out = {"name": self.name, "kind": self.kind, "params": dict(self.params), "tag": self.tag}
        if self.fault_label is not None:
            out["fault_label"] = self.fault_label if isinstance(self.fault_label, str) else list(self.fault_label)
        if "band" in out["params"]:
            out["params"]["band"] = list(out["params"]["band"])
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureDef":
        label = d.get("fault_label")
        if isinstance(label, list):
            label = tuple(label)
        params = dict(d.get("params", {}))
        if "band" in params:
            params["band"] = tuple(params["band"])
        return cls(name=d.get("name", ""), kind=d.get("kind", ""), params=params,
                   tag=d.get("tag", GENERAL), fault_label=label)


@dataclass(frozen=True)
class FeatureSpec:
    """Ordered feature definitions plus the spectral window used for them."""

    entries: tuple[FeatureDef, ...]
    window: str = "hann"

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        if not self.entries:
            raise InvalidSpec("feature spec is empty")
        for entry in self.entries:
            entry.validate()
        names = [e.name for e in self.entries]
        dupes = sorted({n for n in names if names.count(n) > 1})
        if dupes:
            raise InvalidSpec(f"duplicate feature names: {dupes}")
        if self.window not in ("rectangular", "hann"):
            raise InvalidSpec(f"unknown window {self.window!r}")
        general, specific = set(self.general_names), set(self.specific_names)
        assert general.isdisjoint(specific) and general | specific == set(names)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.entries)

    @property
    def general_names(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.entries if not e.is_specific)

    @property
    def specific_names(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.entries if e.is_specific)

    def __getitem__(self, name: str) -> FeatureDef:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def index(self, name: str) -> int:
        return self.names.index(name)

    @property
    def single_fault(self) -> bool:
        """True when every specific feature points at exactly one fault."""
        specific = [e for e in self.entries if e.is_specific]
        return bool(specific) and all(len(e.fault_labels) == 1 for e in specific)

    def to_dict(self) -> dict:
        return {"window": self.window, "features": [e.to_dict() for e in self.entries]}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSpec":
        if not isinstance(d, dict) or "features" not in d:
            raise InvalidSpec("feature spec JSON needs a 'features' array")
        return cls(tuple(FeatureDef.from_dict(e) for e in d["features"]), window=d.get("window", "hann"))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps() + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "FeatureSpec":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise InvalidSpec(f"{path}: {exc}") from None


def bearing_band_half_width(center_hz: float, df: float) -> float:
    """+/-2 % of the defect frequency, rounded up to whole bins (at least 2)."""
    return df * max(2, math.ceil(0.02 * center_hz / df))


def bearing_spec(
    bpfo_hz: float,
    bpfi_hz: float,
    bsf_hz: float,
    *,
    df: float,
    envelope_band: tuple[float, float],
    window: str = "hann",
) -> FeatureSpec:
    """kurtosis, rms and envelope energies at BPFO / BPFI / BSF."""
    band = tuple(float(b) for b in envelope_band)

    def env(name, center, label):
        params = {
            "center_hz": float(center),
            "half_width_hz": bearing_band_half_width(center, df),
            "basis": "envelope",
            "band": band,
        }
        return FeatureDef(name, "band_energy", params, SPECIFIC, label)

    return FeatureSpec(
        (
            FeatureDef("kurtosis", "time_stat", {"statistic": "kurtosis"}),
            FeatureDef("rms", "time_stat", {"statistic": "rms"}),
            env("BPFI", bpfi_hz, "inner race"),
            env("BPFO", bpfo_hz, "outer race"),
            env("BSF", bsf_hz, "ball"),
        ),
        window=window,
    )


def gearbox_spec(fr_hz: float, gmf1_hz: float, gmf2_hz: float, window: str = "hann") -> FeatureSpec:
    """GMF harmonics of both stages, each a +/-4*fr band."""
    half = 4.0 * fr_hz
    entries = [
        FeatureDef("kurtosis", "time_stat", {"statistic": "kurtosis"}),
        FeatureDef("rms", "time_stat", {"statistic": "rms"}),
    ]
    for h in (1, 2, 3, 4):
        entries.append(FeatureDef(f"{h}xGMF_1st", "band_energy",
                                  {"center_hz": h * gmf1_hz, "half_width_hz": half},
                                  SPECIFIC, "1st stage"))
    for h in (1, 2):
        entries.append(FeatureDef(f"{h}xGMF_2nd", "band_energy",
                                  {"center_hz": h * gmf2_hz, "half_width_hz": half},
                                  SPECIFIC, "2nd stage"))
    return FeatureSpec(tuple(entries), window=window)


# fault families each harmonic is associated with
HARMONIC_FAULTS = {
    1: ("unbalance", "looseness"),
    2: ("misalignment", "looseness"),
    3: ("misalignment", "looseness"),
    4: ("looseness",),
}


def harmonic_spec(fr_hz: float, *, df: float, window: str = "hann") -> FeatureSpec:
    """rms plus energies at 1x..4x the rotation frequency (+/-4 bins)."""
    entries = [FeatureDef("rms", "time_stat", {"statistic": "rms"})]
    for h in (1, 2, 3, 4):
        entries.append(FeatureDef(f"{h}xfr", "band_energy",
                                  {"center_hz": h * fr_hz, "half_width_hz": 4.0 * df},
                                  SPECIFIC, HARMONIC_FAULTS[h]))
    return FeatureSpec(tuple(entries), window=window)


# ---------------------------------------------------------------------------
# vectors and tables


@dataclass(frozen=True)
class FeatureVector:
    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).ravel()
        if v.size != len(self.names):
            raise ValueError("values and names differ in length")
        if not np.all(np.isfinite(v)):
            raise ValueError("feature values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "values", v)

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, map(float, self.values)))


@dataclass(frozen=True)
class FeatureTable:
    """Rows of feature values sharing one column set, optionally labelled.

    ``labels`` is a boolean array (True = anomaly) used for evaluation only.
    """

    names: tuple[str, ...]
    values: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim == 1:
            v = v.reshape(-1, len(self.names)) if v.size else v.reshape(0, len(self.names))
        if v.ndim != 2 or v.shape[1] != len(self.names):
            raise ValueError(f"values shape {v.shape} does not match {len(self.names)} names")
        if not np.all(np.isfinite(v)):
            raise ValueError("feature values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "values", v)
        if self.labels is not None:
            lab = np.array(self.labels, dtype=bool).ravel()
            if lab.size != v.shape[0]:
                raise ValueError("labels must align 1:1 with rows")
            lab.flags.writeable = False
            object.__setattr__(self, "labels", lab)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return len(self.names)

    def row(self, i: int) -> FeatureVector:
        return FeatureVector(self.names, self.values[i])

    def rows(self) -> Iterable[FeatureVector]:
        for i in range(len(self)):
            yield self.row(i)

    def take(self, idx: Sequence[int] | np.ndarray) -> "FeatureTable":
        idx = np.asarray(idx, dtype=int)
        labels = None if self.labels is None else self.labels[idx]
        return FeatureTable(self.names, self.values[idx], labels)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    @classmethod
    def from_vectors(cls, vectors: Sequence[FeatureVector], labels=None) -> "FeatureTable":
        if not vectors:
            raise ValueError("no feature vectors")
        names = vectors[0].names
        if any(v.names != names for v in vectors):
            raise ValueError("feature vectors do not share one column set")
        return cls(names, np.vstack([v.values for v in vectors]), labels)

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            header = list(self.names) + (["label"] if self.labels is not None else [])
            writer.writerow(header)
            for i in range(len(self)):
                row = [repr(float(v)) for v in self.values[i]]
                if self.labels is not None:
                    row.append("anomaly" if self.labels[i] else "normal")
                writer.writerow(row)

    @classmethod
    def from_csv(cls, path: str | Path) -> "FeatureTable":
        with Path(path).open(newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise FormatError(f"{path}: empty feature table") from None
            body = [r for r in reader if r]
        has_label = bool(header) and header[-1] == "label"
        names = header[:-1] if has_label else header
        try:
            values = np.array([[float(x) for x in r[: len(names)]] for r in body], dtype=np.float64)
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}") from None
        labels = None
        if has_label:
            bad = {r[-1] for r in body} - {"normal", "anomaly"}
            if bad:
                raise FormatError(f"{path}: unknown labels {sorted(bad)}")
            labels = np.array([r[-1] == "anomaly" for r in body], dtype=bool)
        return cls(tuple(names), values.reshape(len(body), len(names)), labels)


# ---------------------------------------------------------------------------
# extraction


def extract(signal: VibrationSignal, spec: FeatureSpec) -> FeatureVector:
    """Compute every feature of ``spec`` on one signal."""
    nyquist = signal.nyquist
    for e in spec.entries:
        if e.kind != "band_energy":
            continue
        if e.params["center_hz"] >= nyquist:
            raise InvalidSpec(f"{e.name}: center {e.params['center_hz']} Hz is not below Nyquist {nyquist} Hz")
        if e.params.get("basis") == "envelope" and e.params["band"][1] > nyquist:
            raise InvalidSpec(f"{e.name}: envelope band exceeds Nyquist {nyquist} Hz")

    spectra: dict[object, Spectrum] = {}

    def spectrum_for(e: FeatureDef) -> Spectrum:
        if e.params.get("basis", "direct") == "envelope":
            key = ("envelope", tuple(e.params["band"]))
            if key not in spectra:
                spectra[key] = envelope_spectrum(signal, key[1], spec.window)
        else:
            key = "direct"
            if key not in spectra:
                spectra[key] = compute_spectrum(signal, spec.window)
        return spectra[key]

    values = []
    for e in spec.entries:
        if e.kind == "time_stat":
            values.append(_STATISTICS[e.params["statistic"]](signal))
        else:
            values.append(band_energy(spectrum_for(e), e.params["center_hz"], e.params["half_width_hz"]))
    return FeatureVector(spec.names, np.array(values))


def extract_table(signals: Iterable[VibrationSignal], spec: FeatureSpec, labels=None) -> FeatureTable:
    vectors = [extract(s, spec) for s in signals]
    if not vectors:
        return FeatureTable(spec.names, np.empty((0, len(spec.names))), labels)
    return FeatureTable.from_vectors(vectors, labels)


# ---------------------------------------------------------------------------
# scaling


@dataclass(frozen=True)
class ScalingParams:
    mean: np.ndarray
    std: np.ndarray
    zero_std: np.ndarray = field(default=None)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        zero = std <= 1e-12 * np.maximum(np.abs(mean), 1.0) if self.zero_std is None else np.asarray(self.zero_std, bool)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)
        object.__setattr__(self, "zero_std", zero)

    @property
    def scale(self) -> np.ndarray:
        # zero-variance columns are centred but left unscaled
        return np.where(self.zero_std, 1.0, self.std)

    @classmethod
    def identity(cls, n_features: int) -> "ScalingParams":
        return cls(np.zeros(n_features), np.ones(n_features), np.zeros(n_features, bool))

    @classmethod
    def fit(cls, x: np.ndarray) -> "ScalingParams":
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] == 0:
            raise ValueError("cannot fit scaling on an empty table")
        return cls(x.mean(axis=0), x.std(axis=0))

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.scale

    def invert(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.scale + self.mean


def standardize(train: FeatureTable, apply_to: FeatureTable) -> tuple[FeatureTable, ScalingParams]:
    """z-score ``apply_to`` with the column statistics of ``train``."""
    if len(train) == 0:
        raise ValueError("train table is empty")
    if train.names != apply_to.names:
        raise ValueError("tables do not share feature names")
    params = ScalingParams.fit(train.values)
    return FeatureTable(apply_to.names, params.apply(apply_to.values), apply_to.labels), params


def unstandardize(table: FeatureTable, params: ScalingParams) -> FeatureTable:
    return FeatureTable(table.names, params.invert(table.values), table.labels)
