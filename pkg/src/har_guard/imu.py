"""Inertial windows: synthetic generation, CSV intake/export, features and
the two signal-path perturbations (Gaussian noise and linear drift).

Windows are immutable. Every generator and perturbation takes an explicit
seed so that a campaign is reproducible from its configuration alone.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, ParameterError, SchemaError
from .seeding import rng_for

DEFAULT_LABELS: tuple[str, ...] = ("walk", "run", "sit", "stand", "upstairs", "downstairs")
GRAVITY = 9.81
Z_AMPLITUDE_THRESHOLD = 0.25
CSV_COLUMNS = ("t", "ax", "ay", "az", "gx", "gy", "gz", "label")


@dataclass(frozen=True)
class Profile:
    """Generation profile for one activity: a dominant sinusoid per axis plus
    a Gaussian floor. ``freq_hz`` is the step (or sway) frequency."""

    freq_hz: float
    accel_amp: tuple[float, float, float]
    gyro_amp: float
    floor_std: float


# Frequencies are multiples of 0.25 Hz so a 4 s window resolves them exactly.
PROFILES: dict[str, Profile] = {
    "sit": Profile(0.25, (0.01, 0.01, 0.05), 0.01, 0.01),
    "stand": Profile(0.5, (0.2, 0.2, 0.2), 0.05, 0.02),
    "upstairs": Profile(1.5, (0.8, 0.5, 1.8), 0.6, 0.05),
    "walk": Profile(2.0, (1.0, 0.6, 1.5), 0.5, 0.05),
    "downstairs": Profile(2.5, (1.2, 0.7, 2.2), 0.7, 0.05),
    "run": Profile(3.0, (2.0, 1.2, 3.5), 1.2, 0.08),
}

STATIC_LABELS = frozenset({"sit", "stand"})


@dataclass(frozen=True)
class ImuWindow:
    """A fixed-rate window of 6-axis samples.

    ``t`` has shape (n,), ``accel`` and ``gyro`` have shape (n, 3). Arrays are
    made read-only on construction.
    """

    t: np.ndarray
    accel: np.ndarray
    gyro: np.ndarray
    rate_hz: float
    label: str
    subject_id: str = "synthetic"
    seed: int = 0

    def __post_init__(self):
        t = np.array(self.t, dtype=float)
        accel = np.array(self.accel, dtype=float).reshape(-1, 3)
        gyro = np.array(self.gyro, dtype=float).reshape(-1, 3)
        if self.rate_hz <= 0:
            raise ParameterError("rate_hz must be positive")
        n = t.shape[0]
        if n < 2:
            raise DataError("a window needs at least 2 samples")
        if accel.shape[0] != n or gyro.shape[0] != n:
            raise DataError("timestamp and channel lengths differ")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(accel)) and np.all(np.isfinite(gyro))):
            raise DataError("window contains non-finite values")
        if t[0] < 0 or np.any(np.diff(t) <= 0):
            raise DataError("timestamps must be non-negative and strictly increasing")
        if np.max(np.abs(np.diff(t) - 1.0 / self.rate_hz)) > 1e-9:
            raise DataError("sample spacing does not match rate_hz")
        for arr in (t, accel, gyro):
            arr.flags.writeable = False
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "accel", accel)
        object.__setattr__(self, "gyro", gyro)

    def __len__(self) -> int:
        return self.t.shape[0]

    def __eq__(self, other):
        if not isinstance(other, ImuWindow):
            return NotImplemented
        return (
            self.rate_hz == other.rate_hz
            and self.label == other.label
            and self.subject_id == other.subject_id
            and self.seed == other.seed
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.accel, other.accel)
            and np.array_equal(self.gyro, other.gyro)
        )

    __hash__ = None

    @property
    def duration(self) -> float:
        return len(self) / self.rate_hz

    def magnitude(self) -> np.ndarray:
        """Euclidean norm of the accelerometer vector per sample."""
        return np.linalg.norm(self.accel, axis=1)

    def with_channels(self, accel=None, gyro=None) -> "ImuWindow":
        return replace(
            self,
            accel=self.accel if accel is None else accel,
            gyro=self.gyro if gyro is None else gyro,
        )


@dataclass(frozen=True)
class SignalFeatures:
    ax_var: float
    ay_var: float
    az_var: float
    step_freq_hz: float
    z_amplitude_flag: bool
    rate_hz: float = field(default=0.0, compare=False)


def synth_window(label: str, rate_hz: float = 50.0, duration: float = 4.0, seed: int = 0,
                 subject_id: str = "synthetic") -> ImuWindow:
    """Generate a deterministic window for ``label``.

    Same (label, rate_hz, duration, seed) gives a bit-identical window.
    """
    if rate_hz < 10:
        raise ParameterError(f"rate_hz must be >= 10, got {rate_hz}")
    if duration < 1:
        raise ParameterError(f"duration must be >= 1 s, got {duration}")
    if label not in PROFILES:
        raise ParameterError(f"no generation profile for label {label!r}")
    prof = PROFILES[label]
    n = int(round(rate_hz * duration))
    rng = rng_for(seed, "synth", label)
    t = np.arange(n) / rate_hz
    w = 2.0 * math.pi * prof.freq_hz
    phases = rng.uniform(0.0, 2.0 * math.pi, size=6)
    accel = np.empty((n, 3))
    gyro = np.empty((n, 3))
    for k in range(3):
        accel[:, k] = prof.accel_amp[k] * np.sin(w * t + phases[k])
        gyro[:, k] = prof.gyro_amp * np.sin(w * t + phases[3 + k])
    accel[:, 2] += GRAVITY
    accel += rng.normal(0.0, prof.floor_std, size=(n, 3))
    gyro += rng.normal(0.0, prof.floor_std, size=(n, 3))
    return ImuWindow(t, accel, gyro, float(rate_hz), label, subject_id, int(seed))


def dominant_frequency(signal: np.ndarray, rate_hz: float) -> float:
    """Frequency of the largest non-DC DFT bin (no windowing). Returns 0.0 for
    a signal with no non-DC energy."""
    x = np.asarray(signal, dtype=float)
    spec = np.abs(np.fft.rfft(x - x.mean()))
    if spec.shape[0] < 2:
        return 0.0
    spec[0] = 0.0
    k = int(np.argmax(spec))
    if spec[k] <= 1e-9 * max(1.0, float(np.abs(x).max(initial=0.0))) * x.shape[0]:
        return 0.0
    return k * rate_hz / x.shape[0]


def extract_features(w: ImuWindow, z_threshold: float = Z_AMPLITUDE_THRESHOLD) -> SignalFeatures:
    var = (w.accel - w.accel[0]).var(axis=0)  # shifting first makes constant axes exactly 0
    return SignalFeatures(
        ax_var=float(var[0]),
        ay_var=float(var[1]),
        az_var=float(var[2]),
        step_freq_hz=float(dominant_frequency(w.magnitude(), w.rate_hz)),
        z_amplitude_flag=bool(var[2] > z_threshold),
        rate_hz=w.rate_hz,
    )


def motion_level(az_var: float) -> str:
    """Three-level vertical activity bucket used by the text renderers."""
    if az_var < 0.01:
        return "none"
    if az_var <= Z_AMPLITUDE_THRESHOLD:
        return "low"
    return "high"


def classify_cues(step_freq_hz: float, level: str | None, labels: Sequence[str] = DEFAULT_LABELS) -> str:
    """Nearest-profile label for a (step frequency, vertical level) pair.

    A known level that is not ``"high"`` means a static activity; without a
    level the frequency decides (below 1 Hz is static).
    """
    static_hint = level in ("none", "low") if level is not None else step_freq_hz < 1.0
    if static_hint:
        static = [l for l in ("sit", "stand") if l in labels]
        if static:
            if level == "none" and "sit" in static:
                return "sit"
            return "stand" if "stand" in static else static[0]
    moving = [l for l in labels if l in PROFILES and l not in STATIC_LABELS]
    if not moving:
        return labels[0]
    return min(moving, key=lambda l: (abs(PROFILES[l].freq_hz - step_freq_hz), labels.index(l)))


def detrend(w: ImuWindow) -> ImuWindow:
    """Remove the least-squares linear trend of each accel axis, keeping its mean."""
    tc = w.t - w.t.mean()
    denom = float(tc @ tc)
    slope = (tc @ (w.accel - w.accel.mean(axis=0))) / denom
    return w.with_channels(accel=w.accel - np.outer(tc, slope))


def robust_features(w: ImuWindow, z_threshold: float = Z_AMPLITUDE_THRESHOLD) -> SignalFeatures:
    """Features of the detrended window, used on the defended path."""
    return extract_features(detrend(w), z_threshold)


def attack_noise(w: ImuWindow, sigma: float, seed: int, spike_prob: float = 0.0) -> ImuWindow:
    """Add i.i.d. N(0, sigma^2) to every accel and gyro component.

    ``spike_prob`` > 0 additionally adds +-10 sigma impulses to that fraction
    of samples. Outliers are left unclipped.
    """
    if sigma < 0:
        raise ParameterError("sigma must be non-negative")
    if not 0.0 <= spike_prob <= 1.0:
        raise ParameterError("spike_prob must lie in [0, 1]")
    if sigma == 0:
        return w
    rng = rng_for(seed, "attack_noise")
    n = len(w)
    accel = w.accel + rng.normal(0.0, sigma, size=(n, 3))
    gyro = w.gyro + rng.normal(0.0, sigma, size=(n, 3))
    if spike_prob > 0:
        hit = rng.random(n) < spike_prob
        sign = rng.choice([-1.0, 1.0], size=(n, 3))
        accel = accel + hit[:, None] * sign * 10.0 * sigma
    return w.with_channels(accel=accel, gyro=gyro)


def attack_drift(w: ImuWindow, alpha: float, v: Sequence[float] = (1.0, 0.0, 0.0)) -> ImuWindow:
    """Shift sample k's acceleration by ``alpha * k * v``; gyro is untouched."""
    v = np.asarray(v, dtype=float)
    if v.shape != (3,) or abs(np.linalg.norm(v) - 1.0) > 1e-9:
        raise ParameterError("drift direction must be a unit 3-vector")
    if alpha == 0:
        return w
    k = np.arange(len(w), dtype=float)
    return w.with_channels(accel=w.accel + alpha * k[:, None] * v[None, :])


# --- CSV -------------------------------------------------------------------

def export_csv(windows: ImuWindow | Iterable[ImuWindow], path: str | Path) -> None:
    """Write windows with the header ``t,ax,ay,az,gx,gy,gz,label``.

    Floats are written with ``repr`` so ingest restores them exactly.
    """
    if isinstance(windows, ImuWindow):
        windows = [windows]
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for w in windows:
            for i in range(len(w)):
                writer.writerow(
                    [repr(float(w.t[i]))]
                    + [repr(float(v)) for v in w.accel[i]]
                    + [repr(float(v)) for v in w.gyro[i]]
                    + [w.label]
                )


def ingest_csv(path: str | Path, window: int = 200, schema: dict[str, str] | None = None,
               rate_hz: float | None = None, subject_id: str | None = None,
               labels: Sequence[str] | None = None) -> list[ImuWindow]:
    """Read a CSV and cut it into consecutive windows of ``window`` rows.

    ``schema`` maps canonical names (t, ax, ..., label) to file column names.
    A trailing partial window is dropped. The sample rate is inferred from the
    first two timestamps unless given.
    """
    path = Path(path)
    schema = {c: c for c in CSV_COLUMNS} | dict(schema or {})
    if window < 2:
        raise ParameterError("window must be >= 2 rows")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        index = {}
        for canon in CSV_COLUMNS:
            col = schema[canon]
            if col not in header:
                raise SchemaError(f"{path}: missing column {col!r}")
            index[canon] = header.index(col)
        rows: list[tuple[float, ...]] = []
        row_labels: list[str] = []
        line_nos: list[int] = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                vals = tuple(float(row[index[c]]) for c in CSV_COLUMNS[:-1])
            except (ValueError, IndexError):
                raise DataError(f"{path}:{line_no}: malformed row") from None
            if not all(math.isfinite(v) for v in vals):
                raise DataError(f"{path}:{line_no}: non-finite value")
            label = row[index["label"]]
            if labels is not None and label not in labels:
                raise DataError(f"{path}:{line_no}: unknown label {label!r}")
            if rows and vals[0] <= rows[-1][0]:
                raise DataError(f"{path}:{line_no}: non-monotonic timestamp")
            rows.append(vals)
            row_labels.append(label)
            line_nos.append(line_no)
    out = []
    for start in range(0, len(rows) - window + 1, window):
        block = np.array(rows[start:start + window])
        t = block[:, 0]
        rate = rate_hz or 1.0 / (t[1] - t[0])
        lbls = set(row_labels[start:start + window])
        if len(lbls) != 1:
            raise DataError(f"{path}:{line_nos[start]}: window spans several labels {sorted(lbls)}")
        try:
            out.append(ImuWindow(t, block[:, 1:4], block[:, 4:7], float(rate), lbls.pop(),
                                 subject_id or path.stem, 0))
        except DataError as exc:
            raise DataError(f"{path}:{line_nos[start]}: {exc}") from None
    return out
