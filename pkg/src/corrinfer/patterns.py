"""Pattern matrices and labels for the IID and random-orthogonal ensembles.

Every random draw comes from a Philox counter-based stream keyed by
(seed, purpose, sample index), so a given instance is reproducible bit for
bit and independent samples never share a stream.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .models import ChannelModel, PriorModel
from .spectrum import SpectrumModel, spectrum_of

KINDS = ("iid_gaussian", "random_orthogonal")
LABEL_MODES = ("random_pm1", "teacher")


class PatternError(ValueError):
    pass


def stream(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    """Independent Philox stream for one (seed, purpose, index) triple."""
    key = zlib.crc32(purpose.encode())
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, key, int(index)])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str = "random_orthogonal"
    N: int = 100
    p: int = 50
    label_mode: str = "random_pm1"
    teacher_prior: PriorModel | None = None
    teacher_channel: ChannelModel | None = None
    seed: int = 0
    sample: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PatternError(f"unknown pattern ensemble {self.kind!r}")
        if self.label_mode not in LABEL_MODES:
            raise PatternError(f"unknown label mode {self.label_mode!r}")
        if self.N < 1 or self.p < 0:
            raise PatternError("need N >= 1 and p >= 0")
        if self.kind == "random_orthogonal" and self.p > self.N:
            raise PatternError("random_orthogonal patterns need p <= N")

    @property
    def alpha(self) -> float:
        return self.p / self.N


@dataclass
class ProblemInstance:
    """One concrete (X, y) with the recognition models used to analyse it."""

    X: np.ndarray
    y: np.ndarray
    prior: PriorModel = field(default_factory=PriorModel)
    channel: ChannelModel = field(default_factory=ChannelModel)
    spectrum: SpectrumModel | None = None
    w0: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],):
            raise PatternError("X must be p x N and y of length p")
        if self.spectrum is None:
            self.spectrum = spectrum_of(self.X) if self.p > 0 else None
        elif self.p > 0:
            self._check_spectrum()

    @property
    def N(self) -> int:
        return self.X.shape[1]

    @property
    def p(self) -> int:
        return self.X.shape[0]

    @property
    def alpha(self) -> float:
        return self.p / self.N

    def _check_spectrum(self):
        ref = spectrum_of(self.X)
        for k in (1, 2):
            a = float(np.dot(ref.weights, ref.locations ** k))
            b = float(np.dot(self.spectrum.weights, self.spectrum.locations ** k))
            if abs(a - b) > 1e-8 * max(1.0, abs(a)):
                raise PatternError("supplied spectrum does not match X^T X")

    def with_labels(self, y) -> "ProblemInstance":
        return ProblemInstance(self.X, np.asarray(y, dtype=float), self.prior, self.channel,
                               self.spectrum, self.w0, dict(self.meta))


def haar_orthogonal(n: int, seed: int, index: int = 0) -> np.ndarray:
    """Haar-distributed n x n orthogonal matrix (QR with the R-diagonal sign fix)."""
    if n < 1:
        raise PatternError("n must be positive")
    rng = stream(seed, "haar", index)
    Z = rng.standard_normal((n, n))
    Q, R = np.linalg.qr(Z)
    return Q * np.sign(np.diag(R))


def _row_orthonormal(p: int, N: int, rng: np.random.Generator) -> np.ndarray:
    """p x N with orthonormal rows and Haar-random row space."""
    if p == 0:
        return np.zeros((0, N))
    Z = rng.standard_normal((N, p))
    Q, R = np.linalg.qr(Z)
    return (Q * np.sign(np.diag(R))).T


def generate_patterns(spec: GeneratorSpec) -> np.ndarray:
    rng = stream(spec.seed, "patterns:" + spec.kind, spec.sample)
    if spec.kind == "iid_gaussian":
        return rng.standard_normal((spec.p, spec.N)) / np.sqrt(spec.N)
    return _row_orthonormal(spec.p, spec.N, rng)


def labels_from_teacher(X: np.ndarray, prior: PriorModel, channel: ChannelModel,
                        seed: int, index: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Draw w0 ~ Q(w), then y_mu ~ Q(y | (X w0)_mu)."""
    w0 = prior.sample(stream(seed, "teacher", index), X.shape[1])
    delta = X @ w0
    y = channel.sample(stream(seed, "labels", index), delta)
    return y, w0


def generate(spec: GeneratorSpec, recognition: tuple[PriorModel, ChannelModel] | None = None
             ) -> ProblemInstance:
    """Draw X (and y) for one sample of the ensemble described by ``spec``."""
    X = generate_patterns(spec)
    prior, channel = recognition or (PriorModel(), ChannelModel())
    w0 = None
    if spec.label_mode == "random_pm1":
        rng = stream(spec.seed, "labels", spec.sample)
        y = rng.choice(np.array([-1.0, 1.0]), size=spec.p)
    else:
        tp = spec.teacher_prior or PriorModel()
        tc = spec.teacher_channel or ChannelModel("perceptron_step")
        y, w0 = labels_from_teacher(X, tp, tc, spec.seed, spec.sample)
    meta = {"N": spec.N, "p": spec.p, "kind": spec.kind, "seed": spec.seed,
            "sample": spec.sample, "label_mode": spec.label_mode}
    return ProblemInstance(X, y, prior, channel, w0=w0, meta=meta)


# ------------------------------------------------------------------ export

def export_instance(inst: ProblemInstance, stem: str | Path) -> list[Path]:
    """Write header JSON, little-endian float64 X (row-major) and labels.

    ±1 labels are stored as int8; real-valued outputs as float64.  A CSV
    copy is added for N <= 50.
    """
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    pm1 = bool(np.all(np.abs(inst.y) == 1.0))
    header = dict(inst.meta)
    header.update({"N": inst.N, "p": inst.p, "matrix": "float64-le row-major",
                   "labels": "int8" if pm1 else "float64-le"})
    paths = [stem.with_suffix(".json"), stem.with_suffix(".X.bin"), stem.with_suffix(".y.bin")]
    paths[0].write_text(json.dumps(header, sort_keys=True, indent=1) + "\n")
    paths[1].write_bytes(np.ascontiguousarray(inst.X, dtype="<f8").tobytes())
    ybytes = inst.y.astype(np.int8) if pm1 else np.asarray(inst.y, dtype="<f8")
    paths[2].write_bytes(ybytes.tobytes())
    if inst.N <= 50:
        csv = stem.with_suffix(".csv")
        rows = ["y," + ",".join(f"x{j}" for j in range(inst.N))]
        for mu in range(inst.p):
            rows.append(",".join([repr(float(inst.y[mu]))] + [repr(float(v)) for v in inst.X[mu]]))
        csv.write_text("\n".join(rows) + "\n")
        paths.append(csv)
    return paths


def load_instance(stem: str | Path, recognition=None) -> ProblemInstance:
    stem = Path(stem)
    header = json.loads(stem.with_suffix(".json").read_text())
    N, p = int(header["N"]), int(header["p"])
    X = np.frombuffer(stem.with_suffix(".X.bin").read_bytes(), dtype="<f8").reshape(p, N)
    raw = stem.with_suffix(".y.bin").read_bytes()
    y = np.frombuffer(raw, dtype=np.int8 if header["labels"] == "int8" else "<f8").astype(float)
    prior, channel = recognition or (PriorModel(), ChannelModel())
    return ProblemInstance(X.copy(), y, prior, channel, meta=header)
