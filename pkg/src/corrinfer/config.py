"""Run configuration: TOML files, shipped presets and fail-fast validation."""

from __future__ import annotations

import copy
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .models import ChannelModel, ModelError, PriorModel, channel_from_config, prior_from_config
from .patterns import KINDS as PATTERN_KINDS, LABEL_MODES
from .spectrum import KINDS as SPECTRUM_KINDS, SpectrumError, SpectrumModel, make_spectrum

EXPERIMENTS = ("replica-scan", "tap-run", "oracle-check", "ffunc-eval", "figure1", "locate-capacity")


class ConfigError(ValueError):
    pass


def preset_names() -> list[str]:
    root = resources.files("corrinfer") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def load_preset(name: str) -> dict:
    path = resources.files("corrinfer") / "presets" / f"{name}.toml"
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r} (available: {', '.join(preset_names())})")
    return tomllib.loads(path.read_text())


def merge(base: Mapping, over: Mapping) -> dict:
    """Recursive dict merge; values in ``over`` win."""
    out = copy.deepcopy(dict(base))
    for k, v in over.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), Mapping):
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def read_config(source: str | Path) -> dict:
    """Load a TOML file, or a shipped preset by name; ``preset = ...`` keys are expanded."""
    path = Path(source)
    if path.is_file():
        try:
            doc = tomllib.loads(path.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    elif str(source) in preset_names():
        doc = load_preset(str(source))
    else:
        raise ConfigError(f"no config file or preset named {str(source)!r}")
    if "preset" in doc:
        doc = merge(load_preset(doc.pop("preset")), doc)
    return doc


@dataclass
class SolverSettings:
    damping: float = 0.5
    tol: float = 1e-10
    max_iter: int = 5000


@dataclass
class TapSettings:
    N: int = 500
    samples: int = 20
    patterns: str = "random_orthogonal"
    label_mode: str = "random_pm1"
    alphas: list[float] = field(default_factory=list)
    damping: float = 0.5
    tol: float = 1e-10
    max_iter: int = 1000


@dataclass
class RunConfig:
    experiment: str
    spectrum_kind: str
    spectrum_params: dict
    generative: tuple[PriorModel, ChannelModel]
    recognition: tuple[PriorModel, ChannelModel]
    alphas: list[float]
    seed: int = 0
    out: str = "runs/out"
    jobs: int = 1
    solver: SolverSettings = field(default_factory=SolverSettings)
    tap: TapSettings = field(default_factory=TapSettings)
    mutual_info: bool = False
    kl: bool = False
    ffunc_x: list[float] = field(default_factory=list)
    ffunc_y: list[float] = field(default_factory=list)
    plot: bool = True
    raw: dict = field(default_factory=dict)

    def spectrum(self, alpha: float) -> SpectrumModel:
        return make_spectrum(self.spectrum_kind, alpha, self.spectrum_params)


def _alpha_grid(doc: Mapping) -> list[float]:
    if "values" in doc:
        vals = [float(a) for a in doc["values"]]
    elif {"start", "stop", "step"} <= set(doc):
        start, stop, step = (float(doc[k]) for k in ("start", "stop", "step"))
        if not step > 0:
            raise ConfigError("alpha step must be positive")
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        vals = [round(start + k * step, 12) for k in range(max(n, 0))]
    else:
        raise ConfigError("alpha grid needs 'values' or start/stop/step")
    if not vals:
        raise ConfigError("alpha grid is empty")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ConfigError("alpha grid must be strictly increasing")
    if vals[0] <= 0:
        raise ConfigError("alpha values must be positive")
    return vals


def _positive(name, v, kind=float):
    try:
        v = kind(v)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a number") from exc
    if not v > 0:
        raise ConfigError(f"{name} must be positive")
    return v


def build_config(doc: Mapping, overrides: Mapping | None = None) -> RunConfig:
    """Validate a raw config document and resolve every model before any compute."""
    doc = merge(doc, {k: v for k, v in (overrides or {}).items() if v is not None and k != "cli"})
    cli = {k: v for k, v in ((overrides or {}).get("cli") or {}).items() if v is not None}
    exp = doc.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {', '.join(EXPERIMENTS)}; got {exp!r}")
    sp = doc.get("spectrum", {}) or {}
    kind = sp.get("kind", "random_orthogonal")
    if kind not in SPECTRUM_KINDS:
        raise ConfigError(f"unknown spectrum kind {kind!r}")
    try:
        gen = (prior_from_config(doc.get("generative", {}).get("prior", {"kind": "ising_pm1"})),
               channel_from_config(doc.get("generative", {}).get("channel", {"kind": "random_label"})))
        rec = (prior_from_config(doc.get("recognition", {}).get("prior", {"kind": "ising_pm1"})),
               channel_from_config(doc.get("recognition", {}).get("channel",
                                                                  {"kind": "perceptron_step"})))
    except (ModelError, AttributeError, TypeError, ValueError) as exc:
        raise ConfigError(f"model block: {exc}") from exc
    alphas = _alpha_grid(doc.get("alpha", {}) or {}) if exp != "oracle-check" else []
    solver_doc = doc.get("solver", {}) or {}
    solver = SolverSettings(
        damping=float(cli.get("damping", solver_doc.get("damping", 0.5))),
        tol=_positive("tol", cli.get("tol", solver_doc.get("tol", 1e-10))),
        max_iter=_positive("max_iter", cli.get("max_iter", solver_doc.get("max_iter", 5000)), int))
    tap_doc = doc.get("tap", {}) or {}
    tap = TapSettings(
        N=_positive("tap.N", tap_doc.get("N", 500), int),
        samples=_positive("samples", cli.get("samples", tap_doc.get("samples", 20)), int),
        patterns=tap_doc.get("patterns", "random_orthogonal"),
        label_mode=tap_doc.get("label_mode", "random_pm1"),
        alphas=[float(a) for a in tap_doc.get("alphas", alphas)],
        damping=float(cli.get("damping", tap_doc.get("damping", 0.5))),
        tol=_positive("tol", cli.get("tol", tap_doc.get("tol", 1e-10))),
        max_iter=_positive("max_iter", cli.get("max_iter", tap_doc.get("max_iter", 1000)), int))
    for name, d in (("solver.damping", solver.damping), ("tap.damping", tap.damping)):
        if not 0 < d <= 1:
            raise ConfigError(f"{name} must lie in (0, 1]")
    if tap.patterns not in PATTERN_KINDS:
        raise ConfigError(f"unknown pattern ensemble {tap.patterns!r}")
    if tap.label_mode not in LABEL_MODES:
        raise ConfigError(f"unknown label mode {tap.label_mode!r}")
    if exp in ("tap-run", "figure1"):
        if not tap.alphas:
            raise ConfigError("tap alpha list is empty")
        if any(b <= a for a, b in zip(tap.alphas, tap.alphas[1:])):
            raise ConfigError("tap alphas must be strictly increasing")
        if tap.patterns == "random_orthogonal" and any(a > 1 for a in tap.alphas):
            raise ConfigError("orthogonal patterns need alpha <= 1")
    ff = doc.get("ffunc", {}) or {}
    cfg = RunConfig(
        experiment=exp, spectrum_kind=kind, spectrum_params=dict(sp.get("params", {}) or {}),
        generative=gen, recognition=rec, alphas=alphas,
        seed=int(cli.get("seed", doc.get("seed", 0))),
        out=str(cli.get("out", doc.get("out", "runs/out"))),
        jobs=_positive("jobs", cli.get("jobs", doc.get("jobs", 1)), int),
        solver=solver, tap=tap,
        mutual_info=bool((doc.get("replica", {}) or {}).get("mutual_info", False)),
        kl=bool((doc.get("replica", {}) or {}).get("kl", False)),
        ffunc_x=[float(v) for v in ff.get("x", [0.5])],
        ffunc_y=[float(v) for v in ff.get("y", [0.5])],
        plot=bool(cli.get("plot", doc.get("plot", True))),
        raw=dict(doc),
    )
    # resolve spectra now so bad parameters fail before any compute
    try:
        for a in alphas:
            cfg.spectrum(a)
    except SpectrumError as exc:
        raise ConfigError(f"spectrum: {exc}") from exc
    return cfg


def resolved(cfg: RunConfig) -> dict[str, Any]:
    """Plain-data view of the resolved configuration for the run manifest."""
    def model(m):
        return {k: getattr(m, k) for k in m.__dataclass_fields__}

    return {
        "experiment": cfg.experiment,
        "spectrum": {"kind": cfg.spectrum_kind, "params": cfg.spectrum_params},
        "generative": {"prior": model(cfg.generative[0]), "channel": model(cfg.generative[1])},
        "recognition": {"prior": model(cfg.recognition[0]), "channel": model(cfg.recognition[1])},
        "alphas": cfg.alphas, "seed": cfg.seed, "jobs": cfg.jobs,
        "solver": vars(cfg.solver), "tap": vars(cfg.tap),
        "mutual_info": cfg.mutual_info, "kl": cfg.kl,
        "ffunc": {"x": cfg.ffunc_x, "y": cfg.ffunc_y}, "plot": cfg.plot,
    }
