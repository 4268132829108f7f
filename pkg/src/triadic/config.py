"""Run configuration parsed from TOML.

A run file has up to five tables: ``[run]``, ``[dataset]``, ``[op]``,
``[train]``, ``[reg]``.  Every key maps onto a field of one of the frozen
dataclasses below; unknown tables or keys are rejected up front so a typo
cannot silently fall back to a default.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .datasets import RuleSet, TripleDataset, gen_parity, gen_rules, gen_toy_kg, load_tsv
from .errors import ConfigError
from .operators import TernaryOpSpec
from .regularizers import ResidualSampleConfig
from .training import TrainConfig

DATASET_KINDS = ("parity", "rules", "toy_kg", "tsv")


@dataclass(frozen=True)
class DatasetConfig:
    """Which dataset to build and how.

    ``path`` is only meaningful for ``kind="tsv"``; the generator knobs
    (``k``, ``n_per_class``, ``n_atoms``, ``n_rules``, ``seed``) are only
    read by the generator they belong to.
    """

    kind: str = "parity"
    path: str | None = None
    k: int = 5
    n_per_class: int | None = None
    n_atoms: int = 8
    n_rules: int = 40
    seed: int = 0

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise ConfigError(f"unknown dataset kind {self.kind!r}, expected one of {DATASET_KINDS}")
        if self.kind == "tsv" and not self.path:
            raise ConfigError("dataset kind 'tsv' requires a path")
        if self.kind != "tsv" and self.path is not None:
            raise ConfigError(f"dataset kind {self.kind!r} does not take a path")


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetConfig
    op: TernaryOpSpec
    train: TrainConfig
    reg: ResidualSampleConfig
    out_dir: str | None = None


def build_dataset(cfg: DatasetConfig) -> tuple[TripleDataset, RuleSet | None]:
    """Materialize the dataset a config names.

    Returns the dataset and, for the rule-composition generator, the rule
    set needed to score rule satisfaction afterwards.
    """
    if cfg.kind == "parity":
        return gen_parity(cfg.k, n_per_class=cfg.n_per_class, seed=cfg.seed), None
    if cfg.kind == "rules":
        dataset, rules = gen_rules(cfg.n_atoms, cfg.n_rules, seed=cfg.seed)
        return dataset, rules
    if cfg.kind == "toy_kg":
        return gen_toy_kg(seed=cfg.seed), None
    return load_tsv(cfg.path), None


_SECTION_FIELDS = {
    "dataset": DatasetConfig,
    "op": TernaryOpSpec,
    "train": TrainConfig,
    "reg": ResidualSampleConfig,
}

# TernaryOpSpec has no field defaults of its own, so the config layer
# supplies them; a bare config trains the reference operator.
_SECTION_DEFAULTS = {"op": {"kind": "tensor_fusion", "dim": 16}}


def _build_section(name: str, cls, raw: dict):
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(unknown)}")
    merged = {**_SECTION_DEFAULTS.get(name, {}), **raw}
    if "betas" in merged:
        betas = merged["betas"]
        if not isinstance(betas, (list, tuple)) or len(betas) != 2:
            raise ConfigError("train.betas must be a two-element array")
        merged["betas"] = (float(betas[0]), float(betas[1]))
    try:
        return cls(**merged)
    except TypeError as exc:
        raise ConfigError(f"bad [{name}] section: {exc}") from exc


def parse_config(data: dict) -> RunConfig:
    """Turn a parsed TOML document into a validated RunConfig."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be a table")
    known = set(_SECTION_FIELDS) | {"run"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(unknown)}")
    run = data.get("run", {})
    run_unknown = sorted(set(run) - {"out_dir"})
    if run_unknown:
        raise ConfigError(f"unknown key(s) in [run]: {', '.join(run_unknown)}")
    sections = {}
    for name, cls in _SECTION_FIELDS.items():
        raw = data.get(name, {})
        if not isinstance(raw, dict):
            raise ConfigError(f"[{name}] must be a table")
        sections[name] = _build_section(name, cls, raw)
    return RunConfig(dataset=sections["dataset"], op=sections["op"],
                     train=sections["train"], reg=sections["reg"],
                     out_dir=run.get("out_dir"))


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data)


def config_as_dict(cfg: RunConfig) -> dict:
    """JSON-friendly view of a RunConfig, used for run manifests."""
    out = {
        "dataset": dataclasses.asdict(cfg.dataset),
        "op": dataclasses.asdict(cfg.op),
        "train": dataclasses.asdict(cfg.train),
        "reg": dataclasses.asdict(cfg.reg),
    }
    out["train"]["betas"] = list(cfg.train.betas)
    if cfg.out_dir is not None:
        out["run"] = {"out_dir": cfg.out_dir}
    return out
