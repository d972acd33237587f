"""Flat, typed run configuration: TOML document plus --set overrides.

Every key has a default except `dataset`. Unknown keys are rejected by name;
values must match the schema type (ints are accepted where floats are
expected). A config's identity is the hash of every setting except the
output directory, so reruns of the same experiment land in the same
run directory regardless of where artifacts are rooted.
"""

from __future__ import annotations

import hashlib
import os

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .data import DegradeConfig
from .errors import ConfigError
from .training import TrainConfig

__all__ = ["SCHEMA", "RunConfig", "load_config", "parse_overrides"]

# key -> (type, default); None default means required
SCHEMA = {
    "dataset": (str, None),
    "kind": (str, "resgan"),
    "epochs": (int, 30),
    "batch_size": (int, 64),
    "optimizer": (str, "adam"),
    "lr": (float, 2e-4),
    "beta1": (float, 0.5),
    "beta2": (float, 0.999),
    "d_steps_per_g_step": (int, 0),
    "clip_c": (float, 0.01),
    "seed": (int, 0),
    "data_seed": (int, 0),
    "degrade_factor": (int, 4),
    "blur_sigma": (float, 0.0),
    "noise_sigma": (float, 0.0),
    "latent_dim": (int, 100),
    "residual_mode": (str, "concat"),
    "saturating": (bool, False),
    "loss_eps": (float, 1e-7),
    "train_count": (int, 2000),
    "eval_count": (int, 500),
    "synth_n": (int, 2600),
    "synth_d": (int, 4),
    "checkpoint_every": (int, 0),
    "eval_window": (int, 50),
    "probe": (str, "embedded"),
    "probe_epochs": (int, 18),
    "timing": (str, "off"),
    "out_dir": (str, ""),
    "bench_kinds": (str, "gan,dcgan,wgan,cgan,resgan"),
    "bench_datasets": (str, ""),
    "grid_rows": (int, 10),
    "grid_cols": (int, 10),
}

_HASH_EXCLUDED = {"out_dir"}


def _coerce(key, value):
    want, _ = SCHEMA[key]
    if want is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if want is int and isinstance(value, bool):
        raise ConfigError(f"key `{key}` wants an integer, got a boolean")
    if not isinstance(value, want):
        raise ConfigError(f"key `{key}` wants {want.__name__}, got {type(value).__name__}")
    return value


def _coerce_string(key, text):
    want, _ = SCHEMA[key]
    if want is bool:
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"key `{key}` wants a boolean, got {text!r}")
    try:
        return want(text)
    except ValueError as exc:
        raise ConfigError(f"key `{key}` wants {want.__name__}: {exc}") from exc


class RunConfig:
    def __init__(self, values):
        unknown = set(values) - set(SCHEMA)
        if unknown:
            raise ConfigError(f"unknown config key `{sorted(unknown)[0]}`")
        merged = {}
        for key, (_, default) in SCHEMA.items():
            if key in values:
                merged[key] = _coerce(key, values[key])
            elif default is None:
                raise ConfigError(f"missing required config key `{key}`")
            else:
                merged[key] = default
        self.values = merged

    def __getitem__(self, key):
        return self.values[key]

    def with_overrides(self, overrides):
        updated = dict(self.values)
        updated.update(overrides)
        return RunConfig(updated)

    @property
    def hash(self):
        digest = hashlib.sha256()
        for key in sorted(self.values):
            if key in _HASH_EXCLUDED:
                continue
            digest.update(f"{key}={self.values[key]!r}\n".encode())
        return digest.hexdigest()[:12]

    def out_root(self):
        return self.values["out_dir"] or os.environ.get("RESGAN_OUT", "runs")

    def degrade_config(self):
        return DegradeConfig(
            factor=self["degrade_factor"],
            blur_sigma=self["blur_sigma"],
            noise_sigma=self["noise_sigma"],
            seed=self["data_seed"],
        )

    def train_config(self, kind=None, seed=None):
        return TrainConfig(
            kind=kind or self["kind"],
            epochs=self["epochs"],
            batch_size=self["batch_size"],
            optimizer=self["optimizer"],
            lr=self["lr"],
            beta1=self["beta1"],
            beta2=self["beta2"],
            d_steps_per_g_step=self["d_steps_per_g_step"],
            clip_c=self["clip_c"],
            seed=self["seed"] if seed is None else seed,
            degrade=self.degrade_config(),
            latent_dim=self["latent_dim"],
            residual_mode=self["residual_mode"],
            saturating=self["saturating"],
            loss_eps=self["loss_eps"],
            checkpoint_every=self["checkpoint_every"],
        )


def parse_overrides(pairs):
    """--set KEY=VALUE strings to a typed dict; unknown keys rejected by name."""
    out = {}
    for pair in pairs or []:
        key, sep, text = pair.partition("=")
        if not sep:
            raise ConfigError(f"override {pair!r} is not KEY=VALUE")
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key `{key}`")
        out[key] = _coerce_string(key, text)
    return out


def load_config(path, overrides=None):
    """Parse a flat TOML document; parse errors keep tomli's line/column text."""
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error in {path}: {exc}") from exc
    for key, value in doc.items():
        if isinstance(value, (dict, list)):
            raise ConfigError(f"config must be flat; key `{key}` holds a {type(value).__name__}")
    cfg = RunConfig(doc)
    if overrides:
        cfg = cfg.with_overrides(overrides)
    return cfg
