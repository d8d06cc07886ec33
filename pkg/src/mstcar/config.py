"""Run configuration: a documented key-value text file plus CLI overrides.

Format: one ``key = value`` pair per line, ``#`` comments.  Keys are
namespaced with dots (``chain.seed``, ``prior.a_tau``, ``metrics.replicates``).
Reproducibility manifests duplicate the resolved configuration, so there is
no environment-variable fallback anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .sampler import ChainConfig, HyperParams


class ConfigError(ValueError):
    """Raised for unreadable or inconsistent run configuration."""


_DEFAULTS: dict[str, object] = {
    "counts": "",
    "adjacency": "",
    "output_dir": "out",
    "chain.iterations": 2000,
    "chain.burn_in": 1000,
    "chain.thin_theta": 10,
    "chain.seed": 0,
    "chain.threads": 1,
    "chain.theta_chunks": 64,
    "chain.z_update_mode": "sequential",
    "chain.adaptation_window": 50,
    "chain.theta_proposal_scale": 0.5,
    "chain.rho_proposal_scale": 0.5,
    "chain.epsilon_init": 0,
    "chain.checkpoint_every": 0,
    "chain.separable": False,
    "prior.a_tau": 3.0,
    "prior.b_tau": 0.01,
    "prior.a_rho": 9.0,
    "prior.b_rho": 1.0,
    "prior.nu0": 0.0,            # 0 means "n_groups" (resolved against the panel)
    "prior.nu": 0.0,             # 0 means "n_groups + 2"
    "prior.g0_scale": 0.01,
    "prior.beta_prior_variance": 1e8,
    "metrics.replicates": 1000,
    "metrics.suppression_threshold": 100,
    "metrics.standard_weights": "",
    "metrics.trend_regions": "",
    "metrics.pseudo_population": 1000.0,
}

_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


@dataclass(frozen=True)
class RunConfig:
    """Resolved configuration for the fit/baseline/metrics/summarize commands."""

    values: dict

    def __getitem__(self, key: str):
        return self.values[key]

    @property
    def output_dir(self) -> Path:
        return Path(self.values["output_dir"])

    @property
    def store_dir(self) -> Path:
        return self.output_dir / "store"

    @property
    def checkpoint_path(self) -> Path:
        return self.output_dir / "checkpoint.bin"

    def chain_config(self) -> ChainConfig:
        v = self.values
        return ChainConfig(
            n_iterations=v["chain.iterations"],
            burn_in=v["chain.burn_in"],
            thin_theta=v["chain.thin_theta"],
            seed=v["chain.seed"],
            n_threads=v["chain.threads"],
            theta_chunks=v["chain.theta_chunks"],
            z_update_mode=v["chain.z_update_mode"],
            adaptation_window=v["chain.adaptation_window"],
            theta_proposal_scale=v["chain.theta_proposal_scale"],
            rho_proposal_scale=v["chain.rho_proposal_scale"],
            epsilon_init=v["chain.epsilon_init"],
            checkpoint_every=v["chain.checkpoint_every"],
            separable=v["chain.separable"],
        )

    def hyper_params(self, n_groups: int) -> HyperParams:
        v = self.values
        nu0 = v["prior.nu0"] if v["prior.nu0"] > 0 else float(n_groups)
        nu = v["prior.nu"] if v["prior.nu"] > 0 else float(n_groups + 2)
        return HyperParams(
            a_tau=v["prior.a_tau"],
            b_tau=v["prior.b_tau"],
            a_rho=v["prior.a_rho"],
            b_rho=v["prior.b_rho"],
            g0=v["prior.g0_scale"] * np.eye(n_groups),
            nu0=nu0,
            nu=nu,
            beta_prior_variance=v["prior.beta_prior_variance"],
        )

    def standard_weights(self, n_groups: int) -> np.ndarray:
        raw = self.values["metrics.standard_weights"]
        if not raw:
            return np.full(n_groups, 1.0 / n_groups)
        weights = np.array([float(w) for w in raw.split(",")])
        if weights.size != n_groups:
            raise ConfigError(
                f"metrics.standard_weights has {weights.size} entries, need {n_groups}")
        return weights

    def trend_regions(self) -> list[str]:
        raw = self.values["metrics.trend_regions"]
        return [r.strip() for r in raw.split(",") if r.strip()] if raw else []

    def validate_for_fit(self) -> None:
        for key in ("counts", "adjacency"):
            path = self.values[key]
            if not path:
                raise ConfigError(f"config key {key!r} is required")
            if not Path(path).exists():
                raise ConfigError(f"{key} file not found: {path}")
        if self.values["metrics.replicates"] < 40:
            raise ConfigError("metrics.replicates must be at least 40")
        if self.values["metrics.suppression_threshold"] < 0:
            raise ConfigError("metrics.suppression_threshold must be nonnegative")


def _coerce(key: str, raw: str):
    default = _DEFAULTS[key]
    if isinstance(default, bool):
        token = raw.strip().lower()
        if token in _BOOL_TRUE:
            return True
        if token in _BOOL_FALSE:
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from exc
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from exc
    return raw.strip()


def parse_config_text(text: str) -> dict:
    values = dict(_DEFAULTS)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown configuration key {key!r}")
        values[key] = _coerce(key, value.strip())
    return values


def load_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    """Read the config file (optional) and apply command-line overrides."""
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        values = parse_config_text(text)
    else:
        values = dict(_DEFAULTS)
    for key, raw in (overrides or {}).items():
        if key not in _DEFAULTS:
            raise ConfigError(f"unknown configuration key {key!r}")
        values[key] = _coerce(key, str(raw)) if isinstance(raw, str) else raw
    return RunConfig(values)
