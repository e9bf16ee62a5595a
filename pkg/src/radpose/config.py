"""Flat key=value configuration with a closed schema.

Lines are ``key = value``; ``#`` starts a comment. Unknown keys are
rejected. Every command echoes the effective (defaults-merged) config into
its output directory as ``effective.cfg``.
"""

from __future__ import annotations

from pathlib import Path

from .errors import ConfigError
from .losses import LossWeights
from .model import ModelConfig
from .radar import RadarDims
from .simulate import RadarParams, rcs_profile
from .train import SplitSpec, TrainConfig

# name -> (type tag, default); type tags: int, float, bool, str, ints
SCHEMA: dict[str, tuple[str, object]] = {
    "seed": ("int", 0),
    # raw cube dimensions and FFT pad sizes (0 = same as raw)
    "radar.frames": ("int", 8),
    "radar.azimuth": ("int", 4),
    "radar.elevation": ("int", 4),
    "radar.samples": ("int", 64),
    "radar.chirps": ("int", 128),
    "radar.pad_samples": ("int", 0),
    "radar.pad_chirps": ("int", 0),
    "radar.pad_azimuth": ("int", 0),
    "radar.pad_elevation": ("int", 0),
    # RF front-end and scene synthesis
    "sim.carrier_hz": ("float", 60e9),
    "sim.bandwidth_hz": ("float", 1.02e9),
    "sim.chirp_s": ("float", 17e-6),
    "sim.adc_hz": ("float", 3.8e6),
    "sim.frame_rate_hz": ("float", 15.0),
    "sim.element_spacing": ("float", 0.5),
    "sim.n_tx": ("int", 3),
    "sim.noise_std": ("float", 0.02),
    "sim.depth_m": ("float", 3.0),
    "sim.n_subjects": ("int", 6),
    "sim.frames_per_recording": ("int", 120),
    "sim.activities": ("ints", (8,)),
    "sim.rcs_profile": ("str", "heteroscedastic"),
    # model
    "model.d_lat": ("int", 32),
    "model.n_samples": ("int", 100),
    "model.latent_family": ("str", "gauss"),
    "model.likelihood": ("str", "gauss_diag"),
    "model.feature_dim": ("int", 128),
    "model.d_k": ("int", 32),
    "model.reducer_patch": ("int", 64),
    "model.reducer_patch_out": ("int", 8),
    "model.decoder_hidden": ("int", 64),
    "model.decoder_relu": ("bool", True),
    "model.var_floor": ("float", 1e-6),
    "model.cov_ridge": ("float", 1e-4),
    "model.alpha_init": ("float", 0.1),
    # loss
    "loss.beta": ("float", 1e-3),
    "loss.gamma": ("float", 1.0),
    # training
    "train.epochs": ("int", 40),
    "train.batch_size": ("int", 16),
    "train.lr": ("float", 1e-3),
    "train.patience": ("int", 20),
    "train.warmup_epochs": ("int", 5),
    "train.stride": ("int", 1),
    "train.refit": ("bool", False),
    # splits: subject ids
    "split.train": ("ints", (0, 1, 2, 3)),
    "split.calib": ("int", 4),
    "split.test": ("ints", (5,)),
    # calibration
    "calib.levels": ("int", 20),
    "calib.per_dimension": ("bool", False),
    # latent augmentation / activity classification
    "augment.samples_per_sequence": ("int", 100),
    "augment.alpha_span": ("float", 0.01),
    "augment.n_alphas": ("int", 10),
    "classify.kernel": ("int", 3),
    "classify.epochs": ("int", 60),
    "classify.lr": ("float", 3e-3),
    "classify.stride": ("int", 4),
}


def _parse_value(key: str, raw: str):
    kind = SCHEMA[key][0]
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if raw.lower() in ("true", "1", "yes", "on"):
                return True
            if raw.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "ints":
            if not raw:
                return ()
            return tuple(int(v) for v in raw.split(","))
        return raw
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r} as {kind}") from exc


class Config:
    def __init__(self, values: dict | None = None):
        self.values = {k: default for k, (_, default) in SCHEMA.items()}
        if values:
            for k, v in values.items():
                if k not in SCHEMA:
                    raise ConfigError(f"unknown config key {k!r}")
                self.values[k] = v

    @classmethod
    def load(cls, path: str | Path) -> "Config":
        values = {}
        with open(path) as f:
            for lineno, line in enumerate(f, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key = value")
                key, raw = (part.strip() for part in line.split("=", 1))
                if key not in SCHEMA:
                    raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
                values[key] = _parse_value(key, raw)
        return cls(values)

    def __getitem__(self, key: str):
        return self.values[key]

    def set(self, key: str, value) -> None:
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        self.values[key] = value

    def write_effective(self, out_dir: str | Path) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        lines = []
        for key in sorted(self.values):
            v = self.values[key]
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{key} = {v}")
        (out_dir / "effective.cfg").write_text("\n".join(lines) + "\n")

    # builders -------------------------------------------------------------

    def radar_dims(self) -> RadarDims:
        try:
            return RadarDims(
                T=self["radar.frames"],
                A=self["radar.azimuth"],
                E=self["radar.elevation"],
                S=self["radar.samples"],
                C=self["radar.chirps"],
                pad_S=self["radar.pad_samples"],
                pad_C=self["radar.pad_chirps"],
                pad_A=self["radar.pad_azimuth"],
                pad_E=self["radar.pad_elevation"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def radar_params(self) -> RadarParams:
        import numpy as np

        dims = self.radar_dims()
        mask = np.ones((dims.A, dims.E), dtype=bool)
        if (dims.A, dims.E) == (4, 4):
            mask[2:, 2:] = False  # 12 populated virtual channels
        try:
            return RadarParams(
                f_c=self["sim.carrier_hz"],
                B=self["sim.bandwidth_hz"],
                T_chirp=self["sim.chirp_s"],
                f_s=self["sim.adc_hz"],
                frame_rate=self["sim.frame_rate_hz"],
                dims=dims,
                array_mask=mask,
                element_spacing=self["sim.element_spacing"],
                n_tx=self["sim.n_tx"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def model_config(self) -> ModelConfig:
        try:
            return ModelConfig(
                d_lat=self["model.d_lat"],
                n_samples=self["model.n_samples"],
                latent_family=self["model.latent_family"],
                likelihood=self["model.likelihood"],
                feature_dim=self["model.feature_dim"],
                d_k=self["model.d_k"],
                reducer_patch=self["model.reducer_patch"],
                reducer_patch_out=self["model.reducer_patch_out"],
                decoder_hidden=self["model.decoder_hidden"],
                decoder_relu=self["model.decoder_relu"],
                var_floor=self["model.var_floor"],
                cov_ridge=self["model.cov_ridge"],
                alpha_init=self["model.alpha_init"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def loss_weights(self) -> LossWeights:
        try:
            return LossWeights(beta=self["loss.beta"], gamma=self["loss.gamma"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def train_config(self, seed: int | None = None) -> TrainConfig:
        try:
            return TrainConfig(
                epochs=self["train.epochs"],
                batch_size=self["train.batch_size"],
                lr=self["train.lr"],
                seed=self["seed"] if seed is None else seed,
                patience=self["train.patience"],
                warmup_epochs=self["train.warmup_epochs"],
                weights=self.loss_weights(),
                model=self.model_config(),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def split_spec(self) -> SplitSpec:
        try:
            return SplitSpec(
                train=self["split.train"],
                calib=self["split.calib"],
                test=self["split.test"],
                stride=self["train.stride"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
