"""Versioned checkpoint files for generator/critic weights and configs."""

from __future__ import annotations

from dataclasses import asdict

import torch

from .critic import Critic, CriticConfig
from .generator import GenConfig, Generator

FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    """Unreadable or incompatible checkpoint file."""


def _gen_config_to_dict(cfg: GenConfig) -> dict:
    d = asdict(cfg)
    d["site_bounds"] = list(cfg.site_bounds)
    return d


def _gen_config_from_dict(d: dict) -> GenConfig:
    d = dict(d)
    d["site_bounds"] = tuple(d["site_bounds"])
    return GenConfig(**d)


def save_checkpoint(
    path,
    *,
    generator: Generator | None = None,
    critic: Critic | None = None,
    step: int = 0,
    optimizer_states: dict | None = None,
) -> None:
    payload: dict = {"format_version": FORMAT_VERSION, "step": step}
    if generator is not None:
        payload["gen_config"] = _gen_config_to_dict(generator.cfg)
        payload["gen_state"] = generator.state_dict()
    if critic is not None:
        payload["critic_config"] = asdict(critic.cfg)
        payload["critic_state"] = critic.state_dict()
    if optimizer_states:
        payload["optimizer_states"] = optimizer_states
    torch.save(payload, path)


def load_payload(path) -> dict:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except FileNotFoundError:
        raise
    except Exception as err:
        raise CheckpointError(f"cannot read checkpoint {path}: {err}") from err
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version!r} in {path}")
    return payload


def load_generator(path) -> Generator:
    payload = load_payload(path)
    if "gen_state" not in payload:
        raise CheckpointError(f"checkpoint {path} holds no generator weights")
    gen = Generator(_gen_config_from_dict(payload["gen_config"]))
    try:
        gen.load_state_dict(payload["gen_state"])
    except RuntimeError as err:
        raise CheckpointError(f"generator weights incompatible: {err}") from err
    return gen


def load_critic(path) -> Critic:
    payload = load_payload(path)
    if "critic_state" not in payload:
        raise CheckpointError(f"checkpoint {path} holds no critic weights")
    critic = Critic(CriticConfig(**payload["critic_config"]))
    try:
        critic.load_state_dict(payload["critic_state"])
    except RuntimeError as err:
        raise CheckpointError(f"critic weights incompatible: {err}") from err
    return critic
