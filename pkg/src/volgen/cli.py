"""Command line entry points: gen-data, train, sample, eval, export-obj, inspect.

Every subcommand reads an optional JSON config file whose sections map onto
the config dataclasses (``synth``, ``generator``, ``critic``, ``train``,
``metrics``); CLI flags override file values.  Commands that produce an
output directory echo the effective configuration there.  Exit codes:
0 success, 1 validation/parse error, 2 I/O or compatibility error.
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys
from dataclasses import asdict

import numpy as np
import torch

from . import checkpoint as ckpt
from . import metrics as metrics_mod
from . import jsonio, objexport, synth, training
from .core import ProgramGraph, ValidationError, VolumetricDesign, VoxelGraph
from .critic import Critic, CriticConfig
from .descriptor import DescriptorEmbedder
from .encoding import attention_support
from .generator import GenConfig, Generator, sample_design
from .jsonio import ParseError
from .synth import SynthConfig, SynthRecord


class CliError(RuntimeError):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as err:
        raise CliError(f"cannot read config {path}: {err}", 2) from err
    except json.JSONDecodeError as err:
        raise CliError(f"config {path} is not valid JSON: {err}", 1) from err
    if not isinstance(cfg, dict):
        raise CliError(f"config {path} must hold a JSON object", 1)
    return cfg


def _effective_config(sections: dict) -> dict:
    return {k: v for k, v in sections.items() if v}


def _echo_config(out_dir, sections: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "effective_config.json"), "w", encoding="utf-8") as fh:
        json.dump(_effective_config(sections), fh, indent=2)
        fh.write("\n")


def _gen_config(section: dict) -> GenConfig:
    known = set(GenConfig.__dataclass_fields__)
    unknown = set(section) - known
    if unknown:
        raise ValidationError(f"unknown generator config keys: {sorted(unknown)}")
    if "site_bounds" in section:
        section = dict(section, site_bounds=tuple(section["site_bounds"]))
    return GenConfig(**section)


def _critic_config(section: dict) -> CriticConfig:
    known = set(CriticConfig.__dataclass_fields__)
    unknown = set(section) - known
    if unknown:
        raise ValidationError(f"unknown critic config keys: {sorted(unknown)}")
    return CriticConfig(**section)


def _train_config(section: dict) -> training.TrainConfig:
    known = set(training.TrainConfig.__dataclass_fields__)
    unknown = set(section) - known
    if unknown:
        raise ValidationError(f"unknown train config keys: {sorted(unknown)}")
    if "adam_betas" in section:
        section = dict(section, adam_betas=tuple(section["adam_betas"]))
    return training.TrainConfig(**section)


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_gen_data(args) -> int:
    file_cfg = _load_config_file(args.config)
    section = dict(file_cfg.get("synth", {}))
    if args.seed is not None:
        section["rng_seed"] = args.seed
    cfg = synth.config_from_dict(section)
    manifest = synth.generate_dataset(args.n, cfg, args.out)
    _echo_config(args.out, {"synth": synth.config_to_dict(cfg)})
    print(f"wrote {manifest['n']} records to {args.out}")
    return 0


def _cmd_train(args) -> int:
    file_cfg = _load_config_file(args.config)
    gen_cfg = _gen_config(file_cfg.get("generator", {}))
    critic_cfg = _critic_config(file_cfg.get("critic", {}))
    train_section = dict(file_cfg.get("train", {}))
    if args.seed is not None:
        train_section["seed"] = args.seed
    if args.epochs is not None:
        train_section["epochs"] = args.epochs
    train_cfg = _train_config(train_section)

    try:
        records = synth.load_dataset(args.data)
    except OSError as err:
        raise CliError(f"cannot load dataset from {args.data}: {err}", 2) from err

    torch.manual_seed(train_cfg.seed)
    gen = Generator(gen_cfg)
    critic = Critic(critic_cfg)
    _echo_config(args.out, {
        "generator": asdict(gen_cfg),
        "critic": asdict(critic_cfg),
        "train": asdict(train_cfg),
    })
    result = training.train(records, gen, critic, train_cfg, out_dir=args.out)
    print(
        f"trained {result.critic_steps} critic / {result.generator_steps} generator steps;"
        f" checkpoint: {result.checkpoint_path}"
    )
    return 0


def _load_graph(path, expected, what: str):
    try:
        obj = jsonio.load(path)
    except FileNotFoundError as err:
        raise CliError(f"{what} file not found: {path}", 2) from err
    if not isinstance(obj, expected):
        raise CliError(f"{path} does not hold a {what}", 1)
    return obj


def _cmd_sample(args) -> int:
    if not os.path.exists(args.checkpoint):
        raise CliError(f"missing checkpoint: {args.checkpoint}", 2)
    try:
        gen = ckpt.load_generator(args.checkpoint)
    except ckpt.CheckpointError as err:
        raise CliError(str(err), 2) from err
    pg = _load_graph(args.program, ProgramGraph, "program graph")
    vg = _load_graph(args.voxels, VoxelGraph, "voxel graph")
    os.makedirs(args.out, exist_ok=True)
    _echo_config(args.out, {
        "generator": asdict(gen.cfg),
        "sample": {"n": args.n, "seed": args.seed, "far": args.far},
    })
    far = args.far if args.far is not None else pg.far_limit
    support = attention_support(vg, pg).numpy()
    for i in range(args.n):
        design, out = sample_design(gen, pg, vg, seed=args.seed + i, hard=True, far_limit=far)
        jsonio.save(design, os.path.join(args.out, f"design_{i:03d}.json"))
        if args.dump_intermediate:
            for step, snap in enumerate(out.snapshots):
                att = snap.att.detach().numpy()
                payload = {
                    "design": i,
                    "pointer_call": step,
                    "mask": [float(m) for m in snap.mask.detach()],
                    "att": [
                        {int(pid): float(att[k, pid]) for pid in np.flatnonzero(support[k])}
                        for k in range(vg.num_nodes)
                    ],
                }
                path = os.path.join(args.out, f"design_{i:03d}_step{step}.json")
                with open(path, "w", encoding="utf-8") as fh:
                    json.dump(payload, fh, indent=2)
                    fh.write("\n")
    print(f"wrote {args.n} designs to {args.out}")
    return 0


def _load_designs(path) -> list[VolumetricDesign]:
    files = sorted(glob.glob(os.path.join(path, "design_*.json")))
    if not files:
        files = sorted(glob.glob(os.path.join(path, "record_*.json")))
    designs = []
    for f in files:
        obj = jsonio.load(f)
        if isinstance(obj, SynthRecord):
            from .core import design_from_labeled_graph

            designs.append(design_from_labeled_graph(obj.voxel_graph, obj.program_graph))
        elif isinstance(obj, VolumetricDesign):
            designs.append(obj)
    if not designs:
        raise CliError(f"no designs found under {path}", 2)
    return designs


def _cmd_eval(args) -> int:
    designs = _load_designs(args.designs)
    reference_features = design_features = None
    if args.against:
        reference = _load_designs(args.against)
        embedder = DescriptorEmbedder(resolution=args.resolution, seed=args.embed_seed)
        design_features = embedder.embed_all(designs)
        reference_features = embedder.embed_all(reference)
    report = metrics_mod.evaluate_designs(
        designs,
        reference_features=reference_features,
        design_features=design_features,
    )
    payload = report.to_dict()
    text = json.dumps(payload, indent=2) + "\n"
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(text)
    print(text, end="")
    return 0


def _cmd_export_obj(args) -> int:
    obj = jsonio.load(args.design)
    if isinstance(obj, SynthRecord):
        from .core import design_from_labeled_graph

        design = design_from_labeled_graph(obj.voxel_graph, obj.program_graph)
    elif isinstance(obj, VolumetricDesign):
        design = obj
    else:
        raise CliError(f"{args.design} does not hold a design", 1)
    objexport.write_obj(design, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_inspect(args) -> int:
    obj = jsonio.load(args.file)
    if isinstance(obj, SynthRecord):
        pg, vg = obj.program_graph, obj.voxel_graph
        used = sum(1 for n in vg.nodes if n.label is not None)
        print(f"record: {vg.num_nodes} voxels ({used} used), "
              f"{pg.num_nodes} program nodes, {len(pg.edges)} program edges")
        print(f"far_actual={obj.far_actual:.4f} "
              f"tpr_actual={{{', '.join(f'{t.value}: {r:.3f}' for t, r in obj.tpr_actual.items())}}}")
    elif isinstance(obj, VolumetricDesign):
        con = metrics_mod.connectivity_accuracy(obj)
        fd = metrics_mod.far_distance(obj, obj.program.far_limit)
        ta = metrics_mod.tpr_accuracy(obj, obj.program.tpr)
        print(f"design: {obj.voxels.num_nodes} voxels, {obj.program.num_nodes} program nodes")
        print(f"con={con:.4f} far_dist={fd:.4f} tpr_acc={ta:.4f}")
    elif isinstance(obj, ProgramGraph):
        print(f"program graph: {obj.num_nodes} nodes, {len(obj.edges)} edges, far={obj.far_limit}")
    elif isinstance(obj, VoxelGraph):
        print(f"voxel graph: {obj.num_nodes} voxels, {len(obj.edges)} edges, "
              f"site_area={obj.site_area}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="volgen",
        description="Graph-conditioned volumetric building design generation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train the GAN on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("sample", help="sample designs from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--program", required=True)
    p.add_argument("--voxels", required=True)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--far", type=float, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--dump-intermediate", action="store_true")
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("eval", help="evaluate a directory of designs")
    p.add_argument("--designs", required=True)
    p.add_argument("--against", default=None)
    p.add_argument("--report", default=None)
    p.add_argument("--resolution", type=int, default=16)
    p.add_argument("--embed-seed", type=int, default=0)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("export-obj", help="export a design as a Wavefront OBJ mesh")
    p.add_argument("--design", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export_obj)

    p = sub.add_parser("inspect", help="summarize a graph, design, or record file")
    p.add_argument("--file", required=True)
    p.set_defaults(func=_cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.code
    except (ValidationError, ParseError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
