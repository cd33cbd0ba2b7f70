"""Command-line front end for the articulated-object diffusion pipeline.

Commands: ``gen-data`` (synthesize a split corpus), ``train`` (fit a
denoiser on a corpus), ``sample`` (unconditional generation from a
checkpoint), ``condition`` (masked inpainting: part2motion,
motion2part, gapart2object), ``eval`` (set-level metrics between two
corpora), and ``animate`` (OBJ frame sweep of one object's joints).

Every command takes ``--config PATH`` (JSON; a section named after the
command, or a flat dict), ``--seed``, and ``--out DIR``.  Explicit
command-line flags override config-file values, which override
defaults; the merged configuration is validated before any work starts
and recorded in ``<out>/manifest.json`` together with its hash, so a
rerun from the manifest reproduces the outputs byte for byte.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from ._util import canonical_json, stable_digest
from .dataset import (
    SynthSpec,
    corpus_to_matrix,
    generate_synthetic,
    load_corpus,
    normalize_object,
    object_to_graph,
    save_corpus,
    split,
    zero_background,
)
from .denoiser import DenoiserConfig
from .diffusion import conditioned_sample, make_schedule, sample
from .graph import GraphCodec, make_mask
from .kinematics import (
    ArticulatedObject,
    box_mesh,
    export_obj_sequence,
    forward_kinematics,
    write_obj,
)
from .metrics import evaluate_sets
from .postprocess import extract_object
from .training import TrainConfig, load_checkpoint, save_checkpoint, train
from .urdf import export_urdf

_MODES = {
    "part2motion": "parts",
    "motion2part": "motion",
    "gapart2object": "gapart",
}

# per-command option schema: key -> (type, default); None default means
# the option is required
_SCHEMAS = {
    "gen-data": {
        "out": (str, None),
        "seed": (int, 0),
        "family": (str, "mixed"),
        "n": (int, 64),
        "ratios": (list, [0.7, 0.1, 0.2]),
        "n_slots": (int, 8),
        "latent_width": (int, 8),
        "part_min": (int, 2),
        "part_max": (int, 8),
        "size_min": (float, 0.4),
        "size_max": (float, 1.2),
    },
    "train": {
        "out": (str, None),
        "seed": (int, 0),
        "corpus": (str, None),
        "epochs": (int, 200),
        "batch_size": (int, 8),
        "lr": (float, 1e-3),
        "hidden": (int, 128),
        "layers": (int, 4),
        "time_width": (int, 16),
        "pe_width": (int, 8),
        "attention_scaled": (bool, False),
        "n_steps": (int, 100),
        "beta_start": (float, 1e-3),
        "beta_end": (float, 0.2),
        "weighted_loss": (bool, False),
        "grad_clip": (float, 10.0),
        "checkpoint_interval": (int, 0),
        "n_jobs": (int, 1),
        "n_slots": (int, 8),
        "latent_width": (int, 8),
        "resume": (str, ""),
    },
    "sample": {
        "out": (str, None),
        "seed": (int, 0),
        "checkpoint": (str, None),
        "n": (int, 16),
        "formats": (str, "urdf,obj,json"),
    },
    "condition": {
        "out": (str, None),
        "seed": (int, 0),
        "checkpoint": (str, None),
        "mode": (str, None),
        "input": (str, None),
        "index": (int, 0),
        "n": (int, 4),
        "formats": (str, "urdf,obj,json"),
    },
    "eval": {
        "out": (str, None),
        "seed": (int, 0),
        "samples": (str, None),
        "references": (str, None),
        "m_states": (int, 10),
        "n_points": (int, 2048),
        "method": (str, "brute"),
        "n_jobs": (int, 1),
    },
    "animate": {
        "out": (str, None),
        "seed": (int, 0),
        "input": (str, None),
        "index": (int, 0),
        "frames": (int, 24),
    },
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="artikit",
        description="articulated-object diffusion pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(cmd: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(cmd, help=help_text)
        p.add_argument("--config", help="JSON config file", default=None)
        for key, (kind, default) in _SCHEMAS[cmd].items():
            flags = ["--" + key.replace("_", "-")]
            if key == "n":
                flags.insert(0, "-n")
            required = " (required)" if default is None else f" (default {default})"
            if kind is bool:
                p.add_argument(*flags, action="store_true",
                               default=argparse.SUPPRESS, help="flag" + required)
            elif kind is list:
                p.add_argument(*flags, nargs=3, type=float,
                               default=argparse.SUPPRESS, help="three floats" + required)
            else:
                p.add_argument(*flags, type=kind, default=argparse.SUPPRESS,
                               help=kind.__name__ + required)
        return p

    add("gen-data", "generate a synthetic corpus split into train/val/test")
    add("train", "train a denoiser on a corpus directory or file")
    add("sample", "draw unconditional samples from a checkpoint")
    add("condition", "inpaint unknown channels of a partial object "
        f"(modes: {', '.join(_MODES)})")
    add("eval", "set-level metrics between sample and reference corpora")
    add("animate", "export an OBJ frame sweep over an object's joint ranges")
    return parser


def _merge_config(command: str, args: argparse.Namespace) -> dict:
    """defaults < config file < explicit flags, validated against the schema."""
    schema = _SCHEMAS[command]
    cfg = {k: default for k, (_, default) in schema.items()}
    if args.config:
        with open(args.config) as fh:
            payload = json.load(fh)
        section = payload.get(command.replace("-", "_"), payload) if isinstance(payload, dict) else None
        if not isinstance(section, dict):
            raise ValueError(f"{args.config}: config must be a JSON object")
        for key, value in section.items():
            if key not in schema:
                raise ValueError(
                    f"{args.config}: unknown option {key!r} for {command}"
                )
            cfg[key] = value
    for key, value in vars(args).items():
        if key in schema:
            cfg[key] = value
    for key, (kind, _) in schema.items():
        if cfg[key] is None:
            raise ValueError(f"{command}: missing required option --{key.replace('_', '-')}")
        if kind is list:
            cfg[key] = [float(v) for v in cfg[key]]
        elif not isinstance(cfg[key], kind):
            try:
                cfg[key] = kind(cfg[key])
            except (TypeError, ValueError):
                raise ValueError(
                    f"{command}: option {key!r} expects {kind.__name__}, got {cfg[key]!r}"
                ) from None
    return cfg


def _write_manifest(out_dir: str, command: str, cfg: dict) -> None:
    # the output directory is where the manifest lives, not part of what
    # was computed; leaving it out keeps reruns byte-identical
    recorded = {k: v for k, v in cfg.items() if k != "out"}
    record = {"command": command, "config": recorded}
    manifest = {
        "command": command,
        "config": recorded,
        "config_hash": stable_digest(canonical_json(record)),
        "seed": cfg.get("seed"),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _resolve_corpus_file(path: str) -> str:
    if os.path.isfile(path):
        return path
    if os.path.isdir(path):
        for name in ("samples.json", "test.json", "train.json"):
            candidate = os.path.join(path, name)
            if os.path.isfile(candidate):
                return candidate
        raise FileNotFoundError(f"no corpus file found under {path}")
    raise FileNotFoundError(f"corpus path {path} does not exist")


def _load_one_object(path: str, index: int) -> ArticulatedObject:
    with open(path) as fh:
        payload = json.load(fh)
    if isinstance(payload, dict) and "objects" not in payload:
        return ArticulatedObject.from_dict(payload)
    corpus = load_corpus(path)
    if not 0 <= index < len(corpus):
        raise IndexError(f"{path} holds {len(corpus)} objects, index {index} is out of range")
    return corpus[index]


def _export_object(obj: ArticulatedObject, out_dir: str, stem: str, formats: set[str]) -> None:
    if "json" in formats:
        with open(os.path.join(out_dir, stem + ".json"), "w") as fh:
            json.dump(obj.to_dict(), fh, indent=1)
            fh.write("\n")
    if "urdf" in formats:
        with open(os.path.join(out_dir, stem + ".urdf"), "w") as fh:
            fh.write(export_urdf(obj))
    if "obj" in formats:
        poses = forward_kinematics(obj)
        meshes = [
            (pose.apply(box_mesh(part.bbox)[0]), box_mesh(part.bbox)[1])
            for part, pose in zip(obj.parts, poses)
        ]
        write_obj(os.path.join(out_dir, stem + ".obj"), meshes)


# ----------------------------------------------------------------------
# commands


def _cmd_gen_data(cfg: dict) -> None:
    spec = SynthSpec(
        family=cfg["family"],
        part_range=(cfg["part_min"], cfg["part_max"]),
        size_range=(cfg["size_min"], cfg["size_max"]),
        latent_width=cfg["latent_width"],
        n_slots=cfg["n_slots"],
        seed=cfg["seed"],
    )
    corpus = generate_synthetic(spec, cfg["n"])
    train_set, val_set, test_set = split(corpus, tuple(cfg["ratios"]), seed=cfg["seed"])
    for name, subset in (("train", train_set), ("val", val_set), ("test", test_set)):
        save_corpus(subset, os.path.join(cfg["out"], f"{name}.json"))
    print(
        f"wrote {len(train_set)}/{len(val_set)}/{len(test_set)} "
        f"train/val/test objects to {cfg['out']}"
    )


def _cmd_train(cfg: dict) -> None:
    corpus_path = cfg["corpus"]
    if os.path.isdir(corpus_path):
        train_objs = load_corpus(os.path.join(corpus_path, "train.json"))
        val_file = os.path.join(corpus_path, "val.json")
        val_objs = load_corpus(val_file) if os.path.isfile(val_file) else None
    else:
        train_objs = load_corpus(corpus_path)
        val_objs = None
    codec = GraphCodec(n_slots=cfg["n_slots"], latent_width=cfg["latent_width"])
    x_train, stats = corpus_to_matrix(train_objs, codec)
    x_val = None
    if val_objs:
        x_val, _ = corpus_to_matrix(val_objs, codec, stats=stats)
    schedule = make_schedule(cfg["n_steps"], cfg["beta_start"], cfg["beta_end"])
    dconf = DenoiserConfig(
        n_slots=codec.n_slots,
        node_dim=codec.node_dim,
        edge_dim=codec.edge_dim,
        hidden=cfg["hidden"],
        layers=cfg["layers"],
        time_width=cfg["time_width"],
        pe_width=cfg["pe_width"],
        attention_scaled=cfg["attention_scaled"],
        seed=cfg["seed"],
    )
    tconf = TrainConfig(
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        lr=cfg["lr"],
        seed=cfg["seed"],
        weighted_loss=cfg["weighted_loss"],
        grad_clip=cfg["grad_clip"] if cfg["grad_clip"] > 0 else None,
        checkpoint_interval=cfg["checkpoint_interval"],
        n_jobs=cfg["n_jobs"],
    )
    result = train(
        x_train,
        dconf,
        schedule,
        tconf,
        x_val=x_val,
        codec_config=codec.to_dict(),
        stats=stats,
        log_path=os.path.join(cfg["out"], "log.csv"),
        checkpoint_path=os.path.join(cfg["out"], "checkpoint.npz"),
        resume=load_checkpoint(cfg["resume"]) if cfg["resume"] else None,
    )
    save_checkpoint(result.best, os.path.join(cfg["out"], "checkpoint_best.npz"))
    last = result.history[-1] if result.history else {}
    print(
        f"trained {cfg['epochs']} epochs; final train loss "
        f"{last.get('train_loss', float('nan')):.6g}; checkpoints in {cfg['out']}"
    )


def _sampling_context(checkpoint_path: str):
    ckpt = load_checkpoint(checkpoint_path)
    if ckpt.codec_config is None or ckpt.stats() is None:
        raise ValueError(
            f"{checkpoint_path} lacks codec or normalization state; "
            "train through the CLI to embed them"
        )
    return ckpt, GraphCodec.from_dict(ckpt.codec_config), ckpt.stats()


def _cmd_sample(cfg: dict) -> None:
    ckpt, codec, stats = _sampling_context(cfg["checkpoint"])
    denoiser = ckpt.denoiser()
    schedule = ckpt.schedule()
    formats = {f.strip() for f in cfg["formats"].split(",") if f.strip()}
    objects = []
    for i in range(cfg["n"]):
        rng = np.random.default_rng(np.random.SeedSequence([cfg["seed"], i]))
        vec = sample(denoiser, schedule, codec.flat_dim, rng)
        obj, _ = extract_object(vec, codec, stats=stats)
        obj.obj_id = f"sample-{cfg['seed']}-{i:04d}"
        objects.append(obj)
        _export_object(obj, cfg["out"], f"sample_{i:04d}", formats)
    save_corpus(objects, os.path.join(cfg["out"], "samples.json"))
    print(f"wrote {len(objects)} samples to {cfg['out']}")


def _cmd_condition(cfg: dict) -> None:
    if cfg["mode"] not in _MODES:
        raise ValueError(
            f"unknown mode {cfg['mode']!r} (choose from {', '.join(_MODES)})"
        )
    ckpt, codec, stats = _sampling_context(cfg["checkpoint"])
    denoiser = ckpt.denoiser()
    schedule = ckpt.schedule()
    scaffold = _load_one_object(cfg["input"], cfg["index"])
    normalized, _, _ = normalize_object(scaffold)
    raw = codec.flatten(object_to_graph(normalized, codec))
    mask = make_mask(codec, _MODES[cfg["mode"]], known=raw)
    x_known = zero_background(stats.normalize(raw), codec)
    formats = {f.strip() for f in cfg["formats"].split(",") if f.strip()}
    objects = []
    for i in range(cfg["n"]):
        rng = np.random.default_rng(np.random.SeedSequence([cfg["seed"], i]))
        vec = conditioned_sample(denoiser, schedule, x_known, mask, rng)
        obj, _ = extract_object(vec, codec, stats=stats)
        obj.obj_id = f"{cfg['mode']}-{cfg['seed']}-{i:04d}"
        objects.append(obj)
        _export_object(obj, cfg["out"], f"conditioned_{i:04d}", formats)
    save_corpus(objects, os.path.join(cfg["out"], "samples.json"))
    print(f"wrote {len(objects)} {cfg['mode']} samples to {cfg['out']}")


def _cmd_eval(cfg: dict) -> None:
    samples = load_corpus(_resolve_corpus_file(cfg["samples"]))
    references = load_corpus(_resolve_corpus_file(cfg["references"]))
    summary, matrices = evaluate_sets(
        samples,
        references,
        n_states=cfg["m_states"],
        n_points=cfg["n_points"],
        seed=cfg["seed"],
        method=cfg["method"],
        n_jobs=cfg["n_jobs"],
    )
    with open(os.path.join(cfg["out"], "metrics.json"), "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
        fh.write("\n")
    np.savez(os.path.join(cfg["out"], "distances.npz"), **matrices)
    print(json.dumps(summary, sort_keys=True))


def _cmd_animate(cfg: dict) -> None:
    obj = _load_one_object(cfg["input"], cfg["index"])
    frames = cfg["frames"]
    if frames < 1:
        raise ValueError("need at least one frame")
    states_seq = np.zeros((frames, len(obj.joints), 2))
    ramp = np.linspace(0.0, 1.0, frames)
    for k, joint in enumerate(obj.joints):
        tlo, thi = joint.range_revolute
        dlo, dhi = joint.range_prismatic
        states_seq[:, k, 0] = tlo + (thi - tlo) * ramp
        states_seq[:, k, 1] = dlo + (dhi - dlo) * ramp
    paths = export_obj_sequence(obj, states_seq, cfg["out"])
    print(f"wrote {len(paths)} frames to {cfg['out']}")


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "sample": _cmd_sample,
    "condition": _cmd_condition,
    "eval": _cmd_eval,
    "animate": _cmd_animate,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _merge_config(args.command, args)
        os.makedirs(cfg["out"], exist_ok=True)
        _write_manifest(cfg["out"], args.command, cfg)
        _COMMANDS[args.command](cfg)
    except Exception as exc:  # noqa: BLE001 - CLI boundary turns errors into exit codes
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
