"""Command-line entry point: synth | train | eval | inspect-attention.

Every command writes a manifest.json next to its outputs recording the
resolved config, input and output hashes, seed and versions. Failures print
one JSON line on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, data, evaluation, synth, training
from .data import GROUP
from .model import Siagr, config_hash, load_checkpoint

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("mavenrec")

LOG_LEVELS = {"error": logging.ERROR, "warning": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(f"usage: {message}")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config_path: str | None
    config_hash: str
    config: dict
    seed: int | None
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    duration_s: float = 0.0
    versions: dict[str, str] = field(default_factory=dict)

    def write(self, out_dir) -> Path:
        path = Path(out_dir) / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def versions() -> dict[str, str]:
    import scipy

    return {"mavenrec": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "python": platform.python_version()}


def verify_manifest(path) -> list[str]:
    """Recompute every recorded hash; return the paths that no longer match."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    bad = []
    for section in ("inputs", "outputs"):
        for p, digest in doc[section].items():
            if not Path(p).is_file() or sha256_file(p) != digest:
                bad.append(p)
    return bad


def read_config(path, section: str) -> dict:
    """JSON or TOML config; a table named after the command takes precedence."""
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise CliError(f"config file not found: {p}")
    raw = p.read_bytes()
    try:
        doc = tomllib.loads(raw.decode("utf-8")) if p.suffix == ".toml" else json.loads(raw)
    except (ValueError, tomllib.TOMLDecodeError) as e:
        raise CliError(f"cannot parse config {p}: {e}") from e
    if not isinstance(doc, dict):
        raise CliError(f"config {p} must be a mapping")
    return dict(doc.get(section, doc))


def _finish(args, out: Path, cfg: dict, seed, inputs, outputs, t0) -> int:
    m = RunManifest(
        command=args.command,
        config_path=str(args.config) if args.config else None,
        config_hash=config_hash(cfg),
        config=cfg,
        seed=seed,
        inputs={str(p): sha256_file(p) for p in inputs},
        outputs={str(p): sha256_file(p) for p in outputs},
        duration_s=round(time.perf_counter() - t0, 3),
        versions=versions(),
    )
    bad = verify_manifest(m.write(out))
    if bad:
        raise CliError(f"output validation failed for {bad}")
    print(json.dumps({"command": args.command, "outputs": sorted(m.outputs)}))
    return 0


def _out_dir(args) -> Path:
    if args.out is None:
        raise CliError("--out is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _data(args) -> tuple[data.InteractionStore, list[Path]]:
    if args.data is None:
        raise CliError("--data is required")
    return data.load_dir(args.data), data.data_files(args.data)


# --- commands -----------------------------------------------------------------


def cmd_synth(args) -> int:
    t0 = time.perf_counter()
    cfg = read_config(args.config, "synth")
    unknown = set(cfg) - set(synth.SynthConfig.__dataclass_fields__)
    if unknown:
        raise CliError(f"unknown synth config keys: {sorted(unknown)}")
    if args.seed is not None:
        cfg["seed"] = args.seed
    config = synth.SynthConfig.from_dict(cfg)
    out = _out_dir(args)
    store, truth = synth.generate(config)
    paths = synth.write(store, truth, out)
    log.info("synth: %s", store.summary())
    inputs = [args.config] if args.config else []
    return _finish(args, out, synth.config_dict(config), config.seed, inputs, paths, t0)


def cmd_train(args) -> int:
    t0 = time.perf_counter()
    cfg = read_config(args.config, "train")
    if args.seed is not None:
        cfg["seed"] = args.seed
    out = _out_dir(args)
    ckpt = out / "checkpoint.json"
    cfg["checkpoint_path"] = None
    config = training.TrainConfig.from_dict(cfg)
    store, inputs = _data(args)
    split = data.split_leave_one_out(store, config.seed)
    config.checkpoint_path = str(ckpt)
    _, history = training.fit(split.train, config)
    loss_csv = history.write_csv(out / "loss_history.csv")
    load_checkpoint(ckpt, store.n_users, store.n_items)
    resolved = config.to_dict()
    resolved.pop("checkpoint_path")
    if args.config:
        inputs = [args.config, *inputs]
    return _finish(args, out, resolved, config.seed, inputs, [ckpt, loss_csv], t0)


def _load_models(paths, store) -> tuple[dict[str, Siagr], dict]:
    models, meta0 = {}, None
    for p in paths:
        config, params, meta = load_checkpoint(p, store.n_users, store.n_items)
        if config.variant in models:
            raise CliError(f"two checkpoints for variant {config.variant!r}")
        models[config.variant] = Siagr(config, params, store.roster)
        if config.variant == "siagr" or meta0 is None:
            meta0 = {"seed": meta.get("seed", 0), "config": asdict(config)}
    return models, meta0


def cmd_eval(args) -> int:
    t0 = time.perf_counter()
    cfg = read_config(args.config, "eval")
    if not args.checkpoint:
        raise CliError("--checkpoint is required")
    methods = args.methods or cfg.get("methods") or list(evaluation.METHODS)
    methods = tuple(methods.split(",") if isinstance(methods, str) else methods)
    for m in methods:
        if m not in evaluation.METHODS:
            raise CliError(f"unknown method {m!r}; valid: {','.join(evaluation.METHODS)}")
    eval_negatives = args.eval_negatives if args.eval_negatives is not None else int(cfg.get("eval_negatives", 100))
    threads = args.threads if args.threads is not None else int(cfg.get("threads", 1))
    store, inputs = _data(args)
    models, meta = _load_models(args.checkpoint, store)
    if "siagr" not in models:
        raise CliError("eval needs a checkpoint of the full 'siagr' variant")
    split_seed = int(meta["seed"])
    seed = args.seed if args.seed is not None else int(cfg.get("seed", split_seed))
    split = data.split_leave_one_out(store, split_seed)
    out = _out_dir(args)
    resolved = {
        "methods": list(methods), "eval_negatives": eval_negatives, "seed": seed,
        "split_seed": split_seed, "model": meta["config"],
    }
    report = evaluation.evaluate(
        {m: models[m] for m in models}, split.test, store, eval_negatives, seed, methods,
        config_hash=config_hash(resolved), threads=threads,
    )
    paths = report.write(out)
    inputs = [*([args.config] if args.config else []), *inputs, *args.checkpoint]
    return _finish(args, out, resolved, seed, inputs, paths, t0)


def _resolve_ids(raw: str | None, index: dict[str, int], ids: tuple[str, ...], what: str) -> list[int]:
    if raw is None:
        return list(range(len(ids)))
    out = []
    for token in raw.split(","):
        token = token.strip()
        if token not in index:
            rng = f"{ids[0]}..{ids[-1]}" if ids else "none"
            raise CliError(f"unknown {what} id {token!r}; valid ids: {rng} ({len(ids)} total)")
        out.append(index[token])
    return out


def cmd_inspect_attention(args) -> int:
    t0 = time.perf_counter()
    if not args.checkpoint or len(args.checkpoint) != 1:
        raise CliError("inspect-attention takes exactly one --checkpoint")
    if (args.items is None) == (not args.per_group_mean):
        raise CliError("give exactly one of --items or --per-group-mean")
    store, inputs = _data(args)
    config, params, meta = load_checkpoint(args.checkpoint[0], store.n_users, store.n_items)
    model = Siagr(config, params, store.roster)
    groups = _resolve_ids(args.groups, store.group_index, store.group_ids, "group")
    rows = []
    if args.per_group_mean:
        for g in groups:
            items = store.positives(GROUP, g)
            if items.size == 0:
                continue
            alpha, members = model.attention(np.full(items.size, g), items)
            mean = alpha.mean(axis=0)
            rows += [(g, int(u), "mean", float(w)) for u, w in zip(members[0], mean) if u >= 0]
    else:
        items = _resolve_ids(args.items, store.item_index, store.item_ids, "item")
        gg = np.repeat(groups, len(items))
        ii = np.tile(items, len(groups))
        alpha, members = model.attention(gg, ii)
        for r, (g, i) in enumerate(zip(gg, ii)):
            rows += [(int(g), int(u), int(i), float(w)) for u, w in zip(members[r], alpha[r]) if u >= 0]
    out = _out_dir(args)
    path = out / "attention.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group_id", "member_id", "item_id", "weight"])
        for g, u, i, wt in rows:
            w.writerow([store.group_ids[g], store.user_ids[u], i if i == "mean" else store.item_ids[i], repr(wt)])
    resolved = {"groups": args.groups, "items": args.items, "per_group_mean": bool(args.per_group_mean),
                "model": asdict(config)}
    return _finish(args, out, resolved, meta.get("seed"), [*inputs, args.checkpoint[0]], [path], t0)


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "inspect-attention": cmd_inspect_attention,
}


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="mavenrec", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON or TOML config file")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        if name != "synth":
            p.add_argument("--data", type=Path, help="directory with the three interaction CSVs")
        if name in ("eval", "inspect-attention"):
            p.add_argument("--checkpoint", type=Path, action="append",
                           help="checkpoint.json; repeat for separately trained ablations")
        if name == "eval":
            p.add_argument("--methods", help=f"comma list from {','.join(evaluation.METHODS)}")
            p.add_argument("--eval-negatives", type=int)
            p.add_argument("--threads", type=int)
        if name == "inspect-attention":
            p.add_argument("--groups", help="comma list of group ids (default: all)")
            p.add_argument("--items", help="comma list of item ids")
            p.add_argument("--per-group-mean", action="store_true",
                           help="average weights over each group's interacted items")
    return ap


def _setup_logging():
    level = os.environ.get("MAVENREC_LOG", "error").lower()
    if level not in LOG_LEVELS:
        raise CliError(f"MAVENREC_LOG must be one of {sorted(LOG_LEVELS)}, got {level!r}")
    logging.basicConfig(level=LOG_LEVELS[level], format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None) -> int:
    try:
        _setup_logging()
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)
    except Exception as e:  # noqa: BLE001 - one machine-readable line for every failure
        sys.stderr.write(json.dumps({"error": type(e).__name__, "message": str(e)}) + "\n")
        return 1
