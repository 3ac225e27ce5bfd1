"""Batch command line: ``nilmkit synth|train|tune|disaggregate|evaluate|adapt``.

Each run resolves its parameters as flags over a JSON config file over
built-in defaults, and writes a ``manifest.json`` next to its outputs
holding the resolved config, the seed and SHA-256 hashes of every input
and output file.  Manifests carry no timestamps, so identical runs yield
identical manifests.

Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from nilmkit import __version__
from nilmkit.errors import DataError, DivergedTraining, NilmError

log = logging.getLogger("nilmkit")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3
MAX_WORKERS = 4

DEFAULTS = {
    "synth": {"samples": 10_000, "interval": 60, "start": 1_577_836_800},
    "train": {"arch": "tdlcnn", "k": None, "epochs": 20, "learning_rate": 1e-3, "batch_size": 50,
              "stride": None, "split": None},
    "tune": {"arch": "tdlcnn", "k": 60, "budget": 6, "split": 0.8, "bounds": None},
    "disaggregate": {},
    "evaluate": {"split": None, "corrected_aefi": False, "noise_levels": None},
    "adapt": {"window": 30 * 86_400, "alpha": 0.10, "kl_threshold": 0.10, "epochs": 10,
              "reference_fraction": 0.2},
}
ARCHES = ("cobilstm", "tdlcnn", "r_tdlcnn", "m_tdlcnn", "mr_tdlcnn", "energan")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- helpers ---------------------------------------------------------------------

def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _csv_list(text):
    return [s.strip() for s in text.split(",") if s.strip()] if isinstance(text, str) else list(text)


def _require(*paths):
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise FileNotFoundError(f"no such file: {p}")


def resolve(command: str, args: argparse.Namespace) -> dict:
    """Flags override config-file values, which override defaults."""
    cfg = dict(DEFAULTS[command])
    if getattr(args, "config", None):
        _require(args.config)
        cfg.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
    for key, val in vars(args).items():
        if key in ("command", "config", "verbose") or val is None:
            continue
        cfg[key] = val
    if cfg.get("seed") is None:
        cfg["seed"] = int(np.random.SeedSequence().entropy % (2**32))
        log.warning("no seed given; generated seed %d", cfg["seed"])
    log.info("resolved config: %s", json.dumps(cfg, sort_keys=True, default=str))
    return cfg


def write_manifest(out_dir, command: str, cfg: dict, inputs, outputs) -> Path:
    out_dir = Path(out_dir)
    manifest = {
        "tool": "nilmkit",
        "version": __version__,
        "command": command,
        "config": cfg,
        "seed": cfg["seed"],
        "inputs": {str(p): sha256(p) for p in inputs if p is not None},
        "outputs": {Path(p).name: sha256(p) for p in outputs},
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path


def _load(path):
    from nilmkit.data import load_channels

    _require(path)
    return load_channels(path)


def _split(frame, fraction, part):
    if fraction is None:
        return frame
    head, tail = frame.split(float(fraction))
    return head if part == "head" else tail


def _pool(fn, items):
    """Run per-appliance work on a bounded pool; results keep item order."""
    with ThreadPoolExecutor(max_workers=min(MAX_WORKERS, max(1, len(items)))) as ex:
        return list(ex.map(fn, items))


def _appliance_seed(seed: int, i: int) -> int:
    return int(np.random.SeedSequence([seed, i]).generate_state(1)[0])


# -- subcommands -------------------------------------------------------------------

def cmd_synth(cfg: dict) -> int:
    from nilmkit.data import load_profiles, save_frame, synth_generate

    _require(cfg["profiles"])
    frame = synth_generate(load_profiles(cfg["profiles"]), int(cfg["samples"]), int(cfg["seed"]),
                           int(cfg["interval"]), int(cfg["start"]))
    out = Path(cfg["out"])
    save_frame(frame, out)
    write_manifest(out.parent, "synth", cfg, [cfg["profiles"]], [out])
    print(f"wrote {len(frame)} samples x {len(frame.names)} channels to {out}")
    return EXIT_OK


def _spec_for(arch: str, k: int | None):
    from nilmkit.models.spec import build_cobilstm, build_tdlcnn

    if arch == "cobilstm":
        return build_cobilstm(k or 60)
    variant = {"tdlcnn": "base", "r_tdlcnn": "recurrent", "m_tdlcnn": "multichannel", "mr_tdlcnn": "mr"}[arch]
    return build_tdlcnn(variant, k or 60)


def _train_one(cfg: dict, frame, appliance: str, seed: int, spec=None):
    from nilmkit.models.gan import gan_fit
    from nilmkit.models.training import fit

    if cfg["arch"] == "energan":
        return gan_fit(frame, appliance, k=cfg["k"] or 64, epochs=int(cfg["epochs"]), seed=seed,
                       stride=cfg["stride"], batch_size=int(cfg["batch_size"]),
                       learning_rate=float(cfg["learning_rate"]))
    spec = spec or _spec_for(cfg["arch"], cfg["k"])
    spec = spec.with_hyper(learning_rate=float(cfg["learning_rate"]), batch_size=int(cfg["batch_size"]))
    return fit(spec, frame, appliance, epochs=int(cfg["epochs"]), seed=seed, stride=cfg["stride"])


def _save(model, path):
    from nilmkit.models.checkpoint import save_checkpoint, save_gan

    return save_gan(model, path) if hasattr(model, "discriminator") else save_checkpoint(model, path)


def cmd_train(cfg: dict) -> int:
    _require(cfg["data"])
    if cfg["arch"] not in ARCHES:
        raise UsageError(f"unknown architecture {cfg['arch']!r}; choose from {', '.join(ARCHES)}")
    frame = _split(_load(cfg["data"]), cfg["split"], "head")
    appliances = _csv_list(cfg["appliances"])
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)

    def work(item):
        i, name = item
        model = _train_one(cfg, frame, name, _appliance_seed(int(cfg["seed"]), i))
        return _save(model, out_dir / f"{name}.json")

    paths = _pool(work, list(enumerate(appliances)))
    outputs = [f for p in paths for f in (p, p.with_suffix(".params"))]
    write_manifest(out_dir, "train", cfg, [cfg["data"]], outputs)
    for p in paths:
        print(f"saved {p}")
    return EXIT_OK


def cmd_tune(cfg: dict) -> int:
    from nilmkit.metrics import mae
    from nilmkit.models.training import disaggregate, fit
    from nilmkit.tuner import MODEL_SPACE, config_to_spec, tune

    _require(cfg["data"])
    if cfg["arch"] not in ARCHES or cfg["arch"] == "energan":
        raise UsageError(f"tuning supports {', '.join(a for a in ARCHES if a != 'energan')}")
    frame = _load(cfg["data"])
    train_f, val_f = frame.split(float(cfg["split"]))
    appliance = cfg["appliance"]
    bounds = MODEL_SPACE
    if cfg.get("bounds"):
        bounds = {a.name: a for a in MODEL_SPACE}
        for name, b in cfg["bounds"].items():
            bounds[name] = (*b,) if name != "learning_rate" else (*b, "log")
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)

    def objective(point):
        spec = config_to_spec(point, cfg["arch"], int(cfg["k"]))
        model = fit(spec, train_f, appliance, seed=int(cfg["seed"]))
        return mae(disaggregate(model, val_f), val_f[appliance])

    log_path = out_dir / "tuning.jsonl"
    result = tune(objective, bounds, int(cfg["budget"]), int(cfg["seed"]), log_path=log_path)
    best_path = out_dir / "best_config.json"
    best_path.write_text(json.dumps({"config": result.best.as_dict(), "error": result.best_error},
                                    indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_manifest(out_dir, "tune", cfg, [cfg["data"]], [log_path, best_path])
    print(f"best {result.best.as_dict()} validation MAE {result.best_error:.4f}")
    return EXIT_OK


def _estimate(model, frame):
    from nilmkit.models.gan import gan_disaggregate
    from nilmkit.models.training import disaggregate

    return gan_disaggregate(model, frame) if hasattr(model, "discriminator") else disaggregate(model, frame)


def _models(paths):
    from nilmkit.models.checkpoint import load_any

    expanded = []
    for p in _csv_list(paths):
        if Path(p).is_dir():  # every checkpoint in a train output directory
            expanded += sorted(str(f) for f in Path(p).glob("*.json") if f.name != "manifest.json")
        else:
            expanded.append(p)
    paths = expanded
    _require(*paths)
    return paths, [load_any(p) for p in paths]


def cmd_disaggregate(cfg: dict) -> int:
    from nilmkit.data import TimeSeriesFrame, save_frame

    paths, models = _models(cfg["models"])
    _require(cfg["data"])
    frame = _load(cfg["data"])
    estimates = _pool(lambda m: _estimate(m, frame), models)
    out = Path(cfg["out"])
    result = TimeSeriesFrame(frame.timestamps, {m.appliance: e for m, e in zip(models, estimates)},
                             frame.sampling_interval)
    save_frame(result, out)
    write_manifest(out.parent, "disaggregate", cfg, [cfg["data"], *paths], [out])
    print(f"wrote estimates for {', '.join(result.names)} to {out}")
    return EXIT_OK


def cmd_evaluate(cfg: dict) -> int:
    from nilmkit.data import inject_noise
    from nilmkit.errors import MissingGroundTruth
    from nilmkit.metrics import MetricReport, mae, noise_degradation, write_plot_csv

    paths, models = _models(cfg["models"])
    _require(cfg["data"])
    frame = _split(_load(cfg["data"]), cfg["split"], "tail")
    for m in models:
        if m.appliance not in frame.channels:
            raise MissingGroundTruth(f"{cfg['data']} has no ground truth for {m.appliance!r}")
    estimates = dict(zip((m.appliance for m in models), _pool(lambda m: _estimate(m, frame), models)))
    truths = {a: frame[a] for a in estimates}
    report = MetricReport.build(estimates, truths, corrected=bool(cfg["corrected_aefi"]))

    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = [report.write_json(out_dir / "report.json"), report.write_text(out_dir / "report.txt")]
    for a, est in estimates.items():
        outputs.append(write_plot_csv(out_dir / f"plot_{a}.csv", frame.timestamps, est, "unix_ts", a))

    if cfg["noise_levels"]:
        levels = [float(v) for v in _csv_list(str(cfg["noise_levels"]))]
        robust = {}
        for i, m in enumerate(models):
            curve = [(n, mae(_estimate(m, inject_noise(frame, n, _appliance_seed(int(cfg["seed"]), i))),
                             truths[m.appliance])) for n in levels]
            rates, mean_rate = noise_degradation(curve)
            robust[m.appliance] = {"mae_by_noise": curve, "delta_r": rates, "mean_abs_delta_r": mean_rate}
        p = out_dir / "noise.json"
        p.write_text(json.dumps(robust, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        outputs.append(p)

    write_manifest(out_dir, "evaluate", cfg, [cfg["data"], *paths], outputs)
    sys.stdout.write(report.to_text())
    return EXIT_OK


def cmd_adapt(cfg: dict) -> int:
    from nilmkit.adaptation import adapt_stream
    from nilmkit.models.checkpoint import load_checkpoint

    _require(cfg["model"], cfg["train_data"], cfg["data"])
    model = load_checkpoint(cfg["model"])
    history = _load(cfg["train_data"])
    _, reference = history.split(1.0 - float(cfg["reference_fraction"]))
    stream = _load(cfg["data"])
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    drift = out_dir / "drift.jsonl"
    drift.write_text("", encoding="utf-8")
    result = adapt_stream(model, reference, history, stream, int(cfg["window"]), float(cfg["alpha"]),
                          float(cfg["kl_threshold"]), int(cfg["epochs"]), int(cfg["seed"]), log_path=drift)
    outputs = [drift]
    if result.updates:
        p = _save(result.model, out_dir / f"{model.appliance}.json")
        outputs += [p, p.with_suffix(".params")]
    write_manifest(out_dir, "adapt", cfg, [cfg["model"], cfg["train_data"], cfg["data"]], outputs)
    print(f"{len(result.verdicts)} windows evaluated, {result.updates} update(s)")
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "tune": cmd_tune, "disaggregate": cmd_disaggregate,
            "evaluate": cmd_evaluate, "adapt": cmd_adapt}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nilmkit", description="Energy disaggregation toolkit.")
    p.add_argument("--version", action="version", version=f"nilmkit {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="JSON file of parameter values")
        sp.add_argument("--seed", type=int)
        sp.add_argument("-v", "--verbose", action="store_true", default=None)

    s = sub.add_parser("synth", help="generate a synthetic household")
    common(s)
    s.add_argument("--profiles")
    s.add_argument("--samples", type=int)
    s.add_argument("--interval", type=int)
    s.add_argument("--start", type=int)
    s.add_argument("--out")

    t = sub.add_parser("train", help="train one model per appliance")
    common(t)
    t.add_argument("--data")
    t.add_argument("--appliances", help="comma-separated appliance channels")
    t.add_argument("--arch", choices=ARCHES)
    t.add_argument("--k", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--learning-rate", type=float)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--stride", type=int)
    t.add_argument("--split", type=float, help="train on this leading fraction")
    t.add_argument("--out", help="checkpoint directory")

    u = sub.add_parser("tune", help="Bayesian hyperparameter search")
    common(u)
    u.add_argument("--data")
    u.add_argument("--appliance")
    u.add_argument("--arch", choices=ARCHES)
    u.add_argument("--k", type=int)
    u.add_argument("--budget", type=int)
    u.add_argument("--split", type=float)
    u.add_argument("--out")

    d = sub.add_parser("disaggregate", help="estimate appliance power from a CSV")
    common(d)
    d.add_argument("--data")
    d.add_argument("--models", help="comma-separated checkpoint files or directories")
    d.add_argument("--out")

    e = sub.add_parser("evaluate", help="metric report against ground truth")
    common(e)
    e.add_argument("--data")
    e.add_argument("--models")
    e.add_argument("--split", type=float, help="evaluate on the part after this fraction")
    e.add_argument("--corrected-aefi", action="store_true", default=None)
    e.add_argument("--noise-levels", help="comma-separated noise percentages")
    e.add_argument("--out")

    a = sub.add_parser("adapt", help="drift monitoring and model updating over a stream")
    common(a)
    a.add_argument("--model")
    a.add_argument("--train-data")
    a.add_argument("--data", help="stream with ground truth")
    a.add_argument("--window", type=int, help="evaluation window in seconds")
    a.add_argument("--alpha", type=float)
    a.add_argument("--kl-threshold", type=float)
    a.add_argument("--epochs", type=int)
    a.add_argument("--reference-fraction", type=float)
    a.add_argument("--out")
    return p


REQUIRED = {
    "synth": ("profiles", "out"), "train": ("data", "appliances", "out"),
    "tune": ("data", "appliance", "out"), "disaggregate": ("data", "models", "out"),
    "evaluate": ("data", "models", "out"), "adapt": ("model", "train_data", "data", "out"),
}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s", stream=sys.stderr)
        cfg = resolve(args.command, args)
        missing = [k for k in REQUIRED[args.command] if cfg.get(k) is None]
        if missing:
            raise UsageError(f"{args.command}: missing required parameter(s): "
                             + ", ".join("--" + m.replace("_", "-") for m in missing))
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergedTraining as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (NilmError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
