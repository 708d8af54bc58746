"""Command-line entry point: ``dalif {train,eval,grad-check,ablate,energy} --config PATH``.

Config keys can be overridden with dotted flags, e.g. ``--train.lr 0.05``.
Exit codes: 0 ok, 1 config/IO error, 2 numeric failure, 3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from .config import (
    DEFAULTS, SCHEMA_VERSION, ConfigError, build_from_config, load_config, load_dataset,
    load_snapshot, save_snapshot, train_config,
)
from .data import stack_batch
from .energy import (
    PUBLISHED_ROWS, EnergyModel, SynOpCount, count_synops, energy_report, solve_energy_model,
)
from .network import network_forward
from .stbp import grad_check
from .train import (
    ABLATION_MODES, NonFiniteLossError, evaluate, format_ablation_table, run_ablation,
    summarize_ablation, train,
)

log = logging.getLogger("dalif")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 1, 2, 3
GRAD_TOLERANCE = 1e-4


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _energy_model(cfg) -> EnergyModel:
    e = cfg["energy"]
    if e["e_mac"] is not None and e["e_ac"] is not None:
        return EnergyModel(float(e["e_mac"]), float(e["e_ac"]))
    return solve_energy_model(PUBLISHED_ROWS)


def cmd_train(cfg, args) -> int:
    dataset, in_shape, classes = load_dataset(cfg)
    net = build_from_config(cfg, in_shape, classes)
    report = train(net, dataset, train_config(cfg))
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.jsonl").write_text(report.to_jsonl())
    _write_json(out / "summary.json", report.summary())
    save_snapshot(out / "snapshot.npz", net, cfg)
    log.info("trained %d epochs in %.1fs; test accuracy %.4f", len(report.epochs),
             report.wall_clock, report.final_test_accuracy)
    print(json.dumps({"schema_version": SCHEMA_VERSION, "output_dir": str(out),
                      "test_accuracy": report.final_test_accuracy}))
    return EXIT_OK


def cmd_eval(cfg, args) -> int:
    if not args.snapshot:
        raise ConfigError("eval needs --snapshot PATH")
    net, snap_cfg = load_snapshot(args.snapshot)
    dataset, _, _ = load_dataset(snap_cfg)
    result = evaluate(net, dataset.test)
    print(json.dumps({"schema_version": SCHEMA_VERSION, "seed": snap_cfg["train"]["seed"],
                      **result}))
    return EXIT_OK


def cmd_grad_check(cfg, args) -> int:
    gc = cfg["grad_check"]
    T = gc["timesteps"]
    sub = {**cfg, "train": {**cfg["train"], "timesteps": T}}
    dataset, in_shape, classes = load_dataset(sub)
    net = build_from_config(sub, in_shape, classes, T=T)
    x, y = stack_batch(dataset.train[: gc["samples"]])
    rep = grad_check(net, x, y, epsilon=gc["epsilon"], corrupt=args.corrupt_gradient)
    print(json.dumps({"schema_version": SCHEMA_VERSION, "seed": cfg["train"]["seed"],
                      "max_rel_error": rep.max_rel_error, "worst_param": rep.worst_param,
                      "checked": rep.checked, "skipped": rep.skipped}))
    if rep.max_rel_error < GRAD_TOLERANCE:
        return EXIT_OK
    print(f"gradient check failed: worst offender {rep.worst_param} "
          f"(relative error {rep.max_rel_error:.3e})", file=sys.stderr)
    return EXIT_VERIFY


def cmd_ablate(cfg, args) -> int:
    seeds = cfg["train"]["seeds"]
    if not seeds:
        raise ConfigError("config key 'train.seeds' must list at least one seed")
    base = train_config(cfg)
    probe, in_shape, classes = load_dataset(cfg)

    def make_net(seed):
        return build_from_config(cfg, in_shape, classes, seed=seed)

    def make_dataset(seed):
        return probe if cfg["data"]["kind"] != "synth" else load_dataset(cfg, seed)[0]

    rows = run_ablation(make_net, make_dataset, base, seeds, ABLATION_MODES)
    summary = summarize_ablation(rows)
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "ablation.json", {
        "schema_version": SCHEMA_VERSION, "seeds": list(seeds),
        "rows": [asdict(r) for r in rows], "summary": summary,
    })
    table = format_ablation_table(summary)
    (out / "ablation.txt").write_text(table + "\n")
    print(table)
    return EXIT_OK


def cmd_energy(cfg, args) -> int:
    model = _energy_model(cfg)
    if args.from_counts:
        try:
            acs, macs = (float(v) for v in args.from_counts.split(","))
        except ValueError:
            raise ConfigError("--from-counts expects 'acs,macs'") from None
        report = energy_report(SynOpCount(acs=acs, macs=macs), model, cfg["train"]["timesteps"])
        report["seed"] = cfg["train"]["seed"]
        print(json.dumps(report, sort_keys=True))
        return EXIT_OK
    if not args.snapshot:
        raise ConfigError("energy needs --snapshot PATH or --from-counts acs,macs")
    net, snap_cfg = load_snapshot(args.snapshot)
    dataset, _, _ = load_dataset(snap_cfg)
    samples = dataset.test or dataset.train
    total = SynOpCount()
    for i in range(0, len(samples), 64):
        x, _ = stack_batch(samples[i:i + 64])
        _, tape = network_forward(net, x)
        total = total + count_synops(net, tape)
    per_sample = total.scaled(1.0 / len(samples))
    report = energy_report(per_sample, model, net.T)
    report["seed"] = snap_cfg["train"]["seed"]
    report["samples"] = len(samples)
    text = json.dumps(report, sort_keys=True)
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "energy.json").write_text(text + "\n")
    print(text)
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "grad-check": cmd_grad_check,
    "ablate": cmd_ablate,
    "energy": cmd_energy,
}


def _parse_overrides(extra: list[str]) -> list[tuple[str, object]]:
    out, i = [], 0
    while i < len(extra):
        flag = extra[i]
        if not flag.startswith("--") or len(flag) == 2:
            raise ConfigError(f"unrecognized argument '{flag}'")
        key = flag[2:]
        if "=" in key:
            key, raw = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"override '{flag}' needs a value")
            raw = extra[i + 1]
            i += 2
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        out.append((key, value))
    return out


def build_parser() -> argparse.ArgumentParser:
    epilog = "config defaults:\n" + json.dumps(DEFAULTS, indent=2)
    parser = argparse.ArgumentParser(
        prog="dalif", description=__doc__, epilog=epilog,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, epilog=epilog, formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", required=True, help="path to the JSON run config")
        if name in ("eval", "energy"):
            p.add_argument("--snapshot", help="trained parameter snapshot (.npz)")
        if name == "energy":
            p.add_argument("--from-counts", help="skip inference; report energy for 'acs,macs'")
        if name == "grad-check":
            p.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, _parse_overrides(extra))
        return COMMANDS[args.command](cfg, args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonFiniteLossError, FloatingPointError) as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
