"""Command-line front end.

Subcommands mirror the experiment pipeline: generate, attack, detect,
enumerate, mixing, congestion, consistency, impossibility, report.
Exit codes: 0 ok, 2 configuration error, 3 cap/convergence error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from . import chain, harness
from .errors import (CapExceededError, ConfigError, NotConvergedError,
                     NotErgodicError, SpaceTooSmallError, TooLargeError,
                     WmLabError)
from .harness import ExperimentConfig
from .model import generate
from .rng import RngState
from .rules import normalize

CAP_ERRORS = (CapExceededError, NotConvergedError, NotErgodicError,
              SpaceTooSmallError, TooLargeError)


def _load_config(args) -> ExperimentConfig:
    if args.config:
        config = harness.load_config(args.config)
    else:
        config = ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.cap is not None:
        overrides["space_cap"] = args.cap
    if args.epsilon is not None:
        overrides["epsilon"] = args.epsilon
    if args.epsilon_pos is not None:
        overrides["epsilon_pos"] = args.epsilon_pos
    if overrides:
        config = dataclasses.replace(config, **overrides)
    return config.validate()


def _outdir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_plain)
        fh.write("\n")


def _plain(obj):
    if dataclasses.is_dataclass(obj):
        return dataclasses.asdict(obj)
    if hasattr(obj, "tolist"):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj)}")


def cmd_generate(args) -> int:
    config = _load_config(args)
    out = _outdir(args)
    wm, null = harness.generate_corpora(config)
    seed = config.master_seed
    harness.save_corpus(config, wm, os.path.join(out, f"corpus_wm_seed{seed}.csv"))
    harness.save_corpus(config, null,
                        os.path.join(out, f"corpus_null_seed{seed}.csv"))
    _write_json(harness.config_to_json(config), os.path.join(out, "config.json"))
    print(f"wrote {len(wm)} watermarked and {len(null)} null samples to {out}")
    return 0


def cmd_attack(args) -> int:
    config = _load_config(args)
    out = _outdir(args)
    seed = config.master_seed
    corpus = harness.load_corpus(os.path.join(out, f"corpus_wm_seed{seed}.csv"))
    attacked = harness.attack_corpus(config, corpus)
    harness.save_corpus(config, attacked,
                        os.path.join(out, f"corpus_attacked_seed{seed}.csv"))
    steps = sorted({s.t_steps for s in attacked})
    print(f"attacked {len(attacked)} samples, walk lengths {steps[:8]}"
          + ("..." if len(steps) > 8 else ""))
    return 0


def cmd_detect(args) -> int:
    config = _load_config(args)
    out = _outdir(args)
    seed = config.master_seed
    all_rows = []
    for kind in ("wm", "null", "attacked"):
        path = os.path.join(out, f"corpus_{kind}_seed{seed}.csv")
        if not os.path.exists(path):
            continue
        rows = harness.detect_corpus(config, harness.load_corpus(path))
        harness.save_detection(rows, os.path.join(out, f"detect_{kind}_seed{seed}.csv"))
        all_rows += rows
    if not all_rows:
        print("no corpora found; run generate first", file=sys.stderr)
        return 2
    for (cell, kind), auroc in harness.auroc_by_cell(all_rows).items():
        scheme = config.schemes[cell].scheme
        print(f"cell {cell} {scheme:9s} {kind:9s} AUROC {auroc:.4f}")
    return 0


def cmd_enumerate(args) -> int:
    config = _load_config(args)
    out = _outdir(args)
    for tid in config.tasks:
        info = harness.enumerate_task_space(config, tid, epsilons=())
        path = os.path.join(out, f"graph_{tid}_seed{config.master_seed}.json")
        chain.graph_to_json_file(info.graph, path)
        print(f"{tid}: {len(info.graph)} states -> {path}")
    return 0


def cmd_mixing(args) -> int:
    config = _load_config(args)
    out = _outdir(args)
    eps = config.epsilon
    rows = []
    for tid in config.tasks:
        info = harness.enumerate_task_space(config, tid, epsilons=(eps,))
        times = info.mixing[eps]
        worst = max(times.values())
        start = info.graph.seed_index
        rows.append({"task": tid, "states": len(info.graph), "epsilon": eps,
                     "t_mix_canonical": times[start], "t_mix_max": worst})
        print(f"{tid}: |V|={len(info.graph)} t_c({eps})={times[start]} "
              f"max over starts={worst}")
    _write_json(rows, os.path.join(out, f"mixing_seed{config.master_seed}.json"))
    return 0


def cmd_congestion(args) -> int:
    config = _load_config(args)
    out = _outdir(args)
    eps = config.epsilon
    rows = []
    for tid in config.tasks:
        info = harness.enumerate_task_space(config, tid, epsilons=(eps,))
        P = chain.transition_matrix(info.graph)
        rep = chain.canonical_paths_and_congestion(info.graph, info.pi, P)
        worst_bound = max(rep.bound(eps, i) for i in range(len(info.graph)))
        worst_t = max(info.mixing[eps].values())
        rows.append({"task": tid, "states": len(info.graph), "rho": rep.rho,
                     "receptors": rep.receptor_count, "token_count": rep.token_count,
                     "alpha": rep.alpha, "beta": rep.beta, "epsilon": eps,
                     "t_mix_max": worst_t, "bound_max": worst_bound})
        print(f"{tid}: rho={rep.rho:.2f} max t_c={worst_t} "
              f"max bound={worst_bound:.1f}")
    _write_json(rows, os.path.join(out, f"congestion_seed{config.master_seed}.json"))
    return 0


def cmd_consistency(args) -> int:
    config = _load_config(args)
    out = _outdir(args)
    rep = harness.run_consistency(config)
    _write_json(rep, os.path.join(out, f"consistency_seed{config.master_seed}.json"))
    print(f"spaces: {rep.samples} (duplicate-sampled: {rep.too_small})")
    for lvl in sorted(rep.acceptance):
        print(f"  acceptance at {lvl:>5}: {rep.acceptance[lvl]:.4f}")
    return 0


def cmd_impossibility(args) -> int:
    config = _load_config(args)
    out = _outdir(args)
    rep = harness.run_impossibility(config)
    _write_json(rep, os.path.join(out, f"impossibility_seed{config.master_seed}.json"))
    print(f"threshold {rep.threshold:.4f} (null rate {rep.null_rate:.4f})")
    print(f"detect rate before {rep.before_detect_rate:.4f} "
          f"after {rep.afterward_detect_rate:.4f}")
    print(f"afterward FNR {rep.afterward_fnr:.4f} "
          f"targets: main {rep.target_fnr_main:.4f} lower {rep.target_fnr_lower:.4f}")
    print(f"bands: lower_ok={rep.lower_bound_ok} main_ok={rep.main_band_ok} "
          f"[{rep.consistency_flag}]")
    return 0


def cmd_report(args) -> int:
    out = _outdir(args)
    summary = harness.summarize_results(out)
    harness.write_summary(summary, os.path.join(out, "summary.json"))
    with open(os.path.join(out, "summary.csv"), "wb") as fh:
        fh.write(harness.summary_csv_bytes(summary))
    print(f"cells: {len(summary['cells'])}; attacked outside (0.4,0.6): "
          f"{summary['attacked_outside_band']}/{summary['cells_with_attack']}")
    return 0


def cmd_show(args) -> int:
    """Print one generated program per task (debug aid)."""
    config = _load_config(args)
    registry = config.registry()
    rng = RngState(config.master_seed)
    for tid in config.tasks:
        _, template = registry[tid]
        prog = generate(template, rng.derive(tid))
        print(f"# {tid}")
        print(prog.source())
        print(f"# canonical: {normalize(prog).source()}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wmlab",
                                 description="N-gram code-watermark laboratory")
    ap.add_argument("--config", metavar="PATH", help="experiment config JSON")
    ap.add_argument("--seed", type=int, metavar="U64", help="master seed override")
    ap.add_argument("--out", metavar="DIR", default="wmlab-out",
                    help="output directory (default: wmlab-out)")
    ap.add_argument("--cap", type=int, metavar="N", help="state enumeration cap")
    ap.add_argument("--epsilon", type=float, metavar="F",
                    help="mixing TV tolerance")
    ap.add_argument("--epsilon-pos", dest="epsilon_pos", type=float, metavar="F",
                    help="target false positive rate")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.set_defaults(fn=fn)
    return ap


COMMANDS = {
    "generate": cmd_generate,
    "attack": cmd_attack,
    "detect": cmd_detect,
    "enumerate": cmd_enumerate,
    "mixing": cmd_mixing,
    "congestion": cmd_congestion,
    "consistency": cmd_consistency,
    "impossibility": cmd_impossibility,
    "report": cmd_report,
    "show": cmd_show,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CAP_ERRORS as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except WmLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
