"""Command-line front end.

    wcmf meanfield --config run.json [--seed S] [--out DIR]
    wcmf network   --config run.json
    wcmf figure1   --config run.json
    wcmf converge  --config run.json

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .meanfield import IntegrationError, solve
from .metrics import convergence_study
from .moments import QuadratureRule
from .network import simulate
from .sampler import ensemble_summary, sample_paths

log = logging.getLogger("wcmeanfield")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _meta(cfg: RunConfig, command: str, **extra) -> dict:
    return {
        "command": command,
        "config_hash": cfg.digest(),
        "params_hash": cfg.digest_model(),
        "seed": cfg.seed,
        "dt": cfg.dt,
        "T": cfg.T,
        "n": cfg.n,
        "config": cfg.to_dict(),
        **extra,
    }


def cmd_meanfield(cfg: RunConfig, out: Path) -> dict:
    sol = solve(cfg.model, cfg.T, cfg.dt, QuadratureRule(cfg.quadrature_order))
    sol.to_csv(out / "meanfield.csv")
    tail = max(1, len(sol.times) // 10)
    summary = _meta(
        cfg,
        "meanfield",
        final_m=sol.m[-1].tolist(),
        final_q=sol.q[-1].tolist(),
        max_step_change_last_10pct=float(
            np.max(np.abs(np.diff(np.hstack([sol.m, sol.q])[-tail - 1:], axis=0)))
        ) if len(sol.times) > 1 else 0.0,
    )
    _write_json(out / "summary.json", summary)
    return summary


def cmd_network(cfg: RunConfig, out: Path) -> dict:
    ens = simulate(cfg.model, cfg.n, cfg, store_every=cfg.store_every)
    ens.to_csv(out / "network.csv")
    meta = _meta(cfg, "network", columns=ens.header())
    _write_json(out / "meta.json", meta)
    return meta


def cmd_figure1(cfg: RunConfig, out: Path) -> dict:
    sol = solve(cfg.model, cfg.T, cfg.dt, QuadratureRule(cfg.quadrature_order))
    sol.to_csv(out / "figure1_means.csv")
    ens = sample_paths(sol, cfg.samples, cfg)
    ens.to_csv(out / "figure1_paths.csv")
    meta = _meta(cfg, "figure1", summary=ensemble_summary(ens, sol)["rows"][-1])
    _write_json(out / "meta.json", meta)
    return meta


def cmd_converge(cfg: RunConfig, out: Path) -> dict:
    block = cfg.converge
    ladder = block.get("n_ladder")
    reps = block.get("replications")
    if not ladder or reps is None:
        raise ConfigError("converge", "n_ladder and replications are required")
    if reps < 2:
        raise ConfigError("converge.replications", "must be >= 2 (standard error undefined)")
    report = convergence_study(
        cfg.model, ladder, reps, cfg,
        w1_times=block.get("w1_times", ()), refine=block.get("refine", False),
    )
    report.to_csv(out / "convergence.csv")
    data = report.to_dict()
    if len(ladder) > 1:
        data["decreasing"] = report.decreasing()
    data.update(_meta(cfg, "converge"))
    _write_json(out / "report.json", data)
    return data


COMMANDS = {
    "meanfield": cmd_meanfield,
    "network": cmd_network,
    "figure1": cmd_figure1,
    "converge": cmd_converge,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wcmf", description="Wilson-Cowan network / mean-field experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="JSON run configuration")
        p.add_argument("--seed", type=int, help="overrides the seed in the config")
        p.add_argument("--out", type=Path, help="output directory (default: config output_dir)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("seed", "must be an unsigned 64-bit integer")
            cfg = cfg.replace(seed=args.seed)
        out = args.out or Path(cfg.output_dir)
        cfg = cfg.replace(output_dir=str(out))
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except IntegrationError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    log.info("wrote %s output to %s", args.command, out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
