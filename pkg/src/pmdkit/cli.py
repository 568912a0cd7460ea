"""Command-line interface: ``pmdkit <command> ...``.

Exit codes: 0 success, 1 negative domain verdict (invalid device, not
simple, no witness, conversion not established), 2 usage or input error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import convert, games, generators, jointmeas, robustness, sdp, serialization
from .devices import DeviceError, validate_pmd
from .operators import matrix_to_json

EXIT_OK, EXIT_NEGATIVE, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3
SEED_ENV = "PMDKIT_SEED"


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    inputs: list[str] = field(default_factory=list)
    gap_tol: float = sdp.GAP_TOL
    feas_tol: float = sdp.FEAS_TOL
    seed: int | None = None
    output: str | None = None
    format: str = "table"

    def check(self) -> None:
        for path in self.inputs:
            if not Path(path).is_file():
                raise UsageError(f"input file not found: {path}")
        if not (self.gap_tol > 0 and self.feas_tol > 0):
            raise UsageError("tolerances must be positive")

    @property
    def solver_options(self) -> sdp.SolverOptions:
        return sdp.SolverOptions(gap_tol=self.gap_tol, feas_tol=self.feas_tol)


def _num(v):
    """Round to 12 significant digits for printing."""
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (float, np.floating)):
        return float(f"{float(v):.12g}")
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, dict):
        return {k: _num(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_num(x) for x in v]
    return v


def _emit(cfg: RunConfig, record: dict, out=None) -> None:
    out = out or sys.stdout
    record = _num(record)
    if cfg.format == "json":
        out.write(json.dumps(record, sort_keys=False) + "\n")
        return
    flat = {k: v for k, v in record.items() if not isinstance(v, (dict, list))}
    width = max((len(k) for k in flat), default=0)
    for k, v in flat.items():
        text = f"{v:.12g}" if isinstance(v, float) else str(v)
        out.write(f"{k.ljust(width)}  {text}\n")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=["json", "table"], default="table")
    common.add_argument("--seed", type=int, default=None, help=f"random seed (default: ${SEED_ENV})")
    common.add_argument("--gap-tol", type=float, default=sdp.GAP_TOL)
    common.add_argument("--feas-tol", type=float, default=sdp.FEAS_TOL)

    p = argparse.ArgumentParser(prog="pmdkit", description="Programmable measurement devices: compatibility, robustness, games, conversion.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", parents=[common], help="check a PMD file")
    s.add_argument("pmd")
    s = sub.add_parser("compat", parents=[common], help="decide whether a PMD is simple")
    s.add_argument("pmd")
    s.add_argument("-o", "--output", help="write the decomposition or witness (JSON)")
    s = sub.add_parser("robustness", parents=[common], help="generalized robustness (primal and dual)")
    s.add_argument("pmd")
    s.add_argument("--tol", type=float, default=None, help="sets both solver tolerances")
    s = sub.add_parser("witness", parents=[common], help="write the robustness witness game")
    s.add_argument("pmd")
    s.add_argument("-o", "--output", required=True)
    s = sub.add_parser("pguess", parents=[common], help="evaluate a guessing game")
    s.add_argument("pmd")
    s.add_argument("game")
    mode = s.add_mutually_exclusive_group()
    mode.add_argument("--simple", action="store_true", help="best value over all simple PMDs")
    mode.add_argument("--seesaw", action="store_true", help="lower bound with quantum pre-processing")
    s.add_argument("--restarts", type=int, default=3)
    s.add_argument("--outcomes", type=int, default=None, help="instrument outcomes for --seesaw")
    s = sub.add_parser("convert", parents=[common], help="decide convertibility src -> dst")
    s.add_argument("src")
    s.add_argument("dst")
    s.add_argument("--refute", action="store_true", help="search witness games (allows quantum pre-processing)")
    s.add_argument("--restarts", type=int, default=10)
    s.add_argument("-o", "--output", help="write the certificate (JSON)")
    s = sub.add_parser("verify-thm2", parents=[common], help="check ratio of witness game payoffs equals 1 + robustness")
    s.add_argument("pmd")
    s = sub.add_parser("demo", parents=[common], help="emit standard devices")
    s.add_argument("which", choices=["noisy-mub"])
    s.add_argument("--eta", type=float, required=True)
    s.add_argument("--dim", type=int, default=2)
    s.add_argument("-o", "--output")
    return p


def _config(args) -> RunConfig:
    inputs = [getattr(args, k) for k in ("pmd", "game", "src", "dst") if getattr(args, k, None)]
    gap, feas = args.gap_tol, args.feas_tol
    if getattr(args, "tol", None) is not None:
        gap = feas = args.tol
    seed = args.seed
    if seed is None and os.environ.get(SEED_ENV):
        try:
            seed = int(os.environ[SEED_ENV])
        except ValueError as exc:
            raise UsageError(f"{SEED_ENV} must be an integer") from exc
    cfg = RunConfig(args.command, inputs, gap, feas, seed, getattr(args, "output", None), args.format)
    cfg.check()
    return cfg


def _load_pmd(path):
    return serialization.load(path, "pmd")


def _cmd_validate(args, cfg):
    pmd = _load_pmd(args.pmd)
    rep = validate_pmd(pmd)
    record = {"valid": rep.ok, "violations": [{"what": w, "magnitude": m} for w, m in rep.violations]}
    _emit(cfg, record)
    if cfg.format == "table":
        for w, m in rep.violations:
            sys.stdout.write(f"  {w}: {m:.12g}\n")
    return EXIT_OK if rep.ok else EXIT_NEGATIVE


def _cmd_compat(args, cfg):
    res = jointmeas.check_simple(_load_pmd(args.pmd), opts=cfg.solver_options)
    record = {"verdict": "simple" if res.is_simple else "not simple", "slack": res.slack}
    if res.witness is not None:
        record["witness_margin"] = res.witness.margin
    _emit(cfg, record)
    if cfg.output:
        if res.is_simple:
            dec = res.decomposition
            doc = {"mother": [matrix_to_json(g) for g in dec.mother.effects],
                   "mother_labels": list(dec.mother.outcomes), "post": dec.post.tolist()}
        else:
            doc = {"functional": [[matrix_to_json(w) for w in row] for row in res.witness.functional],
                   "margin": res.witness.margin}
        Path(cfg.output).write_text(json.dumps(doc) + "\n", encoding="utf-8")
    return EXIT_OK if res.is_simple else EXIT_NEGATIVE


def _cmd_robustness(args, cfg):
    pmd = _load_pmd(args.pmd)
    res = robustness.primal(pmd, cfg.solver_options)
    dual_value, _ = robustness.dual(pmd, cfg.solver_options)
    _emit(cfg, {"robustness": res.value, "dual_value": dual_value, "primal_dual_difference": abs(res.value - dual_value),
                "gap": res.gap})
    return EXIT_OK


def _cmd_witness(args, cfg):
    pmd = _load_pmd(args.pmd)
    if jointmeas.check_simple(pmd, opts=cfg.solver_options).is_simple:
        _emit(cfg, {"verdict": "simple", "witness": "none (no game gives an advantage)"})
        return EXIT_NEGATIVE
    value, witness = robustness.dual(pmd, cfg.solver_options)
    game = robustness.witness_to_game(witness)
    serialization.save(game, cfg.output, "ensemble")
    payoff = float(np.einsum("xaij,xaji->", game.states, pmd.effects).real)
    bench = games.pguess_simple(game, opts=cfg.solver_options).value
    _emit(cfg, {"robustness": value, "payoff": payoff, "simple_benchmark": bench, "margin": payoff - bench,
                "output": cfg.output})
    return EXIT_OK


def _cmd_pguess(args, cfg):
    pmd = _load_pmd(args.pmd)
    game = serialization.load(args.game, "ensemble")
    if args.simple:
        res = games.pguess_simple(game, opts=cfg.solver_options)
        mode = "simple"
    elif args.seesaw:
        res = games.pguess_seesaw(pmd, game, instrument_outcomes=args.outcomes, restarts=args.restarts, seed=cfg.seed,
                                  opts=cfg.solver_options)
        mode = "seesaw"
    else:
        res = games.pguess_classical(pmd, game)
        mode = "classical"
    record = {"mode": mode}
    record.update(res.to_json())
    _emit(cfg, record)
    return EXIT_OK


def _cmd_convert(args, cfg):
    src, dst = _load_pmd(args.src), _load_pmd(args.dst)
    if args.refute:
        cert = convert.refute_by_game_search(src, dst, restarts=args.restarts, seed=cfg.seed)
    else:
        cert = convert.convertibility_lp(src, dst)
    doc = serialization.certificate_to_json(cert)
    if cfg.output:
        Path(cfg.output).write_text(json.dumps(doc) + "\n", encoding="utf-8")
    record = {"verdict": cert.verdict}
    record.update(serialization._plain(cert.margins))
    if cfg.format == "json":
        record["certificate"] = doc
    _emit(cfg, record)
    return EXIT_OK if cert.verdict == convert.CONVERTIBLE else EXIT_NEGATIVE


def _cmd_verify(args, cfg):
    rep = robustness.verify_theorem2(_load_pmd(args.pmd), opts=cfg.solver_options)
    record = rep.to_json()
    _emit(cfg, record)
    return EXIT_OK if rep.passed else EXIT_NUMERICAL


def _cmd_demo(args, cfg):
    if not 0.0 <= args.eta <= 1.0:
        raise UsageError("--eta must lie in [0, 1]")
    if args.dim < 2:
        raise UsageError("--dim must be at least 2")
    text = serialization.dumps(generators.noisy_mub(args.eta, args.dim), "pmd") + "\n"
    if cfg.output:
        Path(cfg.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


_COMMANDS = {
    "validate": _cmd_validate,
    "compat": _cmd_compat,
    "robustness": _cmd_robustness,
    "witness": _cmd_witness,
    "pguess": _cmd_pguess,
    "convert": _cmd_convert,
    "verify-thm2": _cmd_verify,
    "demo": _cmd_demo,
}


def run(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        cfg = _config(args)
        return _COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"pmdkit: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except sdp.SdpFailure as exc:
        print(f"pmdkit: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (serialization.FormatError, DeviceError, OSError) as exc:
        print(f"pmdkit: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
