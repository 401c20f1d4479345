"""Command-line front end: ``tso-robust COMMAND PROGRAM [options]``.

Exit codes: 0 robust (or success), 1 non-robust (or invalid witness),
2 parse/configuration error or inconclusive result.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from .attacks import Attack, Invalid, TsoWitness, Valid, enumerate_attacks, syntactic_filter, validate_witness
from .checker import DEFAULT_BUDGET, check_robustness
from .fences import CostFunction, SynthesisInconclusive, optimal_fences
from .instrument import instrument
from .parameterized import DEFAULT_BASIS_BUDGET, check_param_robustness, counter_abstraction, instrument_parameterized
from .program import ProgramError, format_program, parse_program
from .traces import RobustWithinBound, Violating, complete_bounds, delaying_threads, oracle_check

COMMANDS = ("check", "fences", "instrument", "oracle", "param-check", "validate")


@dataclass
class RunConfig:
    command: str
    input: Path
    workers: int = 1
    state_budget: int = DEFAULT_BUDGET
    basis_budget: int = DEFAULT_BASIS_BUDGET
    max_buffer: int | None = None
    max_length: int | None = None
    cost_file: Path | None = None
    output: str = "human"  # or "json"
    timing: bool = False
    out_path: Path | None = None
    attack: int | None = None
    witness: Path | None = None

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        for name in ("state_budget", "basis_budget"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name.replace('_', ' ')} must be positive")


def default_workers() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:  # not on every platform
        return os.cpu_count() or 1


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tso-robust", description="TSO robustness checking")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, workers=True, json_out=True):
        sp.add_argument("input", type=Path, help="program file")
        if workers:
            sp.add_argument("-j", "--workers", type=int, default=None,
                            help="worker processes (default: available CPUs; "
                                 "TSO_ROBUST_WORKERS overrides)")
        if json_out:
            sp.add_argument("--json", action="store_true", help="JSON report")

    sp = sub.add_parser("check", help="decide robustness by attack instrumentation")
    common(sp)
    sp.add_argument("--budget", type=int, default=DEFAULT_BUDGET, help="SC states per attack")
    sp.add_argument("--timing", action="store_true", help="record wall-clock time per attack")

    sp = sub.add_parser("fences", help="compute a cost-optimal valid fence set")
    common(sp)
    sp.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    sp.add_argument("--costs", type=Path, help="cost file: lines 'thread.label = rational'")
    sp.add_argument("-o", "--output", type=Path, help="write the fenced program here")

    sp = sub.add_parser("instrument", help="print the instrumented program of an attack")
    common(sp, workers=False, json_out=False)
    sp.add_argument("--attack", type=int, help="attack number (default: every kept attack)")
    sp.add_argument("--dump", type=Path, help="write one file per attack into this directory")

    sp = sub.add_parser("oracle", help="bounded brute-force robustness check")
    common(sp, workers=False)
    sp.add_argument("--max-buffer", type=int, help="store buffer bound (default: store count)")
    sp.add_argument("--max-length", type=int, help="computation length bound "
                                                    "(default: complete for loop-free programs)")

    sp = sub.add_parser("param-check", help="robustness for any number of thread copies")
    common(sp)
    sp.add_argument("--budget", type=int, default=DEFAULT_BASIS_BUDGET,
                    help="coverability basis budget per attack")
    sp.add_argument("--dump-net", type=Path, help="write the Petri net of each attack here")

    sp = sub.add_parser("validate", help="validate TSO witnesses from a JSON report")
    common(sp, workers=False, json_out=False)
    sp.add_argument("witness", type=Path, help="report or attack entry with a witness")
    return ap


def config_from_args(argv: list[str] | None = None) -> RunConfig:
    ns = _parser().parse_args(argv)
    workers = getattr(ns, "workers", None) or default_workers()
    env = os.environ.get("TSO_ROBUST_WORKERS")
    if env:
        try:
            workers = int(env)
        except ValueError:
            raise ValueError(f"TSO_ROBUST_WORKERS={env!r} is not an integer") from None
    cmd = ns.command
    return RunConfig(
        command=cmd,
        input=ns.input,
        workers=workers,
        state_budget=ns.budget if cmd in ("check", "fences") else DEFAULT_BUDGET,
        basis_budget=ns.budget if cmd == "param-check" else DEFAULT_BASIS_BUDGET,
        max_buffer=getattr(ns, "max_buffer", None),
        max_length=getattr(ns, "max_length", None),
        cost_file=getattr(ns, "costs", None),
        output="json" if getattr(ns, "json", False) else "human",
        timing=getattr(ns, "timing", False),
        out_path=getattr(ns, "output", None) or getattr(ns, "dump", None)
        or getattr(ns, "dump_net", None),
        attack=getattr(ns, "attack", None),
        witness=getattr(ns, "witness", None),
    )


def _read(path: Path) -> str:
    return path.read_text(encoding="utf-8")


def _table(p, results, extra) -> list[str]:
    rows = []
    for k, r in enumerate(results):
        note = f"  ({r.reason})" if r.reason else ""
        rows.append(f"  [{k}] {r.attack.describe(p):<32} {r.status:<12} {extra(r)}{note}")
    return rows


def run(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    p = parse_program(_read(cfg.input))
    emit = lambda s="": print(s, file=out)  # noqa: E731

    if cfg.command == "check":
        rep = check_robustness(p, cfg.workers, cfg.state_budget, cfg.timing)
        if cfg.output == "json":
            out.write(rep.dumps(p))
        else:
            emit(f"program {p.name}: {rep.verdict}")
            for line in _table(p, rep.results, lambda r: f"states={r.states}"):
                emit(line)
            emit("  " + " ".join(f"{k}={v}" for k, v in rep.totals.items()))
            for r in rep.feasible():
                emit(f"  witness for {r.attack.describe(p)}: {r.witness.computation}")
        return rep.exit_code

    if cfg.command == "fences":
        costs = CostFunction.parse(_read(cfg.cost_file)) if cfg.cost_file else CostFunction()
        try:
            res = optimal_fences(p, costs, cfg.workers, cfg.state_budget)
        except SynthesisInconclusive as e:
            print(f"inconclusive: {e}", file=sys.stderr)
            return 2
        text = format_program(res.program)
        if cfg.out_path:
            cfg.out_path.write_text(text, encoding="utf-8")
        if cfg.output == "json":
            d = res.to_json(p)
            d["fenced_program"] = text
            out.write(json.dumps(d, indent=2, ensure_ascii=False) + "\n")
        else:
            emit(f"fences {res.fences} cost {res.cost}")
            emit()
            out.write(text)
        return 0

    if cfg.command == "instrument":
        attacks = enumerate_attacks(p)
        chosen = range(len(attacks)) if cfg.attack is None else [cfg.attack]
        if cfg.attack is not None and not 0 <= cfg.attack < len(attacks):
            raise ValueError(f"attack {cfg.attack} out of range (0..{len(attacks) - 1})")
        if cfg.out_path:
            cfg.out_path.mkdir(parents=True, exist_ok=True)
        for k in chosen:
            a = attacks[k]
            if cfg.attack is None and syntactic_filter(p, a).__class__.__name__ == "Drop":
                continue
            text = format_program(instrument(p, a).program)
            if cfg.out_path:
                (cfg.out_path / f"{p.name}_A{k}.prog").write_text(text, encoding="utf-8")
            else:
                emit(f"# attack [{k}] {a.describe(p)}")
                out.write(text)
        return 0

    if cfg.command == "oracle":
        mb, ml = complete_bounds(p)
        mb = cfg.max_buffer or mb
        ml = cfg.max_length or ml
        res = oracle_check(p, mb, ml)
        if cfg.output == "json":
            d = {"program": p.name, "max_buffer": mb, "max_length": ml}
            if isinstance(res, Violating):
                d.update(verdict="NonRobust", delays=res.delays,
                         delaying_threads=sorted(delaying_threads(res.computation)),
                         computation=res.computation.to_json()["actions"])
            else:
                d.update(verdict="RobustWithinBound", computations=res.computations)
            out.write(json.dumps(d, indent=2, ensure_ascii=False) + "\n")
        elif isinstance(res, Violating):
            emit(f"program {p.name}: NonRobust (buffer <= {mb}, length <= {ml})")
            emit(f"  {res.computation}")
            emit(f"  delays={res.delays}")
        else:
            emit(f"program {p.name}: RobustWithinBound (buffer <= {mb}, length <= {ml}, "
                 f"{res.computations} computations)")
        return 1 if isinstance(res, Violating) else 0

    if cfg.command == "param-check":
        rep = check_param_robustness(p, cfg.workers, cfg.basis_budget)
        if cfg.out_path:
            cfg.out_path.mkdir(parents=True, exist_ok=True)
            for k, r in enumerate(rep.results):
                if r.status != "dropped":
                    net = counter_abstraction(instrument_parameterized(p, r.attack)).net
                    (cfg.out_path / f"{p.name}_A{k}.net").write_text(net.dump(), encoding="utf-8")
        if cfg.output == "json":
            out.write(json.dumps(rep.to_json(p), indent=2, ensure_ascii=False) + "\n")
        else:
            emit(f"program {p.name} (parameterized): {rep.verdict}")
            for line in _table(p, rep.results, lambda r: f"basis={r.basis}"):
                emit(line)
            emit("  " + " ".join(f"{k}={v}" for k, v in rep.totals.items()))
        return rep.exit_code

    if cfg.command == "validate":
        data = json.loads(_read(cfg.witness))
        entries = data["attacks"] if "attacks" in data else [data]
        entries = [e for e in entries if "witness" in e]
        if not entries:
            raise ValueError("no witness found in the input")
        bad = 0
        for e in entries:
            a = Attack(e["attacker"], e["st_index"], e["ld_index"])
            try:
                v = validate_witness(p, a, TsoWitness.from_json(e["witness"]))
            except IndexError as err:
                v = Invalid("shape", str(err))
            status = "valid" if isinstance(v, Valid) else f"invalid ({v.condition}: {v.detail})"
            bad += not isinstance(v, Valid)
            emit(f"{a.describe(p)}: {status}")
        return 1 if bad else 0

    raise ValueError(f"unknown command {cfg.command}")


def main(argv: list[str] | None = None) -> int:
    try:
        cfg = config_from_args(argv)
        return run(cfg)
    except (ProgramError, ValueError, KeyError, OSError) as e:
        print(f"tso-robust: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
