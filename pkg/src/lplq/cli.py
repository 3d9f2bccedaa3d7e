"""Command-line front end.

Exit codes: 0 success, 2 unparsable input, 3 invariant violation,
4 precondition failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .blpq import BKpqSpec, Embedding
from .config import (
    InvariantError,
    PreconditionError,
    Tolerances,
    base_tolerances,
    set_tolerances,
)
from .counterexample import (
    build_counterexample,
    certificate_json,
    certify_isometry,
    certify_non_equimeasurable,
    obstruction_report,
)
from .equimeasure import compare, moment_match_report, pushforward
from .sampling import random_embedding
from .stepfn import NormParams, StepFunction2D, mixed_norm, n_map
from .transport import auh_pipeline

EXIT_OK, EXIT_PARSE, EXIT_INVARIANT, EXIT_PRECONDITION = 0, 2, 3, 4


class InputError(ValueError):
    """Malformed input file."""


@dataclass
class RunConfig:
    command: str
    p: float = 2.0
    q: float = 1.0
    blocks: tuple = (1, 2)
    epsilon: float = 1e-3
    seed: int = 0
    trials: int = 1
    resolution: int = 1024
    identical: bool = False
    jobs: int = 1
    tolerance_scale: float | None = None
    files: list = field(default_factory=list)
    out: str | None = None

    @property
    def params(self) -> NormParams:
        return NormParams(self.p, self.q)


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _read_json(path: str):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _load_function(path: str) -> StepFunction2D:
    d = _read_json(path)
    try:
        return StepFunction2D.from_json(d)
    except (KeyError, TypeError) as exc:
        raise InputError(f"{path} is not a step function: {exc}") from exc


def _load_family(path: str) -> list[StepFunction2D]:
    d = _read_json(path)
    try:
        if isinstance(d, dict) and "base" in d:
            return [StepFunction2D.from_json(d)]
        return list(Embedding.from_json(d).images)
    except (KeyError, TypeError) as exc:
        raise InputError(f"{path} is not a list of step functions: {exc}") from exc


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# -- commands -----------------------------------------------------------------

def cmd_norm(cfg: RunConfig) -> int:
    f = _load_function(cfg.files[0])
    u = n_map(f, cfg.params)
    print(fmt(mixed_norm(f, cfg.params)))
    lines = ["x0,x1,N"] + [f"{fmt(a)},{fmt(b)},{fmt(v)}" for a, b, v in
                           zip(u.partition.edges[:-1], u.partition.edges[1:], u.values)]
    _emit("\n".join(lines) + "\n", cfg.out)
    return EXIT_OK


def _auh_trial(args) -> dict:
    blocks, p, q, eps, seed_seq, identical, index = args
    params = NormParams(p, q)
    spec = BKpqSpec(tuple(blocks), params)
    rng = np.random.default_rng(seed_seq)
    e1 = random_embedding(rng, spec)
    e2 = e1 if identical else random_embedding(rng, spec)
    _, rep = auh_pipeline(e1, e2, params, eps)
    return {"trial": index, "residuals": rep.residuals, "max_residual": rep.max_residual,
            "ok": rep.ok}


def run_auh_demo(cfg: RunConfig) -> dict:
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.trials)
    jobs = [(cfg.blocks, cfg.p, cfg.q, cfg.epsilon, s, cfg.identical, i)
            for i, s in enumerate(seeds)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            results = list(pool.map(_auh_trial, jobs))
    else:
        results = [_auh_trial(j) for j in jobs]
    results.sort(key=lambda d: d["trial"])
    return {"blocks": list(cfg.blocks), "p": cfg.p, "q": cfg.q, "epsilon": cfg.epsilon,
            "seed": cfg.seed, "trials": results, "all_ok": all(r["ok"] for r in results)}


def cmd_auh_demo(cfg: RunConfig) -> int:
    report = run_auh_demo(cfg)
    _emit(json.dumps(report, indent=2) + "\n", cfg.out)
    if not report["all_ok"]:
        print("a residual reached epsilon", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def run_counterexample(cfg: RunConfig) -> tuple[dict, object]:
    bundle = build_counterexample(cfg.params, cfg.resolution)
    rng = np.random.default_rng(cfg.seed)
    vs = [(0, 0), (1, 1)] + [tuple(int(x) for x in rng.integers(0, 10, 2)) for _ in range(18)]
    iso = certify_isometry(bundle, vs)
    ne = certify_non_equimeasurable(bundle)
    obs = obstruction_report(bundle)
    w = obs.witness
    report = {
        "certificate": certificate_json(bundle),
        "isometry": {
            "passed": iso.passed,
            "samples": [{"v": list(row["v"]), "exact_difference": str(row["exact_difference"]),
                         "lhs": [str(x) for x in row["lhs"]], "rhs": [str(x) for x in row["rhs"]]}
                        for row in iso.rows],
        },
        "non_equimeasurable": {
            "gap_degree": ne.gap_degree,
            "gap": str(ne.gap_raw),
            "unmatched_mass": ne.unmatched_mass,
            "rectangle_discrepancy": ne.discrepancy,
        },
        "obstruction": {
            "found": obs.found,
            "epsilon": w.eps if w else None,
            "margin": w.margin if w else None,
            "rectangle": [list(map(float, side)) for side in w.rectangle] if w else None,
            "conclusion": obs.conclusion,
        },
        "resolution": bundle.n,
    }
    return report, bundle


def cmd_counterexample(cfg: RunConfig) -> int:
    report, bundle = run_counterexample(cfg)
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "certificate.json").write_text(json.dumps(report, indent=2) + "\n")
        for i, emb in enumerate(bundle.step_atoms, start=1):
            (out / f"pair{i}.json").write_text(emb.dumps() + "\n")
    else:
        print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_equimeasure(cfg: RunConfig) -> int:
    fa, fb = (_load_family(path) for path in cfg.files[:2])
    if len(fa) != len(fb):
        raise PreconditionError("the two families have different lengths")
    m1, m2 = pushforward(fa, cfg.params), pushforward(fb, cfg.params)
    res = compare(m1, m2)
    # the moment functional acts on N^q profiles with exponent p/q
    z1, z2 = pushforward(fa, cfg.params, cfg.q), pushforward(fb, cfg.params, cfg.q)
    mom = moment_match_report(z1, z2, cfg.p / cfg.q)
    print(json.dumps({"equimeasurable": res.equal, "unmatched_mass": res.unmatched_mass,
                      "first_mismatch_degree": mom.first_mismatch_degree,
                      "functional_mismatch": mom.functional_mismatch}))
    if cfg.out:
        Path(cfg.out).write_text(mom.to_csv())
    return EXIT_OK


COMMANDS = {"norm": cmd_norm, "auh-demo": cmd_auh_demo, "counterexample": cmd_counterexample,
            "equimeasure": cmd_equimeasure}


def _blocks(text: str) -> tuple:
    try:
        blocks = tuple(int(x) for x in text.replace(" ", "").split(",") if x)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad block list {text!r}") from exc
    if not blocks or min(blocks) < 1:
        raise argparse.ArgumentTypeError("blocks must be positive integers")
    return blocks


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lplq", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--p", type=float, default=2.0)
    common.add_argument("--q", type=float, default=1.0)
    common.add_argument("--out", default=None)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--tolerance-scale", type=float, default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("norm", parents=[common], help="mixed norm and N-profile of a function")
    s.add_argument("file")

    s = sub.add_parser("auh-demo", parents=[common], help="run the homogeneity pipeline")
    s.add_argument("--blocks", type=_blocks, default=(1, 2))
    s.add_argument("--epsilon", type=float, default=1e-3)
    s.add_argument("--trials", type=int, default=1)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--identical", action="store_true", help="use the same embedding twice")

    s = sub.add_parser("counterexample", parents=[common], help="certified counterexample")
    s.add_argument("--resolution", type=int, default=1024)

    s = sub.add_parser("equimeasure", parents=[common], help="compare two families")
    s.add_argument("file_a")
    s.add_argument("file_b")
    return parser


def parse_config(argv=None) -> RunConfig:
    ns = build_parser().parse_args(argv)
    files = [getattr(ns, k) for k in ("file", "file_a", "file_b") if hasattr(ns, k)]
    return RunConfig(
        command=ns.command, p=ns.p, q=ns.q, blocks=getattr(ns, "blocks", (1, 2)),
        epsilon=getattr(ns, "epsilon", 1e-3), seed=ns.seed, trials=getattr(ns, "trials", 1),
        resolution=getattr(ns, "resolution", 1024), identical=getattr(ns, "identical", False),
        jobs=getattr(ns, "jobs", 1), tolerance_scale=ns.tolerance_scale, files=files, out=ns.out,
    )


def main(argv=None) -> int:
    cfg = parse_config(argv)  # argparse exits with status 2 on bad flags
    previous = base_tolerances()
    if cfg.tolerance_scale is not None:
        set_tolerances(Tolerances().scaled(cfg.tolerance_scale))
    try:
        cfg.params  # validate p, q before dispatch
        return COMMANDS[cfg.command](cfg)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except PreconditionError as exc:
        print(f"precondition failed: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except InvariantError as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    finally:
        set_tolerances(previous)


if __name__ == "__main__":
    sys.exit(main())
