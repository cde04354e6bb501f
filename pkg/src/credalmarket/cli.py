"""Command-line entry point.

Commands
--------
* ``license optimal``  - optimal licenses (both risk attitudes) for a provider
  type against a credal set; prints values and obedience verdicts, writes a
  license JSON.
* ``market simulate``  - run a provider population through a mechanism and
  write the market report CSV plus a JSON summary.
* ``betting run``      - one adaptive betting trajectory as CSV.
* ``experiment <scenario>`` - run a scenario and write its CSV table.

Exit codes: 0 success, 1 optimizer non-convergence (best-found still
written), 2 config or input errors.  stdout carries summary lines only;
diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .betting import BettingScore, KellyConfig, write_trajectory_csv
from .credal import CredalSet
from .evidence import Categorical, EvidenceSpace, SampleStream
from .experiments import SCENARIOS, load_config, run_scenario
from .licenses import (
    MechanismParams,
    is_obedient,
    neyman_pearson_license,
    optimal_risk_averse_license,
    participation_decision,
    sup_value_over_obedient,
)
from .market import Provider, Requirement, simulate_market

EXIT_OK = 0
EXIT_NONCONVERGED = 1
EXIT_CONFIG = 2


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_CONFIG


def _load_json(path: str, what: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ValueError(f"{what} file not found: {path}")
    except json.JSONDecodeError as err:
        raise ValueError(f"{what} file {path} is not valid JSON: {err}")


def _require(payload: dict, field: str, what: str):
    if field not in payload:
        raise ValueError(f"{what} is missing field {field!r}")
    return payload[field]


def _check_out(path: str, force: bool) -> None:
    target = Path(path)
    if target.exists() and not force:
        raise ValueError(f"output {path} exists; pass --force to overwrite")
    parent = target.parent
    if not parent.is_dir():
        raise ValueError(f"output directory {parent} does not exist")


def _note(args: argparse.Namespace, message: str) -> None:
    if getattr(args, "verbose", False):
        print(message, file=sys.stderr)


def _params_from(payload: dict, what: str) -> MechanismParams:
    params = _require(payload, "params", what)
    try:
        return MechanismParams(C=float(params["C"]), R=float(params["R"]))
    except (KeyError, TypeError) as err:
        raise ValueError(f"{what} field 'params' needs numeric C and R: {err}")


def cmd_license(args: argparse.Namespace) -> int:
    try:
        credal = CredalSet.from_json(_load_json(args.credal, "credal set"))
        payload = _load_json(args.config, "license config")
        params = _params_from(payload, "license config")
        q = Categorical(credal.space, _require(payload, "provider", "license config"))
    except ValueError as err:
        return _fail(str(err))

    _note(args, f"credal set: {len(credal.vertices)} vertices over {credal.space.size} outcomes")
    neutral = sup_value_over_obedient(q, credal, params)
    averse = optimal_risk_averse_license(q, credal, params)
    for name, result in (("risk_neutral", neutral), ("risk_averse", averse)):
        obedient = is_obedient(result.license, credal, params, tol=1e-6)
        print(f"{name}_value={result.value!r}")
        print(f"{name}_obedient={str(obedient).lower()}")
    verdict = "participate (sup > C)" if participation_decision(neutral.value, params) else "excluded (sup <= C)"
    print(f"verdict={verdict}")
    if len(credal.vertices) == 1:
        np_license = neyman_pearson_license(q, credal.vertices[0], params)
        print(f"neyman_pearson_payout={np_license.payout.tolist()!r}")

    if args.out:
        try:
            _check_out(args.out, args.force)
        except ValueError as err:
            return _fail(str(err))
        blob = {
            "risk_neutral": neutral.license.to_json(params),
            "risk_averse": averse.license.to_json(params),
            "values": {"risk_neutral": neutral.value, "risk_averse": averse.value},
        }
        Path(args.out).write_text(json.dumps(blob, indent=2) + "\n")
        print(f"wrote={args.out}")
    if not averse.converged:
        print("warning: risk-averse optimizer hit its iteration cap", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_market(args: argparse.Namespace) -> int:
    try:
        credal = CredalSet.from_json(_load_json(args.credal, "credal set"))
        payload = _load_json(args.config, "market config")
        params = _params_from(payload, "market config")
        providers = [
            Provider(
                id=str(_require(row, "id", "provider entry")),
                q=Categorical(credal.space, _require(row, "q", "provider entry")),
                attitude=row.get("attitude", "risk-neutral"),
            )
            for row in _require(payload, "providers", "market config")
        ]
        req_payload = _require(payload, "requirement", "market config")
        kind = _require(req_payload, "kind", "requirement")
        if kind == "threshold":
            req = Requirement(kind="threshold",
                              metric=np.asarray(req_payload["metric"], dtype=float),
                              tau=float(req_payload["tau"]))
        elif kind == "credal":
            req = Requirement(kind="credal", credal=credal)
        else:
            raise ValueError(f"unknown requirement kind {kind!r}")
        mechanism = payload.get("mechanism", "optimal-LP")
        seed = args.seed if args.seed is not None else int(payload.get("seed", 0))
        report = simulate_market(
            providers, req, credal, params,
            mechanism=mechanism,
            n=int(payload.get("n", 500)),
            seed=seed,
        )
    except ValueError as err:
        return _fail(str(err))

    if args.out:
        try:
            _check_out(args.out, args.force)
        except ValueError as err:
            return _fail(str(err))
        report.to_csv(args.out)
        report.save_summary(Path(args.out).with_suffix(".summary.json"))
        print(f"wrote={args.out}")
    print(f"perfect={str(report.perfect).lower()}")
    for name, count in report.counts().items():
        print(f"count_{name}={count}")
    return EXIT_OK


def cmd_betting(args: argparse.Namespace) -> int:
    try:
        payload = _load_json(args.config, "betting config")
        params = _params_from(payload, "betting config")
        labels = _require(payload, "labels", "betting config")
        space = EvidenceSpace(tuple(labels))
        source = Categorical(space, _require(payload, "source", "betting config"))
        metric = np.asarray(_require(payload, "metric", "betting config"), dtype=float)
        tau = float(_require(payload, "tau", "betting config"))
        score = BettingScore.from_metric(space, metric, tau)
        n = int(payload.get("n", 500))
        seed = args.seed if args.seed is not None else int(payload.get("seed", 0))
        if not args.out:
            raise ValueError("betting run needs --out for the trajectory CSV")
        _check_out(args.out, args.force)
    except ValueError as err:
        return _fail(str(err))
    stream = SampleStream(source, seed=seed)
    write_trajectory_csv(
        args.out, score, KellyConfig(), params, stream, n,
        header_comment=f"betting seed={seed} n={n} C={params.C} R={params.R}",
    )
    print(f"wrote={args.out}")
    return EXIT_OK


def cmd_experiment(args: argparse.Namespace) -> int:
    try:
        payload = _load_json(args.config, "experiment config") if args.config else {}
        cfg = load_config(args.scenario, payload, seed=args.seed)
        out = args.out or f"{args.scenario}.csv"
        _check_out(out, args.force)
    except ValueError as err:
        return _fail(str(err))
    _note(args, f"running {cfg!r}")
    table = run_scenario(cfg)
    try:
        table.to_csv(out)
    except OSError as err:
        return _fail(f"cannot write {out}: {err}")
    print(f"wrote={out}")
    print(f"config_hash={table.config_hash}")
    for key in sorted(table.headline):
        print(f"{key}={table.headline[key]!r}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="credalmarket",
        description="Regulation-mechanism toolkit: optimal licenses, betting licenses, market simulations.",
    )
    parser.add_argument("--verbose", action="store_true", help="extra diagnostics on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    lic = sub.add_parser("license", help="license computations")
    lic_sub = lic.add_subparsers(dest="subcommand", required=True)
    lic_opt = lic_sub.add_parser("optimal", help="optimal license for a provider type")
    lic_opt.add_argument("--credal", required=True, help="credal set JSON path")
    lic_opt.add_argument("--config", required=True, help="provider/params JSON path")
    lic_opt.add_argument("--out", help="license JSON output path")
    lic_opt.add_argument("--force", action="store_true", help="overwrite existing output")
    lic_opt.set_defaults(func=cmd_license)

    mkt = sub.add_parser("market", help="market simulations")
    mkt_sub = mkt.add_subparsers(dest="subcommand", required=True)
    mkt_sim = mkt_sub.add_parser("simulate", help="simulate a provider population")
    mkt_sim.add_argument("--credal", required=True)
    mkt_sim.add_argument("--config", required=True)
    mkt_sim.add_argument("--out", help="market report CSV path")
    mkt_sim.add_argument("--seed", type=int)
    mkt_sim.add_argument("--force", action="store_true")
    mkt_sim.set_defaults(func=cmd_market)

    bet = sub.add_parser("betting", help="sequential betting licenses")
    bet_sub = bet.add_subparsers(dest="subcommand", required=True)
    bet_run = bet_sub.add_parser("run", help="run one adaptive betting trajectory")
    bet_run.add_argument("--config", required=True)
    bet_run.add_argument("--out", help="trajectory CSV path")
    bet_run.add_argument("--seed", type=int)
    bet_run.add_argument("--force", action="store_true")
    bet_run.set_defaults(func=cmd_betting)

    exp = sub.add_parser("experiment", help="scenario runners")
    exp.add_argument("scenario", help=f"one of {sorted(SCENARIOS)}")
    exp.add_argument("--config", help="scenario config JSON path")
    exp.add_argument("--out", help="CSV output path (default <scenario>.csv)")
    exp.add_argument("--seed", type=int, help="seed override")
    exp.add_argument("--force", action="store_true")
    exp.set_defaults(func=cmd_experiment)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
