"""Command-line front end.

Every subcommand writes one JSON document (``<command>.json`` under
``--out``, or stdout) of the form::

    {"schema_version": "1", "command": ..., "scenario_hash": ..., "result": {...}}

Monte-Carlo quantities are objects ``{estimate, stderr, days, seed}``.
Exit codes: 0 success, 2 invalid input or no arbitrage, 3 ``verify`` found a
profitable deviation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import coalition, ingest, marketsim, sharing, standalone
from .core import NoArbitrageError, arbitrage_constant
from .demand import ExtrapolationError, SampleMatrix, sample
from .scenario import MIN_DAYS, RECOMMENDED_DAYS, SCHEMA_VERSION, Scenario, build_distribution, load_scenario

EQUILIBRIUM_COMMANDS = {"nash", "simulate", "savings", "join", "verify"}


class CliError(Exception):
    def __init__(self, message: str, code: int = 2):
        super().__init__(message)
        self.code = code


def _emit(doc: dict, out: Path | None, name: str) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{name}.json").write_text(text)


def _envelope(command: str, scenario: Scenario | None, result: dict) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "scenario_hash": None if scenario is None else scenario.digest(),
        "result": result,
    }


def _samples(scn: Scenario, base: Path, threads: int) -> SampleMatrix:
    model = scn.build_model(base)
    if scn.uses_data():
        return model.as_samples()
    return sample(model, scn.monte_carlo.days, scn.monte_carlo.seed, threads=threads)


def _check_days(scn: Scenario, command: str) -> None:
    if command not in EQUILIBRIUM_COMMANDS or scn.uses_data():
        return
    days = scn.monte_carlo.days
    if days < MIN_DAYS:
        raise CliError(f"monte_carlo.days={days} is below the minimum of {MIN_DAYS} for '{command}'")
    if days < RECOMMENDED_DAYS:
        print(
            f"warning: monte_carlo.days={days} < {RECOMMENDED_DAYS}; estimates will be noisy",
            file=sys.stderr,
        )


def _est(value, stderr, samples: SampleMatrix) -> dict:
    return {"estimate": float(value), "stderr": float(stderr), "days": samples.days, "seed": samples.seed}


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_standalone(scn: Scenario, args) -> dict:
    tariff = scn.tariff.build()
    gamma = arbitrage_constant(tariff)
    model = scn.build_model(args.base)
    firms = []
    for k in range(model.n):
        dist = model.marginal(k)
        sol = standalone.optimal_standalone(tariff, dist)
        row = {"firm": k, "gamma": gamma, "C_o": sol.c_opt, "J_o": sol.j_opt}
        if scn.efficiency is not None and not scn.efficiency.build().ideal:
            lossy = standalone.optimal_standalone_lossy(tariff, scn.efficiency.build(), dist)
            row.update(C_o_lossy=lossy.c_opt, J_o_lossy=lossy.j_opt, threshold_lossy=lossy.gamma_used)
        firms.append(row)
    result = {"firms": firms, "C_c": sum(f["C_o"] for f in firms)}

    if scn.analysis.gamma_sweep:
        agg = model.aggregate()
        agg_samples = None
        if agg is None:
            agg_samples = _samples(scn, args.base, args.threads).aggregate()
        table = []
        for g in scn.analysis.gamma_sweep:
            c_c = float(sum(model.marginal(k).quantile(g) for k in range(model.n)))
            d_o = float((agg or agg_samples).quantile(g))
            table.append({"gamma": g, "C_c": c_c, "D_o": d_o, "analytic": agg is not None})
        result["gamma_sweep"] = table
    return result


def _nash(scn: Scenario, samples: SampleMatrix, verify: bool | None = None):
    a = scn.analysis
    return sharing.nash_equilibrium(
        scn.tariff.build(),
        samples,
        bandwidth=a.bandwidth,
        check_alignment=a.alignment,
        verify=a.verify if verify is None else verify,
        grid_resolution=a.grid_resolution,
    )


def cmd_nash(scn: Scenario, args) -> dict:
    samples = _samples(scn, args.base, args.threads)
    sol = _nash(scn, samples)
    result = sol.to_dict()
    result["sum_check"] = {"gap": sol.sum_gap, "stderr": sol.sum_stderr}
    tariff = scn.tariff.build()
    price = sharing.expected_clearing_price(tariff, samples, float(sol.q))
    result["expected_clearing_price"] = price.to_dict()
    result["pi_s_plus_pi_l"] = tariff.pi_s + tariff.pi_l
    if scn.analysis.stability_partitions:
        result["stability"] = [
            coalition.stability_report(tariff, samples, coalition.Partition(tuple(map(tuple, p))), sol).to_dict()
            for p in scn.analysis.stability_partitions
        ]
    return result


def _allocation(choice: str, scn: Scenario, samples: SampleMatrix) -> sharing.Allocation:
    if choice == "nash":
        return _nash(scn, samples, verify=False).allocation
    if choice == "standalone":
        tariff = scn.tariff.build()
        return sharing.Allocation(
            [standalone.optimal_standalone(tariff, samples.marginal(k)).c_opt for k in range(samples.n)]
        )
    if choice == "zero":
        return sharing.Allocation(np.zeros(samples.n))
    data = json.loads(Path(choice).read_text())
    caps = data.get("capacities", data) if isinstance(data, dict) else data
    return sharing.Allocation(caps)


def cmd_simulate(scn: Scenario, args) -> dict:
    samples = _samples(scn, args.base, args.threads)
    alloc = _allocation(args.allocation, scn, samples)
    ledger = marketsim.simulate(scn.tariff.build(), samples, alloc)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        ledger.to_csv(args.out / "ledger.csv")
        ledger.write_summary(args.out / "summary.json")
    summary = ledger.summary()
    summary["allocation_source"] = args.allocation
    return summary


def cmd_savings(scn: Scenario, args) -> dict:
    samples = _samples(scn, args.base, args.threads)
    rep = marketsim.savings_report(scn.tariff.build(), samples, _nash(scn, samples, verify=False))
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        rows = rep.to_rows()
        with open(args.out / "savings.csv", "w") as fh:
            cols = list(rows[0])
            fh.write(",".join(cols) + "\n")
            for r in rows:
                fh.write(",".join(repr(r[c]) for c in cols) + "\n")
    out = rep.to_dict()
    out["days"] = samples.days
    out["seed"] = samples.seed
    return out


def cmd_join(scn: Scenario, args) -> dict:
    entrant_cfg = scn.analysis.join_entrant
    if args.entrant:
        from pydantic import TypeAdapter

        from .scenario import DistributionConfig

        entrant_cfg = TypeAdapter(DistributionConfig).validate_python(json.loads(args.entrant))
    if entrant_cfg is None:
        raise CliError("join needs analysis.join_entrant in the scenario or --entrant '<json>'")
    samples = _samples(scn, args.base, args.threads)
    outcome = coalition.join(
        scn.tariff.build(),
        samples,
        build_distribution(entrant_cfg),
        bandwidth=scn.analysis.bandwidth,
    )
    return outcome.to_dict()


def cmd_verify(scn: Scenario, args) -> dict:
    samples = _samples(scn, args.base, args.threads)
    tariff = scn.tariff.build()
    alloc = _allocation(args.allocation, scn, samples)
    checks = [
        sharing.verify_global_min(tariff, samples, k, alloc, scn.analysis.grid_resolution)
        for k in range(samples.n)
    ]
    result = {
        "allocation": alloc.capacities.tolist(),
        "passed": all(c.passed for c in checks),
        "firms": [c.to_dict() for c in checks],
        "days": samples.days,
        "seed": samples.seed,
    }
    args.exit_code = 0 if result["passed"] else 3
    return result


def cmd_ingest(args) -> dict:
    schema = ingest.CsvSchema(args.timestamp_col, args.firm_col, args.power_col, args.unit, args.unit_col)
    window = ingest.PeakWindow.parse(args.window, args.weekdays_only)
    daily, series_info = [], []
    for p in args.data:
        for s in ingest.load_csv(p, schema):
            de = ingest.daily_peak_energy(s, window)
            daily.append(de)
            series_info.append(
                {
                    "firm_id": s.firm_id,
                    "file": str(p),
                    "points": len(s),
                    "interval_minutes": s.interval_minutes,
                    "gaps": [[str(a), str(b)] for a, b in s.gaps],
                    "days_used": len(de.dates),
                    "days_dropped": [[str(d), why] for d, why in de.dropped],
                    "offpeak_kwh_total": float(de.offpeak.sum()),
                }
            )
    cohort = ingest.build_model(daily, min_days=args.min_days)
    files = cohort.write(args.out) if args.out is not None else {}
    return {
        "firms": series_info,
        "common_days": len(cohort.dates),
        "mean_pairwise_correlation": cohort.mean_pairwise_correlation(),
        "window": args.window,
        "weekdays_only": args.weekdays_only,
        "files": files,
    }


COMMANDS = {
    "standalone": cmd_standalone,
    "nash": cmd_nash,
    "simulate": cmd_simulate,
    "savings": cmd_savings,
    "join": cmd_join,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="storage-sharing", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=True):
        if scenario:
            sp.add_argument("--scenario", required=True, type=Path, help="YAML/JSON scenario file")
            sp.add_argument("--seed", type=int, help="override monte_carlo.seed")
            sp.add_argument("--days", type=int, help="override monte_carlo.days")
        sp.add_argument("--out", type=Path, help="output directory (default: JSON to stdout)")
        sp.add_argument("--threads", type=int, default=1, help="worker cap; never changes results")

    for name, helptext in [
        ("standalone", "optimal storage of each firm without sharing"),
        ("nash", "equilibrium of the storage investment game"),
        ("savings", "per-firm savings with and without sharing"),
        ("join", "effect of a new firm joining the coalition"),
    ]:
        common(sub.add_parser(name, help=helptext))
    for name, helptext in [
        ("simulate", "day-by-day spot market ledger"),
        ("verify", "grid-search every firm's best response"),
    ]:
        sp = sub.add_parser(name, help=helptext)
        common(sp)
        sp.add_argument(
            "--allocation",
            default="nash",
            help="nash | standalone | zero | path to JSON list of capacities",
        )
    sub.choices["join"].add_argument("--entrant", help="entrant distribution as JSON, e.g. '{\"kind\": \"uniform\"}'")

    ing = sub.add_parser("ingest", help="meter CSVs to a paired-empirical demand model")
    common(ing, scenario=False)
    ing.add_argument("--data", nargs="+", required=True, type=Path)
    ing.add_argument("--window", default="12:00-18:00")
    ing.add_argument("--weekdays-only", action="store_true")
    ing.add_argument("--timestamp-col", default="timestamp")
    ing.add_argument("--firm-col", default="firm_id")
    ing.add_argument("--power-col", default="kw")
    ing.add_argument("--unit", default="kW", choices=["kW", "W"])
    ing.add_argument("--unit-col", default=None)
    ing.add_argument("--min-days", type=int, default=ingest.MIN_COMMON_DAYS)
    return p


def _format_validation(err: ValidationError) -> str:
    lines = ["invalid scenario:"]
    for e in err.errors():
        path = ".".join(str(x) for x in e["loc"]) or "<root>"
        lines.append(f"  {path}: {e['msg']}")
    return "\n".join(lines)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.exit_code = 0
    try:
        if args.command == "ingest":
            _emit(_envelope("ingest", None, cmd_ingest(args)), args.out, "ingest")
            return 0
        scn = load_scenario(args.scenario, seed=args.seed, days=args.days)
        args.base = args.scenario.parent
        _check_days(scn, args.command)
        result = COMMANDS[args.command](scn, args)
        _emit(_envelope(args.command, scn, result), args.out, args.command)
        return args.exit_code
    except ValidationError as e:
        print(_format_validation(e), file=sys.stderr)
        return 2
    except NoArbitrageError as e:
        print(f"no arbitrage: {e}", file=sys.stderr)
        return 2
    except (CliError,) as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except (ExtrapolationError, ingest.IngestError, ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
