"""Batch command line: check | construct | simulate | estimate | verify.

Stages communicate through files in the output directory, so an expensive
simulation is reusable across many estimation sweeps.  Every artifact embeds
the canonical config hash and the seed manifest; estimate and verify refuse
samples whose hash does not match the effective config (stale-input
protection).  No artifact contains timestamps or machine identifiers: given
the same config and seed, a re-run reproduces every output byte for byte.

Exit codes: 0 success, 1 usage/config error, 2 verification or certification
failure, 3 censored-dominated estimate.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import diagnostics, estimate as est
from .config import ConfigError, ExperimentConfig, jsonify, load_config
from .construct import ConstructionError, build_chain
from .growth import GrowthFunction, certify, make_growth
from .tails import ShiftedTail, TailError, TailSpec, make_builtin_dist, tail_table
from .walk import SampleBatch, WalkError, replay_path, simulate_batch

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_VERIFY = 2
EXIT_CENSORED = 3

_SAMPLES_FILE = "samples.csv"
_MANIFEST_FILE = "manifest.json"


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(jsonify(obj), sort_keys=True, indent=2) + "\n")


def _write_samples_csv(path: Path, batch: SampleBatch) -> list[str]:
    columns = ["stream_id", "tau", "s_tau", "m_tau", "censored"]
    with_psi = batch.shift != 0.0
    if with_psi:
        columns.append("psi_max")
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for i in range(batch.n):
            row = [
                int(batch.stream_ids[i]),
                int(batch.tau[i]),
                repr(float(batch.s_tau[i])),
                repr(float(batch.m_tau[i])),
                int(batch.censored[i]),
            ]
            if with_psi:
                row.append(repr(float(batch.psi_max[i])))
            writer.writerow(row)
    return columns


def _read_samples(out_dir: Path) -> tuple[SampleBatch, dict]:
    manifest = json.loads((out_dir / _MANIFEST_FILE).read_text())
    rows = []
    with (out_dir / _SAMPLES_FILE).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        for row in reader:
            rows.append(row)
    if header[:5] != ["stream_id", "tau", "s_tau", "m_tau", "censored"]:
        raise ValueError("unexpected samples.csv header")
    n = len(rows)
    stream_ids = np.empty(n, dtype=np.int64)
    tau = np.empty(n, dtype=np.int64)
    s_tau = np.empty(n)
    m_tau = np.empty(n)
    censored = np.empty(n, dtype=bool)
    has_psi = len(header) > 5
    psi = np.empty(n)
    for i, row in enumerate(rows):
        stream_ids[i] = int(row[0])
        tau[i] = int(row[1])
        s_tau[i] = float(row[2])
        m_tau[i] = float(row[3])
        censored[i] = bool(int(row[4]))
        psi[i] = float(row[5]) if has_psi else m_tau[i]
    return (
        SampleBatch(
            seed=int(manifest["seed"]),
            step_cap=int(manifest["step_cap"]),
            shift=float(manifest["shift"]),
            stream_ids=stream_ids,
            tau=tau,
            s_tau=s_tau,
            m_tau=m_tau,
            psi_max=psi,
            censored=censored,
        ),
        manifest,
    )


def _thread_budget(cfg: ExperimentConfig) -> int:
    env = os.environ.get("LADDERLAB_THREADS", "")
    cap = int(env) if env.strip() else cfg.streams
    return max(1, min(cfg.streams, cap))


def _simulate_config(cfg: ExperimentConfig, spec: TailSpec) -> SampleBatch:
    """Simulate across `streams` contiguous stream slices; values never depend
    on the split because every draw is keyed by (seed, stream, step)."""
    edges = np.linspace(0, cfg.n_samples, cfg.streams + 1, dtype=np.int64)
    slices = [np.arange(a, b, dtype=np.int64) for a, b in zip(edges[:-1], edges[1:]) if b > a]

    def run(ids):
        return simulate_batch(
            spec, cfg.seed, stream_ids=ids, step_cap=cfg.step_cap, shift=cfg.shift
        )

    workers = _thread_budget(cfg)
    if workers > 1 and len(slices) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, slices))
    else:
        parts = [run(ids) for ids in slices]
    return SampleBatch.concat(parts) if len(parts) > 1 else parts[0]


def _require(cfg_field, name: str):
    if cfg_field is None:
        raise ConfigError(f"this command needs the '{name}' config section")
    return cfg_field


def _growth_from(cfg: ExperimentConfig) -> GrowthFunction:
    return make_growth(_require(cfg.growth, "growth"))


def _increments_from(cfg: ExperimentConfig) -> TailSpec:
    spec = make_builtin_dist(_require(cfg.increments, "increments"))
    if not spec.mean < 0:
        raise ConfigError(
            f"increments must have strictly negative mean for walk use, got {spec.mean}"
        )
    return spec


def _effective_delta(cfg: ExperimentConfig, a: float) -> float:
    delta = cfg.delta if cfg.delta is not None else a / 2.0
    if not 0 < delta < a:
        raise ConfigError(f"delta must lie in (0, {a}), got {delta}")
    return delta


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_check(cfg: ExperimentConfig, out_dir: Path) -> int:
    g = _growth_from(cfg)
    report = certify(g)
    payload = report.to_dict()
    payload["config_hash"] = cfg.config_hash
    _write_json(out_dir / "condition_report.json", payload)
    status = "certified" if report.all_ok else "FAILED"
    print(
        f"check: {status} family={report.family} gamma={report.gamma} A={report.A} "
        f"x0={report.x0} B={report.B} -> {out_dir / 'condition_report.json'}"
    )
    return EXIT_OK if report.all_ok else EXIT_VERIFY


def cmd_construct(cfg: ExperimentConfig, out_dir: Path) -> int:
    g = _growth_from(cfg)
    base = _increments_from(cfg)
    report = certify(g)
    if not report.all_ok:
        payload = report.to_dict()
        payload["config_hash"] = cfg.config_hash
        _write_json(out_dir / "condition_report.json", payload)
        print("construct: growth certification failed; see condition_report.json", file=sys.stderr)
        return EXIT_VERIFY
    a = -base.mean
    delta = _effective_delta(cfg, a)
    chain = build_chain(base, g, report, delta=delta)
    chain.diagnostics = {
        "majorant_long_tailed": diagnostics.long_tailed_profile(chain.hat).to_dict(),
        "majorant_sstar": diagnostics.sstar_ratio(chain.hat).to_dict(),
        "majorant_log_tail_increment": diagnostics.check_log_tail_increment(
            chain.hat, report.gamma
        ).to_dict(),
    }
    payload = chain.to_dict()
    payload["config_hash"] = cfg.config_hash
    _write_json(out_dir / "chain.json", payload)

    lo = min(chain.base.support[0], 0.0)
    hi = diagnostics.usable_tail_horizon(chain.base)
    xs = np.concatenate([np.linspace(lo, max(lo + 1.0, 1.0), 64), np.geomspace(1.0, hi, 192)])
    rows = tail_table({"base": chain.base, "spliced": chain.tilde, "majorant": chain.hat}, xs)
    with (out_dir / "tail_tables.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(rows[0])
        for row in rows[1:]:
            writer.writerow([repr(v) for v in row])

    print(
        f"construct: K={chain.K:.6g} V={chain.V:.6g} V'={chain.V_prime:.6g} "
        f"L={chain.L:.6g} delta={chain.delta:.6g} -> {out_dir / 'chain.json'}"
    )
    return EXIT_OK


def cmd_simulate(cfg: ExperimentConfig, out_dir: Path, replay: int | None = None) -> int:
    spec = _increments_from(cfg)
    if replay is not None:
        # audit mode: re-emit one stream's full path instead of a fresh batch
        path = replay_path(spec, cfg.seed, replay, step_cap=cfg.step_cap, shift=cfg.shift)
        target = out_dir / f"replay_{replay}.csv"
        with target.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "increment", "partial_sum"])
            for i in range(path["tau"]):
                writer.writerow([i + 1, repr(float(path["increments"][i])), repr(float(path["partial_sums"][i]))])
        print(
            f"replay: stream={replay} tau={path['tau']} s_tau={path['s_tau']!r} "
            f"censored={path['censored']} -> {target}"
        )
        return EXIT_OK
    batch = _simulate_config(cfg, spec)
    columns = _write_samples_csv(out_dir / _SAMPLES_FILE, batch)
    manifest = {
        "config_hash": cfg.config_hash,
        "seed": cfg.seed,
        "n_samples": cfg.n_samples,
        "step_cap": cfg.step_cap,
        "shift": cfg.shift,
        "stream_ids": {"start": 0, "count": cfg.n_samples},
        "censored_n": batch.censored_n,
        "censoring_rate": batch.censored_n / batch.n,
        "columns": columns,
    }
    _write_json(out_dir / _MANIFEST_FILE, manifest)
    print(
        f"simulate: n={batch.n} censored={batch.censored_n} mean_tau={batch.tau.mean():.6g} "
        f"-> {out_dir / _SAMPLES_FILE}"
    )
    return EXIT_OK


def _configured_estimates(cfg: ExperimentConfig, batch: SampleBatch, a: float) -> list:
    estimates = []
    if cfg.growth is not None and cfg.eps is not None:
        g = _growth_from(cfg)
        delta = _effective_delta(cfg, a)
        estimates.append(est.estimate_growth_moment(batch, g, cfg.eps, delta, a))
    if cfg.alpha is not None:
        estimates.append(est.estimate_power_moment(batch, cfg.alpha))
    if cfg.c is not None:
        estimates.append(est.estimate_exp_moment(batch, cfg.c))
    if not estimates:
        raise ConfigError("no estimand configured: set eps (+growth), alpha, or c")
    return estimates


def cmd_estimate(cfg: ExperimentConfig, out_dir: Path, fmt: str) -> int:
    spec = _increments_from(cfg)
    batch, manifest = _read_samples(out_dir)
    if manifest.get("config_hash") != cfg.config_hash:
        print("estimate: samples were produced by a different config (hash mismatch)", file=sys.stderr)
        return EXIT_CONFIG
    a = -spec.mean
    estimates = _configured_estimates(cfg, batch, a)
    payload = {
        "config_hash": cfg.config_hash,
        "seed_manifest": {"seed": cfg.seed, "stream_ids": manifest["stream_ids"]},
        "estimates": [e.to_dict() for e in estimates],
    }
    _write_json(out_dir / "estimates.json", payload)
    if fmt == "csv":
        with (out_dir / "estimates.csv").open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["kind", "n", "point", "std_error", "ci_lo", "ci_hi", "top1_share", "censored_n", "verdict"])
            for e in estimates:
                writer.writerow(
                    [e.estimand["kind"], e.n, repr(e.point), repr(e.std_error),
                     repr(e.ci95[0]), repr(e.ci95[1]), repr(e.top1_share), e.censored_n, e.verdict]
                )
    for e in estimates:
        print(
            f"estimate[{e.estimand['kind']}]: point={e.point:.8g} se={e.std_error:.3g} "
            f"verdict={e.verdict}"
        )
    censored_dominated = any(e.verdict == "censored-dominated" for e in estimates)
    return EXIT_CENSORED if censored_dominated else EXIT_OK


def cmd_verify(cfg: ExperimentConfig, out_dir: Path) -> int:
    """Run the check suites against existing samples.

    The construction chain is rebuilt from the config (deterministic, so it
    matches any previously serialized chain.json byte for byte).  Only the
    exactly-assertable suites (dominance coupling, stopping-identity
    consistency) gate the exit code; the ratio and stability results are
    CI-based or heuristic and are reported without failing the run.
    """
    spec = _increments_from(cfg)
    batch, manifest = _read_samples(out_dir)
    if manifest.get("config_hash") != cfg.config_hash:
        print("verify: samples were produced by a different config (hash mismatch)", file=sys.stderr)
        return EXIT_CONFIG

    report: dict = {"config_hash": cfg.config_hash}
    exact_ok = True

    if cfg.growth is not None:
        g = _growth_from(cfg)
        cert = certify(g)
        if not cert.all_ok:
            print("verify: growth certification failed", file=sys.stderr)
            return EXIT_VERIFY
        a = -spec.mean
        chain = build_chain(spec, g, cert, delta=_effective_delta(cfg, a))
        dom = est.dominance_suite(chain, n=min(cfg.n_samples, 1_000_000), seed=cfg.seed)
        report["dominance"] = dom.to_dict()
        exact_ok &= dom.ok

    wald = est.wald_check(batch, spec.mean)
    report["wald"] = wald.to_dict()
    exact_ok &= wald.ok

    psi_spec = ShiftedTail(spec, cfg.shift) if cfg.shift != 0.0 else spec
    try:
        report["psi_sstar"] = diagnostics.sstar_ratio(psi_spec).to_dict()
    except ValueError as exc:  # no upper tail to classify (e.g. all mass negative)
        report["psi_sstar"] = {"skipped": str(exc)}
    ratio = est.running_max_ratio_check(batch, psi_spec)
    report["running_max_ratio"] = ratio.to_dict()
    with (out_dir / "ratio_curve.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "exceedances", "ratio", "ratio_lo", "ratio_hi", "e_tau"])
        for row in ratio.rows:
            writer.writerow(
                [repr(row["x"]), row["exceedances"], repr(row["ratio"]),
                 repr(row["ratio_lo"]), repr(row["ratio_hi"]), repr(ratio.e_tau)]
            )

    sizes = sorted({cfg.n_samples // 64, cfg.n_samples // 16, cfg.n_samples // 4, cfg.n_samples})
    sizes = [s for s in sizes if s >= 2]
    if len(sizes) >= 4:
        try:
            a = -spec.mean
            series = [_configured_estimates(cfg, batch.head(s), a)[0] for s in sizes]
            stability = est.finiteness_diagnostic(series)
            report["finiteness"] = stability.to_dict()
            with (out_dir / "stability_curve.csv").open("w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["n", "point", "std_error", "top1_share"])
                for p in stability.points:
                    writer.writerow([p["n"], repr(p["point"]), repr(p["std_error"]), repr(p["top1_share"])])
        except ConfigError:
            report["finiteness"] = {"skipped": "no estimand configured"}
    else:
        report["finiteness"] = {"skipped": "n_samples too small for a stability series"}

    _write_json(out_dir / "verify_report.json", report)
    suites = [k for k in ("dominance", "wald", "running_max_ratio", "finiteness") if k in report]
    print(f"verify: exact_ok={exact_ok} suites={suites} -> {out_dir / 'verify_report.json'}")
    return EXIT_OK if exact_ok else EXIT_VERIFY


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ladderlab",
        description="Constructions, simulation and moment diagnostics for "
        "descent epochs of heavy-tailed random walks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in [
        ("check", "certify a growth function and fit its constants"),
        ("construct", "build the dominating-increment chain and its diagnostics"),
        ("simulate", "sample descent epochs to CSV with a manifest"),
        ("estimate", "estimate configured moment functionals from samples"),
        ("verify", "run the dominance/consistency/ratio/stability suites"),
    ]:
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="YAML or JSON experiment config")
        p.add_argument("--out", default=None, help="output directory (default from config or ./out)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--streams", type=int, default=None, help="override the parallel stream count")
        p.add_argument("--format", choices=["csv", "json"], default="json", help="extra table format for estimate")
        if name == "simulate":
            p.add_argument(
                "--replay",
                type=int,
                default=None,
                metavar="STREAM_ID",
                help="re-emit the full path of one stream for audit instead of simulating",
            )
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed_override=args.seed, streams_override=args.streams)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = Path(args.out or cfg.outputs.get("dir", "out"))
    out_dir.mkdir(parents=True, exist_ok=True)

    try:
        if args.command == "check":
            return cmd_check(cfg, out_dir)
        if args.command == "construct":
            return cmd_construct(cfg, out_dir)
        if args.command == "simulate":
            return cmd_simulate(cfg, out_dir, replay=args.replay)
        if args.command == "estimate":
            return cmd_estimate(cfg, out_dir, args.format)
        if args.command == "verify":
            return cmd_verify(cfg, out_dir)
    except (ConfigError, TailError, WalkError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConstructionError as exc:
        print(f"construction failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except FileNotFoundError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
