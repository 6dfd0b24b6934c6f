"""spf-lab command line: analyze-mdp | solve-dtft | verify-bounds | train | recover.

Each command validates its config fully before creating any output, writes
CSV/JSON artifacts atomically (temp file then rename), renders SVG figures
alongside the delimited output, and finishes with a run manifest listing
every emitted file.  Exit codes: 0 success, 2 config error, 3 numerical
non-convergence, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import (
    distinct_stationary_instance,
    lazy_pair_instance,
    random_mdp,
    random_policy,
    random_polynomial_reward,
    verify_frequency_domain_bound,
    verify_time_domain_bound,
)
from .configio import (
    ConfigError,
    analysis_from_config,
    bounds_from_config,
    dtft_from_config,
    load_toml,
    mdp_from_config,
    policy_from_config,
    recover_from_config,
    run_seed,
    trainer_from_config,
)
from .dtft import AliasingWarning, DtftConfig, recover_state, solve_dtft_fixed_point
from .envs import EnvSpec, build_env
from .loop import TrainerState, training_loop
from .mdp import TabularMdp, TabularPolicy, induced_chain
from .rng import stream
from .spectral import NoPeriodError, asymptotic_period, decompose, detect_empirical_period, distribution_evolution
from .trainer import NetConfig, SpfNetworks, predict_field_tabular
from . import plots

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGED = 3
EXIT_IO = 4

SMOOTH_WINDOW = 9


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    _atomic_write_text(path, "\n".join(lines) + "\n")


def write_json(path: Path, payload: dict) -> None:
    _atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


class Manifest:
    def __init__(self, command: str, config_path: Path, seed: int):
        self.payload = {
            "command": command,
            "config_hash": hashlib.sha256(config_path.read_bytes()).hexdigest(),
            "seed": seed,
            "version": __version__,
            "started_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "emitted_files": [],
            "warnings": [],
            "extras": {},
        }

    def add_file(self, path: Path) -> None:
        self.payload["emitted_files"].append(path.name)

    def warn(self, message: str) -> None:
        self.payload["warnings"].append(message)

    def finish(self, out_dir: Path) -> None:
        self.payload["finished_at"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
        path = out_dir / "run_manifest.json"
        write_json(path, self.payload)


def cmd_analyze_mdp(args) -> int:
    cfg = load_toml(args.config)
    mdp = mdp_from_config(cfg)
    policy = policy_from_config(cfg, mdp)
    opts = analysis_from_config(cfg)
    seed = run_seed(cfg, args.seed)
    out = _prepare_out(args.out)
    manifest = Manifest("analyze-mdp", Path(args.config), seed)

    chain = induced_chain(mdp, policy)
    decomposition = decompose(chain)
    report = asymptotic_period(chain, decomposition)
    evolution = distribution_evolution(chain, mdp.initial_dist, opts["n_steps"])
    tail = evolution[evolution.shape[0] // 2:]
    try:
        empirical = detect_empirical_period(tail, opts["period_tol"])
    except NoPeriodError as exc:
        empirical = None
        manifest.warn(str(exc))

    payload = {
        "recurrent_classes": [list(c) for c in decomposition.recurrent_classes],
        "transient_states": list(decomposition.transient_states),
        "permutation": list(decomposition.permutation),
        "class_periods": list(report.class_periods),
        "global_period": report.global_period,
        "eigen_counts": list(report.eigen_counts) if report.eigen_counts else None,
        "empirical_period": empirical,
        "n_steps": opts["n_steps"],
        "period_tol": opts["period_tol"],
    }
    report_path = out / "period_report.json"
    write_json(report_path, payload)
    manifest.add_file(report_path)

    csv_path = out / "distribution_evolution.csv"
    header = ["step"] + [f"p{s}" for s in range(mdp.n_states)]
    rows = [[t] + list(evolution[t]) for t in range(evolution.shape[0])]
    write_csv(csv_path, header, rows)
    manifest.add_file(csv_path)

    fig_path = out / "distribution_evolution.svg"
    plots.evolution_figure(evolution, fig_path, salt=str(seed))
    manifest.add_file(fig_path)
    manifest.finish(out)
    return EXIT_OK


def cmd_solve_dtft(args) -> int:
    cfg = load_toml(args.config)
    mdp = mdp_from_config(cfg)
    policy = policy_from_config(cfg, mdp)
    opts = dtft_from_config(cfg)
    seed = run_seed(cfg, args.seed)
    out = _prepare_out(args.out)
    manifest = Manifest("solve-dtft", Path(args.config), seed)

    config = DtftConfig(
        n_freq=opts["n_freq"], dim=mdp.dim, gamma=mdp.gamma,
        half_spectrum=opts["half_spectrum"],
    )
    field, info = solve_dtft_fixed_point(
        mdp, policy, config, tol=opts["tol"], max_iter=opts["max_iter"]
    )

    csv_path = out / "dtft_field.csv"
    rows = []
    for s in range(mdp.n_states):
        for a in range(mdp.n_actions):
            for k in range(config.n_stored):
                for d in range(config.dim):
                    v = field.values[s, a, k, d]
                    rows.append([s, a, k, d, v.real, v.imag])
    write_csv(csv_path, ["state", "action", "bin", "dim", "re", "im"], rows)
    manifest.add_file(csv_path)

    json_path = out / "convergence.json"
    write_json(json_path, {
        "converged": info.converged,
        "iterations": info.iterations,
        "final_change": info.final_change,
        "residual_bound": info.residual_bound,
        "tol": opts["tol"],
        "n_freq": opts["n_freq"],
    })
    manifest.add_file(json_path)

    fig_path = out / "spectrum.svg"
    magnitudes = np.sqrt((np.abs(field.values) ** 2).sum(axis=-1)).reshape(
        -1, config.n_stored
    )
    plots.spectrum_figure(config.omegas(), magnitudes, fig_path, salt=str(seed))
    manifest.add_file(fig_path)
    if not info.converged:
        manifest.warn(f"fixed-point solve stopped at change {info.final_change:.3g} > tol")
    manifest.finish(out)
    return EXIT_OK if info.converged else EXIT_NONCONVERGED


def cmd_verify_bounds(args) -> int:
    cfg = load_toml(args.config)
    opts = bounds_from_config(cfg)
    seed = run_seed(cfg, args.seed)
    out = _prepare_out(args.out)
    manifest = Manifest("verify-bounds", Path(args.config), seed)

    rows = []
    instance_id = 0
    rng = stream(seed, 10)
    for i in range(opts["n_time_domain"]):
        gamma = opts["gammas"][i % len(opts["gammas"])]
        mdp = random_mdp(rng, opts["n_states"], opts["n_actions"], gamma)
        p1 = random_policy(rng, opts["n_states"], opts["n_actions"])
        p2 = random_policy(rng, opts["n_states"], opts["n_actions"])
        check = verify_time_domain_bound(mdp, p1, p2, opts["horizon"])
        rows.append({
            "instance_id": instance_id,
            "theorem": "time_domain",
            "lhs": check.lhs, "rhs": check.rhs,
            "slack": check.rhs - check.lhs,
            "verdict": "holds" if check.holds else "violated",
        })
        instance_id += 1
    rng = stream(seed, 11)
    for i in range(opts["n_freq_domain"]):
        degree = opts["degrees"][i % len(opts["degrees"])]
        mdp, p1, p2 = lazy_pair_instance(rng, gamma=opts["gammas"][i % len(opts["gammas"])])
        reward = random_polynomial_reward(rng, mdp.dim, degree)
        check = verify_frequency_domain_bound(mdp, p1, p2, reward)
        verdict = ("inapplicable" if not check.decay_certified
                   else "holds" if check.holds else "violated")
        rows.append({
            "instance_id": instance_id,
            "theorem": "frequency_domain",
            "lhs": check.lhs, "rhs": check.rhs,
            "slack": check.rhs - check.lhs,
            "verdict": verdict,
        })
        instance_id += 1
    if opts["include_uncertified"]:
        mdp, p1, p2 = distinct_stationary_instance(rng)
        reward = random_polynomial_reward(rng, mdp.dim, 1)
        check = verify_frequency_domain_bound(mdp, p1, p2, reward)
        rows.append({
            "instance_id": instance_id,
            "theorem": "frequency_domain",
            "lhs": check.lhs, "rhs": check.rhs,
            "slack": check.rhs - check.lhs,
            "verdict": "inapplicable" if not check.decay_certified else "holds",
        })

    csv_path = out / "bounds.csv"
    write_csv(
        csv_path,
        ["instance_id", "theorem", "lhs", "rhs", "slack", "verdict"],
        [[r["instance_id"], r["theorem"], r["lhs"], r["rhs"], r["slack"], r["verdict"]]
         for r in rows],
    )
    manifest.add_file(csv_path)
    fig_path = out / "bounds.svg"
    plots.bounds_figure(rows, fig_path, salt=str(seed))
    manifest.add_file(fig_path)
    manifest.finish(out)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_toml(args.config)
    trainer_cfg = trainer_from_config(cfg, args.profile)
    mdp = mdp_from_config(cfg) if trainer_cfg.env_kind == "tabular_from_mdp" else None
    seed = run_seed(cfg, args.seed)
    out = _prepare_out(args.out)
    manifest = Manifest("train", Path(args.config), seed)
    manifest.payload["extras"]["smooth_window"] = SMOOTH_WINDOW
    manifest.payload["extras"]["profile"] = trainer_cfg.profile

    state = TrainerState(trainer_cfg, seed, mdp=mdp)
    if args.resume:
        state.restore(args.resume)
    run = training_loop(state)

    csv_path = out / "metrics.csv"
    header = ["step", "L_pred", "raw_lo_term", "mid_term", "raw_hi_term", "episodic_return"]
    write_csv(csv_path, header, [[r[h] for h in header] for r in run.rows])
    manifest.add_file(csv_path)

    ckpt_base = out / "checkpoint_final"
    manifest_path, blob_path = state.save(ckpt_base)
    manifest.add_file(manifest_path)
    manifest.add_file(blob_path)

    fig_path = out / "learning_curve.svg"
    plots.learning_curve_figure(run.rows, fig_path, salt=str(seed),
                                smooth_window=SMOOTH_WINDOW)
    manifest.add_file(fig_path)
    manifest.finish(out)
    return EXIT_OK


def _cycle_mdp(period: int, gamma: float) -> TabularMdp:
    transition = np.zeros((period, 1, period))
    for s in range(period):
        transition[s, 0, (s + 1) % period] = 1.0
    return TabularMdp(
        transition=transition,
        reward=np.zeros(period),
        initial_dist=np.eye(period)[0],
        gamma=gamma,
        embedding=np.arange(period, dtype=np.float64)[:, None],
    )


def cmd_recover(args) -> int:
    cfg = load_toml(args.config)
    opts = recover_from_config(cfg)
    seed = run_seed(cfg, args.seed)
    checkpoint = args.checkpoint or opts["checkpoint"]
    out = _prepare_out(args.out)
    manifest = Manifest("recover", Path(args.config), seed)

    mdp = _cycle_mdp(opts["period"], opts["gamma"])
    config = DtftConfig(n_freq=opts["n_freq"], dim=1, gamma=opts["gamma"])
    if checkpoint == "exact":
        field, info = solve_dtft_fixed_point(mdp, TabularPolicy.uniform(mdp.n_states, 1), config)
        if not info.converged:
            manifest.warn("exact field solve did not converge")
        imag_tol = 1e-6
    else:
        from .nn.checkpoint import load_arrays

        arrays, _, extra = load_arrays(checkpoint)
        if "net_cfg" not in extra:
            raise ConfigError(f"checkpoint {checkpoint} carries no network config")
        net_cfg = NetConfig(**extra["net_cfg"])
        nets = SpfNetworks(net_cfg, stream(seed, 3))
        nets.load_state_arrays(arrays)
        field = predict_field_tabular(nets, mdp, opts["gamma"])
        imag_tol = opts["imag_tol"]

    period = opts["period"]
    n_goals = opts["n_goals"]
    rows = []
    traces: dict[int, np.ndarray] = {}
    true_trace = np.array([float(mdp.embedding[t % period, 0]) for t in range(n_goals)])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", AliasingWarning)
        for k in range(1, opts["k_max"] + 1):
            trace = np.empty(n_goals)
            for t in range(n_goals):
                start = (t - k) % period
                recovered = recover_state(field, start, 0, k, imag_tol=imag_tol)
                trace[t] = recovered[0]
                rows.append([t, k, 0, true_trace[t], recovered[0],
                             abs(recovered[0] - true_trace[t])])
            traces[k] = trace
    for w in caught:
        manifest.warn(str(w.message))

    csv_path = out / "recovery.csv"
    write_csv(csv_path, ["goal_t", "k", "dim", "true", "recovered", "abs_err"], rows)
    manifest.add_file(csv_path)
    fig_path = out / "recovery.svg"
    plots.recovery_figure(true_trace, traces, fig_path, salt=str(seed))
    manifest.add_file(fig_path)
    manifest.finish(out)
    return EXIT_OK


def _prepare_out(out: str) -> Path:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spf-lab",
        description="Frequency-domain analysis of discounted state sequences: "
                    "chain structure, exact spectra, performance bounds, and "
                    "auxiliary-prediction training.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("analyze-mdp", cmd_analyze_mdp),
        ("solve-dtft", cmd_solve_dtft),
        ("verify-bounds", cmd_verify_bounds),
        ("train", cmd_train),
        ("recover", cmd_recover),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML config path")
        p.add_argument("--seed", type=int, default=None, help="overrides [run].seed")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--profile", choices=["desk", "paper"], default=None)
        if name == "train":
            p.add_argument("--resume", default=None, help="checkpoint base to resume from")
        if name == "recover":
            p.add_argument("--checkpoint", default=None,
                           help='checkpoint base or "exact" (overrides config)')
        p.set_defaults(handler=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
