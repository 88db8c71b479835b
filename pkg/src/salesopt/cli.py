"""Command-line entry points for every stage and for headless experiments.

Each command is a thin wrapper over the library: identical results to
calling the corresponding operations directly with the same config.
Outputs go to --out as record files; a summary table prints to stdout.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import datagen, records
from .bandit import BanditPolicyParams, run_simulation
from .datagen import BanditEnvSpec, GenConfig, PanelConfig, dominant_action_env, uniform_env
from .domain import ActionType
from .engine import Engine, EngineConfig
from .evalharness import (
    cem_match,
    did_estimate,
    placebo_pretest,
    run_ablation,
)
from .forecast import TARGETS, evaluate as eval_forecaster, fit_engagement_models
from .optimizer import OptimizerParams
from .store import EventLog
from .uplift import fit_t_learner, uplift_deciles


def _gen_config(cfg: dict[str, str], seed: int) -> GenConfig:
    return GenConfig(
        n_accounts=cfgmod.get_int(cfg, "gen.n_accounts", 240),
        n_reps=cfgmod.get_int(cfg, "gen.n_reps", 4),
        seed=seed,
        account_dim=cfgmod.get_int(cfg, "gen.account_dim", 8),
        rep_dim=cfgmod.get_int(cfg, "gen.rep_dim", 4),
        treatment_share=cfgmod.get_float(cfg, "gen.treatment_share", 0.5),
        noise_sd=cfgmod.get_float(cfg, "gen.noise_sd", 1.0),
        confounding=cfgmod.get_float(cfg, "gen.confounding", 0.0),
        max_days_to_rtcd=cfgmod.get_int(cfg, "gen.max_days", 365),
    )


def _opt_params(cfg: dict[str, str]) -> OptimizerParams:
    return OptimizerParams(
        k=cfgmod.get_float(cfg, "optimizer.k", -0.02),
        d0=cfgmod.get_float(cfg, "optimizer.d0", 90.0),
        n_min=cfgmod.get_int(cfg, "optimizer.n_min", 0),
        n_max=cfgmod.get_int(cfg, "optimizer.n_max", 25),
        t_u=cfgmod.get_float(cfg, "optimizer.t_u", 0.0),
        t_e=cfgmod.get_float(cfg, "optimizer.t_e", 0.0),
        cooldown_days=cfgmod.get_int(cfg, "optimizer.cooldown_days", 14),
        combiner=cfgmod.get_str(cfg, "optimizer.combiner", "or"),
        assignment_mode=cfgmod.get_str(cfg, "optimizer.assignment_mode", "at_most_one"),
    )


def _bandit_params(cfg: dict[str, str]) -> BanditPolicyParams:
    return BanditPolicyParams(
        mode=cfgmod.get_str(cfg, "bandit.mode", "thompson"),
        beta=cfgmod.get_float(cfg, "bandit.beta", 1.0),
        gamma=cfgmod.get_float(cfg, "bandit.gamma", 1.0),
        learning_rate=cfgmod.get_float(cfg, "bandit.learning_rate", 0.05),
        hidden=cfgmod.get_int(cfg, "bandit.hidden", 32),
        lam=cfgmod.get_float(cfg, "bandit.lam", 1.0),
    )


def _engine_config(cfg: dict[str, str], seed: int) -> EngineConfig:
    return EngineConfig(
        gen=_gen_config(cfg, seed),
        optimizer=_opt_params(cfg),
        bandit=_bandit_params(cfg),
        scorer=cfgmod.get_str(cfg, "engine.scorer", "model"),
        cold_start_min_updates=cfgmod.get_int(cfg, "engine.cold_start_min_updates", 0),
        product_name=cfgmod.get_str(cfg, "engine.product", "the product"),
    )


def _panel_config(cfg: dict[str, str], seed: int) -> PanelConfig:
    return PanelConfig(
        n_units_per_group=cfgmod.get_int(cfg, "panel.units_per_group", 50),
        seed=seed,
        noise_sd=cfgmod.get_float(cfg, "panel.noise_sd", 0.5),
        covariate_shift=cfgmod.get_float(cfg, "panel.covariate_shift", 0.0),
    )


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen(args, cfg) -> int:
    gen = _gen_config(cfg, args.seed)
    accounts, reps = datagen.generate_population(gen)
    out = _out_dir(args)
    records.write_records(out / "accounts.records", accounts)
    records.write_records(out / "reps.records", reps)
    files = ["accounts.records", "reps.records"]
    if args.panel:
        panel = datagen.generate_panel(_panel_config(cfg, args.seed),
                                       cfgmod.get_float(cfg, "panel.effect", 2.0))
        records.write_records(out / "panel.records", panel)
        files.append("panel.records")
    print(records.format_table(
        [{"file": f, "records": sum(1 for _ in open(out / f))} for f in files]
    ))
    return 0


def cmd_train(args, cfg) -> int:
    gen = _gen_config(cfg, args.seed)
    accounts, _ = datagen.generate_population(gen)
    X = np.array([a.x for a in accounts])
    a = datagen.assign_treatment(accounts, gen)
    y = datagen.simulate_outcomes(accounts, a, gen)
    model = fit_t_learner(X, y, a)
    scores = model.predict_ite(X)
    deciles = uplift_deciles(scores, y, a)
    targets = datagen.simulate_engagement_targets(accounts, gen)
    bundle = fit_engagement_models(accounts, targets)
    out = _out_dir(args)
    snapshot = {
        "uplift": {"kind": "T", "f0": _ridge_dict(model.f0), "f1": _ridge_dict(model.f1)},
        "forecast": {t: _ridge_dict(f.base) for t, f in zip(TARGETS, bundle.forecasters)},
    }
    (out / "models.json").write_text(json.dumps(snapshot, indent=2))
    print(records.format_table(
        [{"decile": r.decile, "n": r.n, "mean_pred": r.mean_predicted, "uplift": r.uplift}
         for r in deciles]
    ))
    X_e = np.array([acc.x_e for acc in accounts])
    rows = []
    for i, name in enumerate(TARGETS):
        mae, rmse = eval_forecaster(bundle.forecasters[i], X_e, targets[:, i])
        rows.append({"model": f"f_{name}", "mae": mae, "rmse": rmse})
    print(records.format_table(rows))
    return 0


def _ridge_dict(base) -> dict:
    return {"intercept": base.intercept, "coefs": [float(c) for c in base.coefs]}


def cmd_optimize(args, cfg) -> int:
    engine = Engine(_engine_config(cfg, args.seed))
    manifest, recs = engine.run_day()
    out = _out_dir(args)
    records.write_records(out / "recommendations.records", recs)
    print(f"run {manifest.run_id}: {len(recs)} recommendations on day {manifest.day}")
    print(records.format_table(
        [{"Account ID": r.account_id, "Rep ID": r.rep_id, "gRank": r.g_rank, "rRank": r.r_rank}
         for r in recs]
    ))
    pool = {s.account_id: s for s in engine.scored_pool()}
    print(records.format_table(
        [{"Account ID": r.account_id, "Action": r.action.value,
          "U_i": pool[r.account_id].y_u_raw, "E_i": pool[r.account_id].y_e_raw}
         for r in recs]
    ))
    return 0


def cmd_simulate_bandit(args, cfg) -> int:
    dim = cfgmod.get_int(cfg, "sim.context_dim", 8)
    rounds = cfgmod.get_int(cfg, "sim.rounds", 2000)
    kind = cfgmod.get_str(cfg, "sim.env", "dominant")
    env: BanditEnvSpec = (
        dominant_action_env(dim) if kind == "dominant" else uniform_env(dim)
    )
    out = _out_dir(args)
    rows = []
    for mode in ("thompson", "ucb"):
        params = _bandit_params(cfg)
        params = BanditPolicyParams(
            mode=mode, beta=params.beta, gamma=params.gamma,
            learning_rate=params.learning_rate, hidden=params.hidden, lam=params.lam,
        )
        trace = run_simulation(env, params, rounds, args.seed)
        with open(out / f"trace_{mode}.jsonl", "w", encoding="utf-8") as fh:
            for row in trace.to_rows():
                fh.write(json.dumps(row) + "\n")
        shares = trace.selection_shares()
        rows.append({
            "mode": mode,
            "cumulative_reward": trace.cumulative[-1],
            **{a.value: round(shares[a], 3) for a in ActionType},
        })
    print(records.format_table(rows))
    return 0


def cmd_evaluate(args, cfg) -> int:
    run_all = not (args.did or args.placebo or args.cem or args.deciles)
    effect = cfgmod.get_float(cfg, "panel.effect", 2.0)
    pc = _panel_config(cfg, args.seed)
    if args.did or run_all:
        result = did_estimate(datagen.generate_panel(pc, effect))
        print(records.format_table([{
            "tau_hat": result.tau_hat, "rte": result.rte,
            "se": result.se, "p_value": result.p_value, "n": result.n,
        }]))
    if args.placebo or run_all:
        rows = datagen.generate_time_panel(pc, effect, n_pre=4, n_post=2)
        report = placebo_pretest([r for r in rows if r.t < 4])
        print(records.format_table([
            {"cut": c, "tau_hat": r.tau_hat, "p_value": r.p_value}
            for c, r in zip(report.cut_points, report.results)
        ]))
        print(f"parallel_trends_plausible: {report.parallel_trends_plausible}")
    if args.cem or run_all:
        panel = datagen.generate_panel(pc, effect)
        edges = [np.linspace(-3, 3, 6)] * 3
        result = cem_match(panel, edges)
        print(records.format_table([{
            "strata": result.n_strata,
            "matched_treat": len(result.matched_treat),
            "matched_ctrl": len(result.matched_ctrl),
            "dropped_treat": result.dropped_treat,
            "dropped_ctrl": result.dropped_ctrl,
        }]))
    if args.deciles or run_all:
        gen = _gen_config(cfg, args.seed)
        accounts, _ = datagen.generate_population(gen)
        X = np.array([a.x for a in accounts])
        a = datagen.assign_treatment(accounts, gen)
        y = datagen.simulate_outcomes(accounts, a, gen)
        model = fit_t_learner(X, y, a)
        print(records.format_table(
            [{"decile": r.decile, "n": r.n, "mean_pred": r.mean_predicted, "uplift": r.uplift}
             for r in uplift_deciles(model.predict_ite(X), y, a)]
        ))
    return 0


def cmd_ablate(args, cfg) -> int:
    gen = _gen_config(cfg, args.seed)
    accounts, reps = datagen.generate_population(gen)
    params = _opt_params(cfg)
    report = run_ablation(accounts, reps, gen, params)
    out = _out_dir(args)
    (out / "ablation.json").write_text(json.dumps(report.as_table(), indent=2))
    table = report.as_table()
    print(records.format_table(
        [{k: row[k] for k in ("variant", "p_ups", "p_ch", "p_rec", "p_low")} for row in table]
    ))
    print(records.format_table(
        [{k: row[k] for k in ("variant", "b_total_rank", "constraints_met", "over_capacity")}
         for row in table]
    ))
    return 0


def cmd_serve(args, cfg) -> int:
    import uvicorn

    from .service.app import create_app

    log_path = Path(args.log) if args.log else _out_dir(args) / "events.log"
    engine = Engine(_engine_config(cfg, args.seed), EventLog(log_path))
    app = create_app(engine)
    uvicorn.run(
        app,
        host=cfgmod.get_str(cfg, "service.host", "127.0.0.1"),
        port=cfgmod.get_int(cfg, "service.port", 8000),
    )
    return 0


def cmd_replay(args, cfg) -> int:
    if not args.log:
        raise cfgmod.ConfigError("replay requires --log pointing at an event log")
    engine = Engine(_engine_config(cfg, args.seed), EventLog(args.log))
    rebuilt = engine.rebuild_policy()
    live = engine.policy
    gap = float(np.max(np.abs(rebuilt.net.param_vector() - live.net.param_vector()))) if live.n_updates else 0.0
    print(records.format_table([{
        "events": len(engine.log),
        "effective_feedback": len(engine._effective_feedback()),
        "policy_updates": live.n_updates,
        "replay_gap": gap,
        "next_day": engine.next_day(),
    }]))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="salesopt",
        description="Synthetic sales-recommendation engine: generate, train, optimize, simulate, evaluate, serve.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0, help="run seed")
        p.add_argument("--config", type=str, default=None, help="flat key-value config file")
        p.add_argument("--out", type=str, default="out", help="output directory")

    p = sub.add_parser("gen", help="generate a synthetic population (and optionally a panel)")
    common(p)
    p.add_argument("--panel", action="store_true", help="also write an observational panel")
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("train", help="fit uplift and engagement models, print evaluation tables")
    common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("optimize", help="run one pipeline day and print the matching tables")
    common(p)
    p.set_defaults(fn=cmd_optimize)

    p = sub.add_parser("simulate-bandit", help="run the bandit against a synthetic environment")
    common(p)
    p.set_defaults(fn=cmd_simulate_bandit)

    p = sub.add_parser("evaluate", help="DiD, placebo pre-tests, CEM, uplift deciles")
    common(p)
    p.add_argument("--did", action="store_true")
    p.add_argument("--placebo", action="store_true")
    p.add_argument("--cem", action="store_true")
    p.add_argument("--deciles", action="store_true")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("ablate", help="component ablation study (variants A/B/C)")
    common(p)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("serve", help="start the HTTP service")
    common(p)
    p.add_argument("--log", type=str, default=None, help="event log path")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("replay", help="rebuild state from an event log and report parity")
    common(p)
    p.add_argument("--log", type=str, default=None, help="event log path")
    p.set_defaults(fn=cmd_replay)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = cfgmod.load_config(args.config) if args.config else {}
        return args.fn(args, cfg)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
