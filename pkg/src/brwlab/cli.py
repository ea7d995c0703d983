"""Command-line interface: config-driven experiments with CSV/JSON/SVG output.

Exit codes: 0 success, 2 configuration error, 3 acceptance failure
(``validate`` only).  Every output file embeds the config hash so runs can
be tied back to their exact configuration; identical (config, seed) pairs
produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import config as cfgmod
from . import engine, genealogy, stats, svgplot
from .errors import BrwLabError, ConfigError
from .ratefn import Asymptote, solve_constants

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ACCEPTANCE = 3


# ----------------------------------------------------------------- output


def _out_path(cfg: dict, name: str) -> str:
    out_dir = cfg["output"]["dir"]
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, name)


def write_csv(path: str, header, rows, cfg_hash: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(list(header) + ["config_hash"]) + "\r\n")
        for row in rows:
            cells = [_cell(v) for v in row] + [cfg_hash]
            fh.write(",".join(cells) + "\r\n")


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (np.floating,)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_json(path: str, payload: dict, cfg_hash: str) -> None:
    payload = dict(payload)
    payload["config_hash"] = cfg_hash
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _maybe_plot(cfg: dict, name: str, series, kind: str, cfg_hash: str, **labels):
    if "svg" in cfg["output"]["formats"]:
        svgplot.emit_plot(
            series,
            kind,
            _out_path(cfg, name),
            config_hash=cfg_hash,
            seed=cfg["sim"]["seed"],
            **labels,
        )


def _setup(cfg: dict):
    inc = cfgmod.increment_from(cfg)
    off = cfgmod.offspring_from(cfg)
    constants = solve_constants(inc, off)
    policy = cfgmod.policy_from(cfg, constants.c2)
    return inc, off, constants, policy


# ------------------------------------------------------------- subcommands


def cmd_constants(cfg: dict, cfg_hash: str) -> int:
    inc, off, constants, _ = _setup(cfg)
    payload = constants.to_dict()
    asym = Asymptote(constants)
    payload["m_100"] = asym.m_of_n(100)
    write_json(_out_path(cfg, "constants.json"), payload, cfg_hash)
    rows = [
        (x, asym.t_of_x(float(x)), asym.m_of_n(int(math.floor(asym.t_of_x(float(x))))))
        for x in cfg["target"]["x_grid"]
    ]
    write_csv(_out_path(cfg, "constants.csv"), ("x", "t_x", "m_floor_tx"), rows, cfg_hash)
    print(json.dumps(payload, sort_keys=True))
    return EXIT_OK


def cmd_simulate_max(cfg: dict, cfg_hash: str) -> int:
    inc, off, constants, policy = _setup(cfg)
    exp = cfg["experiment"]["simulate_max"]
    n_grid = [int(n) for n in exp["n_grid"]]
    rep = stats.max_tightness(
        inc, off, constants, n_grid, cfg["sim"]["replications"], cfg["sim"]["seed"], policy
    )
    mat = rep.samples["max_matrix"]
    rows = [
        (r, n, mat[r, n])
        for r in range(mat.shape[0])
        for n in n_grid
        if math.isfinite(mat[r, n])
    ]
    write_csv(_out_path(cfg, "simulate_max.csv"), ("rep", "n", "max"), rows, cfg_hash)
    write_json(
        _out_path(cfg, "simulate_max.json"),
        {
            "median_offset": {str(k): v for k, v in rep.fits["median_offset"].items()},
            "band": rep.fits["band"],
            "seed": cfg["sim"]["seed"],
        },
        cfg_hash,
    )
    offsets = rep.fits["median_offset"]
    _maybe_plot(
        cfg,
        "simulate_max.svg",
        svgplot.Series(list(offsets), [offsets[n] for n in offsets], "median(M_n) - m_n"),
        "line",
        cfg_hash,
        title="Centered maximum",
        x_label="n",
        y_label="median offset",
    )
    return EXIT_OK


def cmd_fpt(cfg: dict, cfg_hash: str) -> int:
    inc, off, constants, policy = _setup(cfg)
    rep = stats.fpt_sweep(
        inc,
        off,
        constants,
        [float(x) for x in cfg["target"]["x_grid"]],
        cfg["sim"]["replications"],
        cfg["sim"]["seed"],
        policy,
        radius=float(cfg["target"]["radius"]),
        max_restarts=cfg["sim"]["max_restarts"],
        min_hits=1,
    )
    rows = [
        (x, i, int(t))
        for x in rep.config["x_grid"]
        for i, t in enumerate(rep.samples[x])
    ]
    write_csv(_out_path(cfg, "fpt.csv"), ("x", "rep", "tau"), rows, cfg_hash)
    summary = rep.summary()
    summary["median_tau"] = {str(k): v for k, v in rep.fits["median_tau"].items()}
    for key in ("median_tau", "iqr", "t_x"):
        summary["fits"][key] = {str(k): v for k, v in rep.fits[key].items()}
    write_json(_out_path(cfg, "fpt.json"), summary, cfg_hash)
    med = rep.fits["median_tau"]
    _maybe_plot(
        cfg,
        "fpt.svg",
        [
            svgplot.Series(list(med), [med[x] for x in med], "median tau"),
            svgplot.Series(list(med), [rep.fits["t_x"][x] for x in med], "t_x"),
        ],
        "line",
        cfg_hash,
        title="First passage times",
        x_label="x",
        y_label="generations",
    )
    return EXIT_OK


def _conditioned_hit_run(inc, off, constants, policy, cfg, x, rep_index):
    center = np.zeros(inc.dimension)
    center[0] = x
    asym = Asymptote(constants)
    horizon = cfg["sim"]["horizon"] or int(math.ceil(asym.t_of_x(x))) + 60
    return engine.run_conditioned_on_survival(
        inc,
        off,
        policy,
        center,
        float(cfg["target"]["radius"]),
        horizon,
        np.random.SeedSequence(cfg["sim"]["seed"], spawn_key=(int(x * 8), rep_index)),
        max_restarts=cfg["sim"]["max_restarts"],
        pivot=constants.pivot_array,
    )


def cmd_production(cfg: dict, cfg_hash: str) -> int:
    inc, off, constants, policy = _setup(cfg)
    exp = cfg["experiment"]["production"]
    x = float(max(cfg["target"]["x_grid"]))
    level = x - float(cfg["target"]["radius"])
    pivot = constants.pivot_array
    quality = genealogy.QUALITY_EXACT if policy.mode == "off" else genealogy.QUALITY_APPROX
    rows = []
    shares = []
    for r in range(cfg["sim"]["replications"]):
        out = _conditioned_hit_run(inc, off, constants, policy, cfg, x, r)
        if out.status != engine.TARGET_HIT:
            continue
        t = out.tau
        p = genealogy.production_numbers(out.arena, pivot, level, t)
        pb = genealogy.production_numbers_band(
            out.arena, pivot, level, t, half_width=float(exp["half_width"])
        )
        rows.extend((r, n, int(p[n]), int(pb[n]), quality) for n in range(t + 1))
        s = int(math.ceil(math.log(x) ** 2))
        if t > 2 * s and p[t] > 0:
            shares.append((p[t - s] - p[s]) / p[t])
    write_csv(
        _out_path(cfg, "production.csv"),
        ("rep", "n", "p_n", "p_band_n", "quality"),
        rows,
        cfg_hash,
    )
    qs = {}
    if shares:
        qs = {
            "q25": float(np.percentile(shares, 25)),
            "median": float(np.median(shares)),
            "q75": float(np.percentile(shares, 75)),
        }
    write_json(
        _out_path(cfg, "production.json"),
        {"x": x, "middle_growth_share": qs, "runs_used": len(shares)},
        cfg_hash,
    )
    if rows:
        last_rep = rows[-1][0]
        series = [(n, p) for r, n, p, _, _ in rows if r == last_rep]
        _maybe_plot(
            cfg,
            "production.svg",
            [
                svgplot.Series([n for n, _ in series], [p for _, p in series], "P_n"),
            ],
            "line",
            cfg_hash,
            title="Production numbers",
            x_label="n",
            y_label="P_n",
        )
    return EXIT_OK


def cmd_clusters(cfg: dict, cfg_hash: str) -> int:
    inc, off, constants, policy = _setup(cfg)
    exp = cfg["experiment"]["clusters"]
    asym = Asymptote(constants)
    pivot = constants.pivot_array
    quality = genealogy.QUALITY_EXACT if policy.mode == "off" else genealogy.QUALITY_APPROX
    rows = []
    medians = {}
    for x in [float(v) for v in cfg["target"]["x_grid"]]:
        level = x - float(cfg["target"]["radius"])
        lag_default = int(math.ceil(math.log(x) ** 2))
        counts = []
        for r in range(cfg["sim"]["replications"]):
            out = _conditioned_hit_run(inc, off, constants, policy, cfg, x, r)
            if out.status != engine.TARGET_HIT:
                continue
            t = out.tau
            lag = exp["anchor_lag"] if exp["anchor_lag"] is not None else min(lag_default, t)
            part = genealogy.clusters(
                out.arena, pivot, level, t, lag,
                asym=asym, lag_k=int(exp["lag_k"]), quality=quality,
            )
            counts.append(part.n_blocks)
            for b, (st, rec) in enumerate(zip(part.stats, part.records)):
                rows.append(
                    (x, r, b, st.cardinality, rec.h, rec.g, st.dispersion, part.quality)
                )
        if counts:
            medians[x] = float(np.median(counts))
    write_csv(
        _out_path(cfg, "clusters.csv"),
        ("x", "rep", "block_id", "cardinality", "lca_age_h", "g", "dispersion", "quality"),
        rows,
        cfg_hash,
    )
    payload = {"median_blocks": {str(k): v for k, v in medians.items()}}
    if len(medians) >= 2:
        fit = stats.fit_line(
            np.log(list(medians)), np.log([max(v, 1.0) for v in medians.values()])
        )
        payload["log_log"] = fit.to_dict()
        payload["target_slope"] = (constants.dimension - 1.0) / 2.0
    write_json(_out_path(cfg, "clusters.json"), payload, cfg_hash)
    return EXIT_OK


def cmd_barrier(cfg: dict, cfg_hash: str) -> int:
    inc, off, constants, policy = _setup(cfg)
    exp = cfg["experiment"]["barrier"]
    n = int(exp["n"])
    asym = Asymptote(constants)
    pivot = constants.pivot_array
    betas = [float(b) for b in exp["beta_grid"]]
    crossings = {b: 0 for b in betas}
    used = 0
    for r in range(cfg["sim"]["replications"]):
        out = engine.run_growth(
            inc, off, policy, n, engine.substream(cfg["sim"]["seed"], 0xBA, r),
            pivot=pivot,
        )
        if out.status == engine.EXTINCT:
            continue
        used += 1
        for b in betas:
            crossed, _ = genealogy.barrier_crossings(out.arena, pivot, b, n, asym)
            crossings[b] += int(crossed)
    rows = [(b, crossings[b], used, crossings[b] / used if used else 0.0) for b in betas]
    write_csv(_out_path(cfg, "barrier.csv"), ("beta", "crossed", "runs", "freq"), rows, cfg_hash)
    payload = {"freq": {str(b): crossings[b] / used if used else 0.0 for b in betas}}
    pos = [(b, crossings[b] / used) for b in betas if used and crossings[b] > 0]
    if len(pos) >= 2:
        fit = stats.fit_line([b for b, _ in pos], [math.log(f) for _, f in pos])
        payload["log_freq_fit"] = fit.to_dict()
        payload["target_slope"] = -constants.c2
    write_json(_out_path(cfg, "barrier.json"), payload, cfg_hash)
    return EXIT_OK


def cmd_counts(cfg: dict, cfg_hash: str) -> int:
    inc, off, constants, policy = _setup(cfg)
    exp = cfg["experiment"]["counts"]
    n = int(exp["n"])
    x_grid = [float(v) for v in exp["x_grid"]]
    asym = Asymptote(constants)
    pivot = constants.pivot_array
    all_counts = []
    for r in range(cfg["sim"]["replications"]):
        rng_key = 0xC0
        for attempt in range(cfg["sim"]["max_restarts"] + 1):
            out = engine.run_growth(
                inc, off, policy, n,
                engine.substream(cfg["sim"]["seed"], rng_key, r, attempt),
                pivot=pivot,
            )
            if out.status != engine.EXTINCT:
                break
        else:
            continue
        all_counts.append(
            genealogy.particle_count_profile(out.arena, pivot, n, x_grid, asym)
        )
    mat = np.vstack(all_counts)
    med = np.median(mat, axis=0)
    rows = [(r, x, int(mat[r, i])) for r in range(mat.shape[0]) for i, x in enumerate(x_grid)]
    write_csv(_out_path(cfg, "counts.csv"), ("rep", "x", "count"), rows, cfg_hash)
    payload = {"median_counts": {str(x): float(m) for x, m in zip(x_grid, med)}}
    pos = [(x, m) for x, m in zip(x_grid, med) if m > 0]
    if len(pos) >= 2:
        fit = stats.fit_line([x for x, _ in pos], [math.log(m) for _, m in pos])
        payload["log_count_fit"] = fit.to_dict()
        payload["target_slope"] = constants.c2
    write_json(_out_path(cfg, "counts.json"), payload, cfg_hash)
    return EXIT_OK


def cmd_clt(cfg: dict, cfg_hash: str) -> int:
    inc, off, constants, _ = _setup(cfg)
    exp = cfg["experiment"]["clt"]
    rep = stats.conditional_transverse_hit(
        inc, constants, [float(x) for x in exp["x_grid"]],
        cfg["sim"]["replications"], cfg["sim"]["seed"],
    )
    probs = rep.samples["p_hat"]
    rows = [
        (x, rep.diagnostics["per_x"][x]["n"], rep.diagnostics["per_x"][x]["accepted"],
         rep.diagnostics["per_x"][x]["hits"], probs[x])
        for x in probs
    ]
    write_csv(_out_path(cfg, "clt.csv"), ("x", "n", "accepted", "hits", "p_hat"), rows, cfg_hash)
    write_json(
        _out_path(cfg, "clt.json"),
        {
            "p_hat": {str(k): v for k, v in probs.items()},
            "log_log": rep.fits["log_log"].to_dict(),
            "target_slope": rep.fits["target_slope"],
        },
        cfg_hash,
    )
    return EXIT_OK


def cmd_twodesc(cfg: dict, cfg_hash: str) -> int:
    inc, off, constants, _ = _setup(cfg)
    exp = cfg["experiment"]["twodesc"]
    rep = stats.two_descendant_prob(
        inc, off, constants, int(exp["n"]), [int(g) for g in exp["g_grid"]],
        cfg["sim"]["replications"], cfg["sim"]["seed"],
    )
    rows = [
        (g, rep.samples["r_hat"][g], rep.samples["p_hat"][g], rep.diagnostics["events"][g])
        for g in sorted(rep.samples["p_hat"])
    ]
    write_csv(_out_path(cfg, "twodesc.csv"), ("g", "r_hat", "p_hat", "events"), rows, cfg_hash)
    write_json(
        _out_path(cfg, "twodesc.json"),
        {
            "slope": rep.fits["slope"].to_dict(),
            "target_slope": rep.fits["target_slope"],
            "p_hat": {str(g): v for g, v in rep.samples["p_hat"].items()},
        },
        cfg_hash,
    )
    return EXIT_OK


def cmd_escape(cfg: dict, cfg_hash: str) -> int:
    inc, off, _, _ = _setup(cfg)
    exp = cfg["experiment"]["escape"]
    rep = stats.escape_prob(
        inc, off, [int(n) for n in exp["n_grid"]],
        cfg["sim"]["replications"], cfg["sim"]["seed"],
    )
    rows = [(n, rep.samples["freq"][n]) + rep.diagnostics["counts"][n] for n in rep.samples["freq"]]
    write_csv(_out_path(cfg, "escape.csv"), ("n", "freq", "events", "runs"), rows, cfg_hash)
    write_json(
        _out_path(cfg, "escape.json"),
        {"freq": {str(k): v for k, v in rep.samples["freq"].items()}},
        cfg_hash,
    )
    return EXIT_OK


def cmd_ballot(cfg: dict, cfg_hash: str) -> int:
    inc, _, _, _ = _setup(cfg)
    exp = cfg["experiment"]["ballot"]
    rep = stats.ballot_scaling(
        inc,
        [int(n) for n in exp["n_grid"]],
        float(exp["y"]),
        float(exp["a"]),
        cfg["sim"]["replications"],
        cfg["sim"]["seed"],
        transverse_box_half=float(exp["box_half"]),
    )
    rows = [(n, rep.samples["freq"][n], rep.diagnostics["events"][n]) for n in rep.samples["freq"]]
    write_csv(_out_path(cfg, "ballot.csv"), ("n", "freq", "events"), rows, cfg_hash)
    write_json(
        _out_path(cfg, "ballot.json"),
        {
            "log_log": rep.fits["log_log"].to_dict(),
            "target_slope": rep.fits["target_slope"],
            "freq": {str(k): v for k, v in rep.samples["freq"].items()},
        },
        cfg_hash,
    )
    return EXIT_OK


# --------------------------------------------------------------- validate


def _collect_output_hashes(out_dir: str) -> set:
    hashes = set()
    if not os.path.isdir(out_dir):
        return hashes
    for name in sorted(os.listdir(out_dir)):
        path = os.path.join(out_dir, name)
        if name.endswith(".json"):
            try:
                with open(path, "r", encoding="utf-8") as fh:
                    payload = json.load(fh)
            except (OSError, json.JSONDecodeError):
                continue
            if "config_hash" in payload:
                hashes.add(payload["config_hash"])
        elif name.endswith(".csv"):
            try:
                with open(path, "r", encoding="utf-8") as fh:
                    header = fh.readline().strip().split(",")
                    first = fh.readline().strip().split(",")
            except OSError:
                continue
            if "config_hash" in header and len(first) == len(header):
                hashes.add(first[header.index("config_hash")])
    return hashes


def cmd_validate(cfg: dict, cfg_hash: str, suite: str) -> int:
    from .laws import gaussian, make_offspring, uniform_cube

    hashes = _collect_output_hashes(cfg["output"]["dir"])
    if len(hashes) > 1:
        print(f"validate: refusing to aggregate outputs with mixed config hashes: {sorted(hashes)}")
        return EXIT_CONFIG

    checks = []

    def check(name, ok, detail=""):
        checks.append((name, bool(ok), detail))
        print(f"[{'PASS' if ok else 'FAIL'}] {name} {detail}")

    off2 = make_offspring(((2, 1.0),))
    cst = solve_constants(gaussian(1), off2)
    target = math.sqrt(2.0 * math.log(2.0))
    check(
        "constants-gaussian",
        abs(cst.c1 - target) < 1e-9 and abs(cst.c2 - target) < 1e-9,
        f"c1={cst.c1:.12f}",
    )
    cst3 = solve_constants(gaussian(3), off2)
    sym_err = max(
        abs(cst3.c1_hat - cst3.c1),
        float(np.linalg.norm(cst3.c2_vec_array - cst3.c2 * np.eye(3)[0])),
    )
    check("symmetric-reduction", sym_err <= 1e-7, f"err={sym_err:.2e}")
    asym = Asymptote(cst)
    res6 = asym.mwtx_residual(1e6)
    check("identity-residual", abs(res6) <= cst.c1 + 0.01, f"res={res6:.3f}")

    if suite == "full":
        pol = engine.PrunePolicy(mode="both", capacity=20000, tilt=cst.c2)
        tf = stats.max_tail_fit(gaussian(1), off2, cst, 40, 800, cfg["sim"]["seed"], pol)
        check(
            "max-tail-exponent",
            abs(tf.slope + cst.c2) <= 0.45 * cst.c2,
            f"slope={tf.slope:.3f}",
        )
        rep = stats.ballot_scaling(
            gaussian(1), [32, 64, 128], 2.0, 0.0, 300_000, cfg["sim"]["seed"]
        )
        check(
            "ballot-1d",
            abs(rep.fits["log_log"].slope + 1.5) <= 0.35,
            f"slope={rep.fits['log_log'].slope:.3f}",
        )

    n_fail = sum(1 for _, ok, _ in checks if not ok)
    write_json(
        _out_path(cfg, "validate.json"),
        {
            "suite": suite,
            "checks": {name: ok for name, ok, _ in checks},
            "failures": n_fail,
        },
        cfg_hash,
    )
    return EXIT_OK if n_fail == 0 else EXIT_ACCEPTANCE


# ---------------------------------------------------------------- dispatch


_COMMANDS = {
    "constants": cmd_constants,
    "simulate-max": cmd_simulate_max,
    "fpt": cmd_fpt,
    "production": cmd_production,
    "clusters": cmd_clusters,
    "barrier": cmd_barrier,
    "counts": cmd_counts,
    "clt": cmd_clt,
    "twodesc": cmd_twodesc,
    "escape": cmd_escape,
    "ballot": cmd_ballot,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="brwlab",
        description="Branching random walk laboratory: constants, simulation, first-passage experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in list(_COMMANDS) + ["validate"]:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="path to a JSON config file")
        p.add_argument(
            "--set",
            action="append",
            default=[],
            dest="overrides",
            metavar="KEY.PATH=VALUE",
            help="override a config entry (JSON literal value)",
        )
        if name == "validate":
            p.add_argument("--suite", choices=("quick", "full"), default="quick")
    return parser


def dispatch(argv) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = cfgmod.load_config(args.config, args.overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cfg_hash = cfgmod.config_hash(cfg)
    try:
        if args.command == "validate":
            return cmd_validate(cfg, cfg_hash, args.suite)
        return _COMMANDS[args.command](cfg, cfg_hash)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BrwLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
