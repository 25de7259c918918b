"""Command-line entry point for batch experiments.

Subcommands: demo, train, eval, nav, plan, stats, plot. Every run is
deterministic given the config and seed; JSON/JSONL/CSV/SVG outputs embed
the config digest so artifacts can be traced back to their settings.

Exit codes: 0 success, 1 usage/config error, 2 numeric divergence, 3 I/O.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .env import CrowdEnv
from .evaluation import EpisodeRecord, OrcaRobotPolicy, evaluate_policy, path_deviation
from .net.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .net.network import NetworkParameters, NumericError
from .net.policy import NetworkPolicy
from .planner import NoPathError, OccupancyGrid, build_grid, dijkstra_path, run_navigation
from .plots import deviation_csv, deviation_spread_svg, trajectory_overlay_svg
from .sim import generate_scenario
from .stats import mann_whitney_u
from .training import (
    DivergenceError,
    ReplayBuffer,
    imitation_fit,
    load_train_state,
    rl_train,
    run_demonstrations,
)

EXIT_USAGE = 1
EXIT_DIVERGENCE = 2
EXIT_IO = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # map argparse failures onto exit code 1
        raise UsageError(message)


def _make_env(cfg: RunConfig) -> CrowdEnv:
    return CrowdEnv(rewards=cfg.rewards, orca=cfg.orca, humans_see_robot=cfg.humans_see_robot)


def _out_dir(cfg: RunConfig, args) -> Path:
    out = Path(args.out) if args.out else Path(cfg.paths.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_run_config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.scenario.seed = args.seed
        cfg.training.seed = args.seed
    return cfg


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_jsonl(path: Path, header: dict, rows: list[dict]) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for row in rows:
            fh.write(json.dumps(row) + "\n")


# ---------------------------------------------------------------- subcommands


def cmd_demo(args) -> int:
    cfg = _load_run_config(args)
    out = _out_dir(cfg, args)
    env = _make_env(cfg)
    params = NetworkParameters.init(cfg.seed)
    episode_log: list[dict] = []
    buffer = run_demonstrations(cfg.training, cfg.scenario, env, params, episode_log=episode_log)
    buffer_path = out / "demos.pkl"
    buffer.save(buffer_path, meta={"config_digest": cfg.digest})
    returns = [e["return"] for e in episode_log]
    mean_ret = float(np.mean(returns)) if returns else 0.0
    _write_jsonl(out / "demo_log.jsonl", {"config_digest": cfg.digest}, episode_log)
    print(f"demo: episodes={len(episode_log)} transitions={len(buffer)} "
          f"mean_return={mean_ret:.4f} buffer={buffer_path}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_run_config(args)
    out = _out_dir(cfg, args)
    env = _make_env(cfg)

    start_episode = 0
    opt = None
    imitation_losses: list[float] = []
    if args.resume:
        ckpt = Path(args.resume)
        state_path = ckpt.parent / (ckpt.name.removesuffix(".mesa") + ".state.pkl")
        if not ckpt.exists() or not state_path.exists():
            raise UsageError(f"resume requires both {ckpt} and {state_path}")
        params = load_checkpoint(ckpt)
        buffer, opt, start_episode = load_train_state(state_path)
    else:
        params = NetworkParameters.init(cfg.seed)
        if args.skip_imitation:
            buffer = ReplayBuffer(cfg.training.buffer_capacity)
        else:
            demos = Path(args.demos) if args.demos else Path(cfg.paths.out_dir) / "demos.pkl"
            if not demos.exists():
                raise UsageError(
                    f"demonstration buffer not found: {demos} (run `demo` or pass --skip-imitation)"
                )
            buffer = ReplayBuffer.load(demos)
            imitation_losses = imitation_fit(params, buffer, cfg.training)
            _write_json(out / "imitation_log.json",
                        {"config_digest": cfg.digest, "epoch_losses": imitation_losses})
            save_checkpoint(params, out / "ckpt_imitation.mesa")

    log_path = out / "train_log.jsonl"
    mode = "a" if args.resume and log_path.exists() else "w"
    with open(log_path, mode) as fh:
        if mode == "w":
            fh.write(json.dumps({"config_digest": cfg.digest}) + "\n")

        def log_cb(entry):
            fh.write(json.dumps(entry) + "\n")

        rl_train(params, cfg.training, cfg.scenario, env, buffer=buffer,
                 out_dir=out, log_cb=log_cb, start_episode=start_episode, opt=opt)

    final = out / "ckpt_final.mesa"
    save_checkpoint(params, final)
    print(final)
    return 0


class _PolicyFactory:
    """Picklable zero-argument policy builder for parallel evaluation."""

    def __init__(self, kind: str, params, env: CrowdEnv, gamma: float, v_norm: float):
        self.kind = kind
        self.params = params
        self.env = env
        self.gamma = gamma
        self.v_norm = v_norm

    def __call__(self):
        if self.kind == "orca":
            return OrcaRobotPolicy(self.env)
        return NetworkPolicy(self.params, self.env, gamma=self.gamma, v_norm=self.v_norm)


def cmd_eval(args) -> int:
    cfg = _load_run_config(args)
    out = _out_dir(cfg, args)
    env = _make_env(cfg)
    gamma, v_norm = cfg.training.gamma, cfg.gamma_v_norm

    if args.policy == "net":
        ckpt = args.checkpoint or cfg.paths.checkpoint
        if ckpt is None:
            raise UsageError("--policy net needs --checkpoint or paths.checkpoint")
        params = load_checkpoint(ckpt)
    elif args.policy == "untrained":
        params = NetworkParameters.init(cfg.seed)
    else:
        params = None
    factory = _PolicyFactory(args.policy, params, env, gamma, v_norm)

    metrics, episodes = evaluate_policy(
        factory, cfg.scenario, args.episodes, cfg.seed, env,
        gamma=gamma, v_norm=v_norm, workers=args.workers,
    )
    per_episode = [
        {
            "episode": i,
            "outcome": e.outcome,
            "success": float(e.outcome == "success"),
            "collision": float(e.outcome == "collision"),
            "timeout": float(e.outcome == "timeout"),
            "nav_time": e.nav_time,
            "path_length": e.path_length,
            "return": e.cumulative_reward,
        }
        for i, e in enumerate(episodes)
    ]
    report = {"config_digest": cfg.digest, "policy": args.policy,
              "n_episodes": args.episodes, **metrics.as_dict(), "per_episode": per_episode}
    _write_json(out / "metrics.json", report)

    rows = []
    for i, e in enumerate(episodes):
        world = generate_scenario(replace(cfg.scenario, seed=cfg.seed + i))
        rows.append({
            "episode": i,
            "outcome": e.outcome,
            "start": [float(x) for x in world.robot.position],
            "goal": [float(x) for x in world.robot.goal],
            "trajectory": [[t, x, y] for t, x, y in e.trajectory],
            "records": e.records,
        })
    _write_jsonl(out / "trajectories.jsonl",
                 {"config_digest": cfg.digest, "policy": args.policy, "n_episodes": args.episodes},
                 rows)
    print(json.dumps({k: report[k] for k in ("SR", "CR", "TO", "NT", "PL", "AR")}))
    return 0


def cmd_nav(args) -> int:
    cfg = _load_run_config(args)
    out = _out_dir(cfg, args)
    env = _make_env(cfg)
    map_path = args.map or cfg.paths.map
    if map_path is None:
        raise UsageError("nav needs --map or paths.map")
    grid = OccupancyGrid.load(map_path)
    ckpt = args.checkpoint or cfg.paths.checkpoint
    if ckpt is None:
        raise UsageError("nav needs --checkpoint or paths.checkpoint")
    params = load_checkpoint(ckpt)
    policy = NetworkPolicy(params, env, gamma=cfg.training.gamma, v_norm=cfg.gamma_v_norm)
    world = generate_scenario(cfg.scenario)
    result = run_navigation(policy, world, grid, env,
                            d_sub=cfg.planner.d_sub,
                            deviation_threshold=cfg.planner.deviation_threshold)
    _write_jsonl(out / "nav_records.jsonl", {"config_digest": cfg.digest}, result["records"])
    _write_json(out / "nav.json", {
        "config_digest": cfg.digest,
        "status": result["status"],
        "steps": result["steps"],
        "subgoals": result["subgoals"],
    })
    print(f"nav: status={result['status']} steps={result['steps']}")
    return 0


def cmd_plan(args) -> int:
    cfg = _load_run_config(args)
    out = _out_dir(cfg, args)
    map_path = args.map or cfg.paths.map
    if map_path is None:
        raise UsageError("plan needs --map or paths.map")
    grid = OccupancyGrid.load(map_path)
    try:
        start = np.array([float(v) for v in args.start.split(",")])
        goal = np.array([float(v) for v in args.goal.split(",")])
        if start.shape != (2,) or goal.shape != (2,):
            raise ValueError
    except ValueError:
        raise UsageError("--start/--goal must be 'x,y'")
    try:
        path = dijkstra_path(grid, start, goal)
    except ValueError as exc:
        raise UsageError(str(exc))
    _write_json(out / "path.json", {
        "config_digest": cfg.digest,
        "cost": path.cost,
        "waypoints": [[float(x), float(y)] for x, y in path.waypoints],
    })
    print(f"plan: waypoints={len(path.waypoints)} cost={path.cost:.3f}")
    return 0


_STAT_METRICS = ["success", "collision", "timeout", "nav_time", "return"]


def cmd_stats(args) -> int:
    reports = []
    for p in (args.report_a, args.report_b):
        try:
            reports.append(json.loads(Path(p).read_text()))
        except json.JSONDecodeError as exc:
            raise UsageError(f"{p}: invalid JSON ({exc})")
    ra, rb = reports
    if ra.get("n_episodes") != rb.get("n_episodes"):
        raise UsageError(
            f"reports disagree on n_episodes: {ra.get('n_episodes')} vs {rb.get('n_episodes')}"
        )
    rows = {}
    for metric in _STAT_METRICS:
        a = [e[metric] for e in ra["per_episode"]]
        b = [e[metric] for e in rb["per_episode"]]
        r = mann_whitney_u(a, b)
        rows[metric] = {"U": r.U, "p_value": r.p_value, "RBC": r.RBC,
                        "CLES": r.CLES, "method": r.method}
    payload = {
        "config_digest_a": ra.get("config_digest", ""),
        "config_digest_b": rb.get("config_digest", ""),
        "n_episodes": ra.get("n_episodes"),
        "metrics": rows,
    }
    out = Path(args.out) if args.out else Path(".")
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "stats.json", payload)
    print(json.dumps({m: rows[m]["p_value"] for m in _STAT_METRICS}))
    return 0


def _load_trajectory_file(path: Path) -> tuple[dict, list[dict]]:
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise UsageError(f"{path}: empty trajectory log")
    header = json.loads(lines[0])
    episodes = [json.loads(ln) for ln in lines[1:]]
    if not episodes:
        raise UsageError(f"{path}: no episodes in trajectory log")
    return header, episodes


def cmd_plot(args) -> int:
    out = Path(args.out) if args.out else Path(".")
    out.mkdir(parents=True, exist_ok=True)
    named = []
    dev_rows = []
    per_method: dict[str, list[float]] = {}
    digest = ""
    for fpath in args.files:
        p = Path(fpath)
        header, episodes = _load_trajectory_file(p)
        digest = digest or header.get("config_digest", "")
        method = header.get("policy") or p.stem
        per_method.setdefault(method, [])
        for ep in episodes:
            traj = [tuple(s) for s in ep["trajectory"]]
            named.append((method, traj))
            start = np.array(ep.get("start", traj[0][1:]))
            goal = np.array(ep.get("goal", traj[-1][1:]))
            devs, _ = path_deviation(traj, start, goal)
            per_method[method].extend(devs)
            for k, d in enumerate(devs):
                dev_rows.append({"method": method, "episode": ep.get("episode", 0),
                                 "sample": k, "deviation": f"{d:.6f}"})
    trajectory_overlay_svg(named, out / "trajectories.svg", digest)
    deviation_csv(dev_rows, out / "deviation.csv", digest)
    deviation_spread_svg(per_method, out / "deviation_spread.svg", digest)
    print(f"plot: methods={len(per_method)} episodes={len(named)} out={out}")
    return 0


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="socialnav", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        if config_required:
            p.add_argument("--config", required=True, help="run configuration JSON")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
        p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("demo", help="generate ORCA demonstration buffer")
    common(p)
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("train", help="imitation fit then TD training")
    common(p)
    p.add_argument("--demos", default=None, help="demonstration buffer path")
    p.add_argument("--skip-imitation", action="store_true")
    p.add_argument("--resume", default=None, help="checkpoint (.mesa) to resume TD training from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="batch evaluation to metrics + trajectories")
    common(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--episodes", type=int, default=500)
    p.add_argument("--policy", choices=["net", "orca", "untrained"], default="net")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("nav", help="planner-coupled navigation run")
    common(p)
    p.add_argument("--map", default=None, help="occupancy map file")
    p.add_argument("--checkpoint", default=None)
    p.set_defaults(func=cmd_nav)

    p = sub.add_parser("plan", help="grid path between two points")
    common(p)
    p.add_argument("--map", default=None, help="occupancy map file")
    p.add_argument("--start", required=True, help="x,y")
    p.add_argument("--goal", required=True, help="x,y")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("stats", help="U-test between two metrics reports")
    common(p, config_required=False)
    p.add_argument("report_a")
    p.add_argument("report_b")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("plot", help="trajectory overlay and deviation spread")
    common(p, config_required=False)
    p.add_argument("files", nargs="+", help="trajectory JSONL logs")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (UsageError, ConfigError, CheckpointError, NoPathError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DivergenceError, NumericError) as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
