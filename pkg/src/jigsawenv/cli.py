"""Operator entry points: corpus/manifest generation, evaluation, trajectory
rollout + replay validation, single-puzzle solving, serving, and the GRPO
gradient self-check.

Exit codes: 0 success, 1 validation/check failure, 2 usage error. Data goes
to files or stdout, diagnostics to stderr. Every generation and evaluation
command takes an explicit --seed so reruns are bit-reproducible.
"""

import argparse
import base64
import dataclasses
import json
import logging
import signal
import sys
import threading

from . import __version__
from .agents import AGENT_FACTORIES, run_episode
from .config import RunConfig, load_run_config
from .corpus import build_synthetic_corpus
from .dataset import (
    DatasetManifest,
    SynthesisConfig,
    derive_seed,
    synthesize_puzzles,
    validate_trajectory,
)
from .episode import new_episode
from .errors import JigsawError, SchemaError
from .evaluate import emit_report, evaluate_by_name, records_table
from .grpo import gradient_check
from .imageops import load_image
from .trajectory import save_trajectory

log = logging.getLogger("jigsawenv")


def _load_config(args) -> RunConfig:
    if getattr(args, "config", None):
        return load_run_config(args.config)
    return RunConfig()


def _parse_levels(text: str):
    return tuple(int(x) for x in text.split(",") if x != "")


def _parse_mixture(text):
    if not text:
        return None
    mixture = {}
    for part in text.split(","):
        key, _, value = part.partition("=")
        mixture[key.strip()] = float(value)
    return mixture


# --- subcommands -------------------------------------------------------------

def cmd_corpus(args) -> int:
    written = build_synthetic_corpus(
        args.out, per_category=args.per_category, seed=args.seed,
        size=(args.size, args.size),
    )
    total = sum(len(v) for v in written.values())
    print(f"wrote {total} images under {args.out}")
    return 0


def cmd_gen(args) -> int:
    cfg = SynthesisConfig(
        m=args.m,
        levels=_parse_levels(args.levels),
        per_level_count=args.per_level,
        seed=args.seed,
        mixture=_parse_mixture(args.mixture),
        count=args.count,
    )
    manifest = synthesize_puzzles(args.corpus, cfg)
    manifest.save(args.out)
    by_level = {}
    for entry in manifest.entries:
        by_level[entry.level] = by_level.get(entry.level, 0) + 1
    print(f"wrote {len(manifest.entries)} entries to {args.out}")
    for level in sorted(by_level):
        print(f"  L{level}: {by_level[level]}")
    return 0


def cmd_eval(args) -> int:
    run_cfg = _load_config(args)
    manifest = DatasetManifest.load(args.manifest)
    records = evaluate_by_name(
        args.agent,
        manifest,
        T=args.T if args.T is not None else run_cfg.T,
        episodes_per_level=args.episodes_per_level,
        reward_cfg=run_cfg.reward,
        agent_seed=args.seed,
        jobs=args.jobs,
    )
    csv_text, table_text = emit_report(records, args.out_csv, args.out_table)
    print(table_text)
    return 0


def cmd_rollout(args) -> int:
    run_cfg = _load_config(args)
    manifest = DatasetManifest.load(args.manifest)
    entries = manifest.entries[: args.limit] if args.limit else manifest.entries
    factory = AGENT_FACTORIES[args.agent]
    written = []
    for index, entry in enumerate(entries):
        ep = new_episode(
            load_image(entry.image_path),
            m=entry.m,
            level=entry.level,
            seed=entry.seed,
            T=args.T if args.T is not None else run_cfg.T,
            reward_cfg=run_cfg.reward,
        )
        run_episode(ep, factory(derive_seed(args.seed, "rollout", index)))
        out_dir = f"{args.out_dir}/ep_{index:04d}"
        save_trajectory(ep.to_trajectory(), ep.all_images(), out_dir)
        written.append(out_dir)
    print(f"wrote {len(written)} trajectories under {args.out_dir}")
    return 0


def cmd_replay(args) -> int:
    failures = 0
    for path in args.paths:
        try:
            report = validate_trajectory(path)
        except SchemaError as exc:
            print(f"{path}: SCHEMA ERROR: {exc}")
            failures += 1
            continue
        print(report.summary())
        if not report.clean:
            failures += 1
    if failures:
        print(f"{failures} of {len(args.paths)} trajectories failed validation",
              file=sys.stderr)
    return 1 if failures else 0


def cmd_solve(args) -> int:
    run_cfg = _load_config(args)
    ep = new_episode(
        load_image(args.image),
        m=args.m,
        level=args.level,
        seed=args.seed,
        T=args.T if args.T is not None else run_cfg.T,
        reward_cfg=run_cfg.reward,
    )
    run_episode(ep, AGENT_FACTORIES[args.agent](derive_seed(args.seed, "solve")))
    print(f"status={ep.status} turns={ep.t} score={ep.score}")
    print(f"reward={ep.reward.to_dict()}")
    if args.out_dir:
        save_trajectory(ep.to_trajectory(), ep.all_images(), args.out_dir)
        print(f"trajectory saved to {args.out_dir}")
    return 0


def cmd_serve(args) -> int:
    import os

    from .server import serve

    run_cfg = _load_config(args)

    def setting(flag_value, env_name, cast):
        # precedence: flag > environment variable > config file value
        if flag_value is not None:
            return flag_value
        raw = os.environ.get(env_name)
        return cast(raw) if raw is not None else None

    server_cfg = dataclasses.replace(
        run_cfg.server,
        **{
            key: value
            for key, value in {
                "host": setting(args.host, "JIGSAWENV_HOST", str),
                "tcp_port": setting(args.tcp_port, "JIGSAWENV_TCP_PORT", int),
                "http_port": setting(args.http_port, "JIGSAWENV_HTTP_PORT", int),
                "corpus_dir": setting(args.corpus, "JIGSAWENV_CORPUS", str),
                "ttl_seconds": setting(args.ttl, "JIGSAWENV_TTL", float),
                "max_episodes": setting(args.max_episodes, "JIGSAWENV_MAX_EPISODES", int),
                "step_delay_ms": setting(args.step_delay_ms, "JIGSAWENV_STEP_DELAY_MS", int),
            }.items()
            if value is not None
        },
    )
    feedback_side = setting(
        args.max_feedback_side, "JIGSAWENV_MAX_FEEDBACK_SIDE", int
    )
    episode_cfg = run_cfg.episode
    if feedback_side is not None:
        episode_cfg = dataclasses.replace(episode_cfg, max_feedback_side=feedback_side)
    cfg = dataclasses.replace(run_cfg, server=server_cfg, episode=episode_cfg)
    service = serve(cfg)
    host, tcp_port = service.tcp_address
    _, http_port = service.http_address
    print(f"tcp://{host}:{tcp_port}  http://{host}:{http_port}", file=sys.stderr)

    stop = threading.Event()

    def handle_signal(signum, frame):
        log.info("signal %s: draining in-flight steps", signum)
        stop.set()

    signal.signal(signal.SIGINT, handle_signal)
    signal.signal(signal.SIGTERM, handle_signal)
    stop.wait()
    service.stop()
    return 0


def cmd_grpocheck(args) -> int:
    worst = 0.0
    for seed in range(args.seeds):
        err = gradient_check(
            seed=seed, h=args.h, kl_coeff=args.kl_coeff, inject_bug=args.inject_bug
        )
        worst = max(worst, err)
        print(f"seed {seed:>3}: max relative error {err:.3e}")
    print(f"worst over {args.seeds} seeds: {worst:.3e} (tolerance {args.tolerance:.1e})")
    return 0 if worst <= args.tolerance else 1


def cmd_fixtures(args) -> int:
    from .agents import OracleAgent, oracle_view
    from .corpus import gradient_card
    from .episode import step as step_episode
    import random as random_mod

    fixtures = []
    for index in range(args.count):
        rng = random_mod.Random(derive_seed(args.seed, "fixture-image", index))
        img = gradient_card(args.image_size, args.image_size, rng)
        seed = derive_seed(args.seed, "fixture", index)
        level = index % (args.m * args.m - 1)
        ep = new_episode(img, m=args.m, level=level, seed=seed, T=args.T)
        agent = OracleAgent()
        turns = []
        while ep.status == "running":
            text = agent.next_turn(oracle_view(ep))
            turns.append(text)
            step_episode(ep, text)
        fixtures.append(
            {
                "m": args.m,
                "level": level,
                "seed": seed,
                "T": args.T,
                "image_b64": base64.b64encode(img.to_png_bytes()).decode("ascii"),
                "turns": turns,
                "expected": {
                    "gt_labels": list(ep.gt),
                    "reward": ep.reward.to_dict(),
                    "status": ep.status,
                },
            }
        )
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump({"v": 1, "fixtures": fixtures}, fh, indent=2, sort_keys=True)
    print(f"wrote {len(fixtures)} fixtures to {args.out}")
    return 0


# --- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jigsawenv",
        description="Interactive jigsaw environment: generate, evaluate, "
        "validate, solve, serve.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("corpus", help="materialize the bundled synthetic corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--per-category", type=int, default=34)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--size", type=int, default=96, help="image side in px")
    p.set_defaults(func=cmd_corpus)

    p = sub.add_parser("gen", help="synthesize a puzzle manifest from a corpus")
    p.add_argument("--corpus", required=True, help="image directory")
    p.add_argument("--out", required=True, help="manifest path (.jsonl)")
    p.add_argument("--m", type=int, default=2, help="grid order")
    p.add_argument("--levels", default="0", help="comma list, e.g. 0,1,2")
    p.add_argument("--per-level", type=int, default=1, dest="per_level")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--mixture", default=None,
                   help="category fractions, e.g. high_res_search=0.4,text_structured=0.33,dense_real_world=0.27")
    p.add_argument("--count", type=int, default=None,
                   help="images to select (required with --mixture)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("eval", help="evaluate an agent over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--agent", required=True, choices=sorted(AGENT_FACTORIES))
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-csv", default="eval.csv")
    p.add_argument("--out-table", default="eval.txt")
    p.add_argument("--episodes-per-level", type=int, default=None)
    p.add_argument("--T", type=int, default=None, help="max turns")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--config", default=None, help="run config JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("rollout", help="record agent trajectories to disk")
    p.add_argument("--manifest", required=True)
    p.add_argument("--agent", required=True, choices=sorted(AGENT_FACTORIES))
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--T", type=int, default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("replay", help="validate recorded trajectories by replay")
    p.add_argument("paths", nargs="+", help="trajectory dirs or trajectory.json paths")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("solve", help="run one episode on one image")
    p.add_argument("--image", required=True)
    p.add_argument("--agent", default="greedy", choices=sorted(AGENT_FACTORIES))
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--level", type=int, default=0)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--T", type=int, default=None)
    p.add_argument("--out-dir", default=None, help="save the trajectory here")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("serve", help="run the environment service")
    p.add_argument("--host", default=None)
    p.add_argument("--tcp-port", type=int, default=None)
    p.add_argument("--http-port", type=int, default=None)
    p.add_argument("--corpus", default=None, help="serve episodes from this image dir")
    p.add_argument("--ttl", type=float, default=None, help="idle episode TTL seconds")
    p.add_argument("--max-episodes", type=int, default=None)
    p.add_argument("--step-delay-ms", type=int, default=None,
                   help="artificial step delay (testing)")
    p.add_argument("--max-feedback-side", type=int, default=None,
                   help="cap feedback images to this longest side in px")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("grpocheck", help="verify the GRPO analytic gradient")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--h", type=float, default=1e-5, help="finite-difference step")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--kl-coeff", type=float, default=None,
                   help="override the KL coefficient (default config value 0.0)")
    p.add_argument("--inject-bug", action="store_true",
                   help="negative control: corrupt the analytic gradient")
    p.set_defaults(func=cmd_grpocheck)

    p = sub.add_parser("fixtures", help="export oracle episode fixtures (client SDK tests)")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--T", type=int, default=8)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--image-size", type=int, default=64)
    p.set_defaults(func=cmd_fixtures)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except JigsawError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
