"""Example scripted agent driving a local environment server.

Replays oracle swap plans from a fixture file exported by the environment
CLI (`jigsawenv fixtures --out fixtures.json --count 20 --seed 77`), records
each episode, and reports the rewards.

Usage:
    python -m jigsaw_client.example_agent --addr 127.0.0.1:7402 \
        --fixtures fixtures.json [--record-dir captures/]
"""

import argparse
import json
import sys

from .client import connect


def run(addr: str, fixtures_path: str, record_dir: str = None, limit: int = None) -> int:
    with open(fixtures_path, encoding="utf-8") as fh:
        doc = json.load(fh)
    fixtures = doc["fixtures"][:limit] if limit else doc["fixtures"]
    client = connect(addr)
    solved = 0
    for index, fixture in enumerate(fixtures):
        handle = client.new_episode(
            m=fixture["m"],
            level=fixture["level"],
            seed=fixture["seed"],
            T=fixture["T"],
            image_b64=fixture["image_b64"],
            record=record_dir is not None,
        )
        result = None
        for text in fixture["turns"]:
            result = client.step(handle, text)
        reward = result.reward or {}
        solved += int(reward.get("r_acc") == 1)
        print(
            f"episode {index}: status={result.status} "
            f"total={reward.get('total')} steps={reward.get('step_num')}"
        )
        if record_dir is not None:
            saved = handle.recorder.save(f"{record_dir}/ep_{index:04d}")
            print(f"  recorded {saved}")
    print(f"solved {solved}/{len(fixtures)}")
    return 0 if solved == len(fixtures) else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--addr", default="127.0.0.1:7402", help="server http address")
    parser.add_argument("--fixtures", required=True)
    parser.add_argument("--record-dir", default=None)
    parser.add_argument("--limit", type=int, default=None)
    args = parser.parse_args(argv)
    return run(args.addr, args.fixtures, args.record_dir, args.limit)


if __name__ == "__main__":
    sys.exit(main())
