"""Thin command-line client for the experiment service.

Every command goes through the service API: against a remote server when
``--server`` is given, otherwise against an in-process application via an
ASGI transport, which keeps single-machine usage a one-liner while the
logic stays behind the service endpoints.

Exit codes: 0 success, 2 invalid configuration, 3 runtime fault.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import httpx
import yaml


def _load_raw_config(path: str) -> dict:
    text = Path(path).read_text()
    if path.endswith(".json"):
        return json.loads(text)
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return yaml.safe_load(text)


class ServiceClient:
    """httpx client bound to a remote server or the in-process app."""

    def __init__(self, server: str | None = None):
        if server:
            self._client = httpx.Client(base_url=server, timeout=None)
        else:
            # sync client over the in-process ASGI app
            import warnings

            with warnings.catch_warnings():
                warnings.filterwarnings(
                    "ignore", message="Using `httpx` with `starlette.testclient`"
                )
                from starlette.testclient import TestClient

            from .service.app import create_app

            self._client = TestClient(create_app(), base_url="http://safetune.local")

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self._client.close()

    def request(self, method: str, url: str, **kwargs) -> httpx.Response:
        return self._client.request(method, url, **kwargs)


def cmd_validate(args) -> int:
    raw = _load_raw_config(args.config)
    with ServiceClient(args.server) as client:
        resp = client.request("POST", "/config/validate", json={"config": raw})
    body = resp.json()
    if body["valid"]:
        print("config ok")
        return 0
    for err in body["errors"]:
        print(f"config error: {err}", file=sys.stderr)
    return 2


def cmd_run(args) -> int:
    raw = _load_raw_config(args.config)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
    payload = {
        "config": raw,
        "algo": args.algo,
        "out_dir": str(Path(args.out).absolute()),
        "seeds": seeds,
    }
    with ServiceClient(args.server) as client:
        resp = client.request("POST", "/runs", params={"wait": True}, json=payload)
        if resp.status_code == 422:
            detail = resp.json().get("detail", [])
            for err in detail if isinstance(detail, list) else [detail]:
                print(f"config error: {err}", file=sys.stderr)
            return 2
        resp.raise_for_status()
        status = resp.json()
    if status["state"] != "done":
        print(f"run failed: {status.get('error')}", file=sys.stderr)
        return 3
    print(json.dumps(status["summary"], indent=2))
    return 0


def cmd_oracle_reachable(args) -> int:
    payload = {
        "benchmark": args.benchmark,
        "epsilon": args.epsilon,
        "resolution": args.resolution,
        "lipschitz": args.lipschitz,
    }
    if args.seed_theta:
        payload["seed_theta"] = json.loads(args.seed_theta)
    with ServiceClient(args.server) as client:
        resp = client.request("POST", "/oracle/reachable-set", json=payload)
    if resp.status_code == 422:
        print(f"oracle error: {resp.json().get('detail')}", file=sys.stderr)
        return 2
    resp.raise_for_status()
    body = resp.json()
    text = json.dumps(body, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
        print(f"wrote {args.out} ({body['count']} reachable points)")
    else:
        print(text)
    return 0


def cmd_preset(args) -> int:
    with ServiceClient(args.server) as client:
        resp = client.request("GET", f"/presets/{args.name}")
    if resp.status_code == 404:
        print(f"unknown preset {args.name!r}", file=sys.stderr)
        return 2
    resp.raise_for_status()
    text = yaml.safe_dump(resp.json(), sort_keys=False)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text, end="")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="safetune",
        description="Safe contextual Bayesian optimization experiments",
    )
    parser.add_argument(
        "--server", default=None,
        help="base URL of a running service (default: run in-process)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate-config", help="check a config file")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="run an experiment sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--algo", required=True, choices=["gosafeopt", "safeopt", "gp_ucb"])
    p.add_argument("--seeds", default=None, help="comma-separated seed list")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("oracle", help="ground-truth oracles")
    oracle_sub = p.add_subparsers(dest="oracle_command", required=True)
    pr = oracle_sub.add_parser("reachable-set", help="reachable safe region of a benchmark")
    pr.add_argument("--benchmark", required=True)
    pr.add_argument("--epsilon", type=float, required=True)
    pr.add_argument("--resolution", type=int, default=None)
    pr.add_argument("--lipschitz", type=float, default=None)
    pr.add_argument("--seed-theta", default=None, help="JSON list of seed points")
    pr.add_argument("--out", default=None)
    pr.set_defaults(func=cmd_oracle_reachable)

    p = sub.add_parser("preset", help="print a ready-made config as YAML")
    p.add_argument("name")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_preset)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
