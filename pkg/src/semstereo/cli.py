"""Command-line client for the reconstruction service.

Every subcommand builds a request from flags (optionally seeded from a JSON
config file; flags win) and posts it to the service — in-process by
default, or to a remote instance via ``--server``.  Artifacts are written
by the service into the requested output directory.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path


def _client(server: str | None):
    if server:
        import httpx

        return httpx.Client(base_url=server.rstrip("/"), timeout=None)
    from fastapi.testclient import TestClient

    from .service.app import app

    return TestClient(app)


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 1


def _post(args, path: str, body: dict):
    """POST to the service; returns the JSON payload or an error string."""
    with _client(args.server) as client:
        try:
            response = client.post(path, json=body)
        except Exception as exc:  # connection refused, bad URL, ...
            return None, f"service unreachable: {exc}"
    if response.status_code != 200:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        if not isinstance(detail, str):
            detail = json.dumps(detail)
        return None, detail
    return response.json(), None


def _config_dict(args) -> dict:
    """The config file's contents with paths resolved against its directory."""
    if not getattr(args, "config", None):
        return {}
    path = Path(args.config)
    if not path.is_file():
        raise FileNotFoundError(f"config not found: {path}")
    data = json.loads(path.read_text())
    for key in ("scene", "out"):
        if key in data and not Path(data[key]).is_absolute():
            data[key] = str(path.parent / data[key])
    return data


def _merge_body(args, sections: dict[str, dict[str, str]]) -> tuple[dict, str | None]:
    """Config-file values overridden by whatever flags were actually given.

    ``sections`` maps request sections to {flag attribute -> request field};
    the empty section name holds top-level fields.
    """
    try:
        body = _config_dict(args)
    except (OSError, ValueError) as exc:
        return {}, str(exc)
    for section, fields in sections.items():
        for attr, field in fields.items():
            value = getattr(args, attr, None)
            if value is None:
                continue
            if section:
                body.setdefault(section, {})[field] = value
            else:
                body[field] = value
    for required in ("scene", "out"):
        if required not in body:
            return {}, f"--{required} is required (flag or config file)"
    # request bodies only carry the stage's own sections; drop the rest
    return body, None


def _take(body: dict, *keys: str) -> dict:
    return {key: body[key] for key in keys if key in body}


def _print_pairs(payload: dict) -> None:
    for ref in sorted(payload["by_ref"], key=int):
        for entry in payload["by_ref"][ref]:
            print(
                f"{ref} {entry['target']} {entry['shared']} "
                f"{entry['angle_deg']:.6f} {entry['baseline']:.6f}"
            )


def _print_map_stage(payload: dict) -> None:
    for rid, path in zip(payload["views"], payload["files"]):
        frac = payload["valid_fraction"][str(rid)]
        print(f"wrote {path} (valid {frac:.1%})")


def _print_fusion(points: int, per_class: dict, files: list[str]) -> None:
    print(f"wrote {files[0]} ({points} points)")
    for name in sorted(per_class):
        print(f"  {name}: {per_class[name]}")
    for path in files[1:]:
        print(f"wrote {path}")
    if points == 0:
        print("warning: fused cloud is empty", file=sys.stderr)


def _cmd_pairs(args) -> int:
    body, err = _merge_body(args, {"": {"scene": "scene", "out": "out"}})
    if err:
        return _fail(err)
    payload, err = _post(args, "/pairs", _take(body, "scene", "out", "pairs"))
    if err:
        return _fail(err)
    _print_pairs(payload)
    return 0


def _cmd_depth(args) -> int:
    body, err = _merge_body(
        args,
        {
            "": {
                "scene": "scene",
                "out": "out",
                "jobs": "jobs",
                "ref": "ref",
                "seed": "seed",
            },
            "match": {"window": "window", "iterations": "iterations"},
        },
    )
    if err:
        return _fail(err)
    if body.get("seed") is not None:  # the one seed drives the matcher
        body.setdefault("match", {})["seed"] = body["seed"]
    payload, err = _post(
        args, "/depth", _take(body, "scene", "out", "match", "jobs", "ref")
    )
    if err:
        return _fail(err)
    _print_map_stage(payload)
    return 0


def _cmd_filter(args) -> int:
    body, err = _merge_body(
        args,
        {
            "": {"scene": "scene", "out": "out"},
            "filter": {"k": "k", "tau": "tau"},
        },
    )
    if err:
        return _fail(err)
    payload, err = _post(args, "/filter", _take(body, "scene", "out", "filter"))
    if err:
        return _fail(err)
    _print_map_stage(payload)
    return 0


def _cmd_fuse(args) -> int:
    body, err = _merge_body(
        args,
        {
            "": {
                "scene": "scene",
                "out": "out",
                "classes": "classes",
                "strict": "strict",
                "split": "split",
            },
            "filter": {"k": "k", "tau": "tau"},
        },
    )
    if err:
        return _fail(err)
    payload, err = _post(
        args,
        "/fuse",
        _take(body, "scene", "out", "filter", "classes", "strict", "split"),
    )
    if err:
        return _fail(err)
    _print_fusion(payload["points"], payload["per_class"], payload["files"])
    return 0


def _cmd_run(args) -> int:
    body, err = _merge_body(
        args,
        {
            "": {
                "scene": "scene",
                "out": "out",
                "classes": "classes",
                "strict": "strict",
                "split": "split",
                "seed": "seed",
                "jobs": "jobs",
            },
            "match": {"window": "window", "iterations": "iterations"},
            "filter": {"k": "k", "tau": "tau"},
        },
    )
    if err:
        return _fail(err)
    payload, err = _post(
        args,
        "/run",
        _take(
            body, "scene", "out", "pairs", "match", "filter",
            "classes", "strict", "split", "seed", "jobs",
        ),
    )
    if err:
        return _fail(err)
    print(f"pairs: {payload['pairs']['total']}")
    for rid, frac in sorted(payload["filter"]["valid_fraction"].items(), key=lambda i: int(i[0])):
        before = payload["depth"]["valid_fraction"][rid]
        print(f"view {rid}: valid {before:.1%} -> {frac:.1%}")
    fusion = payload["fusion"]
    _print_fusion(fusion["points"], fusion["per_class"], fusion["files"])
    print(f"report written to {Path(payload['out']) / 'report.json'}")
    return 0


def _cmd_synth(args) -> int:
    if not args.spec or not args.out:
        return _fail("--spec and --out are required")
    body = {"spec": args.spec, "out": args.out}
    if args.seed is not None:
        body["seed"] = args.seed
    payload, err = _post(args, "/synth", body)
    if err:
        return _fail(err)
    print(f"wrote {payload['manifest']} ({payload['views']} views)")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def _add_io_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scene", help="scene manifest (scene.json)")
    p.add_argument("--out", help="working directory for stage artifacts")
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--server", help="base URL of a running service (default: in-process)")


def _add_match_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="seed for all randomness")
    p.add_argument("--jobs", type=int, help="parallel depth-map workers")
    p.add_argument("--window", type=int, help="matching half-window in pixels")
    p.add_argument("--iterations", type=int, help="propagation sweeps")


def _add_filter_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, help="minimum confirming neighbors")
    p.add_argument("--tau", type=float, help="relative depth tolerance")


def _add_fuse_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--classes",
        type=lambda s: [part.strip() for part in s.split(",") if part.strip()],
        help="comma-separated class names (or ids) to keep",
    )
    p.add_argument(
        "--strict", action="store_true", default=None,
        help="drop confirmations whose labels disagree",
    )
    p.add_argument(
        "--split", action="store_true", default=None,
        help="additionally write one PLY per present class",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semstereo",
        description="Semantic multi-view stereo: depth maps, filtering, fusion.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pairs", help="select stereo pairs and print them")
    _add_io_flags(p)
    p.set_defaults(func=_cmd_pairs)

    p = sub.add_parser("depth", help="compute depth maps for reference views")
    _add_io_flags(p)
    _add_match_flags(p)
    p.add_argument("--ref", type=int, help="single reference view id (default: all)")
    p.set_defaults(func=_cmd_depth)

    p = sub.add_parser("filter", help="enforce cross-view depth consistency")
    _add_io_flags(p)
    _add_filter_flags(p)
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("fuse", help="merge depth maps into labeled point clouds")
    _add_io_flags(p)
    _add_filter_flags(p)
    _add_fuse_flags(p)
    p.set_defaults(func=_cmd_fuse)

    p = sub.add_parser("run", help="full pipeline: pairs, depth, filter, fuse")
    _add_io_flags(p)
    _add_match_flags(p)
    _add_filter_flags(p)
    _add_fuse_flags(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("synth", help="generate a synthetic scene from a layout spec")
    p.add_argument("--spec", help="JSON layout spec")
    p.add_argument("--out", help="output scene directory")
    p.add_argument("--seed", type=int, help="override the layout spec's seed")
    p.add_argument("--server", help="base URL of a running service")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
