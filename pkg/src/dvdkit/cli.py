"""``dvdkit`` command line: servers, benchmark, router training, loss checks."""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .errors import DvdError

log = logging.getLogger("dvdkit")


def _addr(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected HOST:PORT, got {text!r}")
    return host, int(port)


def _config(args, **overrides):
    from .serving.config import load_config

    return load_config(args.config, **overrides)


def cmd_serve(args) -> int:
    from .serving import LanguageServer, MonolithServer, VisionServer

    if args.command == "serve-vision":
        cfg = _config(args, vision_port=args.port, topology="dvd_vir" if args.vir else None)
        server = VisionServer(cfg, args.language)
    elif args.command == "serve-lang":
        server = LanguageServer(_config(args, language_port=args.port))
    else:
        server = MonolithServer(_config(args, monolith_port=args.port, topology="monolith"))
    host, port = server.address
    print(f"{server.name} server listening on {host}:{port}", flush=True)
    server.serve_forever()
    return 0


def cmd_bench(args) -> int:
    from .bench import LoadSpec, calibrate_rate, emit_report, run_benchmark

    cfg = _config(args)
    topologies = tuple(dict.fromkeys(args.topology or ("monolith", "dvd", "dvd_vir")))
    rate = args.rate
    if rate is None:
        rate = calibrate_rate(args.tier, cfg, args.mode, args.seed)
        print(f"calibrated rate: {rate:.2f} req/s", file=sys.stderr)
    spec = LoadSpec(rate, args.duration, args.tier, args.decode_len, args.seed)
    reports = run_benchmark(spec, topologies, cfg, runs=args.runs, mode=args.mode)
    print(emit_report(reports, "table"), end="")
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            fh.write(emit_report(reports, "csv"))
    if args.trace:
        for r in reports:
            if r.runs:
                r.runs[0].trace.write(f"{args.trace}.{r.topology}.jsonl")
    return 0 if all(r.valid and r.failure_count == 0 for r in reports) else 1


def read_router_data(path) -> list[tuple[np.ndarray, int]]:
    """JSONL rows of ``{"features": [...], "label": 0|1}`` or
    ``{"features": [...], "loss_16": x, "loss_4": y}``; the second kind is
    labelled with the batch percentile rule."""
    from .vico import LossRatioWindow, label_patches

    labelled, pending = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            feats = np.asarray(rec["features"], dtype=np.float64)
            if "label" in rec:
                labelled.append((feats, int(rec["label"])))
            elif "loss_16" in rec and "loss_4" in rec:
                pending.append((feats, (float(rec["loss_16"]), float(rec["loss_4"]))))
            else:
                raise DvdError(f"{path}:{lineno}: need 'label' or 'loss_16'/'loss_4'")
    if pending:
        labels = label_patches([p for _, p in pending], LossRatioWindow())
        labelled += [(f, lab) for (f, _), lab in zip(pending, labels) if lab is not None]
    return labelled


def cmd_train_router(args) -> int:
    from .vico import router_accuracy, save_router, train_router

    if args.data:
        data = read_router_data(args.data)
    else:
        from .task import build_router_dataset

        data = build_router_dataset(args.synthetic, args.seed).pairs()
    params = train_router(data, epochs=args.epochs, lr=args.lr)
    save_router(params, args.out)
    acc = router_accuracy(params, data)
    print(f"trained router on {len(data)} patches, dim={params.dim}, train accuracy={acc:.4f}")
    return 0


def cmd_check_losses(args) -> int:
    from .rl.gradcheck import run_suite

    results = run_suite(n_fixtures=args.fixtures, seed=args.seed)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dvdkit", description=__doc__)
    p.add_argument("--config", help="INI config file (DVD_CONFIG overrides)")
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)

    for name, help_ in (("serve-vision", "run the vision server"),
                        ("serve-lang", "run the language server"),
                        ("serve-monolith", "run the single-server baseline")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--port", type=int, default=None)
        if name == "serve-vision":
            s.add_argument("--language", type=_addr, default=None, help="language server HOST:PORT")
            s.add_argument("--vir", action="store_true", help="enable the resolution router")
        s.set_defaults(func=cmd_serve)

    b = sub.add_parser("bench", help="open-loop throughput benchmark")
    b.add_argument("--topology", action="append", choices=("monolith", "dvd", "dvd_vir"),
                   help="repeatable; default all three")
    b.add_argument("--tier", type=int, choices=(448, 896, 1344), default=896)
    b.add_argument("--rate", type=float, default=None, help="req/s; default 2x monolith capacity")
    b.add_argument("--duration", type=float, default=10.0)
    b.add_argument("--decode-len", type=int, default=16)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--runs", type=int, default=1)
    b.add_argument("--mode", choices=("process", "thread"), default="process")
    b.add_argument("--out", help="write CSV report here")
    b.add_argument("--trace", help="write span logs to PREFIX.<topology>.jsonl")
    b.set_defaults(func=cmd_bench)

    t = sub.add_parser("train-router", help="fit the resolution router")
    src = t.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="JSONL training records")
    src.add_argument("--synthetic", type=int, metavar="N", help="build N tiles of the synthetic task")
    t.add_argument("--out", required=True)
    t.add_argument("--epochs", type=int, default=500)
    t.add_argument("--lr", type=float, default=0.5)
    t.add_argument("--seed", type=int, default=0)
    t.set_defaults(func=cmd_train_router)

    c = sub.add_parser("check-losses", help="finite-difference gradient checks")
    c.add_argument("--fixtures", type=int, default=20)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_check_losses)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DvdError, OSError, ValueError, KeyError) as exc:
        print(f"dvdkit: error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
