"""Command-line entry points: serve a model, run a remote inference, bench.

Exit codes: 0 success, 2 configuration problem, 3 transport failure,
4 protocol or crypto failure.  `PROUD_LOG=debug|info|warning|error`
controls log verbosity.  A JSON config file (--config) supplies defaults;
explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import threading
import time

import numpy as np

from .backend import HEParams
from .errors import ConfigError, ProudError, TransportError
from .model_io import load_model, load_samples
from .protocol import ClientSession, ServerSession, WeightCache, run_inference
from .transport import Channel, connect, format_report, open_listener, report_csv

log = logging.getLogger("proud.cli")

DEFAULT_ADDR = "127.0.0.1:7700"


def _setup_logging():
    level = os.environ.get("PROUD_LOG", "warning").strip().lower()
    chosen = {"debug": logging.DEBUG, "info": logging.INFO, "warning": logging.WARNING,
              "error": logging.ERROR}.get(level, logging.WARNING)
    logging.basicConfig(level=chosen, format="%(asctime)s %(name)s %(levelname)s %(message)s")


def _parse_addr(addr: str) -> tuple[str, int]:
    host, sep, port = addr.rpartition(":")
    if not sep or not host:
        raise ConfigError(f"address must be host:port, got {addr!r}")
    try:
        return host, int(port)
    except ValueError:
        raise ConfigError(f"bad port in {addr!r}") from None


def _params_from_args(args) -> HEParams:
    if args.backend == "clear":
        return HEParams.clear(slot_count=args.ring_dim // 2)
    if args.backend == "ckks":
        return HEParams.ckks(ring_dim=args.ring_dim, scale_bits=args.scale_bits)
    raise ConfigError(f"unknown backend {args.backend!r}")


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file with default option values")
    p.add_argument("--backend", choices=("ckks", "clear"), default="ckks")
    p.add_argument("--ring-dim", type=int, default=8192)
    p.add_argument("--scale-bits", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="proud", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="host a model and answer inference sessions")
    _add_common(p)
    p.add_argument("--addr", default=DEFAULT_ADDR)
    p.add_argument("--model", required=True)
    p.add_argument("--max-sessions", type=int, default=0,
                   help="stop after this many sessions (0 = run until interrupted)")

    p = sub.add_parser("infer", help="run one inference against a server")
    _add_common(p)
    p.add_argument("--addr", default=DEFAULT_ADDR)
    p.add_argument("--input", required=True, help="sample CSV or idx/ubyte file")
    p.add_argument("--index", type=int, default=0, help="which sample to send")
    p.add_argument("--report", help="write the phase report CSV here")

    p = sub.add_parser("bench", help="timed loopback runs of a model")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--input", help="sample file; random inputs when omitted")
    p.add_argument("--trials", type=int, default=3)
    p.add_argument("--report", help="write per-trial phase CSV here")

    return parser


def _translate_role(argv: list[str]) -> list[str]:
    """Accept the flag form --role server/client as aliases for subcommands."""
    if "--role" not in argv:
        return argv
    out = list(argv)
    i = out.index("--role")
    if i + 1 >= len(out):
        raise ConfigError("--role needs a value (server or client)")
    role = out[i + 1]
    del out[i : i + 2]
    if role == "server":
        return ["serve"] + out
    if role == "client":
        return ["infer"] + out
    raise ConfigError(f"--role must be server or client, got {role!r}")


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        cfg = json.loads(open(known.config).read())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {known.config}: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    # defaults attach to the active subparser so `flag wins over config` holds
    dests = set()
    for action in parser._subparsers._group_actions[0].choices.values():  # noqa: SLF001
        action.set_defaults(**{k.replace("-", "_"): v for k, v in cfg.items()})
        dests.update(a.dest for a in action._actions)  # noqa: SLF001
    unknown = {k for k in cfg if k.replace("-", "_") not in dests}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")


def cmd_serve(args) -> int:
    model = load_model(args.model)
    host, port = _parse_addr(args.addr)
    srv = open_listener(host, port)
    cache = WeightCache()
    print(f"serving {args.model} on {host}:{port}", flush=True)
    threads: list[threading.Thread] = []
    done = 0

    def handle(sock, peer):
        ch = Channel(sock)
        t0 = time.perf_counter()
        sess = ServerSession(ch, model, cache=cache, workers=args.workers)
        try:
            sess.run()
            log.info(
                "session with %s complete: %.1f ms, sent %d B, recv %d B, %d ops",
                peer,
                (time.perf_counter() - t0) * 1e3,
                sess.transcript.total_bytes("sent"),
                sess.transcript.total_bytes("recv"),
                sum(sess.backend.op_counts.values()) if sess.backend else 0,
            )
        except ProudError as e:
            log.warning("session with %s failed: %s", peer, e)
        finally:
            ch.close()

    try:
        while args.max_sessions == 0 or done < args.max_sessions:
            sock, peer = srv.accept()
            done += 1
            th = threading.Thread(target=handle, args=(sock, peer), daemon=True)
            th.start()
            threads.append(th)
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
    finally:
        srv.close()
    for th in threads:
        th.join(timeout=60)
    return 0


def cmd_infer(args) -> int:
    samples = load_samples(args.input)
    if not 0 <= args.index < len(samples):
        raise ConfigError(f"--index {args.index} out of range ({len(samples)} samples)")
    sample = samples[args.index]
    params = _params_from_args(args)
    host, port = _parse_addr(args.addr)
    ch = connect(host, port)
    try:
        session = ClientSession(ch, params, sample.values.reshape(1, -1), seed=args.seed)
        result = session.run()
    finally:
        ch.close()
    logits = result.logits[0]
    print(format_report(result.report))
    print(f"argmax: {int(result.argmax[0])}")
    if sample.label is not None:
        print(f"label:  {sample.label}")
    print("logits:", np.array2string(logits, precision=5, separator=", "))
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(report_csv(result.report))
        print(f"report written to {args.report}")
    return 0


def cmd_bench(args) -> int:
    model = load_model(args.model)
    params = _params_from_args(args)
    if args.input:
        samples = load_samples(args.input, limit=args.trials)
        inputs = [s.values for s in samples]
    else:
        rng = np.random.default_rng(args.seed)
        inputs = [rng.uniform(-1.0, 1.0, model.input_dim) for _ in range(args.trials)]
    if args.trials < 1:
        raise ConfigError("--trials must be at least 1")

    csv_lines = ["trial,phase,latency_ms,comm_mb"]
    sums: dict[str, list[float]] = {}
    for t in range(args.trials):
        x = inputs[t % len(inputs)]
        result = run_inference(model, x, params=params, seed=args.seed + t, workers=args.workers)
        for row in result.report:
            csv_lines.append(f"{t},{row.phase},{row.latency_ms:.3f},{row.comm_mb:.6f}")
            acc = sums.setdefault(row.phase, [0.0, 0.0])
            acc[0] += row.latency_ms
            acc[1] += row.comm_mb
        total = result.report[-1]
        print(f"trial {t}: {total.latency_ms:9.2f} ms  {total.comm_mb:.4f} MB")

    print(f"\nmean over {args.trials} trials:")
    width = max(len(p) for p in sums)
    print(f"{'phase':<{width}}  {'latency_ms':>12}  {'comm_mb':>10}")
    for p, (lat, mb) in sums.items():
        print(f"{p:<{width}}  {lat / args.trials:>12.3f}  {mb / args.trials:>10.6f}")
    if args.report:
        with open(args.report, "w") as fh:
            fh.write("\n".join(csv_lines) + "\n")
        print(f"report written to {args.report}")
    return 0


def main(argv=None) -> int:
    _setup_logging()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _translate_role(argv)
        parser = build_parser()
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        if args.command == "serve":
            return cmd_serve(args)
        if args.command == "infer":
            return cmd_infer(args)
        return cmd_bench(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except TransportError as e:
        print(f"transport error: {e}", file=sys.stderr)
        return 3
    except ProudError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
