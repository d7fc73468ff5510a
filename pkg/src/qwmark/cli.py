"""Command-line driver for the watermarking pipeline.

Batch tool: every subcommand is a pure function of its flags and input
files, never modifies its inputs, and exits non-zero with a JSON error
object on stderr when something goes wrong.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from . import attacks as attacks_mod
from . import bundle as bundle_mod
from . import quality as quality_mod
from . import stats as stats_mod
from . import watermark as wm_mod
from .sampling import rademacher_bits
from .scoring import build_candidate_pool, score_layer

log = logging.getLogger("qwmark")

DEFAULT_ALPHA = 0.5
DEFAULT_BETA = 0.5
DEFAULT_SEED = 100
DEFAULT_POOL_RATIO = 50
DEFAULT_BITS = {4: 40, 8: 300}


def _emit(payload: dict, as_json: bool, lines: list[str]) -> None:
    if as_json:
        print(json.dumps(payload, indent=2))
    else:
        for line in lines:
            print(line)


def _load_signature(args, n_layers: int, bits_per_layer: int) -> list[int]:
    if args.signature_file:
        sig = json.loads(Path(args.signature_file).read_text(encoding="utf-8"))
        if not isinstance(sig, list):
            raise ValueError("signature file must hold a JSON array of +1/-1")
        return [int(b) for b in sig]
    return rademacher_bits(args.signature_seed, n_layers * bits_per_layer)


def _default_bits(bundle: bundle_mod.ModelBundle, flag_value: int | None) -> int:
    if flag_value is not None:
        return flag_value
    return DEFAULT_BITS[bundle.layers[0].bit_width]


def cmd_gen_synthetic(args) -> dict:
    b = bundle_mod.generate_synthetic_bundle(args.layers, args.rows, args.cols, args.bits, args.seed)
    bundle_mod.save_bundle(b, args.out)
    payload = {
        "out": args.out,
        "layers": b.n,
        "rows": args.rows,
        "cols": args.cols,
        "bit_width": args.bits,
        "content_hash": b.content_hash,
    }
    _emit(payload, args.json, [f"wrote {args.out}: {b.n} layers of {args.rows}x{args.cols} INT{args.bits}",
                               f"content hash {b.content_hash}"])
    return payload


def cmd_insert(args) -> dict:
    original = bundle_mod.load_bundle(args.bundle)
    bits_per_layer = _default_bits(original, args.bits_per_layer)
    signature = _load_signature(args, original.n, bits_per_layer)
    pool_size = args.pool_ratio * bits_per_layer
    marked, key = wm_mod.insert(
        original,
        signature,
        seed=args.seed,
        alpha=args.alpha,
        beta=args.beta,
        pool_size=pool_size,
        threads=args.threads,
        created_at=args.timestamp,
    )
    bundle_mod.save_bundle(marked, args.out)
    wm_mod.save_key(key, args.key_out)
    proxy = quality_mod.quality_proxy(original, marked)
    payload = {
        "out": args.out,
        "key_out": args.key_out,
        "bits_total": len(signature),
        "bits_per_layer": bits_per_layer,
        "pool_size_per_layer": pool_size,
        "quality_proxy": proxy.to_dict(),
    }
    _emit(payload, args.json, [
        f"inserted {len(signature)} bits ({bits_per_layer}/layer, pool {pool_size}/layer)",
        f"wrote bundle {args.out} and key {args.key_out}",
        f"weighted perturbation {proxy.weighted_perturbation:.3e}",
    ])
    return payload


def cmd_extract(args) -> dict:
    suspect = bundle_mod.load_bundle(args.suspect)
    original = bundle_mod.load_bundle(args.original)
    key = wm_mod.load_key(args.key)
    report = wm_mod.extract(suspect, original, key, threads=args.threads)
    if args.report_out:
        wm_mod.save_report(report, args.report_out)
    payload = report.to_dict()
    _emit(payload, args.json, [
        f"matched {report.matched_bits}/{report.total_bits} bits, WER {report.wer:.3f}%",
        f"log10 p-value {report.log10_p_value:.4f}",
    ])
    return payload


def cmd_strength(args) -> dict:
    res = stats_mod.watermark_strength(args.matched, args.total)
    payload = {
        "matched": res.matched,
        "total": res.total,
        "p_value": res.p_value,
        "log10_p_value": res.log10_p,
    }
    _emit(payload, args.json, [f"P = {res.p_value:.2e} (log10 = {res.log10_p:.4f})"])
    return payload


def _write_csv(rows: list[dict], path: str | None) -> str:
    fields = ["attack", "per_layer_count", "seed", "wer", "log10_p", "damage_proxy"]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields)
    writer.writeheader()
    for row in rows:
        writer.writerow({k: row[k] for k in fields})
    text = buf.getvalue()
    if path:
        Path(path).write_text(text, encoding="utf-8")
    return text


def cmd_attack_overwrite(args) -> dict:
    wm_bundle = bundle_mod.load_bundle(args.bundle)
    original = bundle_mod.load_bundle(args.original)
    key = wm_mod.load_key(args.key)
    rows = []
    for seed in range(args.seeds):
        outcome = attacks_mod.overwrite_attack(
            wm_bundle, original, key, args.per_layer, seed, threads=args.threads
        )
        rows.append({
            "attack": "overwrite",
            "per_layer_count": args.per_layer,
            "seed": seed,
            "wer": outcome.report.wer,
            "log10_p": outcome.report.log10_p_value,
            "damage_proxy": outcome.damage.weighted_perturbation,
            "watermark_positions_hit": outcome.watermark_positions_hit,
        })
        log.info("overwrite seed=%d wer=%.3f", seed, outcome.report.wer)
    text = _write_csv(rows, args.csv_out)
    mean_wer = sum(r["wer"] for r in rows) / len(rows)
    payload = {"rows": rows, "mean_wer": mean_wer}
    _emit(payload, args.json, [text.rstrip(), f"mean WER over {args.seeds} seeds: {mean_wer:.3f}%"])
    return payload


def cmd_attack_rewatermark(args) -> dict:
    wm_bundle = bundle_mod.load_bundle(args.bundle)
    original = bundle_mod.load_bundle(args.original)
    key = wm_mod.load_key(args.key)
    rows = []
    for i in range(args.seeds):
        cfg = attacks_mod.RewatermarkConfig(
            alpha=args.alpha,
            beta=args.beta,
            seed=args.seed + i,
            per_layer_count=args.per_layer,
            pool_ratio=args.pool_ratio,
            use_quantized_activations=not args.leaked_activations,
        )
        outcome = attacks_mod.rewatermark_attack(wm_bundle, original, key, cfg, threads=args.threads)
        rows.append({
            "attack": "rewatermark",
            "per_layer_count": args.per_layer,
            "seed": cfg.seed,
            "wer": outcome.report.wer,
            "log10_p": outcome.report.log10_p_value,
            "damage_proxy": outcome.damage.weighted_perturbation,
            "watermark_positions_hit": outcome.watermark_positions_hit,
        })
        log.info("rewatermark seed=%d wer=%.3f hits=%d", cfg.seed, outcome.report.wer,
                 outcome.watermark_positions_hit)
    text = _write_csv(rows, args.csv_out)
    mean_wer = sum(r["wer"] for r in rows) / len(rows)
    payload = {"rows": rows, "mean_wer": mean_wer}
    _emit(payload, args.json, [text.rstrip(), f"mean WER over {args.seeds} seeds: {mean_wer:.3f}%"])
    return payload


def cmd_forge_eval(args) -> dict:
    wm_bundle = bundle_mod.load_bundle(args.bundle)
    original = bundle_mod.load_bundle(args.original)
    key = wm_mod.load_key(args.key)
    verdict = attacks_mod.forge_evaluate(wm_bundle, key, original, threads=args.threads)
    payload = verdict.to_dict()
    _emit(payload, args.json, [
        f"verdict: {payload['verdict']} ({verdict.reason})",
        f"WER {verdict.wer:.3f}%, log10 p {verdict.log10_p_value:.4f}",
    ])
    return payload


def cmd_capacity_sweep(args) -> dict:
    original = bundle_mod.load_bundle(args.bundle)
    rows = []
    for bits in range(args.sweep_from, args.sweep_to + 1, args.step):
        signature = rademacher_bits(args.signature_seed, bits * original.n)
        marked, key = wm_mod.insert(
            original,
            signature,
            seed=args.seed,
            alpha=args.alpha,
            beta=args.beta,
            pool_size=args.pool_ratio * bits,
            threads=args.threads,
        )
        report = wm_mod.extract(marked, original, key, threads=args.threads)
        proxy = quality_mod.quality_proxy(original, marked)
        rows.append({
            "bits_per_layer": bits,
            "wer": report.wer,
            "log10_p": report.log10_p_value,
            "weighted_perturbation": proxy.weighted_perturbation,
        })
        log.info("capacity bits=%d wer=%.3f proxy=%.3e", bits, report.wer,
                 proxy.weighted_perturbation)
    payload = {"rows": rows}
    lines = [
        f"bits/layer {r['bits_per_layer']}: WER {r['wer']:.2f}%, proxy {r['weighted_perturbation']:.3e}"
        for r in rows
    ]
    _emit(payload, args.json, lines)
    return payload


def cmd_integrity(args) -> dict:
    original = bundle_mod.load_bundle(args.original)
    key = wm_mod.load_key(args.key)
    rows = []
    for suspect_path in args.suspect:
        suspect = bundle_mod.load_bundle(suspect_path)
        report = wm_mod.extract(suspect, original, key, threads=args.threads)
        rows.append({
            "suspect": suspect_path,
            "wer": report.wer,
            "matched_bits": report.matched_bits,
            "total_bits": report.total_bits,
            "log10_p": report.log10_p_value,
        })
    payload = {"rows": rows}
    lines = [f"{r['suspect']}: WER {r['wer']:.3f}% (log10 p {r['log10_p']:.4f})" for r in rows]
    _emit(payload, args.json, lines)
    return payload


def cmd_dump_pools(args) -> dict:
    b = bundle_mod.load_bundle(args.bundle)
    pools = {}
    for layer, prof in zip(b.layers, b.activations):
        smap = score_layer(layer, prof, args.alpha, args.beta)
        pool = build_candidate_pool(smap, args.pool_size)
        pools[layer.name] = [
            [r, c, float(smap.scores[r, c])] for (r, c) in pool.positions
        ]
    if args.out:
        Path(args.out).write_text(json.dumps(pools, indent=2) + "\n", encoding="utf-8")
    payload = {"pools": pools}
    if args.json or not args.out:
        print(json.dumps(payload if args.json else pools, indent=2))
    else:
        print(f"wrote pools for {b.n} layers to {args.out}")
    return payload


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qwmark", description=__doc__)
    parser.add_argument("--threads", type=int, default=1, help="worker threads for per-layer work")
    parser.add_argument("--log-level", default="warning",
                        choices=["debug", "info", "warning", "error"])
    parser.add_argument("--json", action="store_true", help="machine-readable stdout")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="write a deterministic synthetic bundle")
    p.add_argument("--layers", type=int, required=True)
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--cols", type=int, required=True)
    p.add_argument("--bits", type=int, choices=[4, 8], required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("insert", help="embed a signature and write bundle + key")
    p.add_argument("--bundle", required=True)
    p.add_argument("--signature-file")
    p.add_argument("--signature-seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--bits-per-layer", type=int, default=None,
                   help=f"default {DEFAULT_BITS[4]} for INT4 bundles, {DEFAULT_BITS[8]} for INT8")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--beta", type=float, default=DEFAULT_BETA)
    p.add_argument("--pool-ratio", type=int, default=DEFAULT_POOL_RATIO,
                   help="candidate pool size = ratio * bits per layer")
    p.add_argument("--timestamp", default=None, help="fixed key timestamp (RFC 3339)")
    p.add_argument("--out", required=True)
    p.add_argument("--key-out", required=True)
    p.set_defaults(func=cmd_insert)

    p = sub.add_parser("extract", help="verify a suspect bundle against original + key")
    p.add_argument("--suspect", required=True)
    p.add_argument("--original", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--report-out")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("strength", help="chance probability of matching k of n bits")
    p.add_argument("--matched", type=int, required=True)
    p.add_argument("--total", type=int, required=True)
    p.set_defaults(func=cmd_strength)

    attack = sub.add_parser("attack", help="run removal attacks against a watermarked bundle")
    attack_sub = attack.add_subparsers(dest="attack_kind", required=True)

    p = attack_sub.add_parser("overwrite")
    p.add_argument("--bundle", required=True)
    p.add_argument("--original", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--per-layer", type=int, required=True)
    p.add_argument("--seeds", type=int, default=1, help="run attack seeds 0..N-1")
    p.add_argument("--csv-out")
    p.set_defaults(func=cmd_attack_overwrite)

    p = attack_sub.add_parser("rewatermark")
    p.add_argument("--bundle", required=True)
    p.add_argument("--original", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=1.5)
    p.add_argument("--seed", type=int, default=22)
    p.add_argument("--per-layer", type=int, required=True)
    p.add_argument("--pool-ratio", type=int, default=DEFAULT_POOL_RATIO)
    p.add_argument("--seeds", type=int, default=1, help="adversary seeds seed..seed+N-1")
    p.add_argument("--leaked-activations", action="store_true",
                   help="score with the bundle's stored profiles instead of the quantized proxy")
    p.add_argument("--csv-out")
    p.set_defaults(func=cmd_attack_rewatermark)

    p = sub.add_parser("forge-eval", help="validate an ownership claim")
    p.add_argument("--bundle", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--original", required=True)
    p.set_defaults(func=cmd_forge_eval)

    p = sub.add_parser("capacity-sweep", help="insert/extract at increasing bits per layer")
    p.add_argument("--bundle", required=True)
    p.add_argument("--from", dest="sweep_from", type=int, default=50)
    p.add_argument("--to", dest="sweep_to", type=int, default=200)
    p.add_argument("--step", type=int, default=50)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--signature-seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--beta", type=float, default=DEFAULT_BETA)
    p.add_argument("--pool-ratio", type=int, default=DEFAULT_POOL_RATIO)
    p.set_defaults(func=cmd_capacity_sweep)

    p = sub.add_parser("integrity", help="extract against one or more suspects")
    p.add_argument("--suspect", action="append", required=True)
    p.add_argument("--original", required=True)
    p.add_argument("--key", required=True)
    p.set_defaults(func=cmd_integrity)

    p = sub.add_parser("dump-pools", help="debug dump of per-layer candidate pools")
    p.add_argument("--bundle", required=True)
    p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    p.add_argument("--beta", type=float, default=DEFAULT_BETA)
    p.add_argument("--pool-size", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_dump_pools)

    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print(json.dumps({"error": "ValueError", "message": "--threads must be >= 1"}),
              file=sys.stderr)
        return 1
    try:
        args.func(args)
    except (ValueError, OSError, KeyError) as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
