"""Command-line driver: data generation, evaluation, scaling sweeps,
throughput benchmarks, and the HTTP service.

One binary, subcommand style. Every command writes its outputs under a
run directory together with a manifest (seed, config hash, input and
output checksums, wall-clock timings). Outputs are byte-reproducible for
a fixed seed; only the manifest's timing fields differ between runs.

Exit codes: 0 success, 2 usage error, 3 data/format error, 4 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, experiments, fusion, metrics, synth
from .errors import BiodedupError, FormatError
from .gallery import load_gallery, save_gallery

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


class UsageError(Exception):
    pass


def _manifest(out_dir: Path, command: str, params: dict, inputs: dict, timings: dict):
    from .config import _canonical, config_hash, sha256_file

    outputs = {}
    for p in sorted(out_dir.iterdir()):
        if p.name != "manifest.json" and p.is_file():
            outputs[p.name] = sha256_file(p)
    manifest = {
        "tool": "biodedup",
        "version": __version__,
        "command": command,
        "params": _canonical(params),
        "config_hash": config_hash(params),
        "inputs": inputs,
        "outputs": outputs,
        "timings_s": {k: round(v, 3) for k, v in timings.items()},
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _load_probes(gallery_path, mated_path, nonmated_path, truth_path):
    from .config import sha256_file

    inputs = {}
    for p in (gallery_path, mated_path, nonmated_path, truth_path):
        if p and not Path(p).exists():
            raise FormatError(f"input file not found: {p}")
    gallery = load_gallery(gallery_path)
    inputs[str(gallery_path)] = sha256_file(gallery_path)
    _, mate_map, nonmate_map = synth.read_truth_registry(truth_path)
    inputs[str(truth_path)] = sha256_file(truth_path)
    mated = synth.load_probe_set(mated_path, mate_map)
    inputs[str(mated_path)] = sha256_file(mated_path)
    nonmated = synth.load_probe_set(nonmated_path, {k: None for k in nonmate_map})
    inputs[str(nonmated_path)] = sha256_file(nonmated_path)
    return gallery, mated, nonmated, inputs


def cmd_synth(args) -> int:
    from .config import load_synth_config

    if args.n < 1:
        raise UsageError("--n must be >= 1")
    if args.mated > args.n:
        raise UsageError("--mated cannot exceed gallery size")
    config = load_synth_config(args.config)
    overrides = {}
    if args.missing_iris_rate is not None:
        overrides["iris_missing_rate"] = args.missing_iris_rate
    if args.missing_finger_rate is not None:
        overrides["finger_missing_rate"] = args.missing_finger_rate
    if overrides:
        import dataclasses

        config = dataclasses.replace(config, **overrides)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    timings = {}
    t0 = time.perf_counter()
    gallery, registry = synth.generate_gallery(
        args.n, config, seed=args.seed, shard_size=args.shard_size
    )
    timings["generate_gallery"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    mated, nonmated = synth.generate_probe_sets(
        config,
        seed=args.seed,
        gallery_size=args.n,
        n_mated=args.mated,
        n_nonmated=args.nonmated,
        mate_pool_size=args.mate_pool,
    )
    timings["generate_probes"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    save_gallery(gallery, out / "gallery.bgal")
    synth.save_probe_set(mated, out / "mated.bgal")
    synth.save_probe_set(nonmated, out / "nonmated.bgal")
    synth.write_truth_registry(out / "truth.jsonl", registry, mated, nonmated)
    timings["write_files"] = time.perf_counter() - t0
    _manifest(
        out,
        "synth",
        {
            "n": args.n,
            "seed": args.seed,
            "mated": args.mated,
            "nonmated": args.nonmated,
            "mate_pool": args.mate_pool,
            "shard_size": args.shard_size,
            "config": config,
        },
        {},
        timings,
    )
    print(f"wrote gallery ({args.n} rows) + {args.mated}/{args.nonmated} probes to {out}")
    return EXIT_OK


def _det_rows_from_stats(st, mated_mask, thresholds, k):
    n_mated = int(mated_mask.sum())
    n_nonmated = int((~mated_mask).sum())
    rows = []
    for tau in thresholds:
        n_fp = int(np.count_nonzero(st.top_score[~mated_mask] >= tau))
        miss = (st.mate_score[mated_mask] < tau) | (st.mate_rank[mated_mask] > k)
        n_fn = int(miss.sum())
        rows.append(
            {
                "threshold": float(tau),
                "fpir": n_fp / n_nonmated,
                "fnir": n_fn / n_mated,
                "n_fp": n_fp,
                "n_nonmated": n_nonmated,
                "n_fn": n_fn,
                "n_mated": n_mated,
            }
        )
    return rows


def cmd_dedup_eval(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    gallery, mated, nonmated, inputs = _load_probes(
        args.gallery, args.mated, args.nonmated, args.truth
    )
    subsets = [tuple(s.split("+")) for s in args.subsets.split(",")] if args.subsets else []
    for s in subsets:
        experiments.subset_weights(s)  # validates names
    timings = {}
    t0 = time.perf_counter()
    stats = experiments.pairwise_subset_stats(
        gallery,
        list(mated.templates) + list(nonmated.templates),
        list(mated.mate_ids) + [None] * len(nonmated.templates),
        subsets=(experiments.ALL_GROUPS,),
    )[experiments.subset_name(experiments.ALL_GROUPS)]
    timings["score_pass"] = time.perf_counter() - t0
    mated_mask = np.array(
        [True] * len(mated.templates) + [False] * len(nonmated.templates)
    )
    finite_top = stats.top_score[np.isfinite(stats.top_score)]
    lo = float(finite_top.min()) if finite_top.size else -1.0
    hi = float(max(np.nanmax(stats.mate_score), finite_top.max())) if finite_top.size else 1.0
    thresholds = np.round(np.linspace(lo, hi, args.det_points), 6)
    det_rows = _det_rows_from_stats(stats, mated_mask, thresholds, args.k)
    metrics.emit_report(det_rows, out / "det.csv", "csv")

    tau_op = metrics.threshold_at_fmr(stats.top_score[~mated_mask], args.fpir_target)
    op_rows = _det_rows_from_stats(stats, mated_mask, [tau_op], args.k)[0]
    rank1_miss = (stats.mate_score[mated_mask] < tau_op) | (stats.mate_rank[mated_mask] > 1)
    summary = {
        "fpir_target": args.fpir_target,
        "threshold": tau_op,
        **op_rows,
        "fnir_rank1": float(rank1_miss.mean()),
        "fnir_ci95": list(metrics.wilson_interval(op_rows["n_fn"], op_rows["n_mated"])),
        "fpir_ci95": list(metrics.wilson_interval(op_rows["n_fp"], op_rows["n_nonmated"])),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")

    if subsets:
        t0 = time.perf_counter()
        rows = experiments.combination_study(
            gallery, mated, nonmated, subsets=subsets, fpir_target=args.fpir_target, k=args.k
        )
        timings["combination_study"] = time.perf_counter() - t0
        metrics.emit_report(rows, out / "combination.csv", "csv")
    _manifest(
        out,
        "dedup-eval",
        {
            "fpir_target": args.fpir_target,
            "k": args.k,
            "det_points": args.det_points,
            "subsets": args.subsets,
        },
        inputs,
        timings,
    )
    print(
        f"fnir={summary['fnir']:.6f} (rank1 {summary['fnir_rank1']:.6f}) at "
        f"fpir={summary['fpir']:.6f} (target {args.fpir_target}); reports in {out}"
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    gallery, mated, nonmated, inputs = _load_probes(
        args.gallery, args.mated, args.nonmated, args.truth
    )
    sizes = [int(s) for s in args.sizes.split(",")]
    if sizes != sorted(sizes):
        print("warning: --sizes were not ascending; sorting", file=sys.stderr)
        sizes = sorted(sizes)
    if sizes[-1] > gallery.n_rows:
        raise UsageError(f"largest size {sizes[-1]} exceeds gallery rows {gallery.n_rows}")
    tau = args.tau
    timings = {}
    t0 = time.perf_counter()
    if tau is None:
        st = experiments.pairwise_subset_stats(
            gallery,
            list(nonmated.templates),
            [None] * len(nonmated.templates),
            subsets=(experiments.ALL_GROUPS,),
            prefix_sizes=[sizes[0]],
        )[experiments.subset_name(experiments.ALL_GROUPS)]
        tau = metrics.threshold_at_fmr(st.prefix_top[:, 0], args.tau_fpir)
        timings["tau_selection"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    rows = experiments.gallery_size_sweep(gallery, mated, nonmated, sizes, tau, k=args.k)
    timings["sweep"] = time.perf_counter() - t0
    metrics.emit_report(rows, out / "sweep.csv", "csv")
    _manifest(
        out,
        "sweep",
        {"sizes": sizes, "tau": tau, "tau_fpir": args.tau_fpir, "k": args.k},
        inputs,
        timings,
    )
    for r in rows:
        print(
            f"N={r['gallery_size']:>8d} fpir={r['fpir']:.6f} fnir={r['fnir']:.6f} "
            f"(tau={tau:.4f})"
        )
    return EXIT_OK


def measure_search_throughput(
    gallery, probes, batch_size: int, k: int = 10, workers: int = 4, min_probes: int = 32
) -> dict:
    """Time repeated searches at one batch size; returns a bench report row."""
    w = fusion.default_weights()
    reps = max(1, min(min_probes, 4 * batch_size) // batch_size)
    t0 = time.perf_counter()
    done = 0
    for _ in range(reps):
        gallery.search(probes[:batch_size], w, k=k, n_workers=workers)
        done += batch_size
    dt = time.perf_counter() - t0
    n, dim = gallery.n_rows, 3456
    return {
        "batch_size": batch_size,
        "probes": done,
        "seconds": round(dt, 4),
        "probes_per_s": round(done / dt, 2),
        "ms_per_probe": round(dt / done * 1000, 3),
        "gb_per_s": round(n * dim * 4 * done / dt / 1e9, 2),
        "gflop_per_s": round(2.0 * n * dim * done / dt / 1e9, 2),
        "workers": workers,
        "gallery_rows": n,
    }


def cmd_bench(args) -> int:
    from .config import sha256_file

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if not Path(args.gallery).exists():
        raise FormatError(f"input file not found: {args.gallery}")
    gallery = load_gallery(args.gallery)
    if gallery.n_rows == 0:
        raise UsageError("gallery is empty; nothing to benchmark")
    inputs = {str(args.gallery): sha256_file(args.gallery)}
    batch_sizes = [int(b) for b in args.batch_sizes.split(",")]
    if any(b < 1 for b in batch_sizes):
        raise UsageError("batch sizes must be >= 1")
    rng = np.random.default_rng(args.seed)
    max_batch = max(batch_sizes)
    probe_ids = rng.choice(gallery.ids(), size=max_batch, replace=True)
    probes = [gallery.template_of(int(i)) for i in probe_ids]
    w = fusion.default_weights()
    gallery.search(probes[:2], w, k=args.k, n_workers=args.workers)  # warmup
    rows = []
    timings = {}
    for batch in batch_sizes:
        row = measure_search_throughput(
            gallery, probes, batch, k=args.k, workers=args.workers,
            min_probes=args.min_probes,
        )
        rows.append(row)
        timings[f"batch_{batch}"] = row["seconds"]
    metrics.emit_report(rows, out / "bench.csv", "csv")
    (out / "bench.json").write_text(json.dumps(rows, indent=2) + "\n")
    _manifest(
        out,
        "bench",
        {"batch_sizes": batch_sizes, "k": args.k, "workers": args.workers, "seed": args.seed},
        inputs,
        timings,
    )
    for r in rows:
        print(
            f"batch={r['batch_size']:<6d} {r['probes_per_s']:>8.1f} probes/s  "
            f"{r['gb_per_s']:>7.1f} GB/s  {r['gflop_per_s']:>7.1f} GFLOP/s"
        )
    return EXIT_OK


def cmd_serve(args) -> int:
    import socket

    import uvicorn

    from .config import load_pipeline_stages, load_service_config, load_weight_profiles
    from .service import DedupService, build_app

    config = load_service_config(args.config)
    if args.host:
        config.host = args.host
    if args.port:
        config.port = args.port
    if args.gallery:
        config.gallery_path = args.gallery
    if args.state_dir:
        config.state_dir = args.state_dir
    if config.gallery_path and not Path(config.gallery_path).exists() and args.gallery:
        raise FormatError(f"gallery file not found: {config.gallery_path}")
    profiles = load_weight_profiles(args.config)
    if config.weight_profile not in profiles:
        raise UsageError(
            f"unknown weight profile {config.weight_profile!r}; "
            f"available: {sorted(profiles)}"
        )
    # fail fast with a clear runtime error instead of uvicorn's SystemExit
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as probe_sock:
        probe_sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe_sock.bind((config.host, config.port))
    stages = load_pipeline_stages(args.config, seed=config.pipeline_seed)
    service = DedupService(
        config, stages=stages, weights=profiles[config.weight_profile]
    )
    app = build_app(service, ui_dir=args.ui_dir)
    print(
        f"serving on http://{config.host}:{config.port} "
        f"(gallery rows: {service.gallery.n_rows})"
    )
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="biodedup", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic gallery and probe sets")
    p.add_argument("--n", type=int, required=True, help="gallery size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mated", type=int, default=1000)
    p.add_argument("--nonmated", type=int, default=1000)
    p.add_argument("--mate-pool", type=int, default=None,
                   help="restrict mated probes to the first N enrolled identities")
    p.add_argument("--missing-iris-rate", type=float, default=None)
    p.add_argument("--missing-finger-rate", type=float, default=None)
    p.add_argument("--shard-size", type=int, default=100_000)
    p.add_argument("--config", default=None, help="TOML config ([synth] section)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("dedup-eval", help="DET curve and operating-point report")
    p.add_argument("--gallery", required=True)
    p.add_argument("--mated", required=True)
    p.add_argument("--nonmated", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--fpir-target", type=float, default=0.001)
    p.add_argument("--k", type=int, default=50)
    p.add_argument("--det-points", type=int, default=201)
    p.add_argument("--subsets", default=None,
                   help="comma list of modality subsets, e.g. face,fingers+irides")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dedup_eval)

    p = sub.add_parser("sweep", help="FPIR/FNIR vs nested gallery sizes at fixed tau")
    p.add_argument("--gallery", required=True)
    p.add_argument("--mated", required=True)
    p.add_argument("--nonmated", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--sizes", required=True, help="comma list, e.g. 1000,10000,100000")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--tau-fpir", type=float, default=0.002,
                   help="derive tau from this FPIR on the smallest size when --tau absent")
    p.add_argument("--k", type=int, default=50)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="search throughput benchmark")
    p.add_argument("--gallery", required=True)
    p.add_argument("--batch-sizes", default="1,1000")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--min-probes", type=int, default=32,
                   help="lower bound on probes measured per batch size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("serve", help="run the enrollment/search HTTP service")
    p.add_argument("--config", default=None, help="TOML config ([service] section)")
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--gallery", default=None)
    p.add_argument("--state-dir", default=None)
    p.add_argument("--ui-dir", default=None, help="static assets mounted at /ui")
    p.set_defaults(func=cmd_serve)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BiodedupError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
