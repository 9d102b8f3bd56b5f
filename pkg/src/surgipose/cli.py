"""Command-line entry points.

Exit codes: 0 success, 1 domain error (bad data, failed validation), 2 usage.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .bop import PoseEstimate, validate_dataset, write_results
from .errors import SurgiposeError
from .metrics import (DEFAULT_TRUNCATION, evaluate_run, histograms_to_csv,
                      records_from_csv, records_to_csv, summarize_and_histogram,
                      summary_table, summary_to_json)
from .pipeline import load_job, run_generation
from .pnp import load_correspondences_csv, solve_pnp


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="surgipose",
        description="Synthetic BOP-format 6D-pose datasets of surgical scenes: "
                    "generation, evaluation, validation, PnP, and the authoring service.")
    parser.add_argument("--version", action="version", version=f"surgipose {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="replay a trajectory into a BOP dataset")
    p.add_argument("--job", required=True, help="job config JSON")
    p.add_argument("--out", help="output root (overrides the job's out_root)")
    p.add_argument("--seed", type=int, help="seed override")

    p = sub.add_parser("eval", help="evaluate a results CSV against dataset ground truth")
    p.add_argument("--gt", required=True, help="dataset root")
    p.add_argument("--est", required=True, help="BOP results CSV")
    p.add_argument("--min-visib", type=float, default=0.3,
                   help="visibility threshold for evaluated frames (default 0.3)")
    p.add_argument("--out", help="output directory (default <gt>/eval)")
    p.add_argument("--bins", type=int, default=20)

    p = sub.add_parser("stats", help="summarize an existing metrics CSV")
    p.add_argument("--records", required=True, help="metrics CSV from eval")
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--truncate-te", type=float, default=DEFAULT_TRUNCATION["e_te_mm"])
    p.add_argument("--truncate-re", type=float, default=DEFAULT_TRUNCATION["e_re_deg"])
    p.add_argument("--truncate-mssd", type=float, default=DEFAULT_TRUNCATION["e_mssd_mm"])
    p.add_argument("--out", help="output directory (default alongside the records)")

    p = sub.add_parser("validate", help="check a dataset for consistency violations")
    p.add_argument("--dataset", required=True)

    p = sub.add_parser("pnp", help="solve pose from a correspondence CSV (x,y,z,u,v)")
    p.add_argument("--corrs", required=True)
    p.add_argument("--cam", required=True, help="camera JSON (fx,fy,cx,cy,width,height)")
    p.add_argument("--scene-id", type=int, default=0)
    p.add_argument("--im-id", type=int, default=0)
    p.add_argument("--obj-id", type=int, default=1)
    p.add_argument("--out", help="write/append a results CSV row here")

    p = sub.add_parser("serve", help="run the trajectory-authoring HTTP service")
    p.add_argument("--scene", required=True, help="scene config JSON")
    p.add_argument("--host", default="127.0.0.1",
                   help="bind address (loopback only by default)")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--data-root", default="datasets",
                   help="where service-launched generation jobs write")
    p.add_argument("--ui", help="static directory to serve at / (the studio build)")
    return parser


def _cmd_generate(args) -> int:
    job = load_job(args.job)
    if args.out is not None:
        job.out_root = Path(args.out)
    if args.seed is not None:
        job.seed = args.seed
    manifest = run_generation(job)
    print(f"dataset written to {job.out_root} "
          f"({len(manifest.scenes)} scene(s), seed {manifest.seed})")
    return 0


def _cmd_eval(args) -> int:
    result = evaluate_run(args.gt, args.est, min_visib=args.min_visib)
    out_dir = Path(args.out) if args.out else Path(args.gt) / "eval"
    out_dir.mkdir(parents=True, exist_ok=True)
    records_to_csv(result.records, out_dir / "metrics.csv")
    bookkeeping = {
        "n_total_gt": result.n_total_gt,
        "n_evaluated": result.n_evaluated,
        "n_excluded_visibility": result.n_excluded_visibility,
        "n_missing_estimate": result.n_missing_estimate,
    }
    if not result.records:
        (out_dir / "summary.json").write_text(json.dumps(bookkeeping, indent=1) + "\n")
        print("no frames evaluated", file=sys.stderr)
        return 1
    summary, hists = summarize_and_histogram(result.records, bins=args.bins)
    doc = summary_to_json(summary)
    doc.update(bookkeeping)
    (out_dir / "summary.json").write_text(json.dumps(doc, indent=1) + "\n")
    histograms_to_csv(hists, out_dir / "histograms.csv")
    table = summary_table(summary)
    (out_dir / "summary.txt").write_text(table + "\n")
    print(table)
    print(f"evaluated {result.n_evaluated}, excluded {result.n_excluded_visibility} "
          f"below visibility, {result.n_missing_estimate} missing; -> {out_dir}")
    return 0


def _cmd_stats(args) -> int:
    records = records_from_csv(args.records)
    truncation = {"e_te_mm": args.truncate_te, "e_re_deg": args.truncate_re,
                  "e_mssd_mm": args.truncate_mssd}
    summary, hists = summarize_and_histogram(records, bins=args.bins,
                                             truncation=truncation)
    out_dir = Path(args.out) if args.out else Path(args.records).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "summary.json").write_text(
        json.dumps(summary_to_json(summary), indent=1) + "\n")
    histograms_to_csv(hists, out_dir / "histograms.csv")
    print(summary_table(summary))
    return 0


def _cmd_validate(args) -> int:
    report = validate_dataset(args.dataset)
    for warning in report.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    if report.violations:
        for violation in report.violations:
            print(f"violation: {violation}")
        print(f"{len(report.violations)} violation(s) in "
              f"{report.scenes_checked} scene(s)")
        return 1
    print(f"ok: {report.scenes_checked} scene(s), "
          f"{report.frames_checked} frame(s) pixel-checked, no violations")
    return 0


def _cmd_pnp(args) -> int:
    from .geometry import CameraModel
    with open(args.cam) as f:
        cam = CameraModel(**json.load(f))
    corrs = load_correspondences_csv(args.corrs)
    result = solve_pnp(corrs, cam)
    est = PoseEstimate(scene_id=args.scene_id, im_id=args.im_id, obj_id=args.obj_id,
                       score=1.0, rotation=result.pose.rotation,
                       translation=result.pose.translation, time_s=0.0)
    if args.out:
        write_results(args.out, [est])
        print(f"wrote {args.out}")
    r = " ".join(f"{v:.9g}" for v in result.pose.rotation.reshape(9))
    t = " ".join(f"{v:.9g}" for v in result.pose.translation)
    print(f"R: {r}")
    print(f"t: {t}")
    print(f"rmse_px: {result.rmse_px:.6g} (linear init {result.initial_rmse_px:.6g}, "
          f"{result.iterations} iterations)")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.scene, data_root=args.data_root, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "eval": _cmd_eval,
    "stats": _cmd_stats,
    "validate": _cmd_validate,
    "pnp": _cmd_pnp,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return _COMMANDS[args.command](args)
    except SurgiposeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
