"""Command-line entry point.

Exit codes: 0 success, 1 usage/config error, 2 data/parse error,
3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .assembly import classify_plane, layout
from .corpus import FAMILIES, gen_synthetic_corpus
from .dedup import FeatureRecord, OccupancyGrid, dedup, voxelize
from .errors import ConfigError, FormatError, InvariantError, ParseError
from .extraction import filter_nonempty
from .model_io import (PointCloud, read_grid_set, write_grid_set, write_manifest,
                       write_ply_ascii)
from .stats import StatsReport, report_stats

log = logging.getLogger("gripset")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 0, 1, 2, 3

CONFIG_HELP = """\
config keys (YAML; paths relative to the config file):
  objects             list of OBJ paths or glob patterns (required)
  gripper.width       closing extent along u, m (default 0.07)
  gripper.height      finger extent along v, m (default 0.03)
  gripper.depth       approach extent along t, m (default 0.05)
  gripper.resolution  voxel edge, m (default 0.01)
  samples_per_object  surface points per object (default 4000)
  grasps_per_object   grasp candidates per object (default 500)
  k_neighbors         neighbours for normal estimation (default 10)
  seed                unsigned 64-bit run seed (default 0)
  spacing             assembly cell pitch, m (default max extent + 2*resolution)
  min_points          smallest region kept (default 1)
  workers             worker threads (default 1)
  extraction_mode     only "static" (default)
  output_dir          output directory (default out)
"""


def _config(args):
    if not args.config:
        raise ConfigError("--config is required")
    cfg = pipeline.load_config(args.config, seed=getattr(args, "seed", None),
                               workers=getattr(args, "workers", None))
    if getattr(args, "out", None):
        cfg.output_dir = Path(args.out)
    if getattr(args, "dump_regions", False):
        cfg.dump_regions = True
    return cfg


def cmd_run(args):
    result = pipeline.run_pipeline(_config(args))
    text, _ = report_stats(result.stats)
    print(text, end="")
    for name, path in result.paths.items():
        print(f"{name}: {path}")


def cmd_gen_corpus(args):
    paths = gen_synthetic_corpus(args.family, args.unique, args.copies, args.seed, args.out)
    print(f"wrote {len(paths)} objects to {args.out}")


def cmd_extract(args):
    cfg = _config(args)
    per_object = pipeline.extract_all(cfg)
    regions = [r for obj in per_object for r in obj.regions]
    filtered = filter_nonempty(regions, cfg.min_points)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    out = cfg.output_dir / pipeline.REGIONS
    pipeline.save_regions(out, filtered.regions)
    if cfg.dump_regions:
        dump = cfg.output_dir / "regions"
        dump.mkdir(exist_ok=True)
        for i, r in enumerate(filtered.regions):
            (dump / f"region_{i:06d}_{r.source_object}.ply").write_text(
                write_ply_ascii(PointCloud(r.points)))
    summary = {"candidates": len(regions), "kept": len(filtered.regions),
               "dropped_empty": filtered.dropped_empty, "dropped_small": filtered.dropped_small}
    (cfg.output_dir / "extract_stats.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"{summary['kept']} regions kept of {summary['candidates']} -> {out}")


def cmd_dedup(args):
    cfg = _config(args)
    spec = cfg.gripper
    regions = pipeline.load_regions(args.regions, spec)
    grids = [voxelize(r, spec) for r in regions]
    records = dedup(regions, spec, workers=cfg.workers, grids=grids)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    unique = cfg.output_dir / pipeline.GRIDS_UNIQUE
    unique.write_bytes(write_grid_set(spec.dims, pipeline.grid_records(
        (rec.grid, rec.exemplar, rec.first_seen, len(rec.sources)) for rec in records)))
    naive = cfg.output_dir / pipeline.GRIDS_ALL
    naive.write_bytes(write_grid_set(spec.dims, pipeline.grid_records(
        (g, r, i, 1) for i, (g, r) in enumerate(zip(grids, regions)))))
    print(f"{len(regions)} grids -> {len(records)} unique -> {unique}")


def cmd_assemble(args):
    cfg = _config(args)
    spec = cfg.gripper
    regions = pipeline.load_regions(args.regions, spec)
    dims, recs = read_grid_set(Path(args.features).read_bytes())
    if tuple(dims) != spec.dims:
        raise ConfigError(f"grid set dims {dims} do not match gripper spec {spec.dims}")
    records = []
    for meta, bits in recs:
        exemplar = regions[meta["region_index"]]
        grid = OccupancyGrid.from_packed(dims, bits)
        if voxelize(exemplar, spec) != grid:
            raise InvariantError(f"exemplar {meta['region_index']} does not match its grid",
                                 stage="assemble")
        records.append(FeatureRecord(grid, exemplar, [(exemplar.source_object, exemplar.pose)]
                                     * int(meta.get("source_count", 1)),
                                     first_seen=meta["region_index"]))
    assembled = layout(records, spec, cfg.spacing, [classify_plane(r.grid) for r in records])
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    (cfg.output_dir / pipeline.COMPOSITE).write_text(write_ply_ascii(assembled.composite_cloud))
    (cfg.output_dir / pipeline.MANIFEST).write_text(write_manifest(assembled))
    print(f"assembled {len(records)} features, {len(assembled.composite_cloud)} points "
          f"-> {cfg.output_dir}")


def cmd_stats(args):
    report = StatsReport.from_dict(json.loads(Path(args.report).read_text()))
    text, js = report_stats(report)
    print(js if args.json else text, end="")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gripset",
        description="Compress gripper-frame grasp regions of many objects into one composite object.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required,
                       help="YAML pipeline config (e.g. configs/example.yaml)")
        p.add_argument("--workers", type=int, default=None, help="worker threads (default: config, 1)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output directory (default: config output_dir)")

    p = sub.add_parser("run", help="full pipeline: sample, extract, dedup, classify, assemble",
                       epilog=CONFIG_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    common(p)
    p.add_argument("--dump-regions", action="store_true", help="also write each region as PLY")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("gen-corpus", help="write a synthetic OBJ corpus with duplicated shapes")
    p.add_argument("--family", choices=FAMILIES, default="mixed")
    p.add_argument("--unique", type=int, default=8, help="distinct shapes K (default 8)")
    p.add_argument("--copies", type=int, default=8, help="copies per shape M (default 8)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("extract", help="sample grasps and write gripper-frame regions (regions.npz)")
    common(p)
    p.add_argument("--dump-regions", action="store_true", help="also write each region as PLY")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("dedup", help="voxelize regions and write unique/all grid sets (.gfa)")
    common(p)
    p.add_argument("--regions", required=True, help="regions.npz from 'extract'")
    p.set_defaults(func=cmd_dedup)

    p = sub.add_parser("assemble", help="tile unique features into composite.ply + manifest.json")
    common(p)
    p.add_argument("--regions", required=True, help="regions.npz from 'extract'")
    p.add_argument("--features", required=True, help="features.gfa from 'dedup'")
    p.set_defaults(func=cmd_assemble)

    p = sub.add_parser("stats", help="print a stats.json report")
    p.add_argument("--report", required=True, help="stats.json written by 'run'")
    p.add_argument("--json", action="store_true", help="print JSON instead of text")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigError, ValueError) as exc:
        log.error("config error: %s", exc)
        return EXIT_USAGE
    except (pipeline.DataError, ParseError, FormatError, OSError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except InvariantError as exc:
        log.error("invariant violation in stage %s: %s", exc.stage, exc)
        return EXIT_INVARIANT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
