"""Command-line exporter: dataset + backbone -> cfedit bundle directories."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from cfedit_exporter.export import ExportJob, export_bundles
from cfedit_exporter.segmenter import SEGMENTERS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cfedit-export",
        description="Export feature-map bundles for the cfedit engine.")
    parser.add_argument("--dataset-root", required=True, type=Path)
    parser.add_argument("--index", required=True, type=Path,
                        help="JSON index: images with id, path, class, keypoints")
    parser.add_argument("--model", required=True,
                        help="torchvision model name, e.g. resnet18")
    parser.add_argument("--split-layer", required=True,
                        help="feature-extraction node, e.g. layer4")
    parser.add_argument("--out", required=True, type=Path)
    parser.add_argument("--query-class", required=True, type=int)
    parser.add_argument("--distractor-class", required=True, type=int)
    parser.add_argument("--distractors", type=int, default=20)
    parser.add_argument("--image-size", type=int, default=224)
    parser.add_argument("--weights", type=Path, default=None,
                        help="state-dict file; omitted = seeded random init")
    parser.add_argument("--head", choices=("auto", "random"), default="auto")
    parser.add_argument("--segmenter", choices=sorted(SEGMENTERS), default="disk")
    parser.add_argument("--disk-radius", type=float, default=0.18,
                        help="disk segmenter radius as a fraction of the diagonal")
    parser.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.segmenter == "disk":
        segmenter = SEGMENTERS["disk"](radius_fraction=args.disk_radius)
    else:
        segmenter = SEGMENTERS[args.segmenter]()
    job = ExportJob(
        dataset_root=args.dataset_root,
        index_file=args.index,
        model_name=args.model,
        split_layer=args.split_layer,
        out_dir=args.out,
        query_class=args.query_class,
        distractor_class=args.distractor_class,
        n_distractors=args.distractors,
        image_size=args.image_size,
        head_mode=args.head,
        seed=args.seed,
        weights_path=args.weights,
        segmenter=segmenter,
    )
    try:
        report = export_bundles(job)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {len(report.bundles)} bundles under {args.out}")
    if report.errors:
        print(f"{len(report.errors)} problems recorded in errors.json", file=sys.stderr)
    return 0 if report.bundles else 3


if __name__ == "__main__":
    sys.exit(main())
