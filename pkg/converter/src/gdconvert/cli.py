"""Command line: `gdconvert <dataset> --out DIR [--cache DIR] [--no-download]`.

Citation names (cora, citeseer, pubmed) produce the interchange layout;
benchmark text names (MUTAG, PROTEINS, ...) are passed through after
count verification. Exit 0 on success, 1 on conversion/count failure,
2 on usage errors.
"""

from __future__ import annotations

import argparse
import sys

from .convert import (CITATION_DATASETS, ConversionError, convert_citation,
                      convert_tudataset)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="gdconvert",
                                     description="benchmark dataset exporter")
    parser.add_argument("dataset", help="cora|citeseer|pubmed or a benchmark "
                                        "name like MUTAG, PROTEINS")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--cache", default=None,
                        help="directory holding the upstream distribution")
    parser.add_argument("--no-download", action="store_true",
                        help="never touch the network; require a cache")
    parser.add_argument("--lenient", action="store_true",
                        help="report count mismatches instead of failing")
    args = parser.parse_args(argv)

    try:
        if args.dataset.lower() in CITATION_DATASETS:
            report = convert_citation(args.dataset, args.out, args.cache,
                                      download=not args.no_download,
                                      strict=not args.lenient)
        else:
            report = convert_tudataset(args.dataset, args.out, args.cache,
                                       strict=not args.lenient)
    except ConversionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(report.to_json())
    return 0


if __name__ == "__main__":
    sys.exit(main())
