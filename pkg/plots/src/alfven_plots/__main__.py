"""Command line: render the standard study figures from a results directory.

Reads ``<results>/<study>.csv`` for each requested study, draws one
scaling panel per study into ``<out>/<study>.png``, and writes
``<out>/annotations.json`` with the fitted slopes so downstream checks
can compare them against the producer's fits.  If ``<results>/report.json``
exists, each figure title carries that study's pass/fail verdict.

Exit codes: 0 success, 1 usage or unreadable input.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .figures import PlotSpec, plot_scaling
from .fitting import read_records

# per-study default panel: observable and the guide-line exponent
STUDY_PANELS = {
    "stability": ("sup_sobolev_m_over_eps", 0.0),
    "error": ("sup_grad_diff", 1.25),
    "limit-linear": ("linf_slab", 0.5),
    "limit-nonlinear": ("linf_slab", 0.125),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alfven-plots",
        description="Render log-log scaling figures from study CSV tables.",
    )
    parser.add_argument("--results", required=True,
                        help="directory containing <study>.csv tables")
    parser.add_argument("--out", required=True,
                        help="output directory for figures and annotations")
    parser.add_argument(
        "--studies", default=",".join(STUDY_PANELS),
        help="comma-separated study names (default: all standard studies)")
    return parser


def load_verdicts(results_dir: str) -> dict:
    path = os.path.join(results_dir, "report.json")
    if not os.path.exists(path):
        return {}
    with open(path, encoding="utf-8") as fh:
        report = json.load(fh)
    return {name: entry.get("passed")
            for name, entry in report.get("studies", {}).items()}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    studies = [s.strip() for s in args.studies.split(",") if s.strip()]
    unknown = [s for s in studies if s not in STUDY_PANELS]
    if not studies or unknown:
        print(f"error: unknown studies {unknown}; standard studies are "
              f"{', '.join(STUDY_PANELS)}", file=sys.stderr)
        return 1
    os.makedirs(args.out, exist_ok=True)
    verdicts = load_verdicts(args.results)
    annotations = {}
    for study in studies:
        csv_path = os.path.join(args.results, f"{study}.csv")
        try:
            rows = read_records(csv_path)
        except (OSError, ValueError) as err:
            print(f"error: cannot read {csv_path}: {err}", file=sys.stderr)
            return 1
        observable, reference = STUDY_PANELS[study]
        title = study
        if study in verdicts:
            title += " [pass]" if verdicts[study] else " [FAIL]"
        spec = PlotSpec(observable=observable, study=study,
                        reference_exponent=reference, title=title,
                        xlabel="eps")
        out_path = os.path.join(args.out, f"{study}.png")
        try:
            fit = plot_scaling(rows, spec, out_path)
        except ValueError as err:
            print(f"error: {study}: {err}", file=sys.stderr)
            return 1
        annotations[study] = {
            "observable": observable,
            "slope": fit.slope,
            "intercept": fit.intercept,
            "r_squared": fit.r_squared,
            "n_used": fit.n_used,
        }
        print(f"{study}: wrote {out_path} (slope {fit.slope:.4f})")
    ann_path = os.path.join(args.out, "annotations.json")
    with open(ann_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(annotations, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"annotations: {ann_path}")
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
