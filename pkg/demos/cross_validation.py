"""Walkthrough: repeated K-fold tuning selection on a simulated panel.

Shows the per-candidate score table, the one-standard-error set, and the
final parsimonious pick.

Run:  python3 demos/cross_validation.py
"""

import numpy as np

from rcdens.numerics import build_frequency_grid
from rcdens.panel import stayer_threshold_rule
from rcdens.simulation import DgpSpec, simulate
from rcdens.tuning_cv import CvConfig, IrregularFixedParams, cv_report, repeated_cv


def main():
    sample, _ = simulate(DgpSpec(), 1200, seed=7)
    threshold = stayer_threshold_rule(sample.x, threshold_scale=4.0)
    grid = build_frequency_grid(4.0, 101, "standard-normal")

    config = CvConfig(
        n_folds=5,
        n_repeats=5,
        candidate_bandwidths=(0.3, 0.4, 0.6),
        candidate_dimensions=(3, 5, 7),
        max_instability=1e4,
        rng_seed=1,
    )
    fixed = IrregularFixedParams(stayer_threshold=threshold)
    result = repeated_cv(sample, fixed, config, grid)
    report = cv_report(result)

    print(f"{'bandwidth':>10} {'dim':>4} {'score':>12} {'se':>10}  in one-SE set")
    one_se = {(c["bandwidth"], c["dimension"]) for c in report["one_se_set"]}
    for cand, score, se in zip(
        report["candidates"], report["mean_scores"], report["se_scores"]
    ):
        key = (cand["bandwidth"], cand["dimension"])
        mark = "yes" if key in one_se else ""
        print(f"{key[0]:>10.2f} {key[1]:>4d} {score:>12.5f} {se:>10.5f}  {mark}")

    sel = report["selected"]
    print(f"\nselected: bandwidth {sel['bandwidth']}, dimension {sel['dimension']}")
    print("rule: smallest dimension inside the one-SE band, then widest bandwidth")


if __name__ == "__main__":
    main()
