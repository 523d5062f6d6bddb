"""Frozen digests of the seeded quick Monte Carlo (see cli.run_quick_mc).

Produced by the first verified build; `semlab verify` recomputes the
4-cell summary CSV and compares. Any estimator, sampler, or aggregation
change that shifts results shows up here as a hash mismatch.
"""

QUICK_MC_SUMMARY_SHA256 = {
    "ml": "98254b441974df409679711fae56394baf8042f5ec15ab6e6f38c369f142b81c",
    "pls": "118d6212763340839fdc4b92f1d31d99fb80c91dbe69f55897c6a5005b47d637",
}
