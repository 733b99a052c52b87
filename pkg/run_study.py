"""
Desk-scale simulation study
Gaussian and binomial scenarios at p=4, the sparse p=50 scenario, and a
single-fit timing comparison of the two solvers at p=200
"""

import logging
import sys

from app.config import Config
from app.models import FamilyKind, SimConfig, SolverKind
from app.study import run_study, single_fit_timing
from app.utils import save_csv

REPLICATES = 10
SPARSE_REPLICATES = 5


def _report(summary):
    for _, row in summary.iterrows():
        print(f"   {row['solver']:8s} {row['metric']} = {row['mean']:.3f} ({row['sd']:.3f})"
              f"   cv {row['cv_seconds']:.1f}s  final {row['final_seconds']:.1f}s")


def main():
    logging.basicConfig(level=Config.LOG_LEVEL)
    print("\n" + "=" * 70)
    print("SPIKE-AND-SLAB ADDITIVE MODEL - SIMULATION STUDY")
    print("=" * 70)
    output_dir = Config.OUTPUT_DIR

    # Step 1: gaussian, p=4
    print(f"\n[STEP 1/4] Gaussian, p=4, {REPLICATES} replicates...")
    runs, summary = run_study(SimConfig(p=4, family=FamilyKind.GAUSSIAN, seed=Config.SEED), REPLICATES)
    save_csv(runs, "gaussian_p4_runs.csv", output_dir)
    save_csv(summary, "gaussian_p4_summary.csv", output_dir)
    _report(summary)

    # Step 2: binomial, p=4
    print(f"\n[STEP 2/4] Binomial, p=4, {REPLICATES} replicates...")
    runs, summary = run_study(SimConfig(p=4, family=FamilyKind.BINOMIAL, seed=Config.SEED), REPLICATES)
    save_csv(runs, "binomial_p4_runs.csv", output_dir)
    save_csv(summary, "binomial_p4_summary.csv", output_dir)
    _report(summary)

    # Step 3: sparse gaussian, p=50, EM-CD only
    print(f"\n[STEP 3/4] Gaussian, p=50, EM-CD, {SPARSE_REPLICATES} replicates...")
    runs, summary = run_study(SimConfig(p=50, family=FamilyKind.GAUSSIAN, seed=Config.SEED),
                              SPARSE_REPLICATES, solvers=[SolverKind.EM_CD])
    save_csv(runs, "gaussian_p50_runs.csv", output_dir)
    save_csv(summary, "gaussian_p50_summary.csv", output_dir)
    _report(summary)
    print(f"   inactive variables classified null: {summary['inactive_null_rate'].iloc[0]:.1%}")

    # Step 4: one fit per solver at p=200
    print("\n[STEP 4/4] Single-fit timing, p=200...")
    config = SimConfig(p=200, family=FamilyKind.GAUSSIAN, seed=Config.SEED)
    cd_seconds = single_fit_timing(config, 0.3, SolverKind.EM_CD)
    iwls_seconds = single_fit_timing(config, 0.3, SolverKind.EM_IWLS)
    print(f"   EM-CD   {cd_seconds:.2f}s")
    print(f"   EM-IWLS {iwls_seconds:.2f}s")
    if cd_seconds < iwls_seconds:
        print("✅ EM-CD is faster than EM-IWLS")
    else:
        print("⚠️  EM-CD was not faster than EM-IWLS on this machine")

    print("\n" + "=" * 70)
    print(f"Results written to {output_dir}/")
    print("=" * 70 + "\n")
    return True


if __name__ == "__main__":
    sys.exit(0 if main() else 1)
