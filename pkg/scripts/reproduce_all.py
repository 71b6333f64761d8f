"""Run the whole experiment suite with the acceptance settings and write CSV/JSON reports.

    python scripts/reproduce_all.py [OUT_DIR]
"""
import sys
from pathlib import Path

from tracelab.lab import ExperimentConfig, run

SUITE = [
    ("ap-scan-alpha0.5-lam-2", ExperimentConfig("ap-scan", p=2, alpha=0.5, lam=-2, k_max=12)),
    ("ap-scan-alpha0.5-lam2", ExperimentConfig("ap-scan", p=2, alpha=0.5, lam=2, k_max=12)),
    ("ap-scan-alpha1-lam3", ExperimentConfig("ap-scan", p=2, alpha=1, lam=3, k_max=12)),
    ("ap-scan-alpha1-lam1", ExperimentConfig("ap-scan", p=2, alpha=1, lam=1, k_max=12)),
    ("ap-scan-p1-lam-1", ExperimentConfig("ap-scan", p=1, alpha=0, lam=-1, k_max=12)),
    ("counterexample", ExperimentConfig("counterexample", p=1, lam=-1, beta=0, k_max=16)),
    ("trace-bound-p1", ExperimentConfig("trace-bound", p=1, lam=1, k_max=14)),
    ("trace-bound-p2", ExperimentConfig("trace-bound", p=2, lam=3, k_max=14)),
    ("besov-trace-bound-p1", ExperimentConfig("besov-trace-bound", p=1, lam=1, j_max=4)),
    ("besov-trace-bound-p2", ExperimentConfig("besov-trace-bound", p=2, lam=3, j_max=4)),
    ("extension-bound", ExperimentConfig("extension-bound", p=1, lam=1, level=3, count=10)),
    *[(f"retraction-L{L}", ExperimentConfig("retraction", d=1, level=L, k_max=14, seed=L)) for L in (1, 2, 3)],
    ("partition-check", ExperimentConfig("partition-check", d=1, samples=10_000, k_max=6)),
    ("poincare-check", ExperimentConfig("poincare-check", d=1, count=13)),
]


def main(out: Path) -> int:
    failed = 0
    for tag, cfg in SUITE:
        cfg.output_path = str(out / tag)
        rep = run(cfg)
        failed += not rep.passed
        print(f"== {tag} ({rep.wall_time:.1f}s)")
        print(rep.summary())
    print(f"\n{len(SUITE) - failed}/{len(SUITE)} experiments passed; reports in {out}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main(Path(sys.argv[1] if len(sys.argv) > 1 else "results")))
