"""Acceptance criteria C1-C10, each run from its shipped preset at the stated tolerance.

Every criterion prints one PASS/FAIL line in the terminal summary. Run alone with
``pytest tests/test_acceptance.py -v`` or as a script.
"""

from __future__ import annotations

import time
from importlib import resources

import pytest

from xteam.harness.config import validate_config
from xteam.harness.experiments import run
from xteam.parallel import using_threads

pytestmark = pytest.mark.acceptance

CRITERIA = {
    "C1": ("c1_perm_invariance.json", 10, "relabeled cost estimates bit-identical for all 24 permutations"),
    "C2": ("c2_symmetrize.json", 30, "symmetrized oracle cost <= average permuted cost, margin >= -1e-10"),
    "C3": ("c3_lqg_validate.json", 120, "oracle rule simulated within 2% of oracle cost; convexity certificate"),
    "C4": ("c4_tv_bound.json", 30, "exact TV gap <= m(m-1)/(2N) and a case within 10% of the bound"),
    "C5": ("c5_martingale.json", 60, "residual within 3 SE + C dt; bias halves within 25% when K doubles"),
    "C6": ("c6_girsanov_check.json", 180, "reweighted vs direct coupled cost within 3 SE; mean weight near 1"),
    "C7": ("c7_converge_n.json", 300, "|J_N - J_MV| and W2 decrease with 3-SE separation"),
    "C8": ("c8_epsilon_gap.json", 600, "mean-field policy gap decreasing over {4,16,64}, final gap within 3 SE"),
    "C9": ("c9_mixture_linearity.json", 10, "randomized cost affine in mixture weights to 1e-12"),
}
THREADS_FAST, THREADS_SLOW = 8, 1

RESULTS: dict[str, tuple[bool, str]] = {}
_RUNS: dict[str, tuple] = {}


def preset_text(name: str) -> str:
    return resources.files("xteam.harness").joinpath("presets", name).read_text()


def timed_run(cid: str, threads: int):
    cfg = validate_config(preset_text(CRITERIA[cid][0]))
    start = time.perf_counter()
    with using_threads(threads):
        record = run(cfg)
    return record, time.perf_counter() - start


def first_run(cid: str):
    if cid not in _RUNS:
        _RUNS[cid] = timed_run(cid, THREADS_FAST)
    return _RUNS[cid]


def report(cid: str, passed: bool, detail: str) -> None:
    RESULTS[cid] = (passed, detail)
    print(f"{cid} {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.mark.parametrize("cid", list(CRITERIA))
def test_criterion(cid):
    name, limit, claim = CRITERIA[cid]
    record, elapsed = first_run(cid)
    failed = [v for v in record.verdicts if not v.passed]
    ok = not failed and elapsed < limit
    detail = f"{claim} [{elapsed:.1f}s / {limit}s]"
    if failed:
        detail += "; failed: " + "; ".join(f"{v.name} (value {v.value}, need {v.tolerance})" for v in failed)
    report(cid, ok, detail)
    assert not failed, detail
    assert elapsed < limit, f"runtime {elapsed:.1f}s exceeds {limit}s"


def test_c10_reproducible_records():
    mismatched = []
    for cid in CRITERIA:
        a, _ = first_run(cid)
        b, _ = timed_run(cid, THREADS_SLOW)
        if a.to_json() != b.to_json() or a.rows_jsonl() != b.rows_jsonl():
            mismatched.append(cid)
    ok = not mismatched
    report("C10", ok, f"records byte-identical on re-run at {THREADS_FAST} and {THREADS_SLOW} threads"
           + (f"; differing: {', '.join(mismatched)}" if mismatched else ""))
    assert ok


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
