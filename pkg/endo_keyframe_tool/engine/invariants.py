"""
Invariant enforcement for the Endo Key-frame Tool.
Checks a scored sequence after the fact and reports, without raising.
"""

from typing import Any, Dict, Tuple

import numpy as np

from endo_keyframe_tool.engine.keyframes import AdaptiveWeights, ScoreSeries

SIMPLEX_TOLERANCE = 1e-12


def enforce_invariants(series: ScoreSeries, weights: AdaptiveWeights) -> Tuple[bool, Dict[str, Any]]:
    """
    Run invariant checks (IC1-IC5) on a scored sequence.

    IC1: every series has length n
    IC2: normalized series lie in [0, 1]
    IC3: weights are nonnegative and sum to 1
    IC4: fused scores lie in [0, 1]
    IC5: raw scores are finite

    Args:
        series: Scored sequence, fused scores included
        weights: Adaptive weights used for fusion

    Returns:
        Tuple of (bool, report_dict):
        - bool: True if all invariants pass, False otherwise
        - report_dict: Per-check passed flag and message
    """
    report = {f"ic{i}": {"passed": False, "message": ""} for i in range(1, 6)}
    n = series.n
    fused = series.fused if series.fused is not None else np.zeros(0)

    # IC1: lengths
    lengths = {
        name: len(getattr(series, name))
        for name in ("d_raw", "s_raw", "p_raw", "d_norm", "s_norm", "p_norm")
    }
    lengths["fused"] = len(fused)
    wrong = {name: length for name, length in lengths.items() if length != n}
    if not wrong:
        report["ic1"]["passed"] = True
        report["ic1"]["message"] = f"All series have length {n}"
    else:
        report["ic1"]["message"] = f"Length mismatch against n={n}: {wrong}"

    # IC2: normalized range
    out_of_range = [
        name for name in ("d_norm", "s_norm", "p_norm")
        if np.any(getattr(series, name) < 0.0) or np.any(getattr(series, name) > 1.0)
    ]
    if not out_of_range:
        report["ic2"]["passed"] = True
        report["ic2"]["message"] = "Normalized series within [0, 1]"
    else:
        report["ic2"]["message"] = f"Out of [0, 1]: {out_of_range}"

    # IC3: simplex
    w = np.array(weights.as_tuple())
    total = float(w.sum())
    if np.all(w >= 0.0) and abs(total - 1.0) <= SIMPLEX_TOLERANCE:
        report["ic3"]["passed"] = True
        report["ic3"]["message"] = "Weights on the simplex"
    else:
        report["ic3"]["message"] = f"Weights {w.tolist()} sum to {total!r}"

    # IC4: fused range
    if len(fused) == n and np.all((fused >= 0.0) & (fused <= 1.0)):
        report["ic4"]["passed"] = True
        report["ic4"]["message"] = "Fused scores within [0, 1]"
    else:
        report["ic4"]["message"] = "Fused scores missing or outside [0, 1]"

    # IC5: finite raw scores
    non_finite = [name for name in ("d_raw", "s_raw", "p_raw") if not np.all(np.isfinite(getattr(series, name)))]
    if not non_finite:
        report["ic5"]["passed"] = True
        report["ic5"]["message"] = "Raw scores finite"
    else:
        report["ic5"]["message"] = f"Non-finite values in {non_finite}"

    all_passed = all(check["passed"] for check in report.values())
    return all_passed, report
