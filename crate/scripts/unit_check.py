#!/usr/bin/env python3
"""Reference values for the depth metrics, computed independently of the Rust code.

Depths are in meters. RMSE/MAE are reported in millimeters and the inverse
metrics in 1/km, so 1/d [1/m] becomes 1000/d [1/km].

Prints one JSON object per case.
"""

import json
import math

CASES = [
    {"pred": [10.0], "gt": [11.0]},
    {"pred": [2.0, 5.5, 40.0], "gt": [2.5, 5.0, 42.0]},
    {"pred": [1.0, 80.0, 12.25, 7.0], "gt": [1.5, 79.0, 12.0, 7.0]},
]


def metrics(pred, gt):
    n = len(gt)
    err_mm = [(p - g) * 1000.0 for p, g in zip(pred, gt)]
    inv_err_per_km = [1000.0 / p - 1000.0 / g for p, g in zip(pred, gt)]
    return {
        "rmse_mm": math.sqrt(sum(e * e for e in err_mm) / n),
        "mae_mm": sum(abs(e) for e in err_mm) / n,
        "irmse_per_km": math.sqrt(sum(e * e for e in inv_err_per_km) / n),
        "imae_per_km": sum(abs(e) for e in inv_err_per_km) / n,
    }


if __name__ == "__main__":
    for case in CASES:
        print(json.dumps(metrics(case["pred"], case["gt"])))
