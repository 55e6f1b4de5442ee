"""Regenerate the reference filter-design fixture using scipy.

The test suite compares our from-scratch Butterworth design against
coefficients produced by an established filter-design tool. scipy is a
development-time dependency only; the generated JSON is checked in at
tests/fixtures/reference_sos.json so the package and its tests never need
it.

Usage: python tools/gen_reference_sos.py
"""

import json
from pathlib import Path

from scipy import signal

DESIGNS = [
    {"order": 3, "low_hz": 0.001, "high_hz": 0.2, "sample_rate_hz": 5.2},
    {"order": 3, "low_hz": 0.1, "high_hz": 1.5, "sample_rate_hz": 5.2},
    {"order": 2, "low_hz": 0.05, "high_hz": 1.0, "sample_rate_hz": 5.2},
    {"order": 4, "low_hz": 1.0, "high_hz": 40.0, "sample_rate_hz": 250.0},
]


def main() -> None:
    out = []
    for d in DESIGNS:
        sos = signal.butter(
            d["order"], [d["low_hz"], d["high_hz"]], btype="band", output="sos",
            fs=d["sample_rate_hz"],
        )
        out.append({**d, "sos": sos.tolist(), "tool": f"scipy {__import__('scipy').__version__}"})
    path = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "reference_sos.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(out, indent=2) + "\n")
    print(f"wrote {len(out)} designs to {path}")


if __name__ == "__main__":
    main()
