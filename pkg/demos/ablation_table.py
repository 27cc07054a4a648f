"""The full ablation on five toy videos, as a table.

Runs the ``toy-video-ablation`` preset (about a minute on one core) and
prints the mean prediction error of every row and of the window-size curve.

    python3 demos/ablation_table.py [jobs] [output_dir]
"""

import sys
import tempfile

from stream_ttt.config import config_from_dict
from stream_ttt.harness import execute
from stream_ttt.presets import preset

jobs = int(sys.argv[1]) if len(sys.argv) > 1 else 1
out = sys.argv[2] if len(sys.argv) > 2 else tempfile.mkdtemp(prefix="ablation-")
bundle = execute(config_from_dict(preset("toy-video-ablation")), out, jobs=jobs)

for row in bundle.summary["rows"]:
    print(f"{row['variant']:<42} {row['mean_pred_error']:.4f} +- {row['stderr']:.4f}")
print("\nwindow size curve (online, carry-over)")
for point in bundle.summary["window_curve"]:
    print(f"  k={point['k']:<4} {point['mean_pred_error']:.4f} +- {point['stderr']:.4f}")
print(f"\nbundle written to {out}")
