"""Online test-time training against the frozen model on the toy video.

Trains the shared model once on still images, then streams one video through
two runs: the frozen model, and online updates with a 16-frame window.
Prints the per-regime mean prediction error for each.
"""

from dataclasses import replace

import numpy as np

from stream_ttt.config import config_from_dict
from stream_ttt.harness import build_model, stream_spec, train_model, ttt_config
from stream_ttt.presets import preset
from stream_ttt.streamgen import gen_stream
from stream_ttt.tttloop import run_stream

cfg = config_from_dict(preset("toy-video-online"))
model = build_model(cfg)
state = train_model(cfg, model)
stream = gen_stream(stream_spec(cfg))
online = run_stream(stream, model, state, ttt_config(cfg))
fixed = run_stream(stream, model, state, replace(ttt_config(cfg), iters_per_frame=0))

edges = [0, *cfg.stream.regime_times, len(stream)]
print(f"{'frames':>12} {'fixed':>8} {'online':>8}")
for lo, hi in zip(edges, edges[1:]):
    f = np.mean(fixed.column("pred_error")[lo:hi])
    o = np.mean(online.column("pred_error")[lo:hi])
    print(f"{lo + 1:>5}-{hi:<6} {f:8.4f} {o:8.4f}")
print(f"{'all':>12} {fixed.summary()['mean_pred_error']:8.4f} "
      f"{online.summary()['mean_pred_error']:8.4f}")
