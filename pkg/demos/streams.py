"""A look at the synthetic streams.

Prints drift statistics for the latent streams and a few frames of the toy
video as ASCII art, before and after a regime switch.
"""

import numpy as np

from stream_ttt.streamgen import StreamSpec, gen_stream

for kind in ("constant", "linear-drift", "bounded-random-walk"):
    s = gen_stream(StreamSpec(kind, 50, (4,), 0.1, seed=0))
    steps = np.linalg.norm(np.diff(s.X, axis=0), axis=1)
    print(f"{kind:>20}: mean step {steps.mean():.3f}, max step {steps.max():.3f}")

video = gen_stream(StreamSpec("shape-video", 40, (16, 16), 3.0, regime_times=(20,), seed=2,
                              bg_range=(0.0, 0.95)))
shades = " .:-=+*#%@"


def draw(frame, label):
    for row, lab in zip(frame, label):
        pixels = "".join(shades[min(9, int(v * 10))] for v in row)
        mask = "".join("o" if m else "." for m in lab)
        print(f"  {pixels}   {mask}")


for t in (19, 20, 21):
    print(f"\nframe {t} (switch between frames 20 and 21); left pixels, right label")
    draw(video.X[t - 1].reshape(16, 16), video.Y[t - 1].reshape(16, 16))
