"""Perturbed minimizers of strongly convex quadratics.

Adding a linear term v.x to a quadratic with curvature at least alpha moves
its minimizer. The resulting excess value is at most |v|^2 / (2 alpha), with
equality when the curvature is exactly alpha in every direction.
"""

import numpy as np

from stream_ttt.theory import lemma_check, random_lemma_instance, verify_lemma

rng = np.random.default_rng(0)
H, b, v = random_lemma_instance(rng, alpha=1.0, max_dim=5)
one = verify_lemma(H, b, v, alpha=1.0)
print(f"one instance in d={len(b)}: gap {one.gap:.6f} <= bound {one.bound:.6f}")

iso = verify_lemma(2.0 * np.eye(3), np.zeros(3), np.ones(3), alpha=2.0)
print(f"isotropic curvature: gap {iso.gap:.12f}, bound {iso.bound:.12f}")

summary = lemma_check(1000, alpha=1.0, max_dim=10, seed=0)
print(f"{summary.holding}/{summary.instances} random instances hold; "
      f"largest gap/bound ratio {summary.max_ratio:.4f}")
