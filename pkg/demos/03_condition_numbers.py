"""Multipath convolution channels versus flat 2x2 MIMO channels: conditioning."""
import numpy as np

from gmudprec import ChannelEnsembleSpec, condition_stats
from gmudprec.channel import draw_channel_matrices

trials = 10_000
siso = condition_stats(ChannelEnsembleSpec(kind="siso_multipath", users=1, paths=2, seed=0), trials)
mimo = condition_stats(ChannelEnsembleSpec(kind="mimo_flat", users=1, n_tx=2, n_rx=2, seed=0), trials)

print(f"3x2 two-tap convolution matrix: median {siso['median']:.3f}  mean {siso['mean']:.3f}")
print(f"2x2 i.i.d. Gaussian matrix:     median {mimo['median']:.3f}  mean {mimo['mean']:.3f}")
print(f"ratio of medians: {mimo['median'] / siso['median']:.3f}")

# For two taps the Gram matrix is [[n, h0 conj(h1)], [conj(h0) h1, n]] with
# n = |h0|^2 + |h1|^2, so the condition number never exceeds sqrt(3).
spec = ChannelEnsembleSpec(users=1, paths=2, seed=1)
worst = max(np.linalg.cond(draw_channel_matrices(spec, t)[0]) for t in range(2000))
print(f"largest of 2000 convolution-matrix condition numbers: {worst:.4f} (bound {np.sqrt(3):.4f})")
