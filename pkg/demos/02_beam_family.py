"""How much freedom the beam family gives two users who share a channel shape."""
import numpy as np

from gmudprec import GmudParams, beam, svd

rng = np.random.default_rng(3)
H = (rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))) / np.sqrt(2)
lam = svd(H).singular_values
print("singular values:", np.round(lam, 4), " condition number:", round(lam[0] / lam[1], 3))

# Every (r, theta) yields a unit beam q with gain ||H q||^2 = r^2 + z1^2.
# Sweeping theta at fixed r traces a circle of directions; sweeping r moves
# between the strongest direction (r = lam1) and the weakest (r = lam2).
q_svd = beam(H, GmudParams(lam[0], 0.0))
print("\n r/lam1   min |<q, v1>|^2 over theta   gain ||H q||^2")
for frac in (1.0, 0.9, 0.7, 0.5, 0.3, 0.0):
    r = lam[1] + frac * (lam[0] - lam[1])
    qs = [beam(H, GmudParams(r, t)) for t in np.linspace(0, 2 * np.pi, 64, endpoint=False)]
    overlap = min(abs(np.vdot(q_svd, q)) ** 2 for q in qs)
    gain = np.linalg.norm(H @ qs[0]) ** 2
    print(f"  {r / lam[0]:.3f}           {overlap:.3f}                   {gain:.3f}")

# A well-conditioned channel keeps the gain high across the family, so beams
# can be turned away from another user's beam without losing much power.
