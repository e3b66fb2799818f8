"""Walk through the GMUD of a small channel matrix."""
import numpy as np

from gmudprec import GmudParams, gmud_2x2, gmud_general, svd

np.set_printoptions(precision=4, suppress=True)
rng = np.random.default_rng(7)

# A 3x2 complex channel, like the convolution matrix of a two-tap channel.
H = (rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))) / np.sqrt(2)
U, lam, V = svd(H)
print("singular values:", lam)

# Any r between the two singular values can be placed in the top-left
# corner of a triangular R. The rest of R follows from r alone.
r = 0.5 * (lam[0] + lam[1])
f = gmud_2x2(H, GmudParams(r, theta=0.0))
print("\nR for r =", round(r, 4))
print(f.R)
print("r * z2 =", f.R[0, 0] * f.z2, " lam1 * lam2 =", lam[0] * lam[1])

# The phase theta picks one pair (P, Q) out of a whole family sharing that R.
for theta in (0.0, 1.0, 2.5):
    g = gmud_2x2(H, GmudParams(r, theta))
    err = np.linalg.norm(g.P @ g.R @ g.Q.conj().T - H)
    print(f"theta={theta:3.1f}  R unchanged: {np.array_equal(g.R, f.R)}  "
          f"reconstruction error {err:.1e}  first beam {g.Q[:, 0]}")

# The endpoints recover familiar decompositions.
top = gmud_2x2(H, GmudParams(lam[0], 0.0))
print("\nr = lam1 gives the SVD: Q == V ->", np.array_equal(top.Q, V))
gm = np.sqrt(lam[0] * lam[1])
mid = gmud_2x2(H, GmudParams(gm, 0.0))
print("r = sqrt(lam1 lam2) gives an equal diagonal:", np.diag(mid.R[:2]).real)

# Larger matrices: any diagonal that is multiplicatively majorized by the
# singular values is reachable. Here the equal-diagonal case on a 5x4.
H4 = rng.standard_normal((5, 4)) + 1j * rng.standard_normal((5, 4))
s4 = svd(H4).singular_values
target = [np.prod(s4) ** 0.25] * 4
F = gmud_general(H4, target, thetas=[0.3, 0.6, 0.9])
print("\n5x4 singular values:", s4)
print("diag(R):", np.diag(F.R[:4]).real)
