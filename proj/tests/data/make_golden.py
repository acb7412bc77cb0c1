"""Regenerates golden_j0.txt: J(0) = int e^{-|y|} rho(y) dy at 40 digits."""
import mpmath as mp

mp.mp.dps = 40
rho = lambda x: mp.e ** (-1 / (1 - x * x)) if abs(x) < 1 else mp.mpf(0)
c = 1 / mp.quad(rho, [-1, 0, 1])
j0 = c * mp.quad(lambda y: mp.e ** (-abs(y)) * rho(y), [-1, 0, 1])
with open("golden_j0.txt", "w") as f:
    f.write(mp.nstr(j0, 20) + "\n")
