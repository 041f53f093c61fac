"""High-precision oracle for the subsampled-Gaussian RDP bound.

Evaluates (1/(a-1)) * ln(sum_k C(a,k) (1-q)^(a-k) q^k exp(k(k-1)/(2 s^2)))
with 60-digit arithmetic. Values printed here are frozen into tests/common/mod.rs.
"""
from mpmath import mp, mpf, binomial, exp, log

mp.dps = 60

POINTS = [
    (0.01, 1.0, 2),
    (0.01, 1.0, 3), (0.01, 1.0, 8), (0.01, 1.0, 32),
    (0.05, 1.1, 2), (0.05, 1.1, 10), (0.05, 1.1, 64),
    (0.001, 0.5, 2), (0.001, 0.5, 5), (0.001, 0.5, 20),
    (0.1, 2.0, 4), (0.1, 2.0, 16), (0.1, 2.0, 128),
    (0.5, 3.0, 2), (0.5, 3.0, 12),
    (0.02, 0.8, 6), (0.02, 0.8, 40),
    (0.2, 10.0, 256), (0.2, 10.0, 64),
    (0.0133, 4.0, 30), (0.9, 1.5, 7),
]


def rdp(q, s, a):
    q = mpf(q)
    s = mpf(s)
    total = mpf(0)
    for k in range(a + 1):
        total += binomial(a, k) * (1 - q) ** (a - k) * q ** k * exp(mpf(k * (k - 1)) / (2 * s * s))
    return log(total) / (a - 1)


for q, s, a in POINTS:
    print(f"({q!r}, {s!r}, {a}, {mp.nstr(rdp(q, s, a), 17)}),")
