"""Brute-force reference for the ELSA reconstruction loss.

Used to freeze expected values in the Rust tests; evaluates the scalar
formula with explicit loops and no shared code with the crate.
"""
import math


def norm_rows(m):
    out = []
    for row in m:
        n = math.sqrt(sum(v * v for v in row))
        out.append([v / n for v in row] if n > 0 else [0.0] * len(row))
    return out


def loss(x, a, normalize_a):
    if normalize_a:
        a = norm_rows(a)
    n_items, d = len(a), len(a[0])
    w = [[sum(a[i][k] * a[j][k] for k in range(d)) - (1.0 if i == j else 0.0)
          for j in range(n_items)] for i in range(n_items)]
    p = [[sum(row[i] * w[i][j] for i in range(n_items)) for j in range(n_items)] for row in x]
    xn, pn = norm_rows(x), norm_rows(p)
    return sum((xv - pv) ** 2 for xr, pr in zip(xn, pn) for xv, pv in zip(xr, pr))


if __name__ == "__main__":
    x = [[1, 1], [1, 0]]
    a = [[0.5, 0.0], [0.0, 0.5]]
    print("diag raw", repr(loss(x, a, False)))
    print("diag normalized", repr(loss(x, a, True)))
    x3 = [[1, 0, 1], [0, 1, 1], [1, 1, 0]]
    a3 = [[0.3, -0.2], [0.5, 0.1], [-0.4, 0.7]]
    print("3x3 raw", repr(loss(x3, a3, False)))
    print("3x3 normalized", repr(loss(x3, a3, True)))
