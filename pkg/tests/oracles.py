"""Independent reference computations used by the tests.

Everything here is written with explicit loops over integer frequencies and
shares no code with the package beyond the grid geometry.
"""

import itertools
import math

import numpy as np


def lattice(n, dim):
    half = n // 2
    return list(itertools.product(range(-half, half), repeat=dim))


def naive_forward(samples, n, dim, length):
    """coeff(k) = sqrt(V)/N^d sum_x f(x) exp(-i k.x / L) by direct summation."""
    V = (2 * math.pi * length) ** dim
    h = 2 * math.pi * length / n
    pts = np.array(list(itertools.product(range(n), repeat=dim)), dtype=float) * h
    vals = np.asarray(samples).reshape(-1)
    out = {}
    for k in lattice(n, dim):
        phase = np.exp(-1j * pts @ (np.array(k, dtype=float) / length))
        out[k] = math.sqrt(V) / n**dim * np.sum(vals * phase)
    return out


def to_dict(field):
    grid = field.grid
    return {k: complex(field.coeffs[grid.position(k)]) for k in lattice(grid.n, grid.dim)}


def brute_product(f, g):
    """Truncate both inputs to |k_i| <= N/3, convolve without wrap-around, truncate again."""
    grid = f.grid
    n, V = grid.n, grid.volume
    keep = lambda k: all(3 * abs(c) <= n for c in k)  # noqa: E731
    fd = {k: v for k, v in to_dict(f).items() if keep(k) and v != 0}
    gd = {k: v for k, v in to_dict(g).items() if keep(k) and v != 0}
    out = {k: 0j for k in lattice(n, grid.dim)}
    for k1, a in fd.items():
        for k2, b in gd.items():
            k = tuple(x + y for x, y in zip(k1, k2))
            if k in out and keep(k):
                out[k] += a * b / math.sqrt(V)
    return out



def direct_product_array(f, g):
    """Same truncated convolution as brute_product, looping over k1 and vectorized over k2.

    Returns the centered coefficient array (index k + N/2 on every axis).
    """
    grid = f.grid
    n, dim, V = grid.n, grid.dim, grid.volume
    ks = np.array(lattice(n, dim))
    fd, gd = to_dict(f), to_dict(g)
    keep = np.all(3 * np.abs(ks) <= n, axis=1)
    ks = ks[keep]
    fv = np.array([fd[tuple(k)] for k in ks])
    gv = np.array([gd[tuple(k)] for k in ks])
    out = np.zeros((n,) * dim, dtype=complex)
    for k1, a in zip(ks, fv):
        tgt = k1 + ks
        ok = np.all(3 * np.abs(tgt) <= n, axis=1)
        idx = tuple((tgt[ok] + n // 2).T)
        np.add.at(out, idx, a * gv[ok] / math.sqrt(V))
    return out

def weighted_sum_gevrey(field, sigma, s):
    grid = field.grid
    total = 0.0
    for k, c in to_dict(field).items():
        xi = np.array(k, dtype=float) / grid.length
        w = math.exp(sigma * np.sum(np.abs(xi))) * (1 + float(xi @ xi)) ** (s / 2)
        total += (w * abs(c)) ** 2
    return math.sqrt(total)


def surface(tag, xi):
    r2 = float(xi @ xi)
    return {"schrodinger": -r2, "wave_plus": -math.sqrt(r2), "wave_minus": math.sqrt(r2)}[tag]


def weighted_sum_bourgain(F, sigma, s, b, tag):
    """Loop over centered slots of a SpaceTimeField."""
    n, m = F.grid.n, F.n_time
    total = 0.0
    for slot in itertools.product(*[range(x) for x in F.coeffs.shape]):
        c = F.coeffs[slot]
        if c == 0:
            continue
        k = np.array(slot[:-1], dtype=float) - n // 2
        j = slot[-1] - m // 2
        xi = k / F.grid.length
        tau = 2 * math.pi * j / F.window
        w = (
            math.exp(sigma * np.sum(np.abs(xi)))
            * (1 + float(xi @ xi)) ** (s / 2)
            * (1 + (tau - surface(tag, xi)) ** 2) ** (b / 2)
        )
        total += (w * abs(c)) ** 2
    return math.sqrt(total)


def spacetime_dict(F):
    n, m = F.grid.n, F.n_time
    out = {}
    for slot in zip(*np.nonzero(F.coeffs)):
        key = tuple(int(i) - n // 2 for i in slot[:-1]) + (int(slot[-1]) - m // 2,)
        out[key] = complex(F.coeffs[slot])
    return out


def brute_spacetime_product(f, g, conjugate_g=False):
    fd, gd = spacetime_dict(f), spacetime_dict(g)
    if conjugate_g:
        gd = {tuple(-x for x in k): np.conj(v) for k, v in gd.items()}
    out = {}
    for k1, a in fd.items():
        for k2, b in gd.items():
            k = tuple(x + y for x, y in zip(k1, k2))
            out[k] = out.get(k, 0j) + a * b
    return out
