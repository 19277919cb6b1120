"""Brute-force reference implementations, independent of the package code."""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np


def brute_chamfer(P, Q) -> float:
    d = ((P[:, None, :] - Q[None, :, :]) ** 2).sum(-1)
    return float((d.min(axis=1).mean() + d.min(axis=0).mean()) * 1e3)


def _sub(a, b):
    return tuple(x - y for x, y in zip(a, b))


def _dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def _cross(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


def sat_intersect(t1, t2) -> bool:
    """Closed triangles meet iff no candidate axis separates them strictly (exact rationals)."""
    A = [tuple(Fraction(float(c)) for c in p) for p in t1]
    B = [tuple(Fraction(float(c)) for c in p) for p in t2]
    ea = [_sub(A[(i + 1) % 3], A[i]) for i in range(3)]
    eb = [_sub(B[(i + 1) % 3], B[i]) for i in range(3)]
    na, nb = _cross(ea[0], ea[1]), _cross(eb[0], eb[1])
    axes = [na, nb]
    axes += [_cross(x, y) for x in ea for y in eb]
    axes += [_cross(na, x) for x in ea] + [_cross(nb, y) for y in eb]
    for ax in axes:
        if all(c == 0 for c in ax):
            continue
        pa = [_dot(ax, p) for p in A]
        pb = [_dot(ax, p) for p in B]
        if max(pa) < min(pb) or max(pb) < min(pa):
            return False
    return True


def brute_sir(vertices, triangles) -> float:
    n = len(triangles)
    hit = [False] * n
    for i, j in itertools.combinations(range(n), 2):
        if set(triangles[i]) & set(triangles[j]):
            continue
        if sat_intersect(vertices[triangles[i]], vertices[triangles[j]]):
            hit[i] = hit[j] = True
    return sum(hit) / n if n else 0.0


def brute_match_count(pred, gt, tol) -> int:
    """Best one-to-one pairing by trying every injection of the smaller list into the larger."""
    if not pred or not gt:
        return 0
    small, large, flip = (pred, gt, False) if len(pred) <= len(gt) else (gt, pred, True)

    def ok(a, b):
        p, g = (b, a) if flip else (a, b)
        return len(p) == len(g) and np.max(np.abs(np.asarray(p) - np.asarray(g))) <= tol

    best = 0
    for perm in itertools.permutations(range(len(large)), len(small)):
        best = max(best, sum(ok(small[i], large[j]) for i, j in enumerate(perm)))
    return best
