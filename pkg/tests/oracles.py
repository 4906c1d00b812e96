"""Independent reference implementations used as test oracles."""
from __future__ import annotations

import numpy as np


def march_scan(segments, centers, radius, origin, max_range, step=1e-3, beams=360, chunk=4000):
    """Ray-march every beam in fixed ``step`` increments.

    A beam stops at the first sample inside a circle or the first sample
    after it crosses a segment (side-of-line sign change whose crossing
    point lies within the segment). Misses read ``max_range``. Predicates
    are evaluated per sample from their closed forms in the march distance.
    """
    segments = np.asarray(segments, dtype=float).reshape(-1, 4)
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    origin = np.asarray(origin, dtype=float)
    th = np.radians(np.arange(beams) * 360.0 / beams)
    dirs = np.column_stack([np.cos(th), np.sin(th)])
    result = np.full(beams, float(max_range))
    active = np.arange(beams)
    n_steps = int(round(max_range / step))
    for start in range(0, n_steps, chunk):
        if len(active) == 0:
            break
        s = (np.arange(start, min(start + chunk, n_steps)) + 1) * step
        d = dirs[active]
        hit = np.zeros((len(active), len(s)), dtype=bool)
        for c in centers:
            oc = origin - c
            # |origin + s*d - c|^2 at each sample
            dist2 = s[None, :] ** 2 + 2 * s[None, :] * (d @ oc)[:, None] + oc @ oc
            hit |= dist2 <= radius * radius
        for x1, y1, x2, y2 in segments:
            e = np.array([x2 - x1, y2 - y1])
            w = origin - np.array([x1, y1])
            side0 = e[0] * w[1] - e[1] * w[0]
            slope = e[0] * d[:, 1] - e[1] * d[:, 0]
            side_b = side0 + s[None, :] * slope[:, None]
            side_a = side_b - step * slope[:, None]
            cross = side_a * side_b <= 0
            with np.errstate(divide="ignore", invalid="ignore"):
                alpha = np.where(side_a != side_b, side_a / (side_a - side_b), 0.0)
            s_cross = s[None, :] - step + alpha * step
            u = ((w @ e) + s_cross * (d @ e)[:, None]) / (e @ e)
            hit |= cross & (u >= 0) & (u <= 1)
        any_hit = hit.any(axis=1)
        first = np.argmax(hit, axis=1)
        result[active[any_hit]] = s[first[any_hit]]
        active = active[~any_hit]
    return result


def alignments(n: int, m: int):
    """Every monotone warping path from (0, 0) to (n-1, m-1)."""
    def walk(i, j):
        if (i, j) == (n - 1, m - 1):
            yield [(i, j)]
            return
        for di, dj in ((1, 1), (1, 0), (0, 1)):
            a, b = i + di, j + dj
            if a < n and b < m:
                for rest in walk(a, b):
                    yield [(i, j)] + rest
    yield from walk(0, 0)


def brute_force_dtw(a, b) -> float:
    a = np.asarray(a, dtype=float).reshape(-1, 2)
    b = np.asarray(b, dtype=float).reshape(-1, 2)
    best = np.inf
    for path in alignments(len(a), len(b)):
        total = 0.0
        for i, j in path:
            total += float(np.hypot(*(a[i] - b[j])))
        best = min(best, total)
    return best


def finite_difference(fn, arrays: dict, step=1e-4, keys=None, max_entries=None, rng=None):
    """Central differences of scalar ``fn(arrays)`` for each entry.

    ``max_entries`` samples that many entries per tensor (all when None).
    Returns ``{name: (indices, numeric_gradients)}``.
    """
    out = {}
    for name in keys or list(arrays):
        arr = arrays[name]
        flat = list(np.ndindex(arr.shape))
        if max_entries is not None and len(flat) > max_entries:
            pick = (rng or np.random.default_rng(0)).choice(len(flat), max_entries, replace=False)
            flat = [flat[i] for i in sorted(pick)]
        vals = []
        for ix in flat:
            trial = dict(arrays)
            plus = arr.copy()
            plus[ix] += step
            trial[name] = plus
            fp = fn(trial)
            minus = arr.copy()
            minus[ix] -= step
            trial[name] = minus
            fm = fn(trial)
            vals.append((fp - fm) / (2 * step))
        out[name] = (flat, np.array(vals))
    return out


def max_relative_error(analytic: dict, numeric: dict, floor=1e-8) -> tuple[float, str]:
    """Largest ``|a - n| / max(|a|, |n|, floor)`` over all checked entries."""
    worst, where = 0.0, ""
    for name, (idx, nums) in numeric.items():
        for ix, n in zip(idx, nums):
            a = analytic[name][ix]
            err = abs(a - n) / max(abs(a), abs(n), floor)
            if err > worst:
                worst, where = err, f"{name}{ix}"
    return worst, where
