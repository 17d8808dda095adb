"""Compiled toppling loop used by the default stabilization path."""

import numpy as np
from numba import njit


@njit(cache=True)
def relax_sweep(heights, neighbours, degree, odometer, cap):
    """Sweep over all vertices, firing every unstable one, until none is left.

    ``heights`` has one extra trailing slot that absorbs chips sent to the
    sink; ``neighbours`` is a padded ``(n, width)`` table whose unused entries
    point at that slot (an edge of multiplicity m appears m times).  A vertex
    holding ``h >= d`` chips fires ``h // d`` times at once, which equals that
    many consecutive legal topplings.

    Returns the number of topplings performed, or -1 once ``cap`` is exceeded.
    """
    n = degree.shape[0]
    width = neighbours.shape[1]
    total = 0
    while True:
        fired = 0
        for v in range(n):
            hv = heights[v]
            d = degree[v]
            if hv >= d:
                k = 1 if hv < 2 * d else hv // d
                heights[v] = hv - k * d
                odometer[v] += k
                fired += k
                for j in range(width):
                    heights[neighbours[v, j]] += k
        heights[n] = 0
        total += fired
        if fired == 0:
            return total
        if total > cap:
            return -1


@njit(cache=True)
def project_recurrent(heights, neighbours, degree, beta, max_rounds, cap):
    """Replace a stable configuration by the recurrent one in its class.

    Repeatedly adds the burning configuration ``beta`` (the chips the sink
    would send if it fired once) and relaxes.  Adding ``beta`` does not change
    the class, and a stable configuration is recurrent exactly when the round
    returns it unchanged with every vertex firing once.

    Returns the number of rounds, or -1 when ``max_rounds`` or ``cap`` runs
    out; every pass over the vertices counts ``n`` towards ``cap`` on top of
    the topplings, because chips entering at the corners may need many passes.
    """
    n = degree.shape[0]
    width = neighbours.shape[1]
    fired_by = np.zeros(n, dtype=np.int64)
    total = 0
    for rounds in range(1, max_rounds + 1):
        for v in range(n):
            heights[v] += beta[v]
            fired_by[v] = 0
        while True:
            fired = 0
            for v in range(n):
                hv = heights[v]
                d = degree[v]
                if hv >= d:
                    k = 1 if hv < 2 * d else hv // d
                    heights[v] = hv - k * d
                    fired_by[v] += k
                    fired += k
                    for j in range(width):
                        heights[neighbours[v, j]] += k
            heights[n] = 0
            total += fired + n
            if fired == 0:
                break
            if total > cap:
                return -1
        once = True
        for v in range(n):
            if fired_by[v] != 1:
                once = False
                break
        if once:
            return rounds
    return -1
