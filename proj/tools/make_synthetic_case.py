#!/usr/bin/env python3
"""Write a synthetic meshed DC test network as a Matpower case file.

Buses sit on a jittered rows x cols grid and connect to their grid
neighbours plus a few diagonals. Line ratings are 1.5x the worst base-case
or single-outage flow of a proportional base dispatch (floored at 30 MW),
so that dispatch is N-1 secure while a cost-optimal dispatch congests some
lines. Output is deterministic for a given seed.

    make_synthetic_case.py ROWS COLS SEED OUT.m
"""

import math
import random
import sys

import numpy as np


def build(rows, cols, seed):
    rng = random.Random(seed)
    n = rows * cols
    pos = [(c + rng.uniform(-0.25, 0.25), r + rng.uniform(-0.25, 0.25)) for r in range(rows) for c in range(cols)]

    edges = []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                edges.append((i, i + 1))
            if r + 1 < rows:
                edges.append((i, i + cols))
            if r + 1 < rows and c + 1 < cols and rng.random() < 0.15:
                edges.append((i, i + cols + 1))

    # Drop some grid edges while the graph stays connected.
    def connected(es):
        adj = [[] for _ in range(n)]
        for a, b in es:
            adj[a].append(b)
            adj[b].append(a)
        seen, stack = {0}, [0]
        while stack:
            for v in adj[stack.pop()]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == n

    for e in list(edges):
        if rng.random() < 0.12:
            trial = [x for x in edges if x != e]
            if connected(trial):
                edges = trial

    reactance = []
    for a, b in edges:
        d = math.dist(pos[a], pos[b])
        reactance.append(round(0.05 * d * rng.uniform(0.8, 1.2), 4))

    load = [0.0] * n
    for i in range(n):
        if rng.random() < 0.65:
            load[i] = float(rng.randint(20, 120))
    gens = []
    for i in range(n):
        if i == 0 or rng.random() < 0.3:
            gens.append((i, float(rng.randint(10, 40) * 10), round(rng.uniform(10, 80), 1)))
    total_load = sum(load)
    total_cap = sum(g[1] for g in gens)
    if total_cap < 1.4 * total_load:
        scale = 1.4 * total_load / total_cap
        gens = [(b, math.ceil(p * scale / 10) * 10, c) for b, p, c in gens]
        total_cap = sum(g[1] for g in gens)

    # Base dispatch: every unit at the same share of its capacity.
    inj = np.array([-l for l in load])
    for b, p, _ in gens:
        inj[b] += p * total_load / total_cap
    def flows(skip):
        lap = np.zeros((n, n))
        for k, ((a, b), x) in enumerate(zip(edges, reactance)):
            if k == skip:
                continue
            lap[a, a] += 1 / x
            lap[b, b] += 1 / x
            lap[a, b] -= 1 / x
            lap[b, a] -= 1 / x
        theta = np.zeros(n)
        theta[1:] = np.linalg.solve(lap[1:, 1:], inj[1:])
        return [0.0 if k == skip else abs(theta[a] - theta[b]) / x for k, ((a, b), x) in enumerate(zip(edges, reactance))]

    # Worst flow over the base case and every non-islanding single outage.
    worst = flows(None)
    for k in range(len(edges)):
        if not connected([e for i, e in enumerate(edges) if i != k]):
            continue
        worst = [max(w, f) for w, f in zip(worst, flows(k))]
    rate = [max(30.0, math.ceil(1.5 * f / 5) * 5) for f in worst]

    area = [1 if pos[i][0] < cols / 2 else 2 for i in range(n)]
    return pos, edges, reactance, rate, load, gens, area


def write(path, name, rows, cols, seed):
    pos, edges, reactance, rate, load, gens, area = build(rows, cols, seed)
    out = [f"function mpc = {name}", f"% Synthetic {rows}x{cols} meshed network, seed {seed}.", "mpc.version = '2';",
           "mpc.baseMVA = 100;", "", "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin", "mpc.bus = ["]
    for i in range(len(load)):
        kind = 3 if i == 0 else (2 if any(g[0] == i for g in gens) else 1)
        out.append(f"\t{i + 1}\t{kind}\t{load[i]:g}\t0\t0\t0\t{area[i]}\t1\t0\t220\t1\t1.1\t0.9;")
    out += ["];", "", "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin", "mpc.gen = ["]
    for b, p, _ in gens:
        out.append(f"\t{b + 1}\t0\t0\t0\t0\t1\t100\t1\t{p:g}\t0;")
    out += ["];", "", "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax", "mpc.branch = ["]
    for (a, b), x, r in zip(edges, reactance, rate):
        out.append(f"\t{a + 1}\t{b + 1}\t0\t{x:g}\t0\t{r:g}\t0\t0\t0\t0\t1\t-360\t360;")
    out += ["];", "", "%\t2\tstartup\tshutdown\tn\tc1\tc0", "mpc.gencost = ["]
    for _, _, c in gens:
        out.append(f"\t2\t0\t0\t2\t{c:g}\t0;")
    out += ["];", ""]
    with open(path, "w") as f:
        f.write("\n".join(out))


if __name__ == "__main__":
    if len(sys.argv) != 5:
        sys.exit(__doc__)
    rows, cols, seed, path = int(sys.argv[1]), int(sys.argv[2]), int(sys.argv[3]), sys.argv[4]
    name = path.rsplit("/", 1)[-1].removesuffix(".m")
    write(path, name, rows, cols, seed)
