"""Regenerates instances.csv and points.csv for the enumeration corpus.

Run from this directory: python3 generate.py
"""
import csv
import itertools
import math
import random

MAX_POINTS = 8
MAX_CANDIDATES = 24
MAX_ENTRIES = 1 << 18

rng = random.Random(20240611)


def cutoff(inst):
    return inst["r4"] if inst["family"] == "step" else inst["r3"]


def phi(inst, d):
    if d > cutoff(inst):
        return 0.0
    if inst["family"] == "wr":
        return math.inf
    if inst["family"] == "soft":
        return inst["u"]
    return inst["u"] if d <= inst["r3"] else inst["u_outer"]


def side(inst):
    return inst["cells"] * inst["r3"] / math.sqrt(5)


def shell(inst, p):
    L = side(inst)
    return min(p[0], p[1], L - p[0], L - p[1]) <= inst["r4"]


def entries(inst, pts):
    q = len(inst["alpha"])
    b = inst["wired"] - 1
    pairs = []
    for i, j in itertools.combinations(range(len(pts)), 2):
        v = phi(inst, math.dist(pts[i], pts[j]))
        if v > 0:
            pairs.append((i, j, v))
    if len(pairs) > MAX_CANDIDATES:
        return None
    total = 0
    sh = [shell(inst, p) for p in pts]
    for sigma in itertools.product(range(q), repeat=len(pts)):
        if any(s and c != b for s, c in zip(sh, sigma)):
            continue
        ok = True
        free = 0
        for i, j, v in pairs:
            if sigma[i] != sigma[j]:
                if v == math.inf:
                    ok = False
                    break
            elif v != math.inf:
                free += 1
        if ok:
            total += 1 << free
    return total


def draw(inst, n, region):
    L = side(inst)
    r4 = inst["r4"]
    for _ in range(10000):
        # clustered draws so that edges and clusters are non-trivial
        spread = 1.3 * r4
        c = (rng.uniform(0, L), rng.uniform(0, L))
        pts = []
        tries = 0
        while len(pts) < n and tries < 1000:
            tries += 1
            p = (c[0] + rng.uniform(-spread, spread), c[1] + rng.uniform(-spread, spread))
            if not (0 <= p[0] <= L and 0 <= p[1] <= L):
                continue
            if region == "interior" and shell(inst, p):
                continue
            pts.append(p)
        if len(pts) < n:
            continue
        if region == "shell" and not any(shell(inst, p) for p in pts):
            continue
        if region == "interior" and any(shell(inst, p) for p in pts):
            continue
        e = entries(inst, pts)
        if e is not None and e <= MAX_ENTRIES:
            return pts
    raise RuntimeError("no admissible draw")


def base(family, alpha, cells, wired=1, u=math.inf, u_outer=0.0, r3=1.0, r4=1.0, psi="zero"):
    return dict(family=family, alpha=alpha, cells=cells, wired=wired, u=u,
                u_outer=u_outer, r3=r3, r4=r4, psi=psi)


LN2 = math.log(2)
SYM2 = [0.5, 0.5]
SYM3 = [1 / 3, 1 / 3, 1 / 3]
ASYM3 = [0.4, 0.4, 0.2]
ASYM2 = [0.6, 0.4]

instances = []
points = {}


def add(inst, pts, note):
    k = len(instances)
    inst = dict(inst, id=k, note=note)
    instances.append(inst)
    points[k] = pts


# hand-made instances
add(base("wr", SYM2, 10), [], "empty")
add(base("wr", SYM2, 10), [(2.2, 2.3)], "one interior point")
add(base("wr", SYM2, 10), [(0.4, 2.0)], "one shell point")
add(base("wr", SYM2, 10), [(2.0, 2.0), (2.5, 2.0), (2.25, 2.4)], "three close interior points")
add(base("wr", SYM2, 10), [(0.5, 2.2), (1.3, 2.2), (2.1, 2.2), (2.9, 2.2)], "chain from the shell")
add(base("soft", SYM2, 10, u=LN2), [(2.0, 2.0), (2.5, 2.0), (2.0, 2.6), (3.3, 3.1)], "mixed distances")

plan = [
    # (family kwargs, n range, region, count)
    (dict(family="wr", alpha=SYM2, cells=10), (2, 8), "interior", 4),
    (dict(family="wr", alpha=SYM3, cells=10), (2, 7), "interior", 2),
    (dict(family="wr", alpha=ASYM3, cells=10), (2, 7), "interior", 2),
    (dict(family="wr", alpha=SYM2, cells=7), (2, 8), "shell", 4),
    (dict(family="wr", alpha=SYM2, cells=7, wired=2), (2, 6), "shell", 2),
    (dict(family="wr", alpha=ASYM2, cells=7), (2, 6), "shell", 2),
    (dict(family="soft", alpha=SYM2, cells=10, u=LN2), (2, 6), "interior", 5),
    (dict(family="soft", alpha=ASYM3, cells=10, u=1.2), (2, 5), "interior", 2),
    (dict(family="soft", alpha=SYM2, cells=7, u=0.8), (2, 6), "shell", 3),
    (dict(family="soft", alpha=SYM3, cells=7, u=1.5), (2, 5), "mixed", 2),
    (dict(family="step", alpha=SYM2, cells=10, u=LN2, u_outer=0.3, r4=1.3), (2, 6), "interior", 3),
    (dict(family="step", alpha=ASYM2, cells=8, u=2.0, u_outer=0.5, r4=1.25), (2, 5), "shell", 3),
    (dict(family="step", alpha=ASYM3, cells=9, u=1.0, u_outer=0.2, r4=1.2), (2, 5), "mixed", 4),
    (dict(family="soft", alpha=SYM2, cells=8, u=LN2, psi="step"), (2, 6), "mixed", 3),
    (dict(family="step", alpha=SYM3, cells=9, u=0.9, u_outer=0.4, r4=1.2, psi="step"), (2, 5), "mixed", 2),
    (dict(family="wr", alpha=SYM2, cells=8, psi="step"), (3, 8), "mixed", 1),
]
for kw, (lo, hi), region, count in plan:
    for _ in range(count):
        inst = base(**kw)
        n = rng.randint(lo, hi)
        add(inst, draw(inst, n, region), f"{region} {inst['family']} n={n}")

assert len(instances) == 50, len(instances)

with open("instances.csv", "w", newline="") as f:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["id", "family", "alpha", "u", "u_outer", "r3", "r4", "cells", "wired", "psi", "note"])
    for inst in instances:
        w.writerow([inst["id"], inst["family"], ";".join(repr(a) for a in inst["alpha"]),
                    "inf" if inst["u"] == math.inf else repr(inst["u"]), repr(inst["u_outer"]),
                    repr(inst["r3"]), repr(inst["r4"]), inst["cells"], inst["wired"], inst["psi"], inst["note"]])

with open("points.csv", "w", newline="") as f:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["id", "x1", "x2"])
    for k, pts in points.items():
        for p in pts:
            w.writerow([k, repr(p[0]), repr(p[1])])

sizes = [entries(i, points[i["id"]]) for i in instances]
print("instances", len(instances), "max entries", max(sizes), "total", sum(sizes))
