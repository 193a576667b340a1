#!/usr/bin/env python3
"""Build the benchmark CSV files used by the acceptance suite.

Sources are the KEEL copies shipped in the `keel-ds` wheel:

    pip download --no-deps -d /tmp/wheels keel-ds
    python3 scripts/prepare_data.py /tmp/wheels/keel_ds-*.whl data/

SATIMAGE and LETTER are stored whole in KEEL, in a different row order from
the original train/test files, so they are re-split with the standard sizes
(4435/2000 and 16000/4000), stratified, with a fixed seed. The 10-class YEAST
set is rebuilt from KEEL's one-vs-rest relabelings and split 1038/446.
"""

import collections
import csv
import random
import sys
import zipfile
from pathlib import Path

SEED = 20240601
YEAST_FEATURES = ["mcg", "gvh", "alm", "mit", "erl", "pox", "vac", "nuc"]


def read_dat(text):
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("@"):
            continue
        rows.append([c.strip() for c in line.split(",")])
    return rows


def stratified_split(rows, n_test, seed):
    by_class = collections.defaultdict(list)
    for i, r in enumerate(rows):
        by_class[r[-1]].append(i)
    rng = random.Random(seed)
    total = len(rows)
    test = []
    remainders = []
    for label in sorted(by_class):
        idx = by_class[label]
        rng.shuffle(idx)
        exact = n_test * len(idx) / total
        k = int(exact)
        test.extend(idx[:k])
        remainders.append((exact - k, label, idx[k:]))
    # hand the rounding leftovers to the classes with the largest remainders
    remainders.sort(key=lambda t: (-t[0], t[1]))
    for _, _, idx in remainders[: n_test - len(test)]:
        test.append(idx[0])
    test_set = set(test)
    train_rows = [rows[i] for i in range(total) if i not in test_set]
    test_rows = [rows[i] for i in sorted(test_set)]
    return train_rows, test_rows


def write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


def rebuild_yeast(files):
    def load(name):
        # the variants disagree on number formatting ("0.5" vs "0.50")
        rows = read_dat(files[f"keel_ds/data/imbalanced/raw/{name}.dat"])
        return [[f"{float(v):.2f}" for v in r[:-1]] + [r[-1]] for r in rows]

    base = load("yeast1")
    keys = [tuple(r[:-1]) for r in base]
    counts = collections.defaultdict(collections.Counter)

    def add(name, side, cls):
        for r in load(name):
            if r[-1] == side:
                counts[tuple(r[:-1])][cls] += 1

    add("yeast1", "positive", "NUC")
    add("yeast3", "positive", "ME3")
    add("yeast4", "positive", "ME2")
    add("yeast5", "positive", "ME1")
    add("yeast6", "positive", "EXC")
    add("yeast-2_vs_4", "negative", "CYT")
    add("yeast-1-2-8-9_vs_7", "positive", "VAC")
    add("yeast-2_vs_8", "positive", "POX")
    erl = collections.Counter()
    for r in load("yeast-1-2-8-9_vs_7"):
        if r[-1] == "negative":
            erl[tuple(r[:-1])] += 1
    totals = collections.Counter(keys)
    for key in totals:
        c = counts[key]
        e = erl[key] - c["NUC"] - c["CYT"] - c["POX"]
        if e > 0:
            c["ERL"] += e
        c["MIT"] += totals[key] - sum(c.values())
        if c["MIT"] < 0:
            raise SystemExit(f"inconsistent yeast counts for {key}")

    # assign labels to rows, preserving the original order
    pools = {k: list(counts[k].elements()) for k in totals}
    order = ["NUC", "ME3", "ME2", "ME1", "EXC", "CYT", "VAC", "POX", "ERL", "MIT"]
    for k in pools:
        pools[k].sort(key=order.index)
    rows = [list(k) + [pools[k].pop(0)] for k in keys]
    got = collections.Counter(r[-1] for r in rows)
    expected = {"CYT": 463, "NUC": 429, "MIT": 244, "ME3": 163, "ME2": 51,
                "ME1": 44, "EXC": 35, "VAC": 30, "POX": 20, "ERL": 5}
    if dict(got) != expected:
        raise SystemExit(f"yeast class counts {dict(got)} differ from {expected}")
    return rows


def main():
    if len(sys.argv) != 3:
        raise SystemExit(__doc__)
    wheel, out = Path(sys.argv[1]), Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    z = zipfile.ZipFile(wheel)
    files = {n: z.read(n).decode() for n in z.namelist() if n.endswith(".dat")}

    yeast = rebuild_yeast(files)
    tr, te = stratified_split(yeast, 446, SEED)
    write_csv(out / "yeast_train.csv", YEAST_FEATURES + ["class"], tr)
    write_csv(out / "yeast_test.csv", YEAST_FEATURES + ["class"], te)

    sat = read_dat(files["keel_ds/data/balanced/raw/satimage.dat"])
    tr, te = stratified_split(sat, 2000, SEED)
    header = [f"a{i}" for i in range(36)] + ["class"]
    write_csv(out / "satimage_train.csv", header, tr)
    write_csv(out / "satimage_test.csv", header, te)

    letter = read_dat(files["keel_ds/data/balanced/raw/letter.dat"])
    tr, te = stratified_split(letter, 4000, SEED)
    header = [f"a{i}" for i in range(16)] + ["class"]
    write_csv(out / "letter_train.csv", header, tr)
    write_csv(out / "letter_test.csv", header, te)

    for p in sorted(out.glob("*.csv")):
        print(p, sum(1 for _ in open(p)) - 1, "rows")


if __name__ == "__main__":
    main()
