"""Builds the listening-test fixtures and their oracle values.

Run from this directory: python3 make_fixtures.py
Outputs are committed; rerunning must reproduce them byte for byte.
"""
import csv
import json
import random

import mpmath
from scipy import stats

mpmath.mp.dps = 50
LISTENERS = [f"L{i:02d}" for i in range(50)]
CHEATERS = ["X01", "X02"]
T0 = 1_767_225_600  # 2026-01-01T00:00:00Z


def ts(i):
    import datetime
    return datetime.datetime.fromtimestamp(T0 + i, datetime.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def pair(pid, kind, probe, first, second, system, ref, utt, swapped=False):
    return {
        "id": pid, "test_kind": kind, "probe_kind": probe,
        "first_audio": f"{first}/{utt}.wav", "second_audio": f"{second}/{utt}.wav",
        "stitched_audio": f"stimuli/{pid}.wav", "gap_s": 0.5,
        "first_label": first, "second_label": second, "system": system,
        "reference_style": ref, "utterance_id": utt, "swapped": swapped,
    }


def counts(bounds, n):
    """Stacked-bar boundaries (bottom-up: diff_sure, diff_unsure, same_unsure) -> counts by code 0..3."""
    tops = [round(b * n / 100) for b in bounds] + [n]
    seg = [tops[0]] + [tops[i] - tops[i - 1] for i in range(1, 4)]
    diff_sure, diff_unsure, same_unsure, same_sure = seg
    return [same_sure, same_unsure, diff_unsure, diff_sure]


# bar boundaries read off the published similarity chart
LOMBARD = {
    "S1": (30.8888888888889, 47.2222222222222, 66),
    "S2": (30.4444444444444, 45.3333333333333, 65.7777777777778),
    "S3": (23.7333333333333, 39.7333333333333, 66.6666666666667),
    "S4": (28.1333333333333, 46, 72),
    "S5": (22, 37.8666666666667, 65.6),
}
NORMAL = {
    "S1": (73.2222222222222, 84.8888888888889, 91),
    "S2": (73.2222222222222, 84.7777777777778, 91.3333333333333),
    "S3": (72.8, 86, 94.5333333333333),
    "S4": (77.4666666666667, 87.8666666666667, 94.2666666666667),
    "S5": (69.4666666666667, 82.8, 91.8666666666667),
}
UTTS = {"S1": 18, "S2": 18, "S3": 15, "S4": 15, "S5": 15}


def similarity():
    rng = random.Random(4)
    pairs, ratings, expected = [], [], {}
    k = 0
    for ref, table in (("lombard", LOMBARD), ("normal", NORMAL)):
        for system, bounds in table.items():
            n_utt = UTTS[system]
            n = n_utt * len(LISTENERS)
            c = counts(bounds, n)
            expected[f"{system}/{ref}"] = {"n": n, "counts": c, "percentages": [100 * x / n for x in c]}
            codes = [code for code, m in enumerate(c) for _ in range(m)]
            rng.shuffle(codes)
            ids = []
            for u in range(n_utt):
                k += 1
                pid = f"s{k:04d}"
                ids.append(pid)
                pairs.append(pair(pid, "similarity", "system", f"ref_{ref}", system, system, ref, f"t{u:02d}"))
            for i, (pid, l) in enumerate((p, l) for p in ids for l in LISTENERS):
                ratings.append((pid, l, "similarity", codes[i]))
            for pid in ids:
                for x in CHEATERS:
                    ratings.append((pid, x, "similarity", 0))
    # probes: 8 null pairs and 8 anchors
    for j in range(16):
        k += 1
        pid = f"s{k:04d}"
        ref = "lombard" if j % 2 else "normal"
        null = j < 8
        pairs.append(pair(pid, "similarity", "null_pair" if null else "corrupted_anchor",
                          f"ref_{ref}", f"ref_{ref}" if null else "anchor", None, ref, f"t{j:02d}"))
        for li, l in enumerate(LISTENERS):
            # every third honest listener misses exactly one probe
            miss = li % 3 == 0 and j == li % 16
            v = (rng.choice([0, 1]) if not miss else 3) if null else (rng.choice([2, 3]) if not miss else 1)
            ratings.append((pid, l, "similarity", v))
        for x in CHEATERS:
            ratings.append((pid, x, "similarity", 0))
    return pairs, ratings, expected


# latent naturalness per label for the CCR generator
QUALITY = {"ref_lombard": 1.5, "S5": -0.2, "S3": -0.45, "S1": -0.9}


def ccr():
    rng = random.Random(5)
    labels = list(QUALITY)
    combos = [(a, b) for i, a in enumerate(labels) for b in labels[i + 1:]]
    pairs, ratings = [], []
    k = 0
    for a, b in combos:
        for u in range(8):
            k += 1
            first, second = (a, b) if rng.random() < 0.5 else (b, a)
            system = next(x for x in (first, second) if x != "ref_lombard") if "ref_lombard" in (a, b) else None
            pid = f"c{k:04d}"
            pairs.append(pair(pid, "ccr", "system", first, second, system, "lombard", f"t{u:02d}",
                              swapped=first != "ref_lombard" and "ref_lombard" in (a, b)))
            for l in LISTENERS:
                v = QUALITY[second] - QUALITY[first] + rng.gauss(0, 1.2)
                ratings.append((pid, l, "ccr", max(-3, min(3, round(v)))))
            for x in CHEATERS:
                ratings.append((pid, x, "ccr", 3))
    for j in range(6):
        k += 1
        pid = f"c{k:04d}"
        null = j < 3
        pairs.append(pair(pid, "ccr", "null_pair" if null else "corrupted_anchor", "ref_lombard",
                          "ref_lombard" if null else "anchor", None, "lombard", f"t{j:02d}"))
        for l in LISTENERS:
            ratings.append((pid, l, "ccr", rng.choice([-1, 0, 1]) if null else rng.choice([-3, -2])))
        for x in CHEATERS:
            ratings.append((pid, x, "ccr", 3))
    return pairs, ratings


def ccr_oracle(pairs, ratings, confidence=0.95):
    by_id = {p["id"]: p for p in pairs}
    pooled = {}
    for pid, l, kind, v in ratings:
        p = by_id[pid]
        if l in CHEATERS or kind != "ccr" or p["probe_kind"] != "system":
            continue
        pooled.setdefault(p["second_label"], []).append(mpmath.mpf(v))
        pooled.setdefault(p["first_label"], []).append(mpmath.mpf(-v))
    k = len(pooled)
    alpha = mpmath.mpf(1 - confidence) / k
    out = {}
    for label, xs in pooled.items():
        n = len(xs)
        mean = mpmath.fsum(xs) / n
        sd = mpmath.sqrt(mpmath.fsum((x - mean) ** 2 for x in xs) / (n - 1))
        q = mpmath.mpf(stats.t.ppf(float(1 - alpha / 2), n - 1))
        # polish the quantile at 50 digits against the t cdf
        cdf = lambda t: mpmath.betainc(mpmath.mpf(n - 1) / 2, mpmath.mpf(1) / 2, 0, (n - 1) / ((n - 1) + t * t), regularized=True)
        q = mpmath.findroot(lambda t: cdf(t) - alpha, q)
        half = q * sd / mpmath.sqrt(n)
        out[label] = {"n": n, "mean": float(mean), "sd": float(sd), "t_critical": float(q),
                      "ci_low": float(mean - half), "ci_high": float(mean + half)}
    welch = {}
    names = sorted(pooled)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            r = stats.ttest_ind([float(x) for x in pooled[a]], [float(x) for x in pooled[b]], equal_var=False)
            welch[f"{a}|{b}"] = {"p": float(r.pvalue), "p_adjusted": min(1.0, float(r.pvalue) * k * (k - 1) / 2)}
    return {"confidence": confidence, "interval_confidence": float(1 - alpha), "scores": out, "welch": welch}


def main():
    sp, sr, sexp = similarity()
    cp, cr = ccr()
    for name, pairs, ratings in (("similarity", sp, sr), ("ccr", cp, cr)):
        with open(f"{name}_manifest.json", "w") as f:
            json.dump({"seed": 0, "gap_s": 0.5, "sample_rate": 16000, "pairs": pairs}, f, indent=1)
            f.write("\n")
        with open(f"{name}_ratings.csv", "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["pair_id", "listener_id", "test_kind", "value", "timestamp_iso8601"])
            for i, r in enumerate(ratings):
                w.writerow([*r, ts(i)])
    with open("similarity_expected.json", "w") as f:
        json.dump({"excluded": CHEATERS, "cells": sexp}, f, indent=1, sort_keys=True)
        f.write("\n")
    with open("ccr_oracle.json", "w") as f:
        json.dump({"excluded": CHEATERS, **ccr_oracle(cp, cr)}, f, indent=1, sort_keys=True)
        f.write("\n")


if __name__ == "__main__":
    main()
