#!/usr/bin/env python3
"""Regenerate the benchmark CSVs in data/ from their public sources.

The four datasets are vendored in data/ so the test suite runs offline.
This script documents their provenance and reproduces the exact files in
a networked environment:

  wisconsin  sklearn's bundled copy of UCI Breast Cancer Wisconsin
             (Diagnostic); label M = malignant.
  banknote   UCI Banknote Authentication, via the jbrownlee/Datasets
             mirror; label 1 = forged (positive).
  german     UCI Statlog German Credit, via the same mirror; raw label
             2 -> "bad" (positive), 1 -> "good".
  housing    Boston housing (Harrison & Rubinfeld), same mirror;
             binarized as class = MEDV > 21.0 ("high", positive), the
             median split with the tie block at the median sent upward.

Usage: python3 scripts/fetch_data.py [--out data/]
"""

import argparse
import csv
import io
import os
import urllib.request

MIRROR = "https://raw.githubusercontent.com/jbrownlee/Datasets/master"

GERMAN_COLUMNS = [
    "checking_status", "duration", "credit_history", "purpose",
    "credit_amount", "savings", "employment", "installment_rate",
    "personal_status", "other_parties", "residence_since", "property",
    "age", "other_payment_plans", "housing", "existing_credits", "job",
    "num_dependents", "telephone", "foreign_worker",
]

HOUSING_COLUMNS = [
    "crim", "zn", "indus", "chas", "nox", "rm", "age", "dis", "rad",
    "tax", "ptratio", "b", "lstat",
]


def fetch_rows(name):
    with urllib.request.urlopen(f"{MIRROR}/{name}") as r:
        text = r.read().decode("utf-8")
    return [row for row in csv.reader(io.StringIO(text)) if row]


def write(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)
    print(f"wrote {path} ({len(rows)} rows)")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data")
    out = ap.parse_args().out
    os.makedirs(out, exist_ok=True)

    from sklearn.datasets import load_breast_cancer

    d = load_breast_cancer()
    names = [n.replace(" ", "_") for n in d.feature_names]
    rows = [
        [repr(float(v)) for v in x] + ["M" if y == 0 else "B"]
        for x, y in zip(d.data, d.target)
    ]
    write(os.path.join(out, "wisconsin.csv"), names + ["diagnosis"], rows)

    rows = fetch_rows("banknote_authentication.csv")
    write(
        os.path.join(out, "banknote.csv"),
        ["variance", "skewness", "curtosis", "entropy", "class"],
        rows,
    )

    rows = fetch_rows("german.csv")
    rows = [r[:-1] + ["bad" if r[-1] == "2" else "good"] for r in rows]
    write(os.path.join(out, "german.csv"), GERMAN_COLUMNS + ["class"], rows)

    rows = fetch_rows("housing.csv")
    rows = [
        [v.strip() for v in r[:13]]
        + ["high" if float(r[13]) > 21.0 else "low"]
        for r in rows
    ]
    write(os.path.join(out, "housing.csv"), HOUSING_COLUMNS + ["class"], rows)


if __name__ == "__main__":
    main()
