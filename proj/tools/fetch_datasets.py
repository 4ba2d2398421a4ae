#!/usr/bin/env python3
"""Download the three UCI datasets used by the tuning runs into data/ as CSV.

    python3 tools/fetch_datasets.py [--out data]

Writes wdbc.csv (target "diagnosis"), parkinsons.csv (target "status") and
ckd.csv (target "classification"). When the UCI mirror is unreachable the
WDBC file is rebuilt from the copy bundled with scikit-learn, if installed.
"""

import argparse
import csv
import io
import os
import sys
import urllib.request
import zipfile

WDBC_URL = "https://archive.ics.uci.edu/ml/machine-learning-databases/breast-cancer-wisconsin/wdbc.data"
PARKINSONS_URL = "https://archive.ics.uci.edu/ml/machine-learning-databases/parkinsons/parkinsons.data"
CKD_URL = "https://archive.ics.uci.edu/static/public/336/chronic+kidney+disease.zip"

WDBC_FEATURES = [
    f"{stat}_{kind}"
    for kind in ("mean", "se", "worst")
    for stat in (
        "radius", "texture", "perimeter", "area", "smoothness", "compactness",
        "concavity", "concave_points", "symmetry", "fractal_dimension",
    )
]

# Column names follow the widely mirrored CSV export of the CKD data.
CKD_COLUMNS = [
    "id", "age", "bp", "sg", "al", "su", "rbc", "pc", "pcc", "ba", "bgr", "bu",
    "sc", "sod", "pot", "hemo", "pcv", "wc", "rc", "htn", "dm", "cad", "appet",
    "pe", "ane", "classification",
]


def fetch(url, timeout=30):
    with urllib.request.urlopen(url, timeout=timeout) as resp:
        return resp.read()


def write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)
    print(f"wrote {path} ({len(rows)} rows)")


def wdbc(out):
    path = os.path.join(out, "wdbc.csv")
    try:
        text = fetch(WDBC_URL).decode()
        rows = [line.split(",") for line in text.splitlines() if line.strip()]
        write_csv(path, ["id", "diagnosis"] + WDBC_FEATURES, rows)
        return
    except Exception as exc:  # noqa: BLE001
        print(f"wdbc: download failed ({exc}); trying scikit-learn copy", file=sys.stderr)
    try:
        import sklearn
    except ImportError:
        print("wdbc: scikit-learn not installed, skipping", file=sys.stderr)
        return
    src = os.path.join(os.path.dirname(sklearn.__file__), "datasets", "data", "breast_cancer.csv")
    with open(src) as f:
        lines = f.read().splitlines()
    rows = []
    for line in lines[1:]:
        parts = line.split(",")
        # bundled copy encodes 0 = malignant, 1 = benign and drops the id column
        rows.append(["M" if parts[-1] == "0" else "B"] + parts[:-1])
    write_csv(path, ["diagnosis"] + WDBC_FEATURES, rows)


def parkinsons(out):
    path = os.path.join(out, "parkinsons.csv")
    try:
        data = fetch(PARKINSONS_URL)
    except Exception as exc:  # noqa: BLE001
        print(f"parkinsons: download failed ({exc}), skipping", file=sys.stderr)
        return
    with open(path, "wb") as f:
        f.write(data)
    print(f"wrote {path}")


def ckd(out):
    path = os.path.join(out, "ckd.csv")
    try:
        blob = fetch(CKD_URL)
    except Exception as exc:  # noqa: BLE001
        print(f"ckd: download failed ({exc}), skipping", file=sys.stderr)
        return
    with zipfile.ZipFile(io.BytesIO(blob)) as z:
        name = next(n for n in z.namelist() if n.endswith("chronic_kidney_disease_full.arff")
                    or n.endswith("chronic_kidney_disease.arff"))
        text = z.read(name).decode("latin-1")
    rows = []
    in_data = False
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("%"):
            continue
        if line.lower().startswith("@data"):
            in_data = True
            continue
        if not in_data:
            continue
        fields = [v.strip() for v in line.split(",")]
        # a handful of records carry a doubled delimiter
        while len(fields) > len(CKD_COLUMNS) - 1 and "" in fields:
            fields.remove("")
        fields = fields[: len(CKD_COLUMNS) - 1]
        rows.append([str(len(rows))] + ["" if v == "?" else v for v in fields])
    write_csv(path, CKD_COLUMNS, rows)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data"))
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    wdbc(args.out)
    parkinsons(args.out)
    ckd(args.out)


if __name__ == "__main__":
    main()
