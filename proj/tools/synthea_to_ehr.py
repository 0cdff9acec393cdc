#!/usr/bin/env python3
"""Convert Synthea CSV output into the flattened EHR pool used by `arquest synth`.

    synthea_to_ehr.py --csv output/csv --out data/pools/ehr_pool.json [--as-of 2024-01-01]

Each patient becomes one pool entry tagged with the age/gender bucket it
falls into on the reference date. Patients outside every bucket are skipped.
"""

import argparse
import csv
import datetime as dt
import json
import pathlib
import sys
from collections import defaultdict

BUCKETS = [(18, 34), (35, 49), (50, 64), (65, 100)]
GENDERS = {"M": "male", "F": "female"}


def read(path):
    if not path.exists():
        return []
    with path.open(newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def age_on(birth, as_of):
    b = dt.date.fromisoformat(birth[:10])
    return as_of.year - b.year - ((as_of.month, as_of.day) < (b.month, b.day))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--csv", required=True, type=pathlib.Path, help="Synthea csv output directory")
    ap.add_argument("--out", required=True, type=pathlib.Path)
    ap.add_argument("--as-of", default=dt.date.today().isoformat())
    args = ap.parse_args()
    as_of = dt.date.fromisoformat(args.as_of)

    patients = read(args.csv / "patients.csv")
    if not patients:
        sys.exit(f"no patients.csv under {args.csv}")

    grouped = defaultdict(lambda: defaultdict(list))
    for row in read(args.csv / "conditions.csv"):
        grouped[row["PATIENT"]]["conditions"].append({"name": row["DESCRIPTION"], "onset_date": row["START"][:10]})
    for row in read(args.csv / "medications.csv"):
        grouped[row["PATIENT"]]["medications"].append({"name": row["DESCRIPTION"], "start_date": row["START"][:10]})
    for row in read(args.csv / "procedures.csv"):
        start = row.get("START") or row.get("DATE", "")
        grouped[row["PATIENT"]]["procedures"].append({"name": row["DESCRIPTION"], "date": start[:10]})
    for row in read(args.csv / "encounters.csv"):
        grouped[row["PATIENT"]]["encounters"].append({"date": row["START"][:10], "type": row["ENCOUNTERCLASS"]})

    pool = []
    for p in patients:
        if p.get("DEATHDATE"):
            continue
        gender = GENDERS.get(p.get("GENDER", ""))
        if gender is None:
            continue
        age = age_on(p["BIRTHDATE"], as_of)
        bucket = next(((lo, hi) for lo, hi in BUCKETS if lo <= age <= hi), None)
        if bucket is None:
            continue
        rec = grouped[p["Id"]]
        pool.append({
            "id": "synthea-" + p["Id"][:8],
            "gender": gender,
            "age_min": bucket[0],
            "age_max": bucket[1],
            "record": {k: rec.get(k, []) for k in ("conditions", "medications", "procedures", "encounters")},
        })

    pool.sort(key=lambda e: e["id"])
    args.out.write_text(json.dumps(pool, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {len(pool)} records to {args.out}")


if __name__ == "__main__":
    main()
