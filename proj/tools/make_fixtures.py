#!/usr/bin/env python3
"""Regenerates the bundled demo datasets and their policy scripts.

Output is deterministic; rerunning must leave data/ and scripts/ unchanged.

    python3 tools/make_fixtures.py [--root DIR]
"""

import argparse
import csv
import json
import random
from pathlib import Path

SCHOOLS = ["A", "B", "C"]
YEARS = list(range(2016, 2023))
SUBJECTS = ["Math", "Physics", "English"]


def student_level(school, year, subject):
    t = year - YEARS[0]
    if subject == "Math":
        level = {"A": 72.0 + 4.0 * t, "B": 62.0 + 3.0 * t, "C": 60.0}[school]
        if year == 2020 and school != "C":
            level -= 1.75
        return level
    if subject == "Physics":
        return {"A": 80.0, "B": 76.0, "C": 73.0}[school]
    return {"A": 78.0, "B": 74.0, "C": 71.0}[school]


def student_rows(rng):
    rows = []
    for school in SCHOOLS:
        for year in YEARS:
            for subject in SUBJECTS:
                level = student_level(school, year, subject)
                noise = 0.25
                for form in ["In-class"] * 3 + ["Take-home"]:
                    score = level + rng.gauss(0.0, noise)
                    if (school, year, subject, form) == ("C", 2020, "Math", "Take-home"):
                        score = 74.0
                    rows.append([school, year, subject, form, f"{score:.1f}"])
    return rows


MODELS = [
    ("Toyota", "Camry", "Sedan"),
    ("Toyota", "Corolla", "Sedan"),
    ("Toyota", "RAV4", "SUV"),
    ("Honda", "Civic", "Sedan"),
    ("Honda", "Accord", "Sedan"),
    ("Honda", "CR-V", "SUV"),
    ("Mazda", "Mazda3", "Sedan"),
    ("Mazda", "CX-5", "SUV"),
    ("Ford", "F-150", "Truck"),
    ("Ford", "Ranger", "Truck"),
    ("Ford", "Escape", "SUV"),
]
REGIONS = ["East", "North", "South", "West"]
CAR_YEARS = list(range(2014, 2022))
# yearly national sales at the first and last year; linear in between
LEVELS = {
    "Camry": (450.0, 35.0),
    "Corolla": (110.0, 110.0),
    "RAV4": (30.0, 50.0),
    "Civic": (120.0, 120.0),
    "Accord": (100.0, 100.0),
    "CR-V": (180.0, 255.0),
    "Mazda3": (45.0, 45.0),
    "CX-5": (140.0, 215.0),
    "F-150": (250.0, 250.0),
    "Ranger": (40.0, 40.0),
    "Escape": (140.0, 210.0),
}


def model_level(model, year):
    first, last = LEVELS[model]
    t = (year - CAR_YEARS[0]) / (len(CAR_YEARS) - 1)
    return first + (last - first) * t


def car_rows(rng):
    rows = []
    for brand, model, category in MODELS:
        for year in CAR_YEARS:
            yearly = model_level(model, year)
            for region in REGIONS:
                sales = yearly / len(REGIONS) * (1.0 + rng.gauss(0.0, 0.06))
                rows.append([brand, model, category, region, year, f"{sales:.2f}"])
    return rows


STUDENT_SCRIPT = [
    {"pick_by": "average Score for Subject=Math has been increasing over Year", "action": "understand"},
    {"pick_by": "average Score for School=A, Subject=Math has been increasing over Year", "action": "compare"},
    {"pick_by": "Compared across School", "action": "explain"},
    {"action": "terminate"},
]

TOYOTA_SCRIPT = [
    {"pick_by": "Model=Camry has the Rank#1 total Sales for Brand=Toyota,", "action": "understand"},
    {"pick_by": "Model=Corolla has the Rank#1 total Sales for Brand=Toyota, Year=2021", "action": "summarize"},
    {"action": "back"},
    {"pick_by": "total Sales for Brand=Toyota has been decreasing over Year", "action": "understand"},
    {"pick_by": "total Sales for Brand=Toyota, Model=Camry is positively correlated", "action": "understand"},
    {"action": "terminate"},
]


def write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_json(path, value):
    path.write_text(json.dumps(value, indent=2) + "\n")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--root", default=Path(__file__).resolve().parent.parent, type=Path)
    args = ap.parse_args()
    data = args.root / "data"
    scripts = args.root / "scripts"
    data.mkdir(exist_ok=True)
    scripts.mkdir(exist_ok=True)

    write_csv(data / "student_performance.csv", ["School", "Year", "Subject", "Exam Form", "Score"],
              student_rows(random.Random(20240501)))
    write_csv(data / "car_sales.csv", ["Brand", "Model", "Category", "Region", "Year", "Sales"],
              car_rows(random.Random(20240502)))
    write_json(scripts / "student_walk.json", STUDENT_SCRIPT)
    write_json(scripts / "toyota.json", TOYOTA_SCRIPT)


if __name__ == "__main__":
    main()
