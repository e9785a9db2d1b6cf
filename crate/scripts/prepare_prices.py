#!/usr/bin/env python3
"""Normalize a daily price file into the `date,close` layout read by
`tailgauge empirics --prices`.

The source may be a local path or an http(s) URL. No data is bundled; point
this at whichever vendor export you have, e.g.

    scripts/prepare_prices.py ~/Downloads/GSPC.csv sp500.csv --date-col Date --value-col "Adj Close"
"""

import argparse
import csv
import io
import sys
import urllib.request
from datetime import datetime

FORMATS = ("%Y-%m-%d", "%Y/%m/%d", "%m/%d/%Y", "%Y%m%d", "%d-%b-%Y")


def parse_date(text):
    for fmt in FORMATS:
        try:
            return datetime.strptime(text.strip(), fmt).date()
        except ValueError:
            pass
    raise ValueError(f"unrecognized date {text!r}")


def read_source(src):
    if src.startswith(("http://", "https://")):
        with urllib.request.urlopen(src) as resp:
            return resp.read().decode("utf-8")
    with open(src, encoding="utf-8") as fh:
        return fh.read()


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("source")
    ap.add_argument("output")
    ap.add_argument("--date-col", default="Date")
    ap.add_argument("--value-col", default="Close")
    args = ap.parse_args()

    rows = {}
    skipped = 0
    for rec in csv.DictReader(io.StringIO(read_source(args.source))):
        try:
            day = parse_date(rec[args.date_col])
            price = float(rec[args.value_col])
        except (KeyError, ValueError):
            skipped += 1
            continue
        if price > 0:
            rows[day] = price
        else:
            skipped += 1

    with open(args.output, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["date", "close"])
        for day in sorted(rows):
            out.writerow([day.isoformat(), repr(rows[day])])
    print(f"wrote {len(rows)} rows to {args.output}; skipped {skipped}", file=sys.stderr)


if __name__ == "__main__":
    main()
