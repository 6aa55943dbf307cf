import csv
import json
import math
from datetime import datetime
from fractions import Fraction

from tabulate import tabulate

from ..config import Config


def format_count(count):
    return f"{count:,}"


def format_exponent(value):
    if value is None:
        return "N/A"
    value = Fraction(value)
    return str(value) if value.denominator <= 1000 else f"{float(value):.4f}"


def _default(obj):
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")


def report_json(payload):
    """Stable serialization: sorted keys, versioned, no timestamps."""
    document = {"report_version": Config.REPORT_VERSION, **payload}
    return json.dumps(document, sort_keys=True, indent=2, default=_default) + "\n"


def metadata_json(**fields):
    return json.dumps({"generated_at": datetime.utcnow().isoformat(timespec="seconds"), **fields},
                      sort_keys=True, indent=2, default=_default) + "\n"


def write_report(path, payload, **metadata):
    with open(path, "w") as fh:
        fh.write(report_json(payload))
    with open(path + ".meta.json", "w") as fh:
        fh.write(metadata_json(**metadata))


def write_csv(path, headers, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(headers)
        writer.writerows(rows)


def table(rows, headers):
    return tabulate(rows, headers=headers, floatfmt=".4g")


def ladder_rows(fit):
    return [(p.N, f"{math.log2(p.N):.6f}", p.count, f"{math.log2(p.count):.6f}") for p in fit.points]
