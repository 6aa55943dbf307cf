import re
from fractions import Fraction

from ..exceptions import PreconditionError


def validate_exponent(text):
    return bool(re.match(r'^-?\d+(\.\d+)?(/\d+)?$', str(text).strip()))


def validate_ladder(values):
    return len(values) >= 3 and all(b > a for a, b in zip(values, values[1:])) and values[0] >= 4


def parse_exponent(text):
    if not validate_exponent(text):
        raise PreconditionError(f"malformed exponent {text!r}")
    return Fraction(str(text).strip())


def parse_ladder(text):
    """'24,32,48' -> [24, 32, 48], strictly increasing."""
    try:
        values = [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise PreconditionError(f"malformed ladder {text!r}")
    if not validate_ladder(values):
        raise PreconditionError(f"ladder must hold >= 3 strictly increasing values of N >= 4, got {values}")
    return values


def parse_int_list(text):
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise PreconditionError(f"expected comma-separated integers, got {text!r}")


def parse_float_list(text):
    try:
        return [float(Fraction(v.strip())) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise PreconditionError(f"expected comma-separated numbers, got {text!r}")


def parse_pairs(text):
    """'1/7,3/1021' -> [(1, 7), (3, 1021)], unreduced."""
    pairs = []
    for item in str(text).split(","):
        match = re.match(r'^\s*(-?\d+)/(\d+)\s*$', item)
        if not match:
            raise PreconditionError(f"expected a/q pairs, got {item!r}")
        pairs.append((int(match.group(1)), int(match.group(2))))
    return pairs
