"""
Helper functions for scenario files, exact arithmetic and thread limits
"""

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

from core.errors import ReportIoError, ScenarioParseError

RATIONAL_TOLERANCE = 1e-9
MAX_DENOMINATOR = 10**6
# |x - p/q| * q^2 must stay below this for p/q to count as a genuine match
SIGNIFICANCE = 1e-2


def rationalize(x, tolerance=RATIONAL_TOLERANCE, max_denominator=MAX_DENOMINATOR,
                significance=SIGNIFICANCE):
    """
    Reconstruct a rational number from a float by continued fractions

    Walks the convergents of x and returns the first one within tolerance.
    A convergent whose error is only as small as any real number admits
    (error * q^2 of order one) is not accepted, so irrational inputs fail.

    Args:
        x: Value to reconstruct
        tolerance: Absolute tolerance, scaled by max(1, |x|)
        max_denominator: Largest admissible denominator
        significance: Bound on error * q^2

    Returns:
        Fraction, or None when no admissible convergent exists
    """
    x = float(x)
    if not math.isfinite(x):
        return None
    tol = tolerance * max(1.0, abs(x))
    sign = -1 if x < 0 else 1
    rest = abs(x)

    p_prev, p = 0, 1
    q_prev, q = 1, 0
    value = rest
    while True:
        a = math.floor(value)
        p_prev, p = p, a * p + p_prev
        q_prev, q = q, a * q + q_prev
        if q > max_denominator:
            return None
        error = abs(rest - p / q)
        if error <= tol:
            if error * q * q > significance:
                return None
            return Fraction(sign * p, q)
        frac = value - a
        if frac <= 0.0:
            return None
        value = 1.0 / frac


def fraction_gcd(values):
    """
    Greatest common divisor of nonnegative rationals

    Args:
        values: Iterable of Fractions (zeros are ignored)

    Returns:
        Fraction gcd, Fraction(0) for an empty or all-zero input
    """
    values = [Fraction(v) for v in values if v != 0]
    if not values:
        return Fraction(0)
    denominator = math.lcm(*(v.denominator for v in values))
    numerators = [abs(int(v * denominator)) for v in values]
    return Fraction(math.gcd(*numerators), denominator)


def fraction_lcm(values):
    """
    Least common multiple of positive rationals

    Args:
        values: Iterable of positive Fractions

    Returns:
        Fraction lcm
    """
    values = [Fraction(v) for v in values]
    if not values:
        return Fraction(0)
    denominator = math.lcm(*(v.denominator for v in values))
    numerators = [abs(int(v * denominator)) for v in values]
    return Fraction(math.lcm(*numerators), denominator)


def format_number(value):
    """Render a float with 17 significant digits"""
    return f"{float(value):.17g}"


def canonical_json(data):
    """Serialize a JSON document with sorted keys and no whitespace"""
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def scenario_hash(data):
    """
    Stable fingerprint of a scenario document

    Args:
        data: Parsed scenario dictionary

    Returns:
        Hex SHA-256 of the canonical JSON form
    """
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()


def load_scenario_file(path):
    """
    Read and parse a scenario JSON file

    Args:
        path: Path to the JSON file

    Returns:
        Parsed dictionary
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ScenarioParseError(f"Cannot read scenario {path}: {e.strerror}")

    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioParseError(f"Malformed JSON in {path}: {e.msg}", e.lineno, e.colno)

    if not isinstance(data, dict):
        raise ScenarioParseError(f"Scenario {path} must be a JSON object", 1, 1)
    return data


def ensure_parent_dir(path):
    """Create the directory that will hold an output file"""
    directory = os.path.dirname(os.path.abspath(path))
    try:
        os.makedirs(directory, exist_ok=True)
    except OSError as e:
        raise ReportIoError(f"Cannot create output directory {directory}: {e.strerror}")


def get_available_scenarios(scenarios_dir="scenarios"):
    """
    Get list of shipped scenario files

    Args:
        scenarios_dir: Directory containing scenario files (default: "scenarios")

    Returns:
        Sorted list of scenario file paths
    """
    if not os.path.exists(scenarios_dir):
        return []

    scenarios = [
        os.path.join(scenarios_dir, file)
        for file in os.listdir(scenarios_dir)
        if file.endswith(".json")
    ]
    scenarios.sort()
    return scenarios


def thread_limit():
    """Worker thread cap from NETGRAPH_THREADS (defaults to the CPU count)"""
    raw = os.environ.get("NETGRAPH_THREADS", "")
    try:
        limit = int(raw)
    except ValueError:
        limit = os.cpu_count() or 1
    return max(1, limit)


def parallel_map(func, items):
    """
    Apply func to every item on a bounded thread pool

    Args:
        func: Callable of one argument
        items: Sequence of arguments

    Returns:
        List of results in input order
    """
    items = list(items)
    workers = min(thread_limit(), max(1, len(items)))
    if workers == 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))
