"""Collects one line per acceptance criterion for the terminal summary."""

RESULTS = {}


def record(number, passed, detail):
    RESULTS[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(RESULTS[number])
