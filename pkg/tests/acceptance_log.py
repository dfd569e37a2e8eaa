"""Collects one verdict per acceptance criterion for the terminal summary."""

RESULTS: dict[str, tuple[bool, str]] = {}
EXPECTED = [f"C{i}" for i in range(1, 11)]


def record(criterion: str, passed: bool, detail: str) -> None:
    RESULTS[criterion] = (bool(passed), detail)
    print(f"{criterion} {'PASS' if passed else 'FAIL'}: {detail}")
