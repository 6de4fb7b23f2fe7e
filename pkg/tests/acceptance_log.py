"""Collects one PASS/FAIL line per acceptance criterion."""

RESULTS: dict[int, tuple[bool, str]] = {}


def record(number: int, ok: bool, detail: str) -> bool:
    RESULTS[number] = (bool(ok), detail)
    print(line(number))
    return bool(ok)


def line(number: int) -> str:
    ok, detail = RESULTS[number]
    return f"AC{number:<2} {'PASS' if ok else 'FAIL'}  {detail}"


def summary() -> list[str]:
    return [line(n) for n in sorted(RESULTS)]
