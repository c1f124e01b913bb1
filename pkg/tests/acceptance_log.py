"""Collects the one-line verdicts printed by the acceptance suite."""

LINES: list = []


def record(number: int, ok: bool, detail: str) -> str:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
    LINES.append(line)
    print(line)
    return line
