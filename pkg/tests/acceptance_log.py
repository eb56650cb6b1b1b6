"""Collects one pass/fail line per acceptance criterion for the terminal summary."""
import sys
import time

LINES: list[str] = []


def report(number: int, title: str, ok: bool, detail: str, started: float) -> None:
    line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail} ({time.perf_counter() - started:.1f}s)"
    LINES.append(line)
    print(line, file=sys.__stdout__, flush=True)
