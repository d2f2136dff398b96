"""Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""

RESULTS: dict[int, tuple[str, bool, str]] = {}

NAMES = {
    1: "gradient integrity",
    2: "attention contracts",
    3: "maven recovery",
    4: "overfit sanity",
    5: "ablation ordering",
    6: "baseline ordering",
    7: "metric oracle",
    8: "determinism",
    9: "scale check",
}


def record(n: int, ok: bool, detail: str) -> None:
    RESULTS[n] = (NAMES[n], bool(ok), detail)
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {n} {NAMES[n]}: {detail}")
