"""Deterministic fixture corpora in every supported raw dataset format.

Each writer produces a file the matching adapter can load. Question texts mix
every number shape the masker handles (plain ints, comma groups, decimals,
percents, fractions) plus shapes it must skip (ordinals, clock times).
"""

import json
import random
from pathlib import Path

NAMES = ("Ava", "Ben", "Caleb", "Dina", "Eli", "Fay", "Gus", "Hana")
ITEMS = ("marbles", "stickers", "apples", "coins", "books", "pens")


def arithmetic_question(rng: random.Random) -> tuple[str, str]:
    """One (question, answer_text) pair with a computable plain answer."""
    name = rng.choice(NAMES)
    item = rng.choice(ITEMS)
    a = rng.randrange(2, 40)
    b = rng.randrange(2, 30)
    style = rng.randrange(6)
    if style == 0:
        question = (
            f"{name} has {a} bags with {b} {item} each. "
            f"How many {item} does {name} have in total?"
        )
        answer = str(a * b)
    elif style == 1:
        big = a * 137 + 1200
        question = (
            f"A warehouse stores {big:,} boxes and ships out {b} of them. "
            f"How many boxes remain in the warehouse?"
        )
        answer = str(big - b)
    elif style == 2:
        price = a + rng.choice((0.25, 0.5, 0.75))
        question = (
            f"{name} buys {b} {item} at ${price} each. "
            f"What is the total cost in dollars?"
        )
        answer = f"{b * price:g}"
    elif style == 3:
        pct = rng.choice((10, 20, 25, 40, 50))
        base = a * 4
        question = (
            f"A jacket costs ${base} and a {pct}% discount applies. "
            f"What is the final price in dollars?"
        )
        answer = f"{base * (100 - pct) / 100:g}"
    elif style == 4:
        question = (
            f"{name} read {a} pages on the 3rd day and {b} more pages at 4:30 "
            f"in the afternoon. How many pages did {name} read altogether?"
        )
        answer = str(a + b)
    else:
        den = rng.choice((2, 4, 5))
        whole = b * den
        question = (
            f"A tank holds {whole} liters and 1/{den} of it drains away. "
            f"How many liters are left in the tank?"
        )
        answer = str(whole - whole // den)
    return question, answer


def _distractors(rng: random.Random, answer: str) -> list[str]:
    try:
        base = float(answer)
    except ValueError:
        base = 7.0
    values = []
    offset = 1
    while len(values) < 4:
        cand = base + offset * rng.choice((1, 2, 3))
        if cand != base:
            values.append(f"{cand:g}")
        offset += 1
    return values


def write_aqua(path: Path, count: int, seed: int = 101):
    rng = random.Random(seed)
    rows = []
    for _ in range(count):
        question, answer = arithmetic_question(rng)
        labels = "ABCDE"
        correct_pos = rng.randrange(5)
        wrong = _distractors(rng, answer)
        options = []
        for i, label in enumerate(labels):
            value = answer if i == correct_pos else wrong.pop(0) if wrong else "0"
            options.append(f"{label}){value}")
        rows.append({"question": question, "options": options, "correct": labels[correct_pos]})
    path.write_text(json.dumps(rows, ensure_ascii=False, indent=1), encoding="utf-8")
    return rows


def write_gsm8k(path: Path, count: int, seed: int = 102):
    rng = random.Random(seed)
    rows = []
    for _ in range(count):
        question, answer = arithmetic_question(rng)
        rows.append({"question": question, "answer": f"Work it out step by step.\n#### {answer}"})
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    return rows


def write_math(path: Path, count: int, seed: int = 103):
    rng = random.Random(seed)
    rows = []
    for _ in range(count):
        question, answer = arithmetic_question(rng)
        rows.append(
            {
                "problem": question,
                "level": f"Level {rng.randrange(1, 6)}",
                "type": "Prealgebra",
                "solution": f"We compute directly. The answer is $\\boxed{{{answer}}}$.",
            }
        )
    path.write_text(json.dumps(rows, ensure_ascii=False, indent=1), encoding="utf-8")
    return rows


def write_numglue(path: Path, count: int, seed: int = 104):
    rng = random.Random(seed)
    rows = []
    for _ in range(count):
        question, answer = arithmetic_question(rng)
        rows.append({"question": question, "answer": answer, "type": "Type_7"})
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    return rows


def write_mathqa(path: Path, count: int, seed: int = 105):
    rng = random.Random(seed)
    rows = []
    for _ in range(count):
        question, answer = arithmetic_question(rng)
        labels = "abcde"
        correct_pos = rng.randrange(5)
        wrong = _distractors(rng, answer)
        parts = []
        for i, label in enumerate(labels):
            value = answer if i == correct_pos else wrong.pop(0) if wrong else "0"
            parts.append(f"{label} ) {value}")
        rows.append(
            {"Problem": question, "options": " , ".join(parts), "correct": labels[correct_pos]}
        )
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    return rows


def write_theoremqa(path: Path, count: int, seed: int = 106):
    rng = random.Random(seed)
    rows = []
    for _ in range(count):
        question, answer = arithmetic_question(rng)
        kind = "float" if "." in answer else "integer"
        rows.append({"Question": question, "Answer": answer, "Answer_type": kind})
    path.write_text(json.dumps(rows, ensure_ascii=False, indent=1), encoding="utf-8")
    return rows


def write_deepmind(path: Path, count: int, seed: int = 107):
    rng = random.Random(seed)
    rows = []
    lines = []
    for _ in range(count):
        question, answer = arithmetic_question(rng)
        rows.append({"question": question, "answer": answer})
        lines.append(question)
        lines.append(answer)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return rows


WRITERS = {
    "aqua_rat": (write_aqua, "aqua.json"),
    "gsm8k": (write_gsm8k, "gsm8k.jsonl"),
    "math": (write_math, "math.json"),
    "numglue": (write_numglue, "numglue.jsonl"),
    "mathqa": (write_mathqa, "mathqa.jsonl"),
    "theoremqa": (write_theoremqa, "theoremqa.json"),
    "deepmind_math": (write_deepmind, "deepmind.txt"),
}


def write_all(directory: Path, per_source: int = 30) -> dict[str, Path]:
    """Write one fixture file per source; returns source value -> path."""
    directory.mkdir(parents=True, exist_ok=True)
    paths = {}
    for source_value, (writer, filename) in WRITERS.items():
        target = directory / filename
        writer(target, per_source)
        paths[source_value] = target
    return paths
