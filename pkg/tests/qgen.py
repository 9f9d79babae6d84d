"""Seeded random query-AST generator shared by parser and evaluator tests."""

from __future__ import annotations

import random

from eiqis.querylang import And, CameraPred, CountPred, KeyPred, Node, Not, Or, TimePred

NUMERIC_KEYS = {
    "pos_x": (0, 1280),
    "pos_y": (0, 720),
    "speed": (0, 160),
    "direction": (0, 360),
}
COUNT_KEYS = ("count_person", "count_vehicle", "count_other")
STRING_KEYS = {"event": ("congestion", "late_visit", "loitering")}
CMPS = (">=", "<=", "!=", "=", ">", "<")
CLASSES = ("person", "vehicle", "other")


def random_pred(rng: random.Random, cameras: tuple[str, ...]) -> Node:
    roll = rng.random()
    if roll < 0.35:
        key, (lo, hi) = rng.choice(sorted(NUMERIC_KEYS.items()))
        if rng.random() < 0.5:
            literal = rng.randint(lo, hi)
        else:
            literal = round(rng.uniform(lo, hi), 1)
        return KeyPred(key, rng.choice(CMPS), literal)
    if roll < 0.5:
        return KeyPred(rng.choice(COUNT_KEYS), rng.choice(CMPS), rng.randint(0, 14))
    if roll < 0.6:
        key, words = rng.choice(sorted(STRING_KEYS.items()))
        return KeyPred(key, rng.choice(("=", "!=")), rng.choice(words))
    if roll < 0.75:
        return CountPred(rng.choice(CLASSES), rng.choice(CMPS), rng.randint(0, 14))
    if roll < 0.9:
        return TimePred(rng.randrange(1440), rng.randrange(1440))
    k = rng.randint(1, max(1, len(cameras)))
    return CameraPred(tuple(rng.sample(list(cameras), k)))


def random_ast(
    rng: random.Random,
    cameras: tuple[str, ...] = ("cam_quad", "cam_gate", "cam_lot"),
    max_depth: int = 3,
) -> Node:
    if max_depth <= 0 or rng.random() < 0.4:
        return random_pred(rng, cameras)
    roll = rng.random()
    if roll < 0.25:
        return Not(random_ast(rng, cameras, max_depth - 1))
    left = random_ast(rng, cameras, max_depth - 1)
    right = random_ast(rng, cameras, max_depth - 1)
    return And(left, right) if roll < 0.65 else Or(left, right)
