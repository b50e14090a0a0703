#!/usr/bin/env python3
"""Regenerates the synthetic query sets. Output is deterministic."""
import itertools
import json
import pathlib
import random

HERE = pathlib.Path(__file__).resolve().parent

SUITES = {
    "bandit": {
        "train": (["pass", "relay", "forward", "send", "hand"],
                  ["key", "code", "token", "secret"],
                  ["{v} the {o} from the source to the reporter",
                   "please {v} the {o} along to the reporter"]),
        "heldout": (["deliver", "route", "carry", "transfer", "move"],
                    ["passphrase", "cipher", "password", "signal", "keyword"],
                    ["can you {v} the {o} so the reporter announces it",
                     "{v} this {o} through the courier and report the result"]),
    },
    "routing": {
        "train": (["draft", "write", "compose", "prepare", "produce"],
                  ["summary", "report", "memo", "brief"],
                  ["{v} a {o} then revise it after review",
                   "plan and {v} the {o} with one review round"]),
        "heldout": (["author", "assemble", "sketch", "create", "build"],
                    ["proposal", "letter", "article", "note", "essay"],
                    ["{v} the {o} from an outline and finish it once reviewed",
                     "we need you to {v} the {o} carefully and then polish it"]),
    },
    "robustness": {
        "train": (["compute", "calculate", "work out", "determine", "find"],
                  ["six times seven", "forty plus two", "fifty minus eight", "eighty four halved"],
                  ["{v} {o}", "please {v} {o} and state the number"]),
        "heldout": (["evaluate", "figure out", "derive", "solve", "establish"],
                    ["twenty one doubled", "one hundred minus fifty eight", "fourteen times three",
                     "thirty plus twelve", "seven times six"],
                    ["{v} {o} for me", "what do you get when you {v} {o}"]),
    },
}

COUNTS = {"train": 40, "heldout": 50}


def build(suite, split):
    verbs, objects, templates = SUITES[suite][split]
    combos = [t.format(v=v, o=o) for t, v, o in itertools.product(templates, verbs, objects)]
    rng = random.Random(f"{suite}-{split}")
    rng.shuffle(combos)
    return combos[: COUNTS[split]]


def main():
    for suite in SUITES:
        train = build(suite, "train")
        heldout = build(suite, "heldout")
        assert len(train) == COUNTS["train"] and len(heldout) == COUNTS["heldout"], suite
        assert not set(train) & set(heldout), suite
        for split, queries in (("train", train), ("heldout", heldout)):
            path = HERE / f"{suite}_{split}.jsonl"
            with path.open("w") as f:
                for i, q in enumerate(queries):
                    f.write(json.dumps({"id": f"{suite[:3]}-{split[0]}{i:02d}", "query": q, "answer": "42"}) + "\n")


if __name__ == "__main__":
    main()
