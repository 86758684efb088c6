"""Regenerate the bundled desk-scale fixtures under src/twinrep/fixtures/.

The files are synthetic: a small lexicon of word pairs per PPDB relation is
expanded through phrase templates, and NLI pairs come from sentence
templates with label-determined edits. Output is deterministic.

    python tools/make_fixtures.py
"""

from __future__ import annotations

import random
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "twinrep" / "fixtures"

# (pos, a, b)
EQUIVALENCE = [
    ("adj", "big", "large"), ("adj", "small", "little"), ("adj", "quick", "fast"),
    ("verb", "begin", "start"), ("verb", "buy", "purchase"), ("adj", "different", "various"),
    ("noun", "results", "outcome"), ("verb", "help", "assist"), ("noun", "answer", "reply"),
    ("noun", "car", "automobile"), ("adj", "happy", "glad"), ("verb", "speak", "talk"),
    ("verb", "choose", "select"), ("adj", "rich", "wealthy"),
]
ENTAILMENT = [
    ("noun", "dog", "animal"), ("noun", "rose", "flower"), ("noun", "apple", "fruit"),
    ("noun", "oak", "tree"), ("noun", "hammer", "tool"), ("noun", "violin", "instrument"),
    ("noun", "salmon", "fish"), ("noun", "bus", "vehicle"), ("noun", "shirt", "clothing"),
    ("noun", "sparrow", "bird"), ("noun", "nurse", "worker"), ("noun", "village", "place"),
    ("noun", "novel", "book"), ("noun", "soup", "food"),
]
INDEPENDENT = [
    ("noun", "hundreds", "thousands"), ("noun", "monday", "tuesday"), ("adj", "red", "blue"),
    ("noun", "coffee", "tea"), ("noun", "uncle", "aunt"), ("noun", "winter", "summer"),
    ("noun", "piano", "guitar"), ("noun", "lion", "tiger"), ("noun", "paris", "london"),
    ("noun", "copper", "silver"), ("noun", "river", "lake"), ("noun", "train", "plane"),
    ("adj", "green", "yellow"), ("noun", "cousin", "nephew"),
]
EXCLUSION = [
    ("adj", "hot", "cold"), ("adj", "open", "closed"), ("verb", "win", "lose"),
    ("adj", "early", "late"), ("adj", "full", "empty"), ("verb", "arrive", "leave"),
    ("adj", "young", "old"), ("adj", "light", "dark"),
]
OTHER = [
    ("noun", "doctor", "hospital"), ("noun", "teacher", "school"), ("noun", "rain", "umbrella"),
    ("noun", "bread", "bakery"), ("noun", "ship", "harbor"), ("noun", "judge", "court"),
    ("noun", "farmer", "field"), ("noun", "pilot", "airport"),
]

TRAIN_TEMPLATES = {
    "noun": ["the {} of the city", "a {} for the family", "every {} in the region"],
    "adj": ["a {} house", "the {} part of the plan", "very {} indeed"],
    "verb": ["to {} the project", "we must {} now", "{} it together"],
}
TEST_TEMPLATES = {
    "noun": ["all the {} we saw", "one {} near the coast", "that {} over there"],
    "adj": ["such a {} day", "the {} ones", "quite {} again"],
    "verb": ["they will {} soon", "please {} this", "did not {} yet"],
}

# Worked example rows covering each relation; entailment rows get one direction each.
WORKED_ROWS = [
    ("hundreds", "thousands", "Independent", 0.000457),
    ("welcomes information that", "welcomes the fact that", "Independent", 0.227435),
    ("the results of the work", "the outcome of the work", "ForwardEntailment", 0.442545),
    ("and the objectives of the", "and purpose of the", "ReverseEntailment", 0.286791),
    ("different parts of the world", "various parts of the world", "Equivalence", 0.520898),
    ("drawn the attention of the", "drew the attention of the", "Equivalence", 0.509006),
]

SCORE_RANGE = {
    "Equivalence": (0.45, 0.70),
    "ForwardEntailment": (0.20, 0.45),
    "ReverseEntailment": (0.20, 0.45),
    "Independent": (0.0, 0.20),
    "Exclusion": (0.0, 0.05),
    "OtherRelated": (0.0, 0.10),
}


def ppdb_rows(templates, rng: random.Random, with_words: bool, phrases_per_pair: int):
    rows = []
    groups = [
        (EQUIVALENCE, "Equivalence"),
        (ENTAILMENT, "ForwardEntailment"),
        (INDEPENDENT, "Independent"),
        (EXCLUSION, "Exclusion"),
        (OTHER, "OtherRelated"),
    ]
    for pairs, relation in groups:
        for i, (pos, a, b) in enumerate(pairs):
            rel = relation
            if relation == "ForwardEntailment" and i % 2:
                a, b, rel = b, a, "ReverseEntailment"
            lo, hi = SCORE_RANGE[rel]
            if with_words:
                rows.append((a, b, rel, round(rng.uniform(lo, hi), 6)))
            for tpl in rng.sample(templates[pos], phrases_per_pair):
                rows.append((tpl.format(a), tpl.format(b), rel, round(rng.uniform(lo, hi), 6)))
    return rows


SUBJECTS = [("man", "person"), ("woman", "person"), ("boy", "child"), ("girl", "child"),
            ("chef", "cook"), ("student", "person"), ("musician", "performer"), ("player", "athlete")]
ACTIVITIES = [
    ("playing a guitar", "making music", "sleeping in a bed"),
    ("riding a bicycle", "riding something", "sitting on a sofa"),
    ("eating an apple", "eating fruit", "cooking dinner"),
    ("reading a novel", "reading a book", "watching television"),
    ("running in a park", "running outside", "swimming in a pool"),
    ("painting a wall", "painting something", "washing a car"),
    ("climbing a tree", "climbing", "digging a hole"),
    ("drinking coffee", "drinking something", "eating soup"),
]
EXTRAS = ["for a competition", "with a friend", "before work", "to relax", "for the first time",
          "on a sunny morning"]


def nli_rows(rng: random.Random, n: int):
    rows = []
    combos = [(s, a) for s in SUBJECTS for a in ACTIVITIES]
    rng.shuffle(combos)
    labels = ["entailment", "contradiction", "neutral"]
    for i in range(n):
        (subj, hyper), (act, general, other) = combos[i % len(combos)]
        label = labels[i % 3]
        premise = f"a {subj} is {act}"
        if label == "entailment":
            hypothesis = f"a {hyper} is {general}"
        elif label == "contradiction":
            hypothesis = f"the {subj} is {other}"
        else:
            hypothesis = f"the {subj} is {act} {rng.choice(EXTRAS)}"
        rows.append((label, premise, hypothesis))
    return rows


def write(name: str, rows) -> None:
    path = OUT / name
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write("\t".join(str(c) for c in row) + "\n")
    print(f"wrote {len(rows):4d} rows to {path.relative_to(OUT.parents[2])}")


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    rng = random.Random(20201)

    train = list(WORKED_ROWS) + ppdb_rows(TRAIN_TEMPLATES, rng, with_words=True, phrases_per_pair=1)
    rng.shuffle(train)
    write("ppdb_train.tsv", train)

    test = ppdb_rows(TEST_TEMPLATES, rng, with_words=False, phrases_per_pair=1)
    # single-word rows that the phrase test set must discard
    test += [(a, b, "Equivalence", 0.6) for _, a, b in EQUIVALENCE[:3]]
    rng.shuffle(test)
    write("ppdb_test.tsv", test)

    nli = nli_rows(rng, 128)
    write("nli_train.tsv", nli[:96])
    write("nli_valid.tsv", nli[96:])

    sts = [
        (5.0, "a man is playing a guitar", "a man is playing a guitar"),
        (4.6, "a woman is reading a novel", "a woman is reading a book"),
        (4.2, "a boy is riding a bicycle", "a child is riding a bicycle"),
        (3.8, "a chef is drinking coffee", "a cook is drinking coffee"),
        (3.4, "a girl is eating an apple", "a girl is eating fruit"),
        (3.0, "a student is running in a park", "a student is running outside"),
        (2.6, "a musician is painting a wall", "a musician is painting something"),
        (2.2, "a player is climbing a tree", "a player is climbing"),
        (1.8, "a man is reading a novel", "a woman is reading a novel"),
        (1.4, "a boy is eating soup", "a girl is eating an apple"),
        (1.0, "a woman is swimming in a pool", "a man is watching television"),
        (0.6, "a chef is cooking dinner", "a player is climbing a tree"),
        (0.2, "a girl is sleeping in a bed", "a musician is washing a car"),
        (0.0, "a student is digging a hole", "a woman is drinking coffee"),
    ]
    write("sts_fixture.tsv", sts)

    wordsim = [
        (9.2, "big", "large"), (9.0, "quick", "fast"), (8.8, "car", "automobile"),
        (8.5, "happy", "glad"), (8.1, "rich", "wealthy"), (7.0, "dog", "animal"),
        (6.8, "rose", "flower"), (6.2, "apple", "fruit"), (4.0, "coffee", "tea"),
        (3.5, "lion", "tiger"), (3.1, "red", "blue"), (2.0, "doctor", "hospital"),
        (1.5, "hammer", "soup"), (1.0, "violin", "village"), (0.5, "copper", "happy"),
        (0.3, "winter", "purchase"),
    ]
    write("wordsim_fixture.tsv", wordsim)

    semeval = [
        (1, "automobile", "large car"), (0, "automobile", "red tree"),
        (1, "purchase", "buy now"), (0, "purchase", "cold lake"),
        (1, "salmon", "fish food"), (0, "salmon", "blue train"),
        (1, "oak", "big tree"), (0, "oak", "quick reply"),
        (1, "reply", "an answer"), (0, "reply", "green shirt"),
        (1, "wealthy", "very rich"), (0, "wealthy", "small bus"),
    ]
    write("semeval_fixture.tsv", semeval)


if __name__ == "__main__":
    main()
