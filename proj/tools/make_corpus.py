#!/usr/bin/env python3
"""Generate the bundled training corpus (data/corpus.txt).

The text is produced by a seeded stochastic grammar, so it is original,
reproducible, and free of licensing questions. It is English-like enough
for a byte-level model to learn word shapes, spacing, punctuation and a few
recurring phrase patterns.

    python3 tools/make_corpus.py --out data/corpus.txt --bytes 1048576
"""

import argparse
import random

NAMES = ["Ada", "Bram", "Cora", "Dov", "Elin", "Fenn", "Greta", "Hugo", "Ines",
         "Jory", "Kira", "Lars", "Mira", "Nils", "Orla", "Pim", "Quinn", "Rosa",
         "Sven", "Tova", "Ulla", "Vik", "Wren", "Yara"]
PLACES = ["the harbour", "the old mill", "the market", "the northern road",
          "the river bank", "the lighthouse", "the orchard", "the library",
          "the bakery", "the station", "the hill farm", "the bridge",
          "the square", "the forest edge", "the quiet lane", "the workshop"]
NOUNS = ["lamp", "letter", "boat", "basket", "clock", "garden", "window",
         "ladder", "map", "kettle", "song", "storm", "candle", "horse", "coat",
         "bell", "key", "bottle", "rope", "book", "field", "door", "wagon",
         "feather", "stone", "fire", "cloud", "apple", "pocket", "table"]
ADJECTIVES = ["old", "small", "bright", "quiet", "heavy", "green", "broken",
              "warm", "cold", "narrow", "golden", "strange", "tired", "careful",
              "empty", "tall", "gentle", "wet", "dusty", "round"]
VERBS_PAST = ["carried", "found", "mended", "painted", "opened", "watched",
              "lifted", "counted", "followed", "cleaned", "sold", "borrowed",
              "dropped", "built", "hid", "noticed", "wrapped", "tied"]
VERBS_INTRANS = ["waited", "laughed", "slept", "walked home", "sang softly",
                 "looked around", "stood still", "hurried on", "sat down",
                 "listened", "sighed", "smiled"]
TIMES = ["In the morning", "At noon", "Before dawn", "Late in the evening",
         "On the first day of spring", "After the rain", "That winter",
         "Every Sunday", "Long ago", "The next day", "By nightfall"]
WEATHER = ["the wind was cold", "the sky was grey", "the sun was warm",
           "rain fell on the roofs", "fog covered the water",
           "snow lay on the fields", "the air smelled of bread"]
SAYINGS = ["We should go before it gets dark", "I have never seen one so old",
           "Put it back where you found it", "It will be fine by tomorrow",
           "Nobody told me about the key", "Count them again, slowly",
           "The boat will not wait for us", "Keep the lamp burning"]
CONNECT = ["and", "but", "so", "while", "because"]


def noun_phrase(rng):
    if rng.random() < 0.5:
        return f"the {rng.choice(ADJECTIVES)} {rng.choice(NOUNS)}"
    return f"the {rng.choice(NOUNS)}"


def clause(rng):
    who = rng.choice(NAMES)
    r = rng.random()
    if r < 0.4:
        return f"{who} {rng.choice(VERBS_PAST)} {noun_phrase(rng)}"
    if r < 0.6:
        return f"{who} {rng.choice(VERBS_INTRANS)}"
    if r < 0.8:
        return f"{who} went to {rng.choice(PLACES)}"
    return rng.choice(WEATHER)


def sentence(rng):
    r = rng.random()
    if r < 0.2:
        s = f"{rng.choice(TIMES)}, {clause(rng)}."
    elif r < 0.45:
        s = f"{clause(rng)} {rng.choice(CONNECT)} {clause(rng)}."
    elif r < 0.6:
        n = rng.randint(2, 12)
        s = f"{rng.choice(NAMES)} had {n} {rng.choice(NOUNS)}s in {rng.choice(PLACES)}."
    elif r < 0.75:
        s = f"\"{rng.choice(SAYINGS)},\" said {rng.choice(NAMES)}."
    else:
        s = f"{clause(rng)}."
    return s[0].upper() + s[1:]


def paragraph(rng):
    return " ".join(sentence(rng) for _ in range(rng.randint(3, 8)))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", required=True)
    ap.add_argument("--bytes", type=int, default=1 << 20)
    ap.add_argument("--seed", type=int, default=1234)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    parts, size, chapter = [], 0, 1
    while size < args.bytes:
        if rng.random() < 0.05 or not parts:
            block = f"Chapter {chapter}\n\n"
            chapter += 1
        else:
            block = paragraph(rng) + "\n\n"
        parts.append(block)
        size += len(block)
    text = "".join(parts)[: args.bytes]
    with open(args.out, "w", encoding="ascii") as f:
        f.write(text)


if __name__ == "__main__":
    main()
