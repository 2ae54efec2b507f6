#!/usr/bin/env python3
"""Regenerate the end-to-end fixture under fixtures/.

The fixture is an 8-label, two-level hierarchy with ten single-token
entities per label. Each entity's typing prompt peaks on its own
descriptor word, so the K-shot split alone never teaches the matrix
about held-out entities' descriptors; generation is what carries that
evidence across (it proposes the label's other entities, whose typing
prompts then train the missing columns). Without augmentation the dev
columns stay at their uniform initialization and every dev mention
falls back to the tie-break label.
"""

import json
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "fixtures"

ENTITIES = {
    "/location": [
        "rivendine", "thornmoor", "eastvale", "graywater", "sunhollow",
        "mistfen", "oakridge", "stonemere", "windgap", "ashford",
    ],
    "/location/city": [
        "zarenport", "velbruck", "tessadora", "kyrinthal", "northaven",
        "goldmere", "ironstadt", "lumenara", "drakenberg", "solmirra",
    ],
    "/location/island": [
        "kauvella", "merinos", "tidecrest", "coralyn", "vespanta",
        "islamora", "pelagora", "skellmore", "atollia", "brinefall",
    ],
    "/organization": [
        "concordia", "synthetica", "orvandel", "cresthold", "vantexa",
        "quorumex", "nexalliance", "federant", "covenantis", "assemblage",
    ],
    "/organization/company": [
        "acmeon", "globexia", "initechor", "hoolivant", "vandelux",
        "wonkamere", "starkline", "waynecor", "oscorpia", "dundermill",
    ],
    "/organization/media": [
        "heraldix", "gazettine", "tribunora", "chroniclon", "courantis",
        "observia", "buglecrest", "planetarix", "beaconell", "signalode",
    ],
    "/person": [
        "aldering", "brunhart", "cassimore", "delphina", "evandros",
        "fiorella", "gunnarsen", "halvorra", "isadorel", "jorvikka",
    ],
    "/person/artist": [
        "melodine", "harmonix", "cadenzia", "lyricott", "tempestra",
        "sonatell", "rhapsoda", "vibratto", "crescendia", "arpeggion",
    ],
}

CONTEXT_PATTERNS = [
    "analysts followed {e} through the spring",
    "the briefing mentioned {e} twice",
    "reports about {e} kept arriving all week",
    "nobody expected {e} to draw such attention",
    "the committee reviewed {e} on thursday",
    "early coverage of {e} was cautious",
    "observers compared {e} with earlier cases",
    "a short note on {e} closed the meeting",
    "the archive holds three files on {e}",
    "local sources discussed {e} at length",
]

FILLERS = ["thing", "item", "object", "stuff"]


def main() -> None:
    OUT.mkdir(exist_ok=True)

    surfaces = [e for group in ENTITIES.values() for e in group]
    assert len(surfaces) == len(set(surfaces)), "entity surfaces must be unique"
    name_tokens = sorted({seg for label in ENTITIES for seg in label[1:].split("/")})
    assert not set(surfaces) & set(name_tokens)
    assert not set(surfaces) & set(FILLERS)

    entities = []
    for label, group in ENTITIES.items():
        for surface in group:
            entities.append(
                {"surface": surface, "label": label, "type_word": surface + "oid"}
            )
    lexicon = {
        "mask_token": "[MASK]",
        "special_tokens": ["[PAD]"],
        "filler_words": FILLERS,
        "extra_tokens": name_tokens,
        "peak_mass": 0.9,
        "decay": 0.7,
        "entities": entities,
    }
    with open(OUT / "lexicon.json", "w", encoding="utf-8") as fh:
        json.dump(lexicon, fh, indent=1, sort_keys=True)

    with open(OUT / "corpus.jsonl", "w", encoding="utf-8") as fh:
        for label, group in ENTITIES.items():
            tag = label.rsplit("/", 1)[-1]
            for i, surface in enumerate(group):
                text = CONTEXT_PATTERNS[i].format(e=surface)
                start = text.index(surface)
                row = {
                    "id": f"{tag}-{i:02d}",
                    "text": text,
                    "start": start,
                    "end": start + len(surface),
                    "label": label,
                }
                fh.write(json.dumps(row, sort_keys=True) + "\n")

    config = {
        "seed": 7,
        "provider": {"kind": "lexical", "path": "lexicon.json"},
        "data": {"corpus": "corpus.jsonl"},
        "hyper": {
            "alpha": 0.1,
            "epsilon": 0.1,
            "reg_weight": 1.0,
            "aug_weight": 1.0,
            "instances": 5,
            "epochs": 30,
            "shots": 5,
            "lr": 0.01,
            "beam_width": 10,
            "batch_size": 8,
        },
    }
    with open(OUT / "config.json", "w", encoding="utf-8") as fh:
        json.dump(config, fh, indent=1, sort_keys=True)

    print(f"wrote {OUT}/lexicon.json, corpus.jsonl, config.json")


if __name__ == "__main__":
    main()
