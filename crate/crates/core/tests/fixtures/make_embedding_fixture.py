"""Writes two_docs.jsonl and two_docs.emb with the struct module only.

Vector k of event e in document d is d_index + e / 2 + k / 4, exact in f32.
Index entries are written in reverse row order.
"""
import json
import struct

DIM = 6
DOCS = [
    {
        "id": "fx-alpha",
        "sentences": [
            {"tokens": [["protests", "NOUN"], ["erupted", "VERB"], ["downtown", "ADV"], [".", "PUNCT"]]},
            {"tokens": [["police", "NOUN"], ["arrested", "VERB"], ["marchers", "NOUN"], [".", "PUNCT"]]},
        ],
        "events": [
            {"id": 1, "sentence": 0, "span": [0, 0]},
            {"id": 2, "sentence": 0, "span": [1, 1]},
            {"id": 3, "sentence": 1, "span": [1, 1]},
        ],
        "relations": [{"e1": 1, "e2": 3, "label": "PC"}],
    },
    {
        "id": "fx-beta",
        "sentences": [{"tokens": [["the", "DET"], ["storm", "NOUN"], ["flooded", "VERB"], ["roads", "NOUN"]]}],
        "events": [
            {"id": 7, "sentence": 0, "span": [1, 1]},
            {"id": 9, "sentence": 0, "span": [2, 2]},
        ],
        "relations": [{"e1": 7, "e2": 9, "label": "PC"}],
    },
]


def main():
    with open("two_docs.jsonl", "w", encoding="utf-8") as f:
        for d in DOCS:
            f.write(json.dumps(d) + "\n")
    keys = [(di, d["id"], e["id"]) for di, d in enumerate(DOCS) for e in d["events"]]
    out = bytearray(b"SEMB")
    out += struct.pack("<III", 1, DIM, len(keys))
    for row in reversed(range(len(keys))):
        _, doc, event = keys[row]
        raw = doc.encode("utf-8")
        out += struct.pack("<I", len(raw)) + raw + struct.pack("<IQ", event, row)
    for di, _, event in keys:
        out += struct.pack("<%df" % DIM, *[di + event / 2 + k / 4 for k in range(DIM)])
    with open("two_docs.emb", "wb") as f:
        f.write(bytes(out))


if __name__ == "__main__":
    main()
