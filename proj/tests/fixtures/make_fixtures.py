"""Writes binary stores and exporter-style sidecars with an independent writer.

Run from this directory: python3 make_fixtures.py
"""
import hashlib
import json
import struct

KINDS = {"static-word": 0, "contextual-token": 1, "sentence": 2}


def write_store(path, kind, dim, entries):
    out = bytearray(b"USEB")
    out += struct.pack("<HBIQ", 1, KINDS[kind], dim, len(entries))
    floats = bytearray()
    for key, vec in entries:
        raw = key.encode("utf-8")
        out += struct.pack("<I", len(raw)) + raw
        packed = struct.pack("<%df" % dim, *vec)
        out += packed
        floats += packed
    with open(path, "wb") as f:
        f.write(out)
    return {
        "kind": kind,
        "dimension": dim,
        "count": len(entries),
        "float_checksum_sha256": hashlib.sha256(bytes(floats)).hexdigest(),
        "model": "fixture",
        "layer": 0,
        "skipped_sentences": 0,
    }


def write_sidecar(path, meta):
    with open(path, "w") as f:
        json.dump(meta, f, indent=2)
        f.write("\n")


words = write_store("words.useb", "static-word", 3,
                    [("hello", [0.5, -0.25, 1.0]), ("wörld", [1.0 / 3.0, 2.0, -7.5])])
write_sidecar("words.useb.json", words)

ctx = write_store("contextual.useb", "contextual-token", 2,
                  [("0:0", [1.0, 0.0]), ("0:1", [0.0, 1.0]), ("1:0", [0.1, 0.2])])
write_sidecar("contextual.useb.json", ctx)

bad = dict(words)
bad["float_checksum_sha256"] = "0" * 64
bad["count"] = 3
write_sidecar("words_bad.useb.json", bad)

with open("words.txt", "w") as f:
    f.write("1 2\nfoo 0.5 -0.25\n")

# Length-filter boundaries: 2, 3, 30 and 31 tokens.
tokens = ["w%d" % i for i in range(31)]
with open("filter_sentences.txt", "w") as f:
    for n in (2, 3, 30, 31):
        f.write(" ".join(tokens[:n]) + "\n")

with open("filter_pairs.tsv", "w") as f:
    f.write("Barack Obama spoke today\tBarack Obama spoke today\t1.0\n")
    f.write("the house is small\tdas haus ist klein\t0.5\n")
    f.write("kurz\tshort sentence here\t0.4\n")
