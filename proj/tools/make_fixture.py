#!/usr/bin/env python3
"""Writes the 6-node test fixture used by the data-loading tests.

Two feature-separated triangles joined by one bridge edge; node 2 is
unlabeled. Rerun only if the fixture format changes:

    python3 tools/make_fixture.py tests/fixtures/tiny
"""
import json
import os
import sys

EDGES = [(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5), (2, 3)]
FEATURES = [
    [1.0, 0.0, 0.5],
    [0.9, 0.1, 0.0],
    [0.8, 0.0, 0.2],
    [0.0, 1.0, 0.1],
    [0.1, 0.9, 0.0],
    [0.0, 0.8, 0.3],
]
LABELS = [0, 0, -1, 1, 1, 1]


def main(out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    meta = {"name": "tiny", "num_nodes": 6, "num_features": 3, "num_classes": 2}
    with open(os.path.join(out_dir, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    with open(os.path.join(out_dir, "edges.tsv"), "w") as fh:
        for i, j in EDGES:
            fh.write(f"{i}\t{j}\n")
    with open(os.path.join(out_dir, "features.tsv"), "w") as fh:
        for row in FEATURES:
            fh.write(" ".join(repr(v) for v in row) + "\n")
    with open(os.path.join(out_dir, "labels.tsv"), "w") as fh:
        for y in LABELS:
            fh.write(f"{y}\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/fixtures/tiny")
