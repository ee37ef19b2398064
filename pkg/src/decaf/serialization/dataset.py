"""
Text-based dataset directories:

- meta.json: format, version, n, d, k, number of edges and provenance
- features.csv: one row of d values per node
- labels.csv: one class label per line
- edges.csv: one undirected edge u,v with u < v per line
"""
import csv
import hashlib
import json
import os
from typing import Dict, Optional

import numpy as np

from decaf.errors import ParseError, DecafError
from decaf.graph import GraphData

DATASET_FORMAT = "decaf-dataset"
DATASET_VERSION = 1

FILE_META = "meta.json"
FILE_FEATURES = "features.csv"
FILE_LABELS = "labels.csv"
FILE_EDGES = "edges.csv"


def dataset_fingerprint(g: GraphData) -> str:
    """
    SHA-256 over features, labels, class count and edges.

    :param g: the graph
    :type g: GraphData
    :return: the hex digest
    :rtype: str
    """
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(g.features, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(g.labels, dtype="<i8").tobytes())
    h.update(str(g.num_classes).encode("utf-8"))
    h.update(np.ascontiguousarray(g.edges(), dtype="<i8").tobytes())
    return h.hexdigest()


def save_dataset(g: GraphData, path: str, provenance: Optional[Dict] = None):
    """
    Writes the graph into the directory (created if necessary). Floats are
    written with repr, so loading restores them bit-exactly.

    :param g: the graph to save
    :type g: GraphData
    :param path: the output directory
    :type path: str
    :param provenance: how the graph was obtained (recipe, seeds, ...)
    :type provenance: dict
    """
    os.makedirs(path, exist_ok=True)
    edges = g.edges()
    meta = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "n": g.n,
        "d": g.d,
        "k": g.num_classes,
        "num_edges": len(edges),
        "fingerprint": dataset_fingerprint(g),
        "provenance": provenance if provenance is not None else dict(),
    }
    with open(os.path.join(path, FILE_META), "w") as fp:
        json.dump(meta, fp, indent=2, sort_keys=True)
        fp.write("\n")
    with open(os.path.join(path, FILE_FEATURES), "w", newline="") as fp:
        writer = csv.writer(fp)
        for row in g.features:
            writer.writerow([repr(float(v)) for v in row])
    with open(os.path.join(path, FILE_LABELS), "w") as fp:
        for label in g.labels:
            fp.write("%d\n" % label)
    with open(os.path.join(path, FILE_EDGES), "w", newline="") as fp:
        writer = csv.writer(fp)
        for u, v in edges:
            writer.writerow([int(u), int(v)])


def _read_meta(path: str) -> Dict:
    fname = os.path.join(path, FILE_META)
    try:
        with open(fname, "r", encoding="utf-8") as fp:
            meta = json.load(fp)
    except json.JSONDecodeError as e:
        raise ParseError(fname, e.lineno, e.msg)
    except ValueError as e:
        raise ParseError(fname, None, str(e))
    except OSError as e:
        raise ParseError(fname, None, str(e))
    if not isinstance(meta, dict):
        raise ParseError(fname, None, "expected a JSON object, got: %s" % type(meta).__name__)
    if meta.get("format") != DATASET_FORMAT:
        raise ParseError(fname, None, "not a dataset description: %s" % str(meta.get("format")))
    if meta.get("version") != DATASET_VERSION:
        raise ParseError(fname, None, "unsupported version: %s" % str(meta.get("version")))
    for key, minimum in [("n", 0), ("d", 1), ("k", 1)]:
        value = meta.get(key)
        if isinstance(value, bool) or not isinstance(value, int):
            raise ParseError(fname, None, "missing or non-integer '%s'" % key)
        if value < minimum:
            raise ParseError(fname, None, "'%s' must be at least %d, got: %d" % (key, minimum, value))
    return meta


def _read_rows(fname: str):
    lineno = 0
    try:
        with open(fname, "r", newline="", encoding="utf-8") as fp:
            for lineno, row in enumerate(csv.reader(fp), start=1):
                if len(row) == 0:
                    continue
                yield lineno, row
    except UnicodeDecodeError as e:
        raise ParseError(fname, None, "not UTF-8 text: %s" % str(e))
    except csv.Error as e:
        raise ParseError(fname, lineno + 1, str(e))
    except OSError as e:
        raise ParseError(fname, None, str(e))


def load_dataset(path: str) -> GraphData:
    """
    Reads a dataset directory.

    :param path: the directory
    :type path: str
    :return: the validated graph
    :rtype: GraphData
    """
    meta = _read_meta(path)
    n, d, k = meta["n"], meta["d"], meta["k"]

    fname = os.path.join(path, FILE_FEATURES)
    features = np.zeros((n, d))
    count = 0
    for lineno, row in _read_rows(fname):
        if count >= n:
            raise ParseError(fname, lineno, "more than %d rows" % n)
        if len(row) != d:
            raise ParseError(fname, lineno, "expected %d values, got %d" % (d, len(row)))
        try:
            features[count] = [float(v) for v in row]
        except ValueError as e:
            raise ParseError(fname, lineno, str(e))
        if not np.all(np.isfinite(features[count])):
            raise ParseError(fname, lineno, "non-finite value")
        count += 1
    if count != n:
        raise ParseError(fname, None, "expected %d rows, got %d" % (n, count))

    fname = os.path.join(path, FILE_LABELS)
    labels = []
    for lineno, row in _read_rows(fname):
        try:
            label = int(row[0])
        except ValueError as e:
            raise ParseError(fname, lineno, str(e))
        if (label < 0) or (label >= k):
            raise ParseError(fname, lineno, "label %d outside [0, %d)" % (label, k))
        labels.append(label)
    if len(labels) != n:
        raise ParseError(fname, None, "expected %d labels, got %d" % (n, len(labels)))

    fname = os.path.join(path, FILE_EDGES)
    edges = []
    seen = set()
    for lineno, row in _read_rows(fname):
        if len(row) != 2:
            raise ParseError(fname, lineno, "expected 'u,v', got %d fields" % len(row))
        try:
            u, v = int(row[0]), int(row[1])
        except ValueError as e:
            raise ParseError(fname, lineno, str(e))
        if u >= v:
            raise ParseError(fname, lineno, "edge %d,%d is not stored as u < v" % (u, v))
        if (u < 0) or (v >= n):
            raise ParseError(fname, lineno, "edge %d,%d outside [0, %d)" % (u, v, n))
        if (u, v) in seen:
            raise ParseError(fname, lineno, "duplicate edge %d,%d" % (u, v))
        seen.add((u, v))
        edges.append((u, v))

    try:
        return GraphData.from_edges(features, labels, edges, k, require_all_classes=False)
    except DecafError as e:
        raise ParseError(path, None, str(e))
