"""Dataset files: the JSON format and the per-node CSV import."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Mapping

import numpy as np

from .graph import Dataset, Graph, Sample, Trajectory, build_graph, make_sample
from .schema import validate_dataset


def graph_from_dict(d: Mapping) -> Graph:
    return build_graph(d["nodes"], d.get("edges", []), d.get("coords"))


def graph_to_dict(g: Graph) -> dict:
    out = {"nodes": list(g.nodes), "edges": g.edge_list()}
    if g.coords:
        out["coords"] = {v: list(g.coords[v]) for v in g.nodes if v in g.coords}
    return out


def dataset_from_dict(doc: Mapping) -> Dataset:
    validate_dataset(doc)
    graph = graph_from_dict(doc["graph"])
    dims = tuple(doc["dimensions"])
    samples = []
    for i, s in enumerate(doc["samples"]):
        try:
            samples.append(make_sample(graph, s["trajectory"], s["label"], dims))
        except ValueError as e:
            raise ValueError(f"samples/{i}: {e}") from None
    return Dataset(graph, tuple(samples), dims)


def _num(x):
    return None if math.isnan(x) else x


def dataset_to_dict(ds: Dataset) -> dict:
    return {
        "graph": graph_to_dict(ds.graph),
        "dimensions": list(ds.dim_names),
        "samples": [
            {"label": s.label,
             "trajectory": {v: [[_num(x) for x in row] for row in m.tolist()]
                            for v, m in s.trajectory.values.items()}}
            for s in ds.samples
        ],
    }


def load_dataset(path) -> Dataset:
    with open(path) as fh:
        return dataset_from_dict(json.load(fh))


def save_dataset(ds: Dataset, path) -> None:
    with open(path, "w") as fh:
        json.dump(dataset_to_dict(ds), fh)
        fh.write("\n")


def load_graph(path) -> Graph:
    """Graph from a graph file or from the ``graph`` entry of a dataset file."""
    with open(path) as fh:
        doc = json.load(fh)
    return graph_from_dict(doc["graph"] if "graph" in doc else doc)


def read_node_csv(path) -> tuple[list[str], np.ndarray]:
    """Read ``time,dim_1,...,dim_d``; empty fields are missing values."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], [r for r in rows[1:] if r]
    if header[0].strip().lower() != "time":
        raise ValueError(f"{path}: first column must be 'time'")
    body.sort(key=lambda r: float(r[0]))
    vals = np.array([[float(x) if x.strip() else np.nan for x in r[1:]] for r in body])
    return [h.strip() for h in header[1:]], vals.reshape(len(body), len(header) - 1)


def load_tabular(manifest_path) -> Dataset:
    """Import per-node CSV files listed in a JSON manifest.

    Manifest: ``{"nodes": [...], "edges": [[u, v], ...], "coords": {...}?,
    "samples": [{"label": 1, "files": {node: "file.csv", ...}}, ...]}``.
    File paths are relative to the manifest. ``label`` defaults to +1.
    """
    manifest_path = Path(manifest_path)
    with open(manifest_path) as fh:
        man = json.load(fh)
    samples_doc = man["samples"]
    nodes = man.get("nodes") or list(samples_doc[0]["files"])
    graph = build_graph(nodes, man.get("edges", []), man.get("coords"))
    dims = None
    samples = []
    for i, s in enumerate(samples_doc):
        mats = []
        for v in graph.nodes:
            if v not in s["files"]:
                raise ValueError(f"samples/{i}: no file for node {v!r}")
            names, m = read_node_csv(manifest_path.parent / s["files"][v])
            if dims is None:
                dims = tuple(names)
            elif tuple(names) != dims:
                raise ValueError(f"samples/{i}/{v}: columns {names} differ from {list(dims)}")
            mats.append(m)
        if len({m.shape for m in mats}) != 1:
            raise ValueError(f"samples/{i}: node files have different lengths")
        samples.append(Sample(Trajectory(graph.nodes, np.stack(mats), dims), int(s.get("label", 1))))
    return Dataset(graph, tuple(samples), dims)


def load_any(path) -> Dataset:
    """JSON dataset file, or a tabular manifest (detected by its ``files`` entries)."""
    with open(path) as fh:
        doc = json.load(fh)
    if "samples" in doc and doc["samples"] and "files" in doc["samples"][0]:
        return load_tabular(path)
    return dataset_from_dict(doc)


def load_coords(path) -> dict[str, tuple[float, float]]:
    """Coordinates from JSON ``{id: [lat, lon]}`` or CSV ``id,lat,lon``."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
        if rows and not _is_float(rows[0][1]):
            rows = rows[1:]
        return {r[0].strip(): (float(r[1]), float(r[2])) for r in rows}
    with open(path) as fh:
        doc = json.load(fh)
    return {k: (float(v[0]), float(v[1])) for k, v in doc.items()}


def _is_float(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False
