"""On-disk formats: population directories, curve CSVs, traces and reports.

A population directory holds ``manifest.json`` listing every network with
its edge-list CSV (``i,j,weight``) and covariate CSV (``node,c1..cp``), plus
an optional ``model.json`` with the outcome-model coefficients when the
population is synthetic.  All node indices are 0-based.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .active import RunTrace
from .effects import EffectCurve
from .network import Network, build_network
from .simulation import OutcomeModelParams, SimPopulation

POPULATION_FORMAT = "aci-population/1"
MISSING = "NA"


# ---------------------------------------------------------------------------
# networks
# ---------------------------------------------------------------------------


def write_edges(net: Network, path: Path):
    iu, ju = np.nonzero(np.triu(net.W, k=1))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "weight"])
        for i, j in zip(iu, ju):
            w.writerow([int(i), int(j), repr(float(net.W[i, j]))])


def write_covariates(net: Network, path: Path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node"] + [f"c{k + 1}" for k in range(net.p)])
        for i, row in enumerate(net.C):
            w.writerow([i] + [repr(float(v)) for v in row])


def read_edges(path) -> list[tuple[int, int, float]]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [(int(r["i"]), int(r["j"]), float(r.get("weight") or 1.0)) for r in rows]


def read_covariates(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "node":
            raise ValueError(f"{path}: first column must be 'node'")
        rows = sorted((int(r[0]), [float(v) for v in r[1:]]) for r in reader if r)
    nodes = [r[0] for r in rows]
    if nodes != list(range(len(nodes))):
        raise ValueError(f"{path}: node column must list 0..n-1 exactly once")
    return np.array([r[1] for r in rows], dtype=np.float64).reshape(len(rows), len(header) - 1)


def load_network(edges_path, covariates_path, net_id: str = "net", isolated: str = "reject") -> Network:
    C = read_covariates(covariates_path)
    return build_network(read_edges(edges_path), C, net_id=net_id, isolated=isolated)


def fingerprint(networks: Sequence[Network], model: OutcomeModelParams | None = None) -> str:
    h = hashlib.sha256()
    for net in networks:
        h.update(net.id.encode())
        h.update(np.ascontiguousarray(net.W).tobytes())
        h.update(np.ascontiguousarray(net.C).tobytes())
    if model is not None:
        h.update(json.dumps(model.to_dict(), sort_keys=True).encode())
    return h.hexdigest()[:16]


def save_population(pop: SimPopulation, directory, extra: dict | None = None) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    entries = []
    for net in pop.networks:
        e, c = f"{net.id}_edges.csv", f"{net.id}_covariates.csv"
        write_edges(net, d / e)
        write_covariates(net, d / c)
        entries.append({"id": net.id, "n": net.n, "edges": e, "covariates": c})
    manifest = {
        "format": POPULATION_FORMAT,
        "networks": entries,
        "fingerprint": fingerprint(pop.networks, pop.model),
        "seeds": {"population": pop.seed},
        "generator": {"model": "erdos_renyi", "edge_prob": pop.edge_prob},
    }
    manifest.update(extra or {})
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2))
    model = pop.model.to_dict()
    model["seeds"] = {"population": pop.seed}
    model.update({k: v for k, v in pop.meta.items() if k.startswith("beta")})
    (d / "model.json").write_text(json.dumps(model, indent=2))
    return d


def load_population(directory, isolated: str = "reject") -> SimPopulation:
    """Read a population directory.  ``model`` is None without ``model.json``."""
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    nets = [
        load_network(d / e["edges"], d / e["covariates"], net_id=e["id"], isolated=isolated)
        for e in manifest["networks"]
    ]
    model = None
    if (d / "model.json").exists():
        model = OutcomeModelParams.from_dict(json.loads((d / "model.json").read_text()))
    seed = manifest.get("seeds", {}).get("population")
    edge_prob = manifest.get("generator", {}).get("edge_prob")
    return SimPopulation(nets, model, seed, edge_prob, meta={"manifest": manifest})


# ---------------------------------------------------------------------------
# curves, traces, reports
# ---------------------------------------------------------------------------


def write_curve_csv(path, curves: Sequence[EffectCurve]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["arm", "g", "mean", "variance"])
        for c in curves:
            arm = "" if c.arm is None else c.arm
            for g, m, v in zip(c.grid, c.mean, c.variance):
                w.writerow([arm, repr(float(g)), repr(float(m)), repr(float(v))])


def read_curve_csv(path) -> dict[int, EffectCurve]:
    by_arm: dict[int, list] = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            by_arm.setdefault(int(r["arm"]), []).append((float(r["g"]), float(r["mean"]), float(r["variance"])))
    return {a: EffectCurve(a, *np.array(rows).T) for a, rows in by_arm.items()}


def write_curves_json(path, curves: dict[str, EffectCurve], meta: dict | None = None):
    payload = {"curves": {k: c.to_dict() for k, c in curves.items()}, "meta": meta or {}}
    Path(path).write_text(json.dumps(payload, indent=1))


def write_stage_curves(directory, trace: RunTrace) -> list[Path]:
    """One ``stage_<k>_arm<a>.csv`` per stage with curves and arm in {0, 1}."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    written = []
    for st in trace.stages:
        if st.curves is None:
            continue
        for a, key in ((0, "tau0"), (1, "tau1")):
            p = d / f"stage_{st.index}_arm{a}.csv"
            write_curve_csv(p, [st.curves[key]])
            written.append(p)
    return written


def write_trace(path, trace: RunTrace):
    Path(path).write_text(trace.to_json())


def read_trace(path) -> RunTrace:
    return RunTrace.from_json(Path(path).read_text())


def eise_rows(trace: RunTrace) -> list[tuple[int, int, float]]:
    rows = []
    for st in trace.stages:
        if st.eise is None:
            continue
        rows.append((st.index, 1, st.eise["tau1"]))
        rows.append((st.index, 0, st.eise["tau0"]))
    return rows


def write_eise_report(path, trace: RunTrace):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stage", "arm", "eise"])
        for st, arm, v in eise_rows(trace):
            w.writerow([st, arm, repr(float(v))])


def compare_table(aci: RunTrace, rta: RunTrace) -> list[dict]:
    """EISE side by side, keyed by networks consumed at the end of a stage."""
    fa = aci.meta.get("population")
    fr = rta.meta.get("population")
    if fa is not None and fr is not None and fa != fr:
        raise ValueError(f"traces come from different populations ({fa} vs {fr})")

    def by_count(tr):
        return {st.networks_used: st.eise for st in tr.stages if st.eise is not None}

    a, r = by_count(aci), by_count(rta)
    rows = []
    for k in sorted(set(a) | set(r)):
        for effect in ("tau1", "tau0"):
            rows.append(
                {
                    "networks": k,
                    "effect": effect,
                    "ACI": a[k][effect] if k in a else None,
                    "RTA": r[k][effect] if k in r else None,
                }
            )
    return rows


def write_compare_csv(path, rows: list[dict]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["networks", "effect", "ACI", "RTA"])
        for row in rows:
            w.writerow(
                [
                    row["networks"],
                    row["effect"],
                    MISSING if row["ACI"] is None else repr(float(row["ACI"])),
                    MISSING if row["RTA"] is None else repr(float(row["RTA"])),
                ]
            )
