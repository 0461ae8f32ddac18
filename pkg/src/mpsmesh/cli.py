"""Command-line front end: mesh, bench, quality, and validate subcommands.

``mesh`` runs the full pipeline (decompose, per-fracture sampling, conforming
meshes, merge, volume fill, sliver removal) and writes meshes, quality
reports, figures, and a manifest sufficient to reproduce every artifact.
``bench`` produces the scaling datasets (nodes-vs-time, k-vs-time,
k-vs-nodes) with a no-fast-reject baseline column.  ``quality`` recomputes
metrics from an exported mesh.  ``validate`` checks an input network.
"""

from __future__ import annotations

import argparse
import json
import os
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__
from . import delaunay as dl
from . import network as net
from . import sampler as smp
from .errors import (
    InvalidParams,
    IoError,
    MaxItersExceeded,
    MeshError,
    ParseError,
)
from .geometry import (
    point_polygon_distance_3d,
    tet_aspect,
    tet_dihedral_angles,
    triangle_angles,
    triangle_aspect,
)
from .radius_field import RadiusParams
from .streams import DEFAULT_SEED, FRACTURE, stream

_MODES = ("mesh2d", "mesh3d", "full")

_DEFAULTS = {
    "h": 0.1,
    "a": 0.1,
    "f": 1.0,
    "r": 40.0,
    "rho_max": None,
    "k": 20,
    "rounds": 3,
    "seed": None,
    "jobs": 1,
    "mode": "full",
    "min_dihedral": 8.0,
    "min_aspect": 0.2,
    "max_sliver_iters": 50,
    "baseline": False,
    "h_sweep": (0.2, 0.09, 0.04, 0.018, 0.008, 0.004),
    "k_sweep": (5, 10, 20, 40, 80, 160),
}


@dataclass(frozen=True)
class RunConfig:
    """Resolved run settings: defaults <- config file <- command line."""

    input: str
    out: str
    params: RadiusParams
    k: int
    rounds: int
    seed: int
    jobs: int
    mode: str
    thresholds: dl.SliverThresholds
    max_sliver_iters: int
    baseline: bool
    h_sweep: tuple
    k_sweep: tuple

    def echo(self) -> dict:
        """The flat, copy-pasteable parameter block echoed into manifests."""
        return {
            "input": self.input,
            "out": self.out,
            "h": self.params.h,
            "a": self.params.a,
            "f": self.params.f,
            "r": self.params.r,
            "rho_max": self.params.rho_max,
            "k": self.k,
            "rounds": self.rounds,
            "seed": self.seed,
            "jobs": self.jobs,
            "mode": self.mode,
            "min_dihedral": self.thresholds.min_dihedral_deg,
            "max_dihedral": self.thresholds.max_dihedral_deg,
            "min_aspect": self.thresholds.min_aspect,
            "max_sliver_iters": self.max_sliver_iters,
            "baseline": self.baseline,
            "h_sweep": list(self.h_sweep),
            "k_sweep": list(self.k_sweep),
        }


# ---------------------------------------------------------------------------
# configuration resolution
# ---------------------------------------------------------------------------


def _read_config_file(path) -> dict:
    """Flat ``key = value`` lines; '#' comments; sweeps comma-separated."""
    out: dict = {}
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except OSError as exc:
        raise IoError(f"cannot read config file {path}: {exc}") from exc
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, _, value = line.partition("=")
        else:
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise ParseError(f"config line {ln}: expected 'key value'")
            key, value = parts
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _coerce(key: str, value):
    if isinstance(value, str):
        if key in ("input", "out", "mode"):
            return value
        if key == "baseline":
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise InvalidParams(f"config: boolean expected for {key!r}")
        if key in ("h_sweep", "k_sweep"):
            value = [v for v in value.split(",") if v.strip()]
        else:
            try:
                return int(value, 0) if key in (
                    "k", "rounds", "seed", "jobs", "max_sliver_iters"
                ) else float(value)
            except ValueError:
                raise InvalidParams(
                    f"config: malformed value for {key!r}: {value!r}"
                ) from None
    if key == "h_sweep":
        return tuple(float(v) for v in value)
    if key == "k_sweep":
        return tuple(int(v) for v in value)
    return value


def resolve_config(args: argparse.Namespace) -> RunConfig:
    merged = dict(_DEFAULTS)
    if getattr(args, "config", None):
        for key, value in _read_config_file(args.config).items():
            if key not in _DEFAULTS and key not in ("input", "out"):
                raise InvalidParams(f"config: unknown key {key!r}")
            merged[key] = _coerce(key, value)
    for key in list(_DEFAULTS) + ["input", "out"]:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = _coerce(key, flag)
    if merged.get("seed") is None:
        env = os.environ.get("MPSMESH_SEED")
        merged["seed"] = int(env, 0) if env else DEFAULT_SEED
    if merged.get("input") is None:
        raise InvalidParams("an input path is required (--input)")
    if merged["mode"] not in _MODES:
        raise InvalidParams(f"mode must be one of {_MODES}")
    if merged["k"] < 1:
        raise InvalidParams("k must be at least 1")
    if merged["rounds"] < 0 or merged["jobs"] < 1:
        raise InvalidParams("rounds must be >= 0 and jobs >= 1")
    params = RadiusParams(h=float(merged["h"]), a=float(merged["a"]),
                          f=float(merged["f"]), r=float(merged["r"]),
                          rho_max=merged["rho_max"])
    if params.rho_max is None and merged["mode"] == "full":
        # the 2D field saturates at its cap, so the cap is the natural
        # ceiling for the volume field when none is requested
        params = RadiusParams(h=params.h, a=params.a, f=params.f, r=params.r,
                              rho_max=params.cap)
    thresholds = dl.SliverThresholds(
        min_dihedral_deg=float(merged["min_dihedral"]),
        min_aspect=float(merged["min_aspect"]),
    )
    return RunConfig(
        input=str(merged["input"]), out=str(merged.get("out") or "out"),
        params=params, k=int(merged["k"]), rounds=int(merged["rounds"]),
        seed=int(merged["seed"]), jobs=int(merged["jobs"]),
        mode=str(merged["mode"]), thresholds=thresholds,
        max_sliver_iters=int(merged["max_sliver_iters"]),
        baseline=bool(merged["baseline"]),
        h_sweep=tuple(merged["h_sweep"]), k_sweep=tuple(merged["k_sweep"]),
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mpsmesh",
        description="Conforming fracture-network meshes from maximal "
                    "Poisson-disk samples.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--input", help="network description (JSON or text)")
        sp.add_argument("--out", help="output directory (default: out)")
        sp.add_argument("--config", help="flat key=value config file; "
                                         "command-line flags win")
        sp.add_argument("--h", type=float, help="target near-feature spacing")
        sp.add_argument("--a", type=float, help="radius growth slope")
        sp.add_argument("--f", type=float, help="flat-zone width factor")
        sp.add_argument("--r", type=float, help="cap factor: radii saturate "
                                                "at (a*r + 0.5)*h")
        sp.add_argument("--rho-max", dest="rho_max", type=float,
                        help="volume radius ceiling (default: the 2D cap)")
        sp.add_argument("--k", type=int, help="candidates per batch")
        sp.add_argument("--rounds", type=int, help="resample rounds (2D)")
        sp.add_argument("--seed", type=int,
                        help="root RNG seed (default 0x44464E30; "
                             "MPSMESH_SEED overrides the default only)")
        sp.add_argument("--jobs", type=int, help="parallel fracture workers")
        sp.add_argument("--mode", choices=_MODES,
                        help="mesh2d: per-fracture meshes; mesh3d: + merged "
                             "surface; full: + volume and sliver loop")
        sp.add_argument("--min-dihedral", dest="min_dihedral", type=float,
                        help="sliver threshold, degrees")
        sp.add_argument("--min-aspect", dest="min_aspect", type=float,
                        help="sliver aspect threshold")
        sp.add_argument("--max-sliver-iters", dest="max_sliver_iters",
                        type=int, help="sliver loop iteration cap")
        sp.add_argument("--baseline", action="store_true", default=None,
                        help="disable the occupied-cell fast reject")
        return sp

    common(sub.add_parser("mesh", help="run the meshing pipeline"))
    bench = common(sub.add_parser("bench", help="produce scaling datasets"))
    bench.add_argument("--h-sweep", dest="h_sweep",
                       help="comma-separated spacings for the node sweep")
    bench.add_argument("--k-sweep", dest="k_sweep",
                       help="comma-separated k values for the k sweep")
    common(sub.add_parser("quality",
                          help="recompute quality from an exported mesh"))
    common(sub.add_parser("validate", help="check a network description"))
    return parser


# ---------------------------------------------------------------------------
# shared pipeline pieces
# ---------------------------------------------------------------------------


def _fracture_job(args):
    plan, params, k, seed, rounds, fast = args
    sample = net.sample_fracture(plan, params, k, seed, rounds=rounds,
                                 fast_reject=fast)
    return net.conform_and_mesh(sample, plan)


def _surface_mesh(results, merged) -> dl.Mesh:
    """Stitch per-fracture triangulations into one world-space mesh.

    Provenance ids join local vertices to merged rows, so shared
    intersection nodes collapse to single mesh vertices and the fracture
    meshes meet along common edges.
    """
    index_of = {(int(e), int(i)): row
                for row, (e, i) in enumerate(merged.prov)}
    cells_parts = []
    quality_parts: dict = {"min_angle": [], "max_angle": [], "aspect": []}
    for kept, mesh in results:
        gids = np.fromiter(
            (index_of[(int(e), int(i))] for e, i in kept.prov),
            dtype=np.int64, count=len(kept.prov))
        cells_parts.append(np.sort(gids[mesh.cells], axis=1))
        for name in quality_parts:
            quality_parts[name].append(mesh.quality[name])
    cells = np.vstack(cells_parts) if cells_parts else \
        np.zeros((0, 3), dtype=np.int64)
    quality = {name: (np.concatenate(parts) if parts else np.zeros(0))
               for name, parts in quality_parts.items()}
    order = np.lexsort(cells.T[::-1])
    return dl.Mesh(points=merged.points, cells=cells[order],
                   quality={k: v[order] for k, v in quality.items()})


def _standoff_audit(sample, geoms, box_lo, box_hi) -> dict:
    mask = sample.tags == smp.VOLUME
    pts = sample.points[mask]
    if not len(pts):
        return {"checked": 0, "violations": 0, "min_ratio": None}
    half = sample.rho[mask] / 2.0
    worst = np.minimum((pts - box_lo).min(axis=1),
                       (box_hi - pts).min(axis=1)) / half
    for frame, local_poly, _bb in geoms:
        d = point_polygon_distance_3d(pts, frame, local_poly)
        worst = np.minimum(worst, d / half)
    return {
        "checked": int(len(pts)),
        "violations": int((worst < 1.0).sum()),
        "min_ratio": float(worst.min()),
    }


def _write_quality_csv(report: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("metric,bin_lo,bin_hi,count\n")
        for metric, block in report.items():
            for lo, hi, count in block["bins"]:
                f.write(f"{metric},{lo:.17g},{hi:.17g},{count}\n")


def _render_quality_png(report: dict, path, title: str) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    names = list(report)
    fig, axes = plt.subplots(1, len(names), figsize=(4.2 * len(names), 3.2))
    for ax, name in zip(np.atleast_1d(axes), names):
        block = report[name]
        lows = [b[0] for b in block["bins"]]
        widths = [b[1] - b[0] for b in block["bins"]]
        counts = [b[2] for b in block["bins"]]
        ax.bar(lows, counts, width=widths, align="edge", edgecolor="none")
        ax.set_xlabel(name)
        ax.set_ylabel("cells")
        ax.set_title(f"min {block['min']:.3g}  max {block['max']:.3g}")
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def _quality_from_arrays(points: np.ndarray, cells: np.ndarray) -> dict:
    if cells.shape[1] == 3:
        ang = triangle_angles(points, cells)
        return {
            "min_angle": ang.min(axis=1),
            "max_angle": ang.max(axis=1),
            "aspect": triangle_aspect(points, cells),
        }
    dih = tet_dihedral_angles(points, cells)
    return {
        "min_dihedral": dih.min(axis=1),
        "max_dihedral": dih.max(axis=1),
        "aspect": tet_aspect(points, cells),
    }


def _dump_json(doc, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


# ---------------------------------------------------------------------------
# mesh subcommand
# ---------------------------------------------------------------------------


def run_mesh(cfg: RunConfig) -> int:
    timings: dict = {}
    total0 = time.perf_counter()
    os.makedirs(cfg.out, exist_ok=True)

    dfn = net.load_dfn(cfg.input)
    artifacts: list = []
    quality: dict = {}
    manifest: dict = {
        "command": "mesh",
        "package_version": __version__,
        "config": cfg.echo(),
        "counters": {},
    }
    fast = not cfg.baseline

    t0 = time.perf_counter()
    network = net.decompose(dfn, cfg.params, cfg.seed)
    timings["decompose"] = time.perf_counter() - t0
    manifest["counters"]["decompose"] = _clean_counters(network.counters)

    t0 = time.perf_counter()
    job_args = [(plan, cfg.params, cfg.k, cfg.seed, cfg.rounds, fast)
                for plan in network.plans]
    if cfg.jobs > 1 and len(job_args) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_fracture_job, job_args))
    else:
        results = [_fracture_job(a) for a in job_args]
    timings["fracture_sampling"] = time.perf_counter() - t0

    conformity = {"subsegments": 0, "missing": 0}
    for plan, (kept, mesh) in zip(network.plans, results):
        name = f"fracture_{plan.index:03d}"
        net.export_vtk(mesh, os.path.join(cfg.out, name + ".vtk"),
                       title=name)
        artifacts.append(name + ".vtk")
        rep = dl.quality_report(mesh)
        quality[name] = rep
        _write_quality_csv(rep, os.path.join(cfg.out,
                                             f"quality_{name}.csv"))
        artifacts.append(f"quality_{name}.csv")
        edges = mesh.edge_set()
        conformity["subsegments"] += len(mesh.constrained_edges)
        conformity["missing"] += sum(e not in edges
                                     for e in mesh.constrained_edges)
        manifest["counters"][name] = _clean_counters(kept.counters)
    manifest["conformity"] = conformity

    if cfg.mode == "mesh2d" and results:
        combined = {
            name: {"bins": [], "min": 0.0, "max": 0.0, "mean": 0.0, "n": 0}
            for name in ("min_angle", "max_angle", "aspect")
        }
        allq = {name: np.concatenate([m.quality[name] for _s, m in results])
                for name in combined}
        fake = dl.Mesh(points=np.zeros((0, 2)),
                       cells=np.zeros((0, 3), dtype=np.int64), quality=allq)
        rep = dl.quality_report(fake)
        _render_quality_png(rep, os.path.join(cfg.out,
                                              "quality_fractures.png"),
                            "fracture meshes")
        artifacts.append("quality_fractures.png")

    merged = None
    if cfg.mode in ("mesh3d", "full"):
        t0 = time.perf_counter()
        merged = net.merge_samples([kept for kept, _m in results],
                                   network.plans, network.world_nodes)
        timings["merge"] = time.perf_counter() - t0
        manifest["counters"]["merge"] = _clean_counters(merged.counters)
        surface = _surface_mesh(results, merged)
        net.export_vtk(surface, os.path.join(cfg.out, "surface.vtk"),
                       title="surface")
        net.export_points_csv(merged, os.path.join(cfg.out, "points.csv"))
        artifacts += ["surface.vtk", "points.csv"]
        if len(surface.cells):
            rep = dl.quality_report(surface)
            quality["surface"] = rep
            _write_quality_csv(rep, os.path.join(cfg.out,
                                                 "quality_surface.csv"))
            _render_quality_png(rep, os.path.join(cfg.out,
                                                  "quality_surface.png"),
                                "merged fracture surface")
            artifacts += ["quality_surface.csv", "quality_surface.png"]

    status = 0
    if cfg.mode == "full":
        params = cfg.params
        t0 = time.perf_counter()
        if merged is not None and len(merged):
            field3d = net.build_field3d(merged, params)
        else:
            from .radius_field import UniformField3D
            field3d = UniformField3D(params)
        geoms = net.fracture_geometries(dfn, network.plans)
        vol, _eng = smp.sample_volume_3d(
            merged if merged is not None and len(merged) else None,
            dfn.box_lo, dfn.box_hi, field3d, params, cfg.k, cfg.seed,
            fracture_geoms=geoms, fast_reject=fast)
        timings["volume_sampling"] = time.perf_counter() - t0
        manifest["counters"]["volume"] = _clean_counters(vol.counters)

        t0 = time.perf_counter()
        refill = smp.refill_resampler(dfn.box_lo, dfn.box_hi, field3d,
                                      params, cfg.k, cfg.seed,
                                      fracture_geoms=geoms, fast_reject=fast)
        final, vmesh, log = dl.sliver_removal_loop(
            vol, refill, cfg.thresholds, max_iters=cfg.max_sliver_iters)
        timings["sliver_loop"] = time.perf_counter() - t0
        manifest["sliver_loop"] = log

        t0 = time.perf_counter()
        vmesh = dl.delaunay3d(final.points)  # exact-audited export mesh
        timings["volume_mesh"] = time.perf_counter() - t0
        manifest["standoff_audit"] = _standoff_audit(
            final, geoms, dfn.box_lo, dfn.box_hi)
        manifest["boundary_circumradius_diagnostic"] = (
            dl.boundary_circumradius_diagnostic(
                vmesh, dfn.box_lo, dfn.box_hi,
                params.require_rho_max()))
        net.export_vtk(vmesh, os.path.join(cfg.out, "volume.vtk"),
                       title="volume")
        net.export_points_csv(final, os.path.join(cfg.out,
                                                  "volume_points.csv"))
        rep = dl.quality_report(vmesh)
        quality["volume"] = rep
        _write_quality_csv(rep, os.path.join(cfg.out, "quality_volume.csv"))
        _render_quality_png(rep, os.path.join(cfg.out, "quality_volume.png"),
                            "volume mesh")
        artifacts += ["volume.vtk", "volume_points.csv",
                      "quality_volume.csv", "quality_volume.png"]
        if log["status"] != "converged":
            print(f"warning: sliver loop hit the iteration cap "
                  f"({cfg.max_sliver_iters}); mesh still contains slivers",
                  file=sys.stderr)
            status = 3

    _dump_json(quality, os.path.join(cfg.out, "quality.json"))
    artifacts.append("quality.json")
    manifest["artifacts"] = sorted(artifacts)
    timings["total"] = time.perf_counter() - total0
    manifest["timings"] = timings
    _dump_json(manifest, os.path.join(cfg.out, "manifest.json"))
    return status


def _clean_counters(counters: dict) -> dict:
    out = {}
    for key, value in counters.items():
        if isinstance(value, (list, tuple)):
            out[key] = [int(v) for v in value]
        elif value:
            out[key] = int(value)
    return out


# ---------------------------------------------------------------------------
# bench subcommand
# ---------------------------------------------------------------------------


def _bench_geometry(cfg: RunConfig):
    """Fracture 0's local polygon and feature segments from the input."""
    dfn = net.load_dfn(cfg.input)
    h_geo = min(min(cfg.h_sweep), cfg.params.h)
    params = RadiusParams(h=h_geo, a=cfg.params.a, f=cfg.params.f,
                          r=cfg.params.r)
    plan = net.decompose(dfn, params, cfg.seed).plans[0]
    segs = [(seg[0], seg[1]) for seg in plan.local_segments]
    return plan.local_polygon, segs


def _timed_run(poly, segs, params, k, rounds, seed, fast) -> tuple:
    t0 = time.perf_counter()
    sample, _eng = smp.sample_polygon(poly, segs, params, k,
                                      stream(seed, FRACTURE, 0),
                                      rounds=rounds, fast_reject=fast)
    return time.perf_counter() - t0, len(sample)


def _median_of_3(poly, segs, params, k, rounds, seed, fast) -> tuple:
    """Warm-up run, then the median and raw seconds of 3 repetitions."""
    _timed_run(poly, segs, params, k, rounds, seed, fast)
    raw = []
    nodes = 0
    for _rep in range(3):
        seconds, nodes = _timed_run(poly, segs, params, k, rounds, seed,
                                    fast)
        raw.append(seconds)
    return statistics.median(raw), nodes, raw


def bench_nodes_sweep(poly, segs, cfg: RunConfig) -> list:
    """One row (h, nodes, median seconds, raw seconds) per sweep spacing."""
    rows = []
    for h in cfg.h_sweep:
        params = RadiusParams(h=h, a=cfg.params.a, f=cfg.params.f,
                              r=cfg.params.r)
        median, nodes, raw = _median_of_3(poly, segs, params, cfg.k,
                                          cfg.rounds, cfg.seed, True)
        rows.append({"h": h, "nodes": nodes, "seconds": median, "raw": raw})
    return rows


def bench_k_sweep(poly, segs, cfg: RunConfig) -> list:
    """Per k: default and no-fast-reject baseline timings at fixed h."""
    rows = []
    for k in cfg.k_sweep:
        med_d, nodes, raw_d = _median_of_3(poly, segs, cfg.params, k,
                                           cfg.rounds, cfg.seed, True)
        med_b, _n, raw_b = _median_of_3(poly, segs, cfg.params, k,
                                        cfg.rounds, cfg.seed, False)
        rows.append({"k": k, "nodes": nodes, "seconds": med_d,
                     "seconds_baseline": med_b, "raw": raw_d,
                     "raw_baseline": raw_b})
    return rows


def bench_k_nodes(poly, segs, cfg: RunConfig, max_rounds: int = 3) -> list:
    """Node counts per k for resample rounds 0..max_rounds."""
    rows = []
    for k in cfg.k_sweep:
        counts = []
        for rounds in range(max_rounds + 1):
            _t, n = _timed_run(poly, segs, cfg.params, k, rounds, cfg.seed,
                               True)
            counts.append(n)
        rows.append({"k": k, "nodes_per_round": counts})
    return rows


def loglog_slope(x, y) -> float:
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(lx, ly, 1)[0])


def _render_bench_png(nodes_rows, k_rows, path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    ns = [r["nodes"] for r in nodes_rows]
    ts = [r["seconds"] for r in nodes_rows]
    ax1.loglog(ns, ts, "o-")
    ax1.set_xlabel("nodes")
    ax1.set_ylabel("seconds")
    ax1.set_title(f"slope {loglog_slope(ns, ts):.3f}")
    ks = [r["k"] for r in k_rows]
    ax2.loglog(ks, [r["seconds"] for r in k_rows], "o-", label="default")
    ax2.loglog(ks, [r["seconds_baseline"] for r in k_rows], "s--",
               label="baseline")
    ax2.set_xlabel("k")
    ax2.set_ylabel("seconds")
    ax2.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def run_bench(cfg: RunConfig) -> int:
    os.makedirs(cfg.out, exist_ok=True)
    poly, segs = _bench_geometry(cfg)

    nodes_rows = bench_nodes_sweep(poly, segs, cfg)
    with open(os.path.join(cfg.out, "nodes_vs_time.csv"), "w",
              encoding="utf-8") as f:
        f.write("h,nodes,seconds,rep1,rep2,rep3\n")
        for r in nodes_rows:
            f.write(f"{r['h']:.17g},{r['nodes']},{r['seconds']:.6f},"
                    + ",".join(f"{v:.6f}" for v in r["raw"]) + "\n")

    k_rows = bench_k_sweep(poly, segs, cfg)
    with open(os.path.join(cfg.out, "k_vs_time.csv"), "w",
              encoding="utf-8") as f:
        f.write("k,nodes,seconds,seconds_baseline,"
                "rep1,rep2,rep3,rep1_baseline,rep2_baseline,rep3_baseline\n")
        for r in k_rows:
            f.write(f"{r['k']},{r['nodes']},{r['seconds']:.6f},"
                    f"{r['seconds_baseline']:.6f},"
                    + ",".join(f"{v:.6f}" for v in r["raw"]) + ","
                    + ",".join(f"{v:.6f}" for v in r["raw_baseline"]) + "\n")

    kn_rows = bench_k_nodes(poly, segs, cfg)
    with open(os.path.join(cfg.out, "k_vs_nodes.csv"), "w",
              encoding="utf-8") as f:
        f.write("k,nodes_rounds0,nodes_rounds1,nodes_rounds2,"
                "nodes_rounds3\n")
        for r in kn_rows:
            f.write(f"{r['k']}," + ",".join(str(n)
                    for n in r["nodes_per_round"]) + "\n")

    _render_bench_png(nodes_rows, k_rows,
                      os.path.join(cfg.out, "bench_scaling.png"))
    manifest = {
        "command": "bench",
        "package_version": __version__,
        "config": cfg.echo(),
        "nodes_vs_time_slope": loglog_slope(
            [r["nodes"] for r in nodes_rows],
            [r["seconds"] for r in nodes_rows]),
        "k_vs_time_slope": loglog_slope(
            [r["k"] for r in k_rows], [r["seconds"] for r in k_rows]),
        "artifacts": ["nodes_vs_time.csv", "k_vs_time.csv", "k_vs_nodes.csv",
                      "bench_scaling.png"],
    }
    _dump_json(manifest, os.path.join(cfg.out, "manifest.json"))
    return 0


# ---------------------------------------------------------------------------
# quality subcommand
# ---------------------------------------------------------------------------


def run_quality(cfg: RunConfig) -> int:
    os.makedirs(cfg.out, exist_ok=True)
    points, cells = net.read_vtk(cfg.input)
    if cells.shape[1] == 3 and np.all(points[:, 2] == 0.0):
        points = points[:, :2]
    mesh = dl.Mesh(points=points, cells=cells,
                   quality=_quality_from_arrays(points, cells))
    report = dl.quality_report(mesh)
    _dump_json(report, os.path.join(cfg.out, "report.json"))
    _write_quality_csv(report, os.path.join(cfg.out, "report.csv"))
    _render_quality_png(report, os.path.join(cfg.out, "report.png"),
                        os.path.basename(str(cfg.input)))
    for name, block in report.items():
        print(f"{name}: n={block['n']} min={block['min']:.4f} "
              f"max={block['max']:.4f} mean={block['mean']:.4f}")
    return 0


# ---------------------------------------------------------------------------
# validate subcommand
# ---------------------------------------------------------------------------


def run_validate(cfg: RunConfig) -> int:
    dfn = net.load_dfn(cfg.input)
    box = dfn.box_hi - dfn.box_lo
    print(f"{len(dfn.fractures)} fractures, "
          f"{len(dfn.intersections)} intersections, "
          f"box {box[0]:g} x {box[1]:g} x {box[2]:g}")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

_RUNNERS = {
    "mesh": run_mesh,
    "bench": run_bench,
    "quality": run_quality,
    "validate": run_validate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return _RUNNERS[args.command](cfg)
    except (IoError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MaxItersExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except MeshError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
