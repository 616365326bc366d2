"""``dualms <stage> --config <path> [--seed N] [--out DIR]``.

Stages write their artifacts into the output directory; later stages read
the earlier ones back from disk.  Exit codes: 0 success, 1 config error,
2 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import torch

from . import __version__
from .exceptions import ConfigInvalid, DualMSError, MissingArtifact
from .field import (Normalization, SkeletonSamples, evaluate, load_checkpoint, save_checkpoint,
                    save_trace, train)
from .graph import build_graph, load_graph, save_graph
from .maxcut import ConnectedMaxCut, extract_skeletons, load_skeleton, save_skeleton
from .config import load_config
from .mesh import (curvature_stats, equidistant_field, export_mesh, laplacian_smooth,
                   marching_cubes, mean_curvature, sample_grid, surface_area, thicken,
                   thickness_for_volume_fraction, tpms_field)
from .mesh.thicken import redistance

log = logging.getLogger("dualms")

STAGES = ("sample-graph", "maxcut", "train", "extract", "diagnose", "tpms", "baseline", "pipeline")
PIPELINE_STAGES = ("sample-graph", "maxcut", "train", "extract", "diagnose")

GRAPH_FILE = "graph.json"
SKELETON_FILES = {"A": "skeleton_A.json", "B": "skeleton_B.json"}
CUT_TRACE_FILE = "cut_trace.csv"
MODEL_FILE = "model.dmsf"
LOSS_TRACE_FILE = "loss_trace.csv"
DIAGNOSTICS_FILE = "diagnostics.csv"
THICK_NAMES = ("wall", "channel_A", "channel_B")

DIAGNOSTIC_COLUMNS = ("surface", "n_vertices", "n_triangles", "area", "h_mean", "h_abs_mean",
                      "h_median", "h_q1", "h_q3", "h_iqr", "h_std", "tau", "volume_fraction")


class Run:
    """One stage invocation: config, output directory and artifact metadata."""

    def __init__(self, cfg, out_dir):
        self.cfg = cfg
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.config_hash = cfg.hash()
        self._domain = None

    @property
    def domain(self):
        if self._domain is None:
            self._domain = self.cfg.load_domain()
        return self._domain

    def meta(self, stage):
        return {"config_hash": self.config_hash, "seed": self.cfg.seed, "stage": stage,
                "dualms_version": __version__}

    def header(self, stage):
        return f"dualms {stage}\nconfig_hash={self.config_hash}\nseed={self.cfg.seed}"

    def path(self, name):
        return self.out / name

    def require(self, name, stage):
        p = self.path(name)
        if not p.exists():
            raise MissingArtifact(f"{stage} needs {p}; run the earlier stage first")
        return p

    def mesh_path(self, stem):
        ext = "obj" if self.cfg.extract.format == "obj" else "stl"
        return self.path(f"{stem}.{ext}")


# ---------------------------------------------------------------- stages


def stage_sample_graph(run):
    g = run.cfg.graph
    graph = build_graph(run.domain, n_vertices=g.n_vertices, cvt_iterations=g.cvt_iterations,
                        density_samples=g.density_samples, a=g.penalty,
                        edge_samples=g.edge_samples, seed=run.cfg.seed)
    save_graph(graph, run.path(GRAPH_FILE), run.meta("sample-graph"))
    log.info("graph: %d vertices, %d edges, %d pinned", graph.n_vertices, len(graph.edges),
             len(graph.pinned))


def stage_maxcut(run):
    graph = load_graph(run.require(GRAPH_FILE, "maxcut"))
    m = run.cfg.maxcut
    est = ConnectedMaxCut(n_init=m.n_init, init=m.init, max_rounds=m.max_rounds,
                          start_attempts=m.start_attempts, random_state=run.cfg.seed).fit(graph)
    meta = run.meta("maxcut")
    for sk in extract_skeletons(graph, est.partition_):
        save_skeleton(sk, run.path(SKELETON_FILES[sk.fluid]), meta)
    est.trace_.to_csv(run.path(CUT_TRACE_FILE), meta)
    log.info("maxcut: cut %.6g after %d flips", est.cut_value_, est.n_iter_)


def _skeleton_samples(run, stage):
    skels = [load_skeleton(run.require(SKELETON_FILES[f], stage)) for f in ("A", "B")]
    return SkeletonSamples.from_skeletons(*skels, density=run.cfg.skeleton.density)


def stage_train(run):
    samples = _skeleton_samples(run, "train")
    cfg = run.cfg.train_config()
    log.info("train: %d A / %d B samples, %d iterations", len(samples.points_a),
             len(samples.points_b), cfg.iterations)
    model, trace = train(samples, run.domain, cfg)
    meta = run.meta("train")
    save_checkpoint(model, run.path(MODEL_FILE), meta)
    save_trace(trace, run.path(LOSS_TRACE_FILE), meta)


def _grid(run, f, resolution):
    return sample_grid(f, run.domain.bbox, resolution, mask=run.domain)


def _model_grid(run, stage):
    model, _ = load_checkpoint(run.require(MODEL_FILE, stage))
    return _grid(run, lambda p: evaluate(model, p), run.cfg.extract.resolution)


def _thickening(run, grid):
    """``(tau, ThickenResult)`` per the extract section, or ``(None, None)``."""
    ex = run.cfg.extract
    if not ex.thickened:
        return None, None
    dist = redistance(grid)
    tau = ex.thickness
    if tau is None:
        tau = thickness_for_volume_fraction(grid, ex.volume_fraction, distance=dist)
    return tau, thicken(grid, tau, ports=run.domain.ports, distance=dist)


def stage_extract(run):
    grid = _model_grid(run, "extract")
    mesh = marching_cubes(grid)
    fmt = run.cfg.extract.format
    export_mesh(mesh, run.mesh_path("surface"), fmt, run.header("extract"))
    _, thick = _thickening(run, grid)
    if thick is not None:
        for name, m in zip(THICK_NAMES, (thick.wall, thick.channel_a, thick.channel_b)):
            export_mesh(m, run.mesh_path(name), fmt, run.header("extract"))
    log.info("extract: %d triangles, area %.6g", mesh.n_triangles, surface_area(mesh))


def diagnostics_row(name, mesh, tau=None, volume_fraction=None):
    stats = curvature_stats(mean_curvature(mesh))
    row = {"surface": name, "n_vertices": mesh.n_vertices, "n_triangles": mesh.n_triangles,
           "area": surface_area(mesh), "tau": tau, "volume_fraction": volume_fraction}
    row.update({f"h_{k}": v for k, v in stats.items()})
    return row


def write_diagnostics(rows, path, meta):
    with open(path, "w", newline="") as fh:
        fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(DIAGNOSTIC_COLUMNS)
        for row in rows:
            writer.writerow(["" if row[c] is None else repr(row[c]) if isinstance(row[c], float)
                             else row[c] for c in DIAGNOSTIC_COLUMNS])


def read_diagnostics(path):
    with open(path) as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))


def stage_diagnose(run):
    grid = _model_grid(run, "diagnose")
    mesh = marching_cubes(grid)
    tau, thick = _thickening(run, grid)
    vf = None if thick is None else thick.volume_fraction
    write_diagnostics([diagnostics_row("dualms", mesh, tau, vf)], run.path(DIAGNOSTICS_FILE),
                      run.meta("diagnose"))


def stage_tpms(run):
    t = run.cfg.tpms
    f = tpms_field(t.kind, t.periods)
    norm = Normalization.from_bbox(*run.domain.bbox)
    grid = _grid(run, lambda p: f(norm.apply(p)), t.resolution)
    mesh = marching_cubes(grid)
    export_mesh(mesh, run.mesh_path("tpms_surface"), run.cfg.extract.format, run.header("tpms"))
    write_diagnostics([diagnostics_row(f"tpms_{t.kind}", mesh)],
                      run.path("tpms_diagnostics.csv"), run.meta("tpms"))


def stage_baseline(run):
    samples = _skeleton_samples(run, "baseline")
    g = equidistant_field(samples.points_a, samples.points_b)
    grid = _grid(run, g, run.cfg.extract.resolution)
    b = run.cfg.baseline
    mesh = laplacian_smooth(marching_cubes(grid), b.smooth_iterations, b.smooth_step)
    export_mesh(mesh, run.mesh_path("baseline_surface"), run.cfg.extract.format,
                run.header("baseline"))
    write_diagnostics([diagnostics_row("equidistant_smoothed", mesh)],
                      run.path("baseline_diagnostics.csv"), run.meta("baseline"))


STAGE_FUNCS = {"sample-graph": stage_sample_graph, "maxcut": stage_maxcut, "train": stage_train,
               "extract": stage_extract, "diagnose": stage_diagnose, "tpms": stage_tpms,
               "baseline": stage_baseline}


def run_stage(stage, cfg, out_dir=None):
    """Run ``stage`` (or every pipeline stage); errors are re-raised prefixed with the stage."""
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}")
    run = Run(cfg, out_dir if out_dir is not None else cfg.output_dir)
    for name in PIPELINE_STAGES if stage == "pipeline" else (stage,):
        log.info("stage %s", name)
        try:
            STAGE_FUNCS[name](run)
        except DualMSError as exc:
            exc.stage = name
            exc.args = (f"{name}: {exc}",)
            raise
    return run


def build_parser():
    p = argparse.ArgumentParser(prog="dualms", description=__doc__.splitlines()[0])
    p.add_argument("stage", choices=STAGES)
    p.add_argument("--config", required=True, help="pipeline config (JSON)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default=None, help="output directory (default: config output_dir)")
    p.add_argument("--threads", type=int, default=1, help="torch CPU threads (default 1)")
    p.add_argument("-q", "--quiet", action="store_true", help="only log warnings")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s", stream=sys.stderr)
    torch.set_num_threads(max(1, args.threads))
    try:
        cfg = load_config(args.config, seed=args.seed)
    except ConfigInvalid as exc:
        log.error("config error: %s", exc)
        return 1
    try:
        run_stage(args.stage, cfg, args.out)
    except ConfigInvalid as exc:
        log.error("config error: %s", exc)
        return 1
    except (DualMSError, OSError, ValueError) as exc:
        log.error("%s failed: %s", args.stage, exc)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
