"""Dataset generation, evaluation reports and the timing benchmark.

The dataset build fans out over (object, view) tasks. Every task derives
its seeds from the run seed and the object id, so results do not depend on
scheduling or on the number of workers; records are sorted before writing.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assignment import DEFAULT_K, solve_dense, solve_geometric, sq_dist
from .atlas import build_complete_atlas, build_partial_atlas, save_atlas
from .errors import AtlasError, ConfigError, UnpairedSample
from .geom import PointCloud, normalize_center, sample_surface
from .lattice import fibonacci_sphere, get_lattice
from .meshio import load_cloud, load_mesh, write_mesh_ply, write_ply
from .metrics import DEFAULT_TAU, evaluate
from .partial_view import DEFAULT_RADIUS, make_partial_cloud, rasterize_visibility, sample_cameras

log = logging.getLogger(__name__)

WORKERS_ENV = "SHAPE_ATLAS_WORKERS"
MESH_SUFFIXES = (".ply", ".obj")
MANIFEST_NAME = "manifest.ndjson"
SUMMARY_NAME = "manifest_summary.json"
SPLITS = ("train", "val", "test")


@dataclass
class DatasetConfig:
    mesh_dirs: list = field(default_factory=list)
    output_dir: str = "dataset"
    n_points: int = 16384
    views: int = 16
    partial_points: int = 2048
    min_faces: int = 1600
    seed: int = 0
    workers: int = 1
    split_ratios: tuple = (0.75, 0.15, 0.10)
    camera_radius: float = DEFAULT_RADIUS
    resolution: int = 512
    k: int = DEFAULT_K
    previews: bool = False
    strict: bool = False
    cache_dir: str | None = None

    def validate(self):
        if not self.mesh_dirs:
            raise ConfigError("mesh_dirs is empty")
        r = math.isqrt(self.n_points)
        if self.n_points < 1 or r * r != self.n_points:
            raise ConfigError("n_points must be a positive perfect square")
        if not 1 <= self.partial_points <= self.n_points:
            raise ConfigError("partial_points must lie in [1, n_points]")
        for name in ("views", "workers", "resolution", "k"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.min_faces < 0:
            raise ConfigError("min_faces must be non-negative")
        if len(self.split_ratios) != 3 or any(x < 0 for x in self.split_ratios) \
                or abs(sum(self.split_ratios) - 1.0) > 1e-9:
            raise ConfigError("split_ratios must be three non-negative numbers summing to 1")
        if not self.camera_radius > 0:
            raise ConfigError("camera_radius must be positive")
        return self

    @classmethod
    def from_mapping(cls, data: dict) -> "DatasetConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.mesh_dirs = [str(d) for d in (cfg.mesh_dirs if isinstance(cfg.mesh_dirs, list) else [cfg.mesh_dirs])]
        cfg.split_ratios = tuple(float(x) for x in cfg.split_ratios)
        return cfg

    @classmethod
    def load(cls, path, overrides: dict | None = None) -> "DatasetConfig":
        """JSON config file, then non-None overrides, then the worker env var."""
        data = {}
        if path is not None:
            try:
                data = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            if not isinstance(data, dict):
                raise ConfigError("config file must hold a JSON object")
        data.update({k: v for k, v in (overrides or {}).items() if v is not None})
        env = os.environ.get(WORKERS_ENV)
        if env:
            try:
                data["workers"] = int(env)
            except ValueError as exc:
                raise ConfigError(f"{WORKERS_ENV} must be an integer") from exc
        try:
            return cls.from_mapping(data).validate()
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def fingerprint(self) -> str:
        d = dataclasses.asdict(self)
        for k in ("workers", "output_dir", "cache_dir", "strict"):
            d.pop(k)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def derive_seed(*parts) -> int:
    """Stable 32-bit seed from arbitrary parts (independent of PYTHONHASHSEED)."""
    h = hashlib.sha256("/".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(h[:4], "little")


def discover_meshes(mesh_dirs) -> list:
    """``(object_id, category, path)`` for every mesh file, sorted by id.

    The object id is the path relative to its root without suffix; the
    category is its first directory component (or the root's name).
    """
    found = {}
    for root in mesh_dirs:
        root = Path(root)
        if not root.is_dir():
            raise ConfigError(f"mesh directory {root} does not exist")
        for p in sorted(root.rglob("*")):
            if p.suffix.lower() not in MESH_SUFFIXES or not p.is_file():
                continue
            rel = p.relative_to(root).with_suffix("")
            oid = rel.as_posix()
            category = rel.parts[0] if len(rel.parts) > 1 else root.name
            if oid in found:
                raise ConfigError(f"duplicate object id {oid}")
            found[oid] = (oid, category, str(p))
    return [found[k] for k in sorted(found)]


def assign_splits(objects: dict, ratios, seed: int) -> dict:
    """Object-level splits, stratified by category.

    ``objects`` maps object id to category. Per category, val and test get
    ``round_half_up(ratio * n)`` objects and train gets the remainder.
    """
    by_cat = {}
    for oid in sorted(objects):
        by_cat.setdefault(objects[oid], []).append(oid)
    out = {}
    for cat in sorted(by_cat):
        ids = by_cat[cat]
        rng = np.random.default_rng(derive_seed(seed, "split", cat))
        order = [ids[i] for i in rng.permutation(len(ids))]
        n = len(ids)
        n_val = min(n, int(math.floor(ratios[1] * n + 0.5 + 1e-9)))
        n_test = min(n - n_val, int(math.floor(ratios[2] * n + 0.5 + 1e-9)))
        n_train = n - n_val - n_test
        for i, oid in enumerate(order):
            out[oid] = "train" if i < n_train else "val" if i < n_train + n_val else "test"
    return out


def _object_dir(cfg, oid):
    return Path(cfg.output_dir) / "samples" / oid


def _view_task(args):
    """Build every artifact of one (object, view). Returns a manifest record."""
    cfg, oid, category, path, view = args
    rec = {"object_id": oid, "category": category, "source": path, "view": view}
    try:
        mesh = load_mesh(path)
        obj_seed = derive_seed(cfg.seed, oid)
        # object normalization from a fixed dense sample, shared by all views
        ref = sample_surface(mesh, cfg.n_points, derive_seed(obj_seed, "complete"))
        _, norm_tf = normalize_center(ref, "unit_ball")
        mesh_n = norm_tf.apply_mesh(mesh)
        cams = sample_cameras(np.zeros(3), cfg.camera_radius, cfg.views, derive_seed(obj_seed, "cameras"),
                              resolution=(cfg.resolution, cfg.resolution))
        cam = cams[view]
        rec["camera"] = cam.to_dict()
        vis = rasterize_visibility(mesh_n, cam)
        partial, tf, _ = make_partial_cloud(mesh_n, cam, cfg.partial_points,
                                            derive_seed(obj_seed, "partial", view), vis)
        complete = tf.apply_cloud(sample_surface(mesh_n, cfg.n_points, derive_seed(obj_seed, "complete")))
        mesh_v = tf.apply_mesh(mesh_n)
        lattice = get_lattice(cfg.n_points, cfg.cache_dir)
        sid = f"{oid}#{view}"
        ca = build_complete_atlas(complete, lattice, k=cfg.k, source_id=sid)
        pa = build_partial_atlas(partial, lattice, k=cfg.k, source_id=sid)

        d = _object_dir(cfg, oid)
        d.mkdir(parents=True, exist_ok=True)
        stem = f"view{view:02d}"
        paths = {
            "complete_cloud": d / f"{stem}_complete.ply",
            "partial_cloud": d / f"{stem}_partial.ply",
            "complete_atlas": d / f"{stem}_complete.satl",
            "partial_atlas": d / f"{stem}_partial.satl",
            "mesh": d / f"{stem}_mesh.ply",
        }
        write_ply(paths["complete_cloud"], complete)
        write_ply(paths["partial_cloud"], partial)
        save_atlas(paths["complete_atlas"], ca)
        save_atlas(paths["partial_atlas"], pa)
        write_mesh_ply(paths["mesh"], mesh_v)
        if cfg.previews:
            from .plotting import save_atlas_preview
            paths["complete_preview"] = save_atlas_preview(d / f"{stem}_complete.png", ca)
            paths["partial_preview"] = save_atlas_preview(d / f"{stem}_partial.png", pa)
        root = Path(cfg.output_dir)
        rec["paths"] = {k: Path(v).relative_to(root).as_posix() for k, v in paths.items()}
        rec["visible_faces"] = int(vis.visible.sum())
        rec["status"] = "ok"
    except AtlasError as exc:
        if cfg.strict:
            raise
        log.warning("discarding %s view %d: %s", oid, view, exc)
        rec["status"] = f"discarded: {type(exc).__name__}: {exc}"
    return rec


def _run_tasks(tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        return [_view_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_view_task, tasks, chunksize=1))


def build_dataset(cfg: DatasetConfig) -> dict:
    """Generate the paired dataset and write the manifest. Returns the summary."""
    cfg.validate()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = discover_meshes(cfg.mesh_dirs)
    records, tasks = [], []
    for oid, category, path in entries:
        base = {"object_id": oid, "category": category, "source": path, "view": None}
        try:
            n_faces = len(load_mesh(path).faces)
        except (AtlasError, OSError, ValueError) as exc:
            if cfg.strict:
                raise
            records.append({**base, "status": f"discarded: unreadable: {exc}"})
            continue
        if n_faces < cfg.min_faces:
            records.append({**base, "faces": n_faces, "status": "discarded: face_filter"})
            continue
        tasks += [(cfg, oid, category, path, v) for v in range(cfg.views)]
    # make sure the plane permutation is cached before workers start
    get_lattice(cfg.n_points, cfg.cache_dir)
    records += _run_tasks(tasks, cfg.workers)

    ok_objects = {r["object_id"]: r["category"] for r in records if r["status"] == "ok"}
    splits = assign_splits(ok_objects, cfg.split_ratios, cfg.seed)
    for r in records:
        r["split"] = splits.get(r["object_id"]) if r["status"] == "ok" else None
    records.sort(key=lambda r: (r["object_id"], -1 if r["view"] is None else r["view"]))

    manifest = out / MANIFEST_NAME
    with open(manifest, "w") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    ok = [r for r in records if r["status"] == "ok"]
    summary = {
        "config_fingerprint": cfg.fingerprint(),
        "n_points": cfg.n_points,
        "views": cfg.views,
        "partial_points": cfg.partial_points,
        "objects": len(entries),
        "records": len(records),
        "ok": len(ok),
        "discarded": len(records) - len(ok),
        "split_objects": {s: sum(1 for v in splits.values() if v == s) for s in SPLITS},
        "split_samples": {s: sum(1 for r in ok if r["split"] == s) for s in SPLITS},
        "manifest": MANIFEST_NAME,
    }
    (out / SUMMARY_NAME).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def read_manifest(path) -> list:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


# evaluation


def _pair_files(pred_dir, gt_dir):
    def index(root):
        root = Path(root)
        if not root.is_dir():
            raise ConfigError(f"{root} is not a directory")
        return {p.relative_to(root).with_suffix("").as_posix(): p
                for p in sorted(root.rglob("*")) if p.suffix.lower() in MESH_SUFFIXES}
    pred, gt = index(pred_dir), index(gt_dir)
    unpaired = sorted(set(pred) ^ set(gt))
    for name in unpaired:
        side = "prediction" if name in pred else "ground truth"
        log.warning("%s", UnpairedSample(f"{name}: only a {side} file exists"))
    return [(k, pred[k], gt[k]) for k in sorted(set(pred) & set(gt))], unpaired


EVAL_COLUMNS = ("cd_l1", "cd_l2", "fscore_at_tau", "infocd", "ecd", "nc")


def run_eval(pred_dir, gt_dir, out_dir, metrics=None, tau: float = DEFAULT_TAU, figures: bool = True) -> dict:
    """Score matched prediction/GT clouds; writes CSV, text table and figures."""
    pairs, unpaired = _pair_files(pred_dir, gt_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for name, pp, gp in pairs:
        rep = evaluate(load_cloud(pp), load_cloud(gp), tau=tau, metrics=metrics).as_dict()
        cat = name.split("/")[0] if "/" in name else "all"
        vals = {c: rep.get(c) for c in EVAL_COLUMNS}
        # undefined values (e.g. ECD with no edge points on either side) become blanks
        vals = {c: None if v is None or math.isnan(v) else v for c, v in vals.items()}
        rows.append({"sample": name, "category": cat, **vals})

    def mean(vals):
        vals = [v for v in vals if v is not None]
        return float(np.mean(vals)) if vals else None

    cats = sorted({r["category"] for r in rows})
    cat_rows = [{"sample": "<mean>", "category": c,
                 **{k: mean([r[k] for r in rows if r["category"] == c]) for k in EVAL_COLUMNS}}
                for c in cats]
    # overall = mean over categories, the usual "Avg" column convention
    overall = {"sample": "<mean>", "category": "<all>",
               **{k: mean([r[k] for r in cat_rows]) for k in EVAL_COLUMNS}}
    table = rows + cat_rows + ([overall] if rows else [])

    csv_path = out / "eval.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["sample", "category", *EVAL_COLUMNS])
        w.writeheader()
        for r in table:
            w.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    txt_path = out / "eval.txt"
    txt_path.write_text(format_table(table, tau))
    figs = []
    if figures and rows:
        from .plotting import plot_cd_histogram, plot_eval
        figs.append(str(plot_eval(out / "eval_categories.png", cats,
                                  [r["cd_l1"] for r in cat_rows], [r["fscore_at_tau"] for r in cat_rows], tau)))
        figs.append(str(plot_cd_histogram(out / "eval_cd_hist.png", [r["cd_l1"] for r in rows])))
    return {"pairs": len(pairs), "unpaired": unpaired, "csv": str(csv_path), "table": str(txt_path),
            "figures": figs, "rows": table}


def format_table(rows, tau) -> str:
    """Aligned text table; Chamfer columns scaled by 1e3 as in the literature."""
    head = ["sample", "category", "CD-L1 x1e3", "CD-L2 x1e3", f"F@{tau:g}", "InfoCD", "ECD x1e3", "NC"]
    scale = {"cd_l1": 1e3, "cd_l2": 1e3, "ecd": 1e3}

    def fmt(k, v):
        if v is None:
            return "-"
        return f"{v * scale.get(k, 1.0):.4f}"
    body = [[r["sample"], r["category"], *(fmt(k, r[k]) for k in EVAL_COLUMNS)] for r in rows]
    widths = [max(len(str(x)) for x in col) for col in zip(head, *body)]
    lines = ["  ".join(str(x).ljust(w) for x, w in zip(line, widths)).rstrip() for line in [head, *body]]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


# benchmark


def box_surface_cloud(n: int, seed: int = 0, size=(1.0, 0.5, 0.3)) -> np.ndarray:
    """Points on the surface of a box, scaled into the unit ball.

    Each point picks an axis uniformly and is pushed onto the face of that
    axis. Flat faces against a sphere lattice make the assignment hard for
    both solvers, which is what the benchmark wants.
    """
    rng = np.random.default_rng(seed)
    p = rng.uniform(-1.0, 1.0, (n, 3))
    axis = rng.integers(0, 3, n)
    rows = np.arange(n)
    p[rows, axis] = np.sign(p[rows, axis])
    p *= np.asarray(size, float)
    return p / np.linalg.norm(p, axis=1).max()


def loglog_slope(ns, times) -> float:
    return float(np.polyfit(np.log(np.asarray(ns, float)), np.log(np.asarray(times, float)), 1)[0])


def _time(fn, reps):
    best = math.inf
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_bench(dense_sizes=(256, 512, 1024, 2048), sparse_sizes=(1024, 2048, 4096, 8192),
              k: int = DEFAULT_K, reps: int = 1, atlas_sizes=(), seed: int = 0, instances: int = 3,
              out_dir=None, figures: bool = True) -> dict:
    """Solver wall times on box-surface vs Fibonacci-sphere instances.

    Each size is timed on ``instances`` random clouds (best of ``reps`` runs
    each) and the mean is reported; cost-matrix construction is excluded
    from the dense timings. Optional complete-atlas build timings too.
    """
    # warm the JIT so the first size is not charged for compilation
    solve_dense(sq_dist(box_surface_cloud(16, seed), fibonacci_sphere(16)))
    solve_geometric(box_surface_cloud(16, seed), fibonacci_sphere(16), k=k)
    dense, sparse, atlas = {}, {}, {}
    for n in dense_sizes:
        tgt = fibonacci_sphere(n)
        times = []
        for i in range(instances):
            cost = sq_dist(box_surface_cloud(n, seed + i), tgt)
            times.append(_time(lambda: solve_dense(cost), reps))
        dense[n] = float(np.mean(times))
    for n in sparse_sizes:
        tgt = fibonacci_sphere(n)
        times = []
        for i in range(instances):
            src = box_surface_cloud(n, seed + i)
            times.append(_time(lambda: solve_geometric(src, tgt, k=k), reps))
        sparse[n] = float(np.mean(times))
    for n in atlas_sizes:
        lat = get_lattice(n)
        rng = np.random.default_rng(seed)
        nrm = rng.normal(size=(n, 3))
        cloud = PointCloud(box_surface_cloud(n, seed), nrm / np.linalg.norm(nrm, axis=1, keepdims=True))
        atlas[n] = _time(lambda: build_complete_atlas(cloud, lat, k=k), reps)
    res = {
        "k": k, "reps": reps, "instances": instances,
        "dense": {str(n): t for n, t in dense.items()},
        "sparse": {str(n): t for n, t in sparse.items()},
        "atlas": {str(n): t for n, t in atlas.items()},
        "dense_slope": loglog_slope(list(dense), list(dense.values())) if len(dense) > 1 else None,
        "sparse_slope": loglog_slope(list(sparse), list(sparse.values())) if len(sparse) > 1 else None,
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "bench.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["solver", "n", "seconds"])
            for name, series in (("dense", dense), ("sparse", sparse), ("atlas", atlas)):
                for n, t in series.items():
                    w.writerow([name, n, repr(t)])
        (out / "bench.json").write_text(json.dumps(res, indent=2) + "\n")
        if figures and (dense or sparse):
            from .plotting import plot_bench
            res["figure"] = str(plot_bench(out / "bench_loglog.png", dense, sparse,
                                           res["dense_slope"] or float("nan"),
                                           res["sparse_slope"] or float("nan")))
    return res

