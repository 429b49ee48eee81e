"""Command-line pipeline: encode, reconstruct, remesh, interp, metrics.

Every command is deterministic given its inputs, the seed and the
configuration.  Reports are plain text tables (parse back losslessly);
the reconstruction report path also renders a convergence figure next to
the table unless ``--no-plot`` is given.

Exit codes: 0 success, 2 topology or dimension mismatch, 3 solver
non-convergence, 4 file I/O or parse failure.
"""

import argparse
import sys
from dataclasses import dataclass, fields

import numpy as np

from . import areacal  # noqa: F401  (re-exported pipeline surface)
from . import confmap, cvtmesh, meshcore, shapecodec, spinrec
from .errors import (
    CbrError,
    ConfigError,
    ConvergenceError,
    CurvCodecError,
    DimensionMismatch,
    FlipError,
    ParseError,
    TopologyError,
)

EXIT_OK = 0
EXIT_TOPOLOGY = 2
EXIT_CONVERGENCE = 3
EXIT_IO = 4


@dataclass
class PipelineConfig:
    """Tunable pipeline parameters (flat key=value file, flags override)."""

    subdivisions: int = 2
    grid: int = 32
    disk_grid: int = 256
    idw_k: int = 8
    idw_power: float = 2.0
    lloyd_tol: float = 2e-4
    lloyd_max_iter: int = 100
    steps: int = 10
    seed: int = 0
    area_calibration: bool = True
    h_scale: float = 1.0
    h_offset: float = 0.0
    d_scale: float = 1.0
    d_offset: float = 0.0

    _RANGES = {
        "subdivisions": (0, 6),
        "grid": (2, 1024),
        "disk_grid": (2, 4096),
        "idw_k": (1, 64),
        "idw_power": (0.5, 8.0),
        "lloyd_tol": (0.0, 1.0),
        "lloyd_max_iter": (1, 100000),
        "steps": (1, 1000),
        "seed": (0, 2**63 - 1),
    }

    def validate(self):
        for name, (lo, hi) in self._RANGES.items():
            v = getattr(self, name)
            if not lo <= v <= hi:
                raise ConfigError(f"config value {name}={v} outside [{lo}, {hi}]")
        if self.h_scale == 0.0 or self.d_scale == 0.0:
            raise ConfigError("channel scales must be nonzero")
        return self

    @classmethod
    def from_file(cls, path):
        values = {}
        names = {f.name: f.type for f in fields(cls)}
        with open(path, "r") as fh:
            for lineno, line in enumerate(fh, start=1):
                s = line.split("#", 1)[0].strip()
                if not s:
                    continue
                if "=" not in s:
                    raise ConfigError(f"{path}:{lineno}: expected key=value")
                key, _, raw = s.partition("=")
                key = key.strip()
                raw = raw.strip()
                if key not in names:
                    raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
                kind = names[key]
                try:
                    if kind == "bool" or kind is bool:
                        values[key] = raw.lower() in ("1", "true", "yes", "on")
                    elif kind == "int" or kind is int:
                        values[key] = int(raw)
                    else:
                        values[key] = float(raw)
                except ValueError as exc:
                    raise ConfigError(f"{path}:{lineno}: bad value for {key}") from exc
        return cls(**values).validate()

    def to_file(self, path):
        with open(path, "w") as fh:
            for f in fields(self):
                if f.name.startswith("_"):
                    continue
                v = getattr(self, f.name)
                if isinstance(v, bool):
                    v = int(v)
                fh.write(f"{f.name}={v}\n")

    def affine(self):
        if (self.h_scale, self.h_offset, self.d_scale, self.d_offset) == (1.0, 0.0, 1.0, 0.0):
            return None
        return np.array([self.h_scale, self.h_offset, self.d_scale, self.d_offset])


def _load_config(args):
    cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    for name in ("steps", "seed"):
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    if getattr(args, "no_area_cal", False):
        cfg.area_calibration = False
    return cfg.validate()


# ----------------------------------------------------------------------
# pipeline stages shared by the commands
# ----------------------------------------------------------------------


def encode_mesh(mesh, domain_kind, cfg, landmarks=None):
    """Parameterize, align and sample a mesh into a curvature tensor.

    Returns ``(tensor, diagnostics dict)``.
    """
    if domain_kind == "sphere":
        mesh.require_sphere_topology()
        param = confmap.sphere_parameterize(mesh)
        if landmarks:
            if len(landmarks) != 3:
                raise ConfigError("sphere alignment needs exactly 3 landmarks")
            param = confmap.sphere_align_landmarks(param, *landmarks)
        else:
            param = confmap.mobius_center(param)
        domain = shapecodec.SphericalDomain(cfg.subdivisions, cfg.grid)
    elif domain_kind == "disk":
        mesh.require_disk_topology()
        param = confmap.disk_parameterize(mesh)
        if landmarks:
            if len(landmarks) != 2:
                raise ConfigError("disk alignment needs exactly 2 landmarks")
            param = confmap.disk_align(param, *landmarks)
        domain = shapecodec.DiskDomain(cfg.disk_grid)
    else:
        raise ConfigError(f"unknown domain {domain_kind!r}")
    tensor = shapecodec.encode(mesh, param, domain, cfg.idw_k, cfg.idw_power)
    tensor.affine = cfg.affine()
    distortion = param.quasi_conformal_distortion()
    diag = {
        "domain": domain_kind,
        "distortion_mean": float(distortion.mean()),
        "distortion_max": float(distortion.max()),
    }
    if hasattr(param, "sphere_residual"):
        diag["flow_residual"] = param.sphere_residual
    return tensor, diag


def reconstruct_tensor(tensor, cfg):
    """Remesh the domain from the density channel and flow to the target.

    Returns ``(mesh, report, parameter mesh)``.
    """
    domain = tensor.domain
    pts = cvtmesh.sample_points(domain, tensor, seed=cfg.seed)
    relaxed, _lloyd = cvtmesh.lloyd_relax(
        pts, tensor, domain, max_iter=cfg.lloyd_max_iter, tol=cfg.lloyd_tol, seed=cfg.seed
    )
    if tensor.kind == "sphere":
        diagram = cvtmesh.voronoi_sphere(relaxed)
        pmesh = cvtmesh.delaunay_dual(diagram)
        bary = pmesh.face_barycenters
        bary = bary / np.linalg.norm(bary, axis=1)[:, None]
    else:
        diagram = cvtmesh.voronoi_disk_constrained(relaxed)
        pmesh = cvtmesh.delaunay_dual(diagram)
        bary = pmesh.face_barycenters[:, :2]
        r = np.linalg.norm(bary, axis=1)
        bary = np.where((r > 1.0)[:, None], bary / np.maximum(r, 1.0)[:, None], bary)
    target_h = tensor.decode(bary, cfg.idw_k, cfg.idw_power)[:, 0]
    mesh, report = spinrec.reconstruct(
        pmesh, target_h, steps=cfg.steps, with_area_calibration=cfg.area_calibration
    )
    return mesh, report, pmesh


def _write_report(report, path, plot=True):
    with open(path, "w") as fh:
        fh.write(report.to_table())
    if plot:
        _plot_report(report, str(path) + ".png")


def _plot_report(report, png_path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    steps = [row["step"] for row in report.steps]
    rw = [row["rel_willmore"] for row in report.steps]
    lam = [max(row["lam"], 1e-300) for row in report.steps]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.0, 3.2))
    ax1.plot(steps, rw, "o-")
    ax1.set_xlabel("step")
    ax1.set_ylabel("relative Willmore to target")
    ax1.set_yscale("log")
    ax2.plot(steps, lam, "s-")
    ax2.set_xlabel("step")
    ax2.set_ylabel("smallest eigenvalue")
    ax2.set_yscale("log")
    fig.tight_layout()
    fig.savefig(png_path, dpi=130)
    plt.close(fig)


def _sample_surface(mesh, n, seed):
    """Area-weighted random surface samples for the Chamfer metric."""
    rng = np.random.default_rng(seed)
    areas = mesh.face_areas
    probs = areas / areas.sum()
    counts = rng.multinomial(n, probs)
    tri = mesh.positions[mesh.faces]
    face_of = np.repeat(np.arange(mesh.n_faces), counts)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    a, b, c = tri[face_of, 0], tri[face_of, 1], tri[face_of, 2]
    return (1 - r1)[:, None] * a + (r1 * (1 - r2))[:, None] * b + (r1 * r2)[:, None] * c


# ----------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------


def cmd_encode(args):
    cfg = _load_config(args)
    mesh = meshcore.load_obj(args.input, landmarks_path=args.landmarks)
    tensor, diag = encode_mesh(mesh, args.domain, cfg, landmarks=mesh.landmarks)
    shapecodec.write_cbr(tensor, args.output)
    print(f"encoded {args.input} -> {args.output} dims {tensor.dims}")
    print(
        f"quasi-conformal distortion mean {diag['distortion_mean']:.6f} "
        f"max {diag['distortion_max']:.6f}"
    )
    if "flow_residual" in diag:
        print(f"sphere flow residual {diag['flow_residual']:.3e}")
    return EXIT_OK


def cmd_reconstruct(args):
    cfg = _load_config(args)
    tensor = shapecodec.read_cbr(args.input)
    mesh, report, _pmesh = reconstruct_tensor(tensor, cfg)
    meshcore.save_obj(mesh, args.output)
    if args.report:
        _write_report(report, args.report, plot=not args.no_plot)
    last = report.steps[-1]
    print(
        f"reconstructed {args.output}: V={mesh.n_vertices} F={mesh.n_faces} "
        f"rel_willmore={last['rel_willmore']:.6g} target_W={report.target_willmore:.6g}"
    )
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_OK


def cmd_remesh(args):
    cfg = _load_config(args)
    if args.factor <= 0:
        raise ConfigError("remesh factor must be positive")
    mesh = meshcore.load_obj(args.input)
    domain_kind = "sphere" if mesh.is_closed else "disk"
    tensor, _diag = encode_mesh(mesh, domain_kind, cfg, landmarks=mesh.landmarks)
    scaled = shapecodec.scale_density(tensor, args.factor)
    out, report, _pmesh = reconstruct_tensor(scaled, cfg)
    meshcore.save_obj(out, args.output)
    if args.report:
        _write_report(report, args.report, plot=not args.no_plot)
    print(
        f"remeshed {args.input} x{args.factor}: V={mesh.n_vertices} -> {out.n_vertices}"
    )
    return EXIT_OK


def cmd_interp(args):
    a = shapecodec.read_cbr(args.a)
    b = shapecodec.read_cbr(args.b)
    out = shapecodec.lerp(a, b, args.t)
    shapecodec.write_cbr(out, args.output)
    print(f"interpolated t={args.t}: {args.a} + {args.b} -> {args.output}")
    return EXIT_OK


def cmd_metrics(args):
    mesh_a = meshcore.load_obj(args.a)
    mesh_b = meshcore.load_obj(args.b)
    w_a = meshcore.willmore(mesh_a)
    w_b = meshcore.willmore(mesh_b)
    print(f"willmore_a {w_a:.17g}")
    print(f"willmore_b {w_b:.17g}")
    if np.array_equal(mesh_a.faces, mesh_b.faces):
        print(f"relative_willmore {meshcore.relative_willmore(mesh_a, mesh_b):.17g}")
    else:
        print("relative_willmore omitted (connectivity differs)")
    pa = _sample_surface(mesh_a, args.points, args.seed)
    pb = _sample_surface(mesh_b, args.points, args.seed)
    print(f"chamfer {meshcore.chamfer(pa, pb):.17g}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="curvcodec",
        description="curvature + density codec for simply-connected meshes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    enc = sub.add_parser("encode", help="mesh -> .cbr curvature tensor")
    enc.add_argument("--in", dest="input", required=True, help="input OBJ/OFF mesh")
    enc.add_argument("--domain", choices=("sphere", "disk"), required=True)
    enc.add_argument("--landmarks", help="sidecar file, one 0-based vertex index per line")
    enc.add_argument("--out", dest="output", required=True, help="output .cbr path")
    enc.add_argument("--config", help="key=value config file")
    enc.set_defaults(func=cmd_encode)

    rec = sub.add_parser("reconstruct", help=".cbr -> mesh")
    rec.add_argument("--in", dest="input", required=True, help="input .cbr tensor")
    rec.add_argument("--steps", type=int, help="curvature flow steps")
    rec.add_argument("--seed", type=int, help="RNG seed for sampling")
    rec.add_argument("--no-area-cal", action="store_true", help="skip area calibration")
    rec.add_argument("--out", dest="output", required=True, help="output OBJ path")
    rec.add_argument("--report", help="write the step report table here")
    rec.add_argument("--no-plot", action="store_true", help="do not render report figures")
    rec.add_argument("--config", help="key=value config file")
    rec.set_defaults(func=cmd_reconstruct)

    rem = sub.add_parser("remesh", help="density-scaled remeshing")
    rem.add_argument("--in", dest="input", required=True)
    rem.add_argument("--factor", type=float, required=True, help="vertex count factor m")
    rem.add_argument("--out", dest="output", required=True)
    rem.add_argument("--steps", type=int)
    rem.add_argument("--seed", type=int)
    rem.add_argument("--no-area-cal", action="store_true")
    rem.add_argument("--report", help="write the step report table here")
    rem.add_argument("--no-plot", action="store_true")
    rem.add_argument("--config", help="key=value config file")
    rem.set_defaults(func=cmd_remesh)

    itp = sub.add_parser("interp", help="linear interpolation of two tensors")
    itp.add_argument("--a", required=True)
    itp.add_argument("--b", required=True)
    itp.add_argument("--t", type=float, required=True)
    itp.add_argument("--out", dest="output", required=True)
    itp.set_defaults(func=cmd_interp)

    met = sub.add_parser("metrics", help="Willmore / relative Willmore / Chamfer")
    met.add_argument("--a", required=True)
    met.add_argument("--b", required=True)
    met.add_argument("--points", type=int, default=10000, help="surface samples per mesh")
    met.add_argument("--seed", type=int, default=0)
    met.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (TopologyError, FlipError, DimensionMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOPOLOGY
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (OSError, ParseError, CbrError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, CurvCodecError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOPOLOGY


if __name__ == "__main__":
    sys.exit(main())
