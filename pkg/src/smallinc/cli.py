"""Command line pipeline: simulate -> probes -> sample -> invert.

Every stage reads the scene configuration plus the CSV files written by the
stages before it, and writes its own CSV files into the output directory
together with ``manifest.json``.  Exit codes: 0 success, 2 validation error,
3 numerical failure, 4 missing artifact or other I/O error.

The scene file is the JSON described in :mod:`smallinc.model`; an optional
``"run"`` object supplies defaults for ``h``, ``delta``, ``eta_max``,
``lambda``, ``noise`` and ``seed``.  ``--config demo`` selects the bundled
three-inclusion scene.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .errors import MissingArtifactError, NumericalError, SmallIncError, ValidationError
from .forward import ProbeBC, add_noise, solve_trace_perturbation
from .greens import BoundaryQuadrature, BoundaryTrace, ModeCoefficients, dirichlet_to_neumann_multipliers
from .inversion import (
    SpectralSamples,
    lambda_sample,
    locate_inclusions,
    pairing_defect,
    probe_gain,
    read_samples_csv,
    sampling_plan,
    write_image_csv,
    write_image_pgm,
    write_reconstruction_csv,
    write_samples_csv,
)
from .model import scene_from_dict, scene_to_dict, validate_scene
from .polarizability import Disk, Ellipse, load_fourier_shape, ptensor
from .probes import ProbeFrequency, ProbeFunction, build_probe_operator, make_frequency, oriented_probe

__all__ = ["RunConfig", "RunReport", "run_pipeline", "load_config", "main", "STAGES"]

STAGES = ("simulate", "probes", "sample", "invert")
EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 2, 3, 4

TRACES = "traces.csv"
PROBE_SCAN = "probe_scan.csv"
DENSITIES = "probe_densities.csv"
SAMPLES = "samples.csv"
IMAGE_CSV = "image.csv"
IMAGE_PGM = "image.pgm"
RESIDUAL_PGM = "residual_image.pgm"
RECON = "reconstruction.csv"
MANIFEST = "manifest.json"


@dataclass(frozen=True)
class RunConfig:
    """Everything a run depends on.  ``lam`` is relative to the largest
    singular value of the probe operator."""

    scene: dict
    out: Path
    stages: tuple[str, ...] = STAGES
    aperture: str | None = None
    h: float = 1.6
    delta: float = 0.3
    eta_max: float | None = None
    lam: float = 1e-8
    noise: float = 0.0
    seed: int = 0
    n_nodes: int = 256
    n_basis: int = 65
    admissible: float = 1e-2
    source: str = ""

    def __post_init__(self):
        stages = tuple(self.stages)
        if not stages or stages != STAGES[STAGES.index(stages[0]) : STAGES.index(stages[0]) + len(stages)]:
            raise ValidationError(f"stages {stages} are not a contiguous run of {STAGES}")
        object.__setattr__(self, "stages", stages)
        object.__setattr__(self, "out", Path(self.out))
        if self.noise < 0 or self.lam <= 0:
            raise ValidationError("noise must be non-negative and lambda positive")

    def scene_obj(self):
        data = dict(self.scene)
        if self.aperture is not None:
            data["aperture"] = self.aperture
        return scene_from_dict(data)

    def plan(self):
        return sampling_plan(self.h, self.delta, 2, self.eta_max)

    def canonical(self) -> dict:
        d = asdict(self)
        d.pop("out")
        d.pop("stages")
        d.pop("source")
        d["scene"] = scene_to_dict(self.scene_obj())
        return d

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class RunReport:
    config_hash: str
    stages: list[str] = field(default_factory=list)
    outputs: dict[str, str] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)


def load_config(path: str) -> tuple[dict, str]:
    if path == "demo":
        text = resources.files("smallinc").joinpath("data/demo_scene.json").read_text()
        return json.loads(text), "demo"
    p = Path(path)
    if not p.is_file():
        raise MissingArtifactError(f"config file {path} not found")
    try:
        return json.loads(p.read_text()), str(p)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path} is not valid JSON: {exc}") from exc


def config_from_args(args) -> RunConfig:
    data, source = load_config(args.config)
    run = dict(data.get("run", {}))
    over = {
        "h": args.h,
        "delta": args.delta,
        "eta_max": args.eta_max,
        "lambda": args.lam,
        "noise": args.noise,
        "seed": args.seed,
    }
    run.update({k: v for k, v in over.items() if v is not None})
    stages = STAGES
    if getattr(args, "stage", None):
        stages = STAGES[: STAGES.index(args.stage) + 1]
    return RunConfig(
        scene=data,
        out=Path(args.out),
        stages=stages,
        aperture=args.aperture,
        h=float(run.get("h", 1.6)),
        delta=float(run.get("delta", 0.3)),
        eta_max=None if run.get("eta_max") is None else float(run["eta_max"]),
        lam=float(run.get("lambda", 1e-8)),
        noise=float(run.get("noise", 0.0)),
        seed=int(run.get("seed", 0)),
        source=source,
    )


# -- shared helpers ----------------------------------------------------------------


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _require(path: Path) -> Path:
    if not path.is_file():
        raise MissingArtifactError(f"missing upstream artifact {path.name}; run the earlier stage first")
    return path


def _load_rows(path: Path) -> np.ndarray:
    rows = np.loadtxt(_require(path), delimiter=",", skiprows=1, ndmin=2)
    if rows.size == 0:
        raise MissingArtifactError(f"{path.name} is empty")
    return rows


def _setup(cfg: RunConfig):
    scene = cfg.scene_obj()
    report = validate_scene(scene)
    report.raise_if_failed()
    quad = BoundaryQuadrature.on_circle(cfg.n_nodes, scene.geometry)
    return scene, quad


def _frequency(eta, k, orient) -> ProbeFrequency:
    f = make_frequency(eta, k)
    return f if orient > 0 else ProbeFrequency(f.eta, -f.eta_perp, f.gamma, f.k)


# -- stages --------------------------------------------------------------------------


def stage_simulate(cfg: RunConfig) -> dict:
    """Trace perturbations for both ``eta_perp`` orientations of every frequency."""
    scene, quad = _setup(cfg)
    idx, etas = cfg.plan().frequencies()
    rng = np.random.default_rng(cfg.seed)
    path = cfg.out / TRACES
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["i", "j", "orientation", "theta", "real", "imag", "aperture"])
        for (i, j), eta in zip(idx, etas):
            for orient in (1, -1):
                bc = ProbeBC.from_frequency(_frequency(eta, scene.k, orient))
                trace = solve_trace_perturbation(scene, bc, quad)
                if cfg.noise > 0:
                    trace = add_noise(trace, cfg.noise, rng)
                for th, v, m in zip(quad.nodes, trace.values, quad.aperture_mask):
                    out.writerow([int(i), int(j), orient, repr(float(th)), repr(float(v.real)), repr(float(v.imag)), int(m)])
    return {"traces": len(idx) * 2}


def stage_probes(cfg: RunConfig) -> dict:
    """Build the best-oriented probe for each frequency; write the scan and densities."""
    scene, quad = _setup(cfg)
    op = build_probe_operator(scene.geometry, scene.control_radius, scene.k, cfg.n_basis, n_nodes=cfg.n_nodes)
    lam = cfg.lam * op.sigma_max
    idx, etas = cfg.plan().frequencies()
    residuals = []
    with open(cfg.out / PROBE_SCAN, "w", newline="") as scan, open(cfg.out / DENSITIES, "w", newline="") as dens:
        s_out, d_out = csv.writer(scan), csv.writer(dens)
        s_out.writerow(["i", "j", "eta_x", "eta_y", "eta_norm", "orientation", "relative_residual"])
        d_out.writerow(["i", "j", "theta", "real", "imag"])
        for (i, j), eta in zip(idx, etas):
            probe = oriented_probe(op, eta, lam)
            orient = 1 if np.allclose(probe.target.eta_perp, make_frequency(eta, scene.k).eta_perp) else -1
            residuals.append(probe.relative_residual)
            s_out.writerow(
                [int(i), int(j), repr(float(eta[0])), repr(float(eta[1])), repr(float(np.hypot(*eta))), orient,
                 repr(float(probe.relative_residual))]
            )
            for th, v in zip(quad.nodes, probe.trace.values):
                d_out.writerow([int(i), int(j), repr(float(th)), repr(float(v.real)), repr(float(v.imag))])
    res = np.array(residuals)
    return {
        "sigma_max": op.sigma_max,
        "lambda_absolute": lam,
        "probe_residual_median": float(np.median(res)),
        "probe_residual_max": float(res.max()),
        "admissible_count": int(np.sum(res <= cfg.admissible)),
    }


def _probe_from_density(values, freq, quad, k, residual) -> ProbeFunction:
    trace = BoundaryTrace(values, quad)
    modes = ModeCoefficients.from_samples(values)
    mult = dirichlet_to_neumann_multipliers(k, modes.orders)
    normal = BoundaryTrace(ModeCoefficients(modes.coefficients * mult).to_samples(quad.n), quad)
    return ProbeFunction(np.asarray(values), trace, normal, residual, 1.0, freq, 0.0)


def stage_sample(cfg: RunConfig) -> dict:
    """Evaluate the sampling functional from persisted traces and probe densities."""
    scene, quad = _setup(cfg)
    plan = cfg.plan()
    idx, etas = plan.frequencies()
    n = quad.n
    traces = _load_rows(cfg.out / TRACES)
    scan = _load_rows(cfg.out / PROBE_SCAN)
    dens = _load_rows(cfg.out / DENSITIES)
    if len(scan) != len(idx) or len(dens) != len(idx) * n or len(traces) != 2 * len(idx) * n:
        raise MissingArtifactError("upstream artifacts do not match the sampling plan; rerun earlier stages")
    values = np.zeros(len(idx), dtype=complex)
    gains = np.zeros(len(idx))
    floors = np.zeros(len(idx))
    for m, ((i, j), eta) in enumerate(zip(idx, etas)):
        row = scan[m]
        if (int(row[0]), int(row[1])) != (int(i), int(j)):
            raise MissingArtifactError("probe scan is out of order; rerun the probes stage")
        orient = int(row[5])
        freq = _frequency(eta, scene.k, orient)
        block = dens[m * n : (m + 1) * n]
        probe = _probe_from_density(block[:, 3] + 1j * block[:, 4], freq, quad, scene.k, row[6])
        t = traces[(2 * m + (0 if orient > 0 else 1)) * n :][:n]
        if int(t[0, 2]) != orient:
            raise MissingArtifactError("trace file is out of order; rerun the simulate stage")
        trace = BoundaryTrace(t[:, 4] + 1j * t[:, 5], quad)
        bc = ProbeBC.from_frequency(freq)
        values[m] = lambda_sample(trace, probe, bc)
        gains[m] = probe_gain(probe)
        floors[m] = pairing_defect(probe, bc)
    samples = SpectralSamples(idx, values, scan[:, 6], scene.k, plan.d_eta, gains, floors)
    write_samples_csv(samples, cfg.out / SAMPLES)
    return {"samples": len(samples)}


def stage_invert(cfg: RunConfig) -> dict:
    scene, _ = _setup(cfg)
    samples = read_samples_csv(_require(cfg.out / SAMPLES))
    plan = cfg.plan()
    recon, images = locate_inclusions(
        samples,
        plan,
        separation=scene.separation / 2,
        radius=scene.control_radius,
        admissible=cfg.admissible,
        weighting="noise" if cfg.noise > 0 else "uniform",
    )
    write_image_csv(images[0], cfg.out / IMAGE_CSV)
    write_image_pgm(images[0], cfg.out / IMAGE_PGM)
    write_image_pgm(images[-1], cfg.out / RESIDUAL_PGM)
    write_reconstruction_csv(recon, cfg.out / RECON)
    return {
        "detected": len(recon),
        "centers": recon.centers.tolist(),
        "amplitudes": recon.amplitudes.tolist(),
        "fit_residual": recon.fit_residual,
        "residual_image_peak": images[-1].peak,
        "first_image_peak": images[0].peak,
    }


_STAGE_FUNCS = {"simulate": stage_simulate, "probes": stage_probes, "sample": stage_sample, "invert": stage_invert}
_STAGE_FILES = {
    "simulate": (TRACES,),
    "probes": (PROBE_SCAN, DENSITIES),
    "sample": (SAMPLES,),
    "invert": (IMAGE_CSV, IMAGE_PGM, RESIDUAL_PGM, RECON),
}


def run_pipeline(cfg: RunConfig) -> RunReport:
    """Run the configured stages and write ``manifest.json`` next to the outputs."""
    cfg.out.mkdir(parents=True, exist_ok=True)
    report = RunReport(cfg.digest())
    manifest_path = cfg.out / MANIFEST
    previous = {}
    if manifest_path.is_file():
        try:
            previous = json.loads(manifest_path.read_text())
        except json.JSONDecodeError:
            previous = {}
        if previous.get("config_hash") != report.config_hash:
            previous = {}
    summaries = dict(previous.get("stages", {}))
    for name in cfg.stages:
        summary = _STAGE_FUNCS[name](cfg)
        files = {f: _sha(cfg.out / f) for f in _STAGE_FILES[name]}
        summaries[name] = {"summary": summary, "outputs": files}
        report.stages.append(name)
        report.outputs.update(files)
        report.summary[name] = summary
    manifest = {
        "version": __version__,
        "config_hash": report.config_hash,
        "config": cfg.canonical(),
        "config_source": cfg.source,
        "seed": cfg.seed,
        "stages": summaries,
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return report


# -- command line ------------------------------------------------------------------------


def _add_run_flags(p):
    p.add_argument("--config", required=True, help="scene JSON file, or 'demo'")
    p.add_argument("--out", default="run", help="output directory")
    p.add_argument("--aperture", choices=["full", "half"], help="override the scene aperture")
    p.add_argument("--h", type=float, help="side of the imaging box")
    p.add_argument("--delta", type=float, help="target resolution")
    p.add_argument("--eta-max", dest="eta_max", type=float, help="override the frequency extent")
    p.add_argument("--lambda", dest="lam", type=float, help="Tikhonov parameter relative to sigma_max")
    p.add_argument("--noise", type=float, help="relative trace noise level")
    p.add_argument("--seed", type=int, help="noise seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smallinc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the pipeline up to --stage")
    _add_run_flags(run)
    run.add_argument("--stage", choices=STAGES, help="last stage to run (default: all)")
    for name in STAGES:
        _add_run_flags(sub.add_parser(name, help=f"run only the {name} stage"))

    pol = sub.add_parser("polarizability", help="polarizability tensor of a shape")
    pol.add_argument("--shape", default="disk", choices=["disk", "ellipse", "fourier"])
    pol.add_argument("--a", type=float, default=1.0, help="ellipse semi-axis along x")
    pol.add_argument("--b", type=float, default=0.5, help="ellipse semi-axis along y")
    pol.add_argument("--angle", type=float, default=0.0, help="ellipse rotation (radians)")
    pol.add_argument("--shape-file", help="Fourier descriptor file for --shape fourier")
    pol.add_argument("--mu0", type=float, default=1.0)
    pol.add_argument("--muj", type=float, required=True)
    pol.add_argument("--nodes", type=int, default=256)

    plan = sub.add_parser("plan", help="print the frequency sampling plan")
    plan.add_argument("--h", type=float, required=True)
    plan.add_argument("--delta", type=float, required=True)
    plan.add_argument("--d", type=int, default=2, choices=[2, 3])
    plan.add_argument("--eta-max", dest="eta_max", type=float)
    return parser


def _cmd_polarizability(args) -> dict:
    if args.shape == "disk":
        shape = Disk()
    elif args.shape == "ellipse":
        shape = Ellipse(args.a, args.b, args.angle)
    else:
        if not args.shape_file:
            raise ValidationError("--shape fourier needs --shape-file")
        if not Path(args.shape_file).is_file():
            raise MissingArtifactError(f"shape file {args.shape_file} not found")
        shape = load_fourier_shape(args.shape_file)
    t = ptensor(shape, args.mu0, args.muj, args.nodes)
    return {
        "shape": shape.to_dict(),
        "mu0": args.mu0,
        "muj": args.muj,
        "area": t.shape_area,
        "tensor": t.entries.tolist(),
        "tensor_over_pi": (t.entries / np.pi).tolist(),
    }


def _cmd_plan(args) -> dict:
    plan = sampling_plan(args.h, args.delta, args.d, args.eta_max)
    out = plan.to_dict()
    out["ratio_h_over_delta"] = args.h / args.delta
    out["count_over_ratio_power"] = plan.count / (args.h / args.delta) ** args.d
    out["formula"] = "count = (2*ceil(eta_max/d_eta)+1)^d, eta_max = pi/(2 delta), d_eta = pi/(2 h)"
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "polarizability":
            print(json.dumps(_cmd_polarizability(args), indent=2))
        elif args.command == "plan":
            print(json.dumps(_cmd_plan(args), indent=2))
        else:
            cfg = config_from_args(args)
            if args.command != "run":
                cfg = replace(cfg, stages=(args.command,))
            report = run_pipeline(cfg)
            print(json.dumps({"config_hash": report.config_hash, "stages": report.summary}, indent=2))
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except MissingArtifactError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, SmallIncError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
