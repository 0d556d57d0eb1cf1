"""Command line interface: experiment runner, identity verification, quadrature.

    sampler experiment --config <file> [--out <dir>] [--threads N]
    sampler verify [--seed S] [--points N] [--out <dir>] [--inject-fault]
    sampler quadrature --test <name> [--grid N]

Exit codes: 0 success, 1 run/check failure, 2 configuration error.  The
environment variable SAMPLER_THREADS overrides the thread count.
"""

import argparse
import csv
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from .benchmarks import A_CHOICES, get_benchmark
from .errors import ConfigError, SamplerError
from .geometry import (
    TorusSurface,
    circle_coordinate,
    double_quadric_coordinate,
    sphere_coordinate,
)
from .kernels import DynamicsSpec
from .noise import NoiseKind
from .projection import ProjectionConfig
from .sampler import SchemeConfig, run
from .stats import aggregate_runs
from . import verify as ver

_PAPER_H = [2e-2, 1e-2, 5e-3, 1e-3, 5e-4]


@dataclass
class ExperimentSpec:
    """Parsed experiment configuration."""

    experiment: str = "test1"
    h_list: list = field(default_factory=lambda: list(_PAPER_H))
    a_labels: list = field(default_factory=lambda: ["zero"])
    a_custom: np.ndarray = None
    total_time: float = None
    runs: int = 10
    seed: int = 0
    noise: NoiseKind = NoiseKind.GAUSSIAN
    projection: ProjectionConfig = field(default_factory=ProjectionConfig)
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if any(h <= 0 for h in self.h_list):
            raise ConfigError("all step sizes must be positive")
        if self.total_time is None:
            self.total_time = 1e4 if self.experiment != "test2" else 1e5

    def a_matrix(self, label):
        if label == "custom":
            if self.a_custom is None:
                raise ConfigError("A=custom requires A_custom")
            return self.a_custom
        try:
            return A_CHOICES[label]
        except KeyError:
            raise ConfigError(f"unknown A choice {label!r}") from None

    def benchmark(self):
        name = self.overrides.get("potential", self.experiment)
        if self.experiment == "custom" and "potential" not in self.overrides:
            raise ConfigError("experiment=custom requires potential=test1|test2")
        kwargs = {
            k: self.overrides[k] for k in ("beta", "R", "r") if k in self.overrides
        }
        try:
            return get_benchmark(name, **kwargs)
        except KeyError as exc:
            raise ConfigError(str(exc)) from None


def parse_config(text):
    """Parse a key=value experiment config."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()

    known = {
        "experiment", "h", "A", "A_custom", "T", "runs", "seed", "noise",
        "kappa", "initial_dt", "eps_tol", "max_rk_steps", "error_tol",
        "potential", "beta", "R", "r",
    }
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    try:
        spec = ExperimentSpec(
            experiment=values.get("experiment", "test1"),
            h_list=[float(v) for v in values["h"].split(",")] if "h" in values else list(_PAPER_H),
            a_labels=[v.strip() for v in values.get("A", "zero").split(",")],
            total_time=float(values["T"]) if "T" in values else None,
            runs=int(values.get("runs", 10)),
            seed=int(values.get("seed", 0)),
            noise=NoiseKind(values.get("noise", "gaussian")),
            projection=ProjectionConfig(
                kappa=float(values.get("kappa", 0.5)),
                initial_dt=float(values.get("initial_dt", 0.003)),
                eps_tol=float(values.get("eps_tol", 1e-7)),
                max_rk_steps=int(values.get("max_rk_steps", 10_000)),
                error_tol=float(values.get("error_tol", 1e-6)),
            ),
            overrides={
                k: (values[k] if k == "potential" else float(values[k]))
                for k in ("potential", "beta", "R", "r")
                if k in values
            },
        )
        if "A_custom" in values:
            entries = [float(v) for v in values["A_custom"].split(",")]
            if len(entries) != 9:
                raise ConfigError("A_custom needs 9 comma-separated entries (row-major 3x3)")
            A = np.array(entries).reshape(3, 3)
            spec.a_custom = 0.5 * (A - A.T)
            if not np.allclose(A, spec.a_custom, atol=1e-12):
                raise ConfigError("A_custom must be antisymmetric")
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad config value: {exc}") from exc
    return spec


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _stream_index(a_idx, h_idx, run_idx):
    # independent reproducibility of every cell: disjoint stream blocks
    return (a_idx << 40) | (h_idx << 20) | run_idx


def cmd_experiment(spec, out_dir=".", threads=None):
    """Run the experiment matrix and write summary.csv / runs.csv."""
    threads = _thread_count(threads)
    bench = spec.benchmark()
    surface = bench.surface()
    rc = surface.coordinate
    x0 = bench.initial_state()
    os.makedirs(out_dir, exist_ok=True)
    summary_rows = []
    run_rows = []
    failed = False
    for a_idx, label in enumerate(spec.a_labels):
        A = spec.a_matrix(label)
        dyn = bench.dynamics(A=A)
        for h_idx, h in enumerate(spec.h_list):
            cfg = SchemeConfig(
                step_size=h, total_time=spec.total_time, noise=spec.noise, seed=spec.seed
            )
            try:
                summaries = _run_cell(rc, dyn, spec, cfg, x0, bench.observable,
                                      a_idx, h_idx, threads)
            except SamplerError as exc:
                print(f"cell (A={label}, h={h:g}) failed: {exc}", file=sys.stderr)
                failed = True
                nan = float("nan")
                summary_rows.append([label, h, cfg.n_steps, nan, nan, nan, nan, nan, nan])
                continue
            for run_idx, s in enumerate(summaries):
                run_rows.append([
                    label, h, run_idx, spec.seed, s.n_steps, s.running_mean,
                    s.asym_var_estimate, s.mean_intermediate_xi, s.mean_rk_steps,
                    s.transition_count, s.wall_time,
                ])
            if len(summaries) >= 2:
                agg = aggregate_runs(summaries, a_label=label, h=h)
                row = [label, h, agg.n_steps, agg.mean_f, agg.std_f, agg.mean_xi_half,
                       agg.mean_rk_steps, agg.mean_transitions, agg.runtime_s]
            else:
                s = summaries[0]
                row = [label, h, s.n_steps, s.running_mean, 0.0, s.mean_intermediate_xi,
                       s.mean_rk_steps, float(s.transition_count), s.wall_time]
            summary_rows.append(row)
    _write_csv(
        os.path.join(out_dir, "summary.csv"),
        ["A_label", "h", "n", "mean_f", "std_f", "mean_xi_half", "mean_rk_steps",
         "transitions", "runtime_s"],
        summary_rows,
    )
    _write_csv(
        os.path.join(out_dir, "runs.csv"),
        ["A_label", "h", "run_index", "seed", "n", "mean_f", "asym_var", "mean_xi_half",
         "mean_rk_steps", "transitions", "runtime_s"],
        run_rows,
    )
    return 1 if failed else 0


def _run_cell(rc, dyn, spec, cfg, x0, observable, a_idx, h_idx, threads):
    from concurrent.futures import ThreadPoolExecutor

    streams = [_stream_index(a_idx, h_idx, i) for i in range(spec.runs)]
    if threads <= 1 or spec.runs == 1:
        return [run(rc, dyn, spec.projection, cfg, x0, observable, stream=s) for s in streams]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futs = [
            pool.submit(run, rc, dyn, spec.projection, cfg, x0, observable, stream=s)
            for s in streams
        ]
        return [f.result() for f in futs]


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def _random_antisym(rng, d, scale=2.0):
    M = rng.uniform(-scale, scale, size=(d, d))
    return M - M.T


def _random_spd(rng, d):
    W = rng.normal(size=(d, d))
    return W @ W.T / d + 0.5 * np.eye(d)


def _synthetic_cases(rng, n_points=4):
    """Surface points for the (d, k) = (2,1), (3,1), (4,2) verification cases."""
    cases = []
    circle = circle_coordinate()
    pts = [np.array([np.cos(t), np.sin(t)]) for t in rng.uniform(0, 2 * np.pi, n_points)]
    cases.append(("d2k1", circle, pts))
    sphere = sphere_coordinate()
    pts = []
    for _ in range(n_points):
        v = rng.normal(size=3)
        pts.append(v / np.linalg.norm(v))
    cases.append(("d3k1", sphere, pts))
    quadric = double_quadric_coordinate()
    pts = [
        np.array([np.cos(a), np.sin(a), np.cos(b), np.sin(b)])
        for a, b in rng.uniform(0, 2 * np.pi, size=(n_points, 2))
    ]
    cases.append(("d4k2", quadric, pts))
    return cases


def _zero_potential_spec(d, beta, A, a=None, sigma=None, div_a=None):
    return DynamicsSpec(
        dim=d,
        potential=lambda x: 0.0,
        grad_potential=lambda x, _d=d: np.zeros(_d),
        beta=beta,
        antisym=A,
        diffusion=a,
        diffusion_factor=sigma,
        div_diffusion=div_a,
    )


def run_verification(seed=0, points=1000, inject_fault=False, appendix_points=128,
                     derivative_points=None, progress=None):
    """All identity checks at sampled torus points plus the synthetic cases.

    Returns a list of CheckReport rows.  ``points`` controls the torus sample
    size; derivative checks default to the same sample, the appendix integral
    runs on a subset since each point costs ~2k matrix exponentials.
    """
    rng = np.random.default_rng(seed)
    proj_cfg = ProjectionConfig()
    reports = []
    surface = TorusSurface()
    rc = surface.coordinate
    derivative_points = points if derivative_points is None else derivative_points

    def log(msg):
        if progress:
            print(msg, file=sys.stderr)

    if points > 0:
        torus_pts = surface.random_points(points, rng)
        torus_As = [_random_antisym(rng, 3) for _ in range(points)]

        log("kernel identities on the torus ...")
        reps = [
            ver.check_kernel_identities(rc, _zero_potential_spec(3, 1.0, A), x)
            for x, A in zip(torus_pts, torus_As)
        ]
        reports.append(ver.merge_reports("kernel_identities[torus]", reps))

        log("projection gradient on the torus ...")
        reps = []
        for i in range(derivative_points):
            x, A = torus_pts[i % points], torus_As[i % points]
            spec = _zero_potential_spec(3, 1.0, A)
            kernel_spec = spec.with_antisym(-A) if inject_fault else None
            reps.append(ver.check_grad_theta(rc, spec, proj_cfg, x, kernel_spec=kernel_spec))
        reports.append(ver.merge_reports("grad_theta[torus]", reps))

        log("projection Hessian contraction on the torus ...")
        reps = [
            ver.check_hess_theta(rc, _zero_potential_spec(3, 1.0, torus_As[i % points]),
                                 proj_cfg, torus_pts[i % points])
            for i in range(derivative_points)
        ]
        reports.append(ver.merge_reports("hess_theta[torus]", reps))

        log("matrix-exponential integrals on the torus ...")
        reps = []
        reps_exp = []
        for i in range(min(appendix_points, points)):
            spec = _zero_potential_spec(3, 1.0, torus_As[i])
            reps.append(ver.check_appendix_identity(rc, spec, torus_pts[i]))
            reps_exp.append(ver.check_exp_identities(rc, spec, torus_pts[i]))
        reports.append(ver.merge_reports("appendix_integral[torus]", reps))
        reports.append(ver.merge_reports("exp_identities[torus]", reps_exp))

    log("synthetic (d, k) cases ...")
    for tag, coord, pts in _synthetic_cases(rng):
        d = coord.d
        kern_reps, grad_reps, app_reps, exp_reps = [], [], [], []
        for x in pts:
            A = _random_antisym(rng, d, scale=1.0)
            a = _random_spd(rng, d)
            spec = _zero_potential_spec(d, 1.0, A, a=a)
            kern_reps.append(ver.check_kernel_identities(coord, spec, x))
            app_reps.append(ver.check_appendix_identity(coord, spec, x))
            exp_reps.append(ver.check_exp_identities(coord, spec, x))
            grad_reps.append(ver.check_grad_theta(coord, spec, proj_cfg, x))
        reports.append(ver.merge_reports(f"kernel_identities[{tag}]", kern_reps))
        reports.append(ver.merge_reports(f"grad_theta[{tag}]", grad_reps))
        reports.append(ver.merge_reports(f"appendix_integral[{tag}]", app_reps))
        reports.append(ver.merge_reports(f"exp_identities[{tag}]", exp_reps))

    # Hessian contraction with a state-dependent diffusion (exercises the
    # gradient-of-a term on the right-hand side)
    log("Hessian contraction with varying diffusion ...")
    circle = circle_coordinate()

    def a_fn(x):
        return (1.0 + 0.25 * x[0] ** 2) * np.eye(2)

    def sigma_fn(x):
        return np.sqrt(1.0 + 0.25 * x[0] ** 2) * np.eye(2)

    def div_a(x):
        return np.array([0.5 * x[0], 0.0])

    reps = []
    for t in rng.uniform(0, 2 * np.pi, 4):
        x = np.array([np.cos(t), np.sin(t)])
        A = _random_antisym(rng, 2, scale=1.0)
        spec = _zero_potential_spec(2, 1.0, A, a=a_fn, sigma=sigma_fn, div_a=div_a)
        reps.append(ver.check_hess_theta(circle, spec, proj_cfg, x))
    reports.append(ver.merge_reports("hess_theta[varying_a]", reps))
    return reports


def cmd_verify(seed=0, points=1000, out_dir=".", inject_fault=False, progress=False):
    reports = run_verification(seed=seed, points=points, inject_fault=inject_fault,
                               progress=progress)
    os.makedirs(out_dir, exist_ok=True)
    rows = [
        [r.name, r.max_abs_error, r.tolerance, "true" if r.passed else "false"]
        for r in reports
    ]
    _write_csv(os.path.join(out_dir, "verify.csv"),
               ["check", "max_abs_error", "tolerance", "passed"], rows)
    for r in reports:
        status = "pass" if r.passed else "FAIL"
        print(f"{status:4s}  {r.name:32s} max_err={r.max_abs_error:.3e} tol={r.tolerance:.0e}")
    return 0 if all(r.passed for r in reports) else 1


def cmd_quadrature(test, grid=512):
    try:
        bench = get_benchmark(test)
    except KeyError as exc:
        raise ConfigError(str(exc)) from None
    value = bench.true_expectation(grid_size=grid)
    print(f"{value:.6f}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _thread_count(requested=None):
    env = os.environ.get("SAMPLER_THREADS")
    if env is not None:
        return max(1, int(env))
    if requested is not None:
        return max(1, requested)
    return os.cpu_count() or 1


def _build_parser():
    parser = argparse.ArgumentParser(prog="sampler",
                                     description="constrained sampling experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_exp = sub.add_parser("experiment", help="run an experiment matrix, write CSVs")
    p_exp.add_argument("--config", required=True, help="key=value config file")
    p_exp.add_argument("--out", default=".", help="output directory")
    p_exp.add_argument("--threads", type=int, default=None)

    p_ver = sub.add_parser("verify", help="run the identity checks, write verify.csv")
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.add_argument("--points", type=int, default=1000)
    p_ver.add_argument("--out", default=".")
    p_ver.add_argument("--inject-fault", action="store_true",
                       help="negative control: corrupt one comparison on purpose")
    p_ver.add_argument("--progress", action="store_true")

    p_quad = sub.add_parser("quadrature", help="print a ground-truth expectation")
    p_quad.add_argument("--test", required=True)
    p_quad.add_argument("--grid", type=int, default=512)
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "experiment":
            with open(args.config, "r", encoding="utf-8") as fh:
                spec = parse_config(fh.read())
            return cmd_experiment(spec, out_dir=args.out, threads=args.threads)
        if args.command == "verify":
            return cmd_verify(seed=args.seed, points=args.points, out_dir=args.out,
                              inject_fault=args.inject_fault, progress=args.progress)
        if args.command == "quadrature":
            if args.grid < 16:
                raise ConfigError("grid must be at least 16")
            return cmd_quadrature(args.test, grid=args.grid)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SamplerError as exc:
        print(f"run failure: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
