"""
CLI command handlers.

Each handler takes the parsed argparse namespace, does its work through
the library, records one ledger entry and returns an exit code.
"""

import argparse
import json
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
import structlog

from knmf.dataio.cube import read_cube, write_cube
from knmf.dataio.factors import read_abundances, read_endmembers, write_abundances, write_endmembers
from knmf.dataio.report import write_abundance_maps, write_report
from knmf.dataio.scene import MixingModel, SceneSpec, synth_scene
from knmf.diagnostics import GRADCHECK_THRESHOLD, gradient_suite, probe_nonconvexity
from knmf.errors import InputError
from knmf.factorization.types import HyperCube, InitMethod, RunResult, Scheme, SolverConfig, StepsizePolicy
from knmf.factorization.workflow import UnmixingWorkflow
from knmf.governance.audit_logger import AuditLogger, digest_arrays, digest_config
from knmf.governance.telemetry import SolverTelemetry
from knmf.kernels import KernelSpec, KernelVariant
from knmf.metrics import EvalReport, abundance_density, evaluate
from knmf.regularizers import RegularizerSet
from knmf.settings import Settings

logger = structlog.get_logger(__name__)

AUDIT = AuditLogger("knmf-cli")
TELEMETRY = SolverTelemetry()

EXIT_OK = 0
EXIT_NUMERIC = 3

DENSITY_THRESHOLD = 0.01

# sweep parameter name -> namespace attribute it overrides
SWEEP_PARAMETERS = {
    "c": "c",
    "sigma": "sigma",
    "mu": "mu",
    "omega": "omega",
    "rho": "rho",
    "gamma": "gamma",
    "lambda": "lambda_input",
}


def parse_values(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("at least one value is required")
    return values


def _emit(payload: dict) -> None:
    print(json.dumps(payload, indent=2, default=str))


# Flag groups

def add_kernel_flags(parser: argparse.ArgumentParser, default: Optional[str] = "linear") -> None:
    parser.add_argument("--kernel", choices=[v.value for v in KernelVariant], default=default)
    parser.add_argument("--degree", type=int, default=2, help="Polynomial degree d")
    parser.add_argument("--c", type=float, default=0.44, help="Polynomial offset c")
    parser.add_argument("--sigma", type=float, default=2.5, help="Gaussian bandwidth")


def add_synth_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--bands", type=int, default=50)
    parser.add_argument("--width", type=int, default=20, help="Image width b")
    parser.add_argument("--height", type=int, default=20, help="Image height a")
    parser.add_argument("--rank", type=int, default=3)
    parser.add_argument("--mixing", choices=[m.value for m in MixingModel], default=MixingModel.LINEAR.value)
    parser.add_argument("--beta", type=float, default=0.0, help="Bilinear strength")
    parser.add_argument("--snr", type=float, default=None, help="Noise SNR in dB")
    parser.add_argument("--concentration", type=float, default=1.0, help="Dirichlet parameter")
    parser.add_argument("--blur", type=int, default=0, help="Spatial blur passes")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--csv", action="store_true", help="Write the cube as CSV")
    parser.add_argument("--out", required=True, help="Output prefix")


def add_solver_flags(parser: argparse.ArgumentParser, settings: Settings) -> None:
    add_kernel_flags(parser)
    parser.add_argument("--scheme", choices=[s.value for s in Scheme], default=Scheme.MULTIPLICATIVE.value)
    parser.add_argument("--iters", type=int, default=settings.iterations)
    parser.add_argument("--rank", type=int, default=3)
    parser.add_argument("--init", choices=[i.value for i in InitMethod], default=InitMethod.DATA_COLUMNS.value)
    parser.add_argument("--jitter", type=float, default=1e-3, help="Jitter for data-column initialization")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--sum-to-one", action="store_true")
    parser.add_argument("--normalize-once", action="store_true", help="Normalize after the last iteration only")
    parser.add_argument("--semi-nmf", action="store_true")
    parser.add_argument("--eta-a", type=float, default=1e-3)
    parser.add_argument("--eta-e", type=float, default=1e-3)
    parser.add_argument("--backtracking", action="store_true")
    parser.add_argument("--lambda", dest="lambda_input", type=float, default=0.0)
    parser.add_argument("--lambda-h", dest="lambda_feature", type=float, default=0.0)
    parser.add_argument("--gamma", type=float, default=0.0)
    parser.add_argument("--rho", type=float, default=0.0)
    parser.add_argument("--alpha", type=float, default=0.0)
    parser.add_argument("--mu", type=float, default=0.0)
    parser.add_argument("--omega", type=float, default=0.0, help="Sets all four spatial weights")
    for side in ("l", "r", "u", "d"):
        parser.add_argument(f"--omega-{side}", type=float, default=None)
    parser.add_argument("--alpha-spatial", type=float, default=0.0)
    parser.add_argument("--single-sum", action="store_true", help="Spatial penalty summed once per row/column")
    parser.add_argument("--epsilon", type=float, default=settings.epsilon_guard)


# Namespace -> typed configuration

def kernel_from_args(args: argparse.Namespace, variant: Optional[str] = None) -> KernelSpec:
    return KernelSpec(
        variant=KernelVariant(variant or args.kernel),
        degree=args.degree,
        offset=args.c,
        sigma=args.sigma,
    )


def regularizers_from_args(args: argparse.Namespace) -> RegularizerSet:
    def _omega(side: str) -> float:
        override = getattr(args, f"omega_{side}")
        return args.omega if override is None else override

    return RegularizerSet(
        lambda_input=args.lambda_input,
        lambda_feature=args.lambda_feature,
        gamma=args.gamma,
        rho=args.rho,
        alpha=args.alpha,
        mu=args.mu,
        omega_l=_omega("l"),
        omega_r=_omega("r"),
        omega_u=_omega("u"),
        omega_d=_omega("d"),
        alpha_spatial=args.alpha_spatial,
        spatial_double_sum=not args.single_sum,
    )


def solver_config_from_args(args: argparse.Namespace) -> SolverConfig:
    config = SolverConfig(
        rank=args.rank,
        kernel=kernel_from_args(args),
        scheme=Scheme(args.scheme),
        iterations=args.iters,
        stepsize=StepsizePolicy(eta_a=args.eta_a, eta_e=args.eta_e, backtracking=args.backtracking),
        sum_to_one=args.sum_to_one,
        normalize_every_iteration=not args.normalize_once,
        semi_nmf=args.semi_nmf,
        regularizers=regularizers_from_args(args),
        init=InitMethod(args.init),
        init_jitter=args.jitter,
        seed=args.seed,
        epsilon_guard=args.epsilon,
        threads=args.threads,
    )
    logger.info("resolved_config", **config.model_dump(mode="json"))
    return config


def _run(args: argparse.Namespace, cube: HyperCube) -> tuple[RunResult, EvalReport]:
    config = solver_config_from_args(args)
    result = UnmixingWorkflow(config, TELEMETRY).run(cube)
    truth = read_endmembers(args.truth_e) if getattr(args, "truth_e", None) else None
    return result, evaluate(cube.X, result.E, result.A, config.kernel, truth)


# Handlers

def cmd_synth(args: argparse.Namespace) -> int:
    spec = SceneSpec(
        bands=args.bands,
        rows=args.height,
        cols=args.width,
        rank=args.rank,
        mixing=MixingModel(args.mixing),
        beta=args.beta,
        noise_snr_db=args.snr,
        concentration=args.concentration,
        blur_passes=args.blur,
        seed=args.seed,
    )
    cube, E, A = synth_scene(spec)
    cube_path = write_cube(f"{args.out}.csv" if args.csv else f"{args.out}.hsi", cube)
    e_path = write_endmembers(f"{args.out}_E.csv", E)
    a_path = write_abundances(f"{args.out}_A.csv", A)

    AUDIT.log_operation(
        "synth",
        config_digest=digest_config(spec.model_dump(mode="json")),
        output_digest=digest_arrays(cube.X, E, A),
        files=[str(p) for p in (cube_path, e_path, a_path)],
    )
    _emit({"cube": str(cube_path), "endmembers": str(e_path), "abundances": str(a_path)})
    return EXIT_OK


def cmd_unmix(args: argparse.Namespace) -> int:
    cube = read_cube(args.input)
    result, evaluation = _run(args, cube)

    prefix = Path(args.out)
    report_path = write_report(f"{prefix}_report.json", result, evaluation)
    write_endmembers(f"{prefix}_E.csv", result.E)
    write_abundances(f"{prefix}_A.csv", result.A)
    write_abundance_maps(prefix, result.A, cube.shape)

    AUDIT.log_operation(
        "unmix",
        config_digest=digest_config(result.config_echo()),
        output_digest=digest_arrays(result.E, result.A, np.asarray(result.cost_trace)),
        input=str(args.input),
        report=str(report_path),
        re=evaluation.re,
        re_phi=evaluation.re_phi,
    )
    _emit(
        {
            "report": str(report_path),
            "kernel": result.config.kernel.label,
            "kernel_params": result.config.kernel.describe(),
            "iterations": result.iterations,
            "final_cost": result.final_cost,
            "re": evaluation.re,
            "re_phi": evaluation.re_phi,
            "sam_per_endmember": evaluation.sam_per_endmember,
            "mean_angle": evaluation.mean_angle,
        }
    )
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    cube = read_cube(args.input)
    E = read_endmembers(args.endmembers)
    A = read_abundances(args.abundances)
    truth = read_endmembers(args.truth_e) if args.truth_e else None
    kernel = kernel_from_args(args)
    report = evaluate(cube.X, E, A, kernel, truth)

    AUDIT.log_operation("eval", kernel=kernel.label, re=report.re, re_phi=report.re_phi)
    _emit({**report.model_dump(mode="json", exclude={"per_pixel_residuals"}), "mean_angle": report.mean_angle})
    return EXIT_OK


def cmd_probe(args: argparse.Namespace) -> int:
    kernel = kernel_from_args(args)
    report = probe_nonconvexity(
        kernel,
        args.budget,
        args.seed,
        workers=args.threads,
        control=kernel.variant == KernelVariant.LINEAR,
        telemetry=TELEMETRY,
    )
    AUDIT.log_operation(
        "probe",
        kernel=kernel.label,
        verdict=report.verdict.value,
        samples=report.samples,
        seed=args.seed,
    )
    _emit(report.model_dump(mode="json"))
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    variants = [args.kernel] if args.kernel else [v.value for v in KernelVariant]
    results: dict[str, dict[str, float]] = {}
    for variant in variants:
        kernel = kernel_from_args(args, variant)
        results[kernel.label] = gradient_suite(kernel, seed=args.seed, step=args.step, inject_bug=args.inject_bug)

    worst = float(max(err for suite in results.values() for err in suite.values()))
    passed = bool(worst < GRADCHECK_THRESHOLD)
    AUDIT.log_operation("gradcheck", worst=worst, passed=passed, inject_bug=args.inject_bug)
    if not passed:
        logger.error("gradient_check_failed", worst=worst, threshold=GRADCHECK_THRESHOLD)
    _emit({"threshold": GRADCHECK_THRESHOLD, "worst": worst, "passed": passed, "suites": results})
    return EXIT_OK if passed else EXIT_NUMERIC


def cmd_sweep(args: argparse.Namespace) -> int:
    cube = read_cube(args.input)
    attribute = SWEEP_PARAMETERS.get(args.param)
    if attribute is None:
        raise InputError(f"unknown sweep parameter {args.param!r}")

    rows = []
    for value in args.values:
        point = argparse.Namespace(**vars(args))
        setattr(point, attribute, value)
        result, evaluation = _run(point, cube)
        rows.append(
            {
                "value": value,
                "re": evaluation.re,
                "re_phi": evaluation.re_phi,
                "final_cost": result.final_cost,
                "density": abundance_density(result.A, DENSITY_THRESHOLD),
            }
        )
        logger.info("sweep_point", param=args.param, value=value, re=evaluation.re)

    frame = pd.DataFrame(rows, columns=["value", "re", "re_phi", "final_cost", "density"])
    if args.out:
        frame.to_csv(args.out, index=False, float_format="%.17g")
    else:
        print(frame.to_csv(index=False, float_format="%.17g"), end="")

    AUDIT.log_operation("sweep", param=args.param, values=args.values, output=args.out)
    return EXIT_OK
