"""Command-line driver: factorize | vqe | rdm | verify | path, JSON output."""

from __future__ import annotations

import argparse
import hashlib
import json
import sys

import numpy as np

from . import lagrange, qsim, verify, vqe
from .hammodel import (
    parse_fcidump,
    random_one_body_perturbation,
    random_two_body_perturbation,
)
from .vqe import AnsatzConfig
from .xdf import TruncationPolicy, factorize, reconstruct_eri

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NUMERICAL = 2
EXIT_NONCONVERGED = 3


class NonConvergence(RuntimeError):
    pass


def _array(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": [float(x) for x in np.asarray(a).reshape(-1)]}


def _load(path: str):
    with open(path, "r", encoding="ascii") as handle:
        text = handle.read()
    digest = hashlib.sha256(text.encode("ascii")).hexdigest()
    return parse_fcidump(text), digest


def _policy(args) -> TruncationPolicy:
    if args.threshold is not None and args.leaves is not None:
        raise ValueError("--threshold and --leaves are mutually exclusive")
    if args.threshold is not None:
        return TruncationPolicy.by_threshold(args.threshold)
    if args.leaves is not None:
        return TruncationPolicy.by_count(args.leaves)
    return TruncationPolicy.exact()


def _config_echo(args) -> dict:
    skip = {"func", "out"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _optimize(fac, args):
    cfg = AnsatzConfig(args.layers, args.seed)
    result = vqe.optimize(fac, cfg, tol=args.tol, maxiter=args.maxiter)
    if not result.converged:
        raise NonConvergence(
            f"VQE gradient norm {result.grad_norm:.3e} above tolerance {args.tol:.1e}")
    return cfg, result


def cmd_factorize(args) -> dict:
    ham, digest = _load(args.fcidump)
    fac = factorize(ham, _policy(args))
    rebuilt = reconstruct_eri(fac, use_retained_only=True)
    err = float(np.linalg.norm(rebuilt - ham.two_body))
    denom = float(np.linalg.norm(ham.two_body))
    return {
        "input_sha256": digest,
        "n_orbitals": fac.n_orbitals,
        "total_leaves": fac.n_leaves,
        "retained": fac.retained,
        "leaf_eigenvalues": [float(leaf.g) for leaf in fac.leaves],
        "reconstruction_error": err / denom if denom > 0 else err,
        "scalar_offset": fac.eff.scalar_offset,
        "eff_one_body_spectrum": _array(fac.F0),
    }


def cmd_vqe(args) -> dict:
    ham, digest = _load(args.fcidump)
    fac = factorize(ham, _policy(args))
    _, result = _optimize(fac, args)
    return {
        "input_sha256": digest,
        "retained": fac.retained,
        "energy": result.energy,
        "grad_norm": result.grad_norm,
        "converged": result.converged,
        "n_iterations": result.n_iterations,
        "params": _array(result.params),
    }


def cmd_rdm(args) -> dict:
    ham, digest = _load(args.fcidump)
    fac = factorize(ham, _policy(args))
    cfg, result = _optimize(fac, args)
    state = vqe.prepare_state(fac, cfg, result.params)
    rdms, mult = lagrange.reconstruct_rdms(
        fac, state, ablate=args.ablate, stationarity_grad=result.grad_norm)

    untruncated = fac.retained == fac.n_leaves
    if untruncated and args.ablate is None:
        gamma_m, big_m = qsim.measure_rdms_direct(state)
        gamma_m = 0.5 * (gamma_m + gamma_m.T)
        big_m = lagrange._eight_fold(big_m)
        oracle = {
            "gamma_max_abs_diff": float(np.max(np.abs(rdms.gamma_sym - gamma_m))),
            "Gamma_max_abs_diff": float(np.max(np.abs(rdms.Gamma_sym - big_m))),
        }
    else:
        oracle = "not-applicable"
    return {
        "input_sha256": digest,
        "energy": result.energy,
        "grad_norm": result.grad_norm,
        "gamma_sym": _array(rdms.gamma_sym),
        "Gamma_sym": _array(rdms.Gamma_sym),
        "multipliers": {
            "eta0": _array(mult.eta0),
            "eta": [_array(e) for e in mult.eta],
            "mu0": _array(mult.mu0),
            "mu": [_array(m) for m in mult.mu],
            "nu": _array(mult.nu),
            "eta_residual": mult.eta_residual,
        },
        "multiplier_norms": {
            "eta0": float(np.max(np.abs(mult.eta0))),
            "eta_leaf_max": max((float(np.max(np.abs(e))) for e in mult.eta), default=0.0),
            "mu0": float(np.max(np.abs(mult.mu0))),
            "mu_leaf_max": max((float(np.max(np.abs(m))) for m in mult.mu), default=0.0),
            "nu": float(np.max(np.abs(mult.nu))),
        },
        "ablated": args.ablate,
        "oracle": oracle,
    }


def cmd_verify(args) -> dict:
    ham, digest = _load(args.fcidump)
    truncated = TruncationPolicy.by_count(args.leaves if args.leaves is not None else 4)
    specs = verify.RegimeSpec.grid(args.layers, args.layers_small, truncated,
                                   ansatz_seed=args.seed)
    n = ham.n_orbitals
    perturbations = (
        [random_one_body_perturbation(n, args.seed + 10 + i) for i in range(args.perturbations)]
        + [random_two_body_perturbation(n, args.seed + 50 + i) for i in range(args.perturbations)]
    )
    reports = verify.run_regime_suite(ham, specs, perturbations, ablate=args.ablate)
    payload = {
        "input_sha256": digest,
        "ablated": args.ablate,
        "tolerance": verify.DERIVATIVE_TOL,
        "reports": [
            {
                "regime": r.regime,
                "perturbation": r.perturbation,
                "analytic": r.analytic,
                "numerical": r.numerical,
                "abs_diff": r.abs_diff,
                "passed": r.passed(),
            }
            for r in reports
        ],
    }
    payload["all_passed"] = all(r.passed() for r in reports)
    payload["max_abs_diff"] = max(r.abs_diff for r in reports)
    payload["table"] = verify.format_reports(reports)
    return payload


def cmd_path(args) -> dict:
    ham_a, digest_a = _load(args.fcidump)
    ham_b, digest_b = _load(args.fcidump_b)
    regime = verify.RegimeSpec("path", _policy(args), args.layers,
                               ansatz_seed=args.seed, vqe_tol=args.tol)
    trace = verify.verlet_path(
        ham_a, ham_b, n_steps=args.steps, dt=args.dt, mass=args.mass,
        regime=regime, s0=args.s0, v0=args.v0, ablate=args.ablate)
    if trace.aborted is not None and trace.completed < args.steps:
        raise NonConvergence(f"dynamics aborted: {trace.aborted}")
    return {
        "input_sha256": [digest_a, digest_b],
        "steps_completed": trace.completed,
        "drift": trace.drift(),
        "relative_drift": trace.relative_drift(),
        "secular_slope": trace.secular_slope(),
        "ablated": args.ablate,
        "s": _array(trace.s),
        "kinetic": _array(trace.kinetic),
        "potential": _array(trace.potential),
        "total": _array(trace.total),
    }


def _add_common(parser, layers_default=4):
    parser.add_argument("--fcidump", required=True, help="input integral file")
    parser.add_argument("--threshold", type=float, default=None,
                        help="retain leaves with |g| >= threshold")
    parser.add_argument("--leaves", type=int, default=None,
                        help="retain a fixed number of leading leaves")
    parser.add_argument("--layers", type=int, default=layers_default)
    parser.add_argument("--tol", type=float, default=1e-9)
    parser.add_argument("--maxiter", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default=None, help="write JSON here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xdfrelax",
        description="Double-factorized Hamiltonians, statevector VQE, relaxed densities.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("factorize", help="eigendecompose the integrals into leaves")
    _add_common(p)
    p.set_defaults(func=cmd_factorize)

    p = sub.add_parser("vqe", help="variational ground-state optimization")
    _add_common(p)
    p.set_defaults(func=cmd_vqe)

    p = sub.add_parser("rdm", help="relaxed density matrices from multiplier solves")
    _add_common(p)
    p.add_argument("--ablate", choices=lagrange.ABLATION_MODES, default=None)
    p.set_defaults(func=cmd_rdm)

    p = sub.add_parser("verify", help="four-regime derivative validation suite")
    _add_common(p)
    p.add_argument("--layers-small", type=int, default=1)
    p.add_argument("--perturbations", type=int, default=3)
    p.add_argument("--ablate", choices=lagrange.ABLATION_MODES, default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("path", help="velocity-Verlet run on an interpolated pair")
    _add_common(p, layers_default=3)
    p.add_argument("--fcidump-b", required=True)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--dt", type=float, default=0.005)
    p.add_argument("--mass", type=float, default=10.0)
    p.add_argument("--s0", type=float, default=0.3)
    p.add_argument("--v0", type=float, default=0.1)
    p.add_argument("--ablate", choices=lagrange.ABLATION_MODES, default=None)
    p.set_defaults(func=cmd_path)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        payload = args.func(args)
        code = EXIT_OK
    except (FileNotFoundError, ValueError) as exc:
        payload, code = {"error": str(exc)}, EXIT_INPUT
    except NonConvergence as exc:
        payload, code = {"error": str(exc)}, EXIT_NONCONVERGED
    except (np.linalg.LinAlgError, ArithmeticError, RuntimeError, AssertionError) as exc:
        payload, code = {"error": str(exc)}, EXIT_NUMERICAL

    payload["config"] = _config_echo(args)
    payload["exit_code"] = code
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="ascii") as handle:
            handle.write(text + "\n")
    else:
        print(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
