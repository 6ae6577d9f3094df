"""Command-line front end.

Every subcommand prints a JSON report ``{command, inputs, outputs, timings,
version}`` to stdout (and to ``--out`` if given).  Library errors produce an
error JSON on stderr and a nonzero exit code: 2 for bad arguments or form
syntax, 3 for sampling failures, 4 for bracketing failures, 1 otherwise.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
import time
import warnings

import numpy as np

from . import __version__
from .chains import NAMED_CHAINS, Block, Chain, SingularBlock, chain_from_json
from .deriv import DerivConfig, convergence_order, exterior_derivative_at, exterior_derivative_refined, stencil_errors
from .errors import BracketingError, FluxFormError, FormSyntaxError, SamplingError
from .expression import parse_form
from .forms import DataCloud, FormField, field_from_cloud
from .integrate import QuadratureSpec, integrate_over_chain
from .verify import d_squared, mvt_locate, stokes_sides

EXIT_USAGE = 2
EXIT_SAMPLING = 3
EXIT_BRACKETING = 4

# settings that may come from flags or from --config; flags win
CONFIG_DEFAULTS = {
    "eps": None,
    "subdiv": None,
    "rtol": None,
    "richardson": 0,
    "aspect_bound": 2.0,
    "jacobian_step": None,
    "matching": "exact",
    "max_depth": 8,
    "tol": None,
    "eps_outer": 1e-3,
    "eps_inner": 1e-4,
    "eps_seq": None,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fluxform", description="Flux exterior derivative, integration and verification on R^n.")
    parser.add_argument("--version", action="version", version=f"fluxform {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, point=False, region=False):
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--form", help="form expression, e.g. 'x1*dx2 - x2*dx1'")
        src.add_argument("--cloud", help="JSON data cloud file")
        p.add_argument("--degree", type=int, help="degree of the input form")
        p.add_argument("--dim", type=int, help="ambient dimension n (inferred when omitted)")
        p.add_argument("--matching", choices=["exact", "nearest"], default=None, help="data-cloud point matching")
        p.add_argument("--config", help="JSON file with default settings")
        p.add_argument("--out", help="also write the report to this file")
        p.add_argument("--timings", action="store_true", help="include wall-clock timings in the report")
        if point:
            p.add_argument("--at", type=_floats, required=True, help="point x1,...,xn")
        if region:
            where = p.add_mutually_exclusive_group(required=True)
            where.add_argument("--chain", help="chain JSON file or a named chain (" + ", ".join(NAMED_CHAINS) + ")")
            where.add_argument("--block", type=_floats, help="block a1,b1,a2,b2,... (inclusion)")

    def deriv_flags(p):
        p.add_argument("--eps", type=float, default=None, help="stencil half-width")
        p.add_argument("--richardson", type=int, default=None, help="Richardson levels")
        p.add_argument("--aspect-bound", dest="aspect_bound", type=float, default=None)

    def quad_flags(p):
        p.add_argument("--subdiv", type=int, default=None, help="midpoint cells per axis")
        p.add_argument("--rtol", type=float, default=None, help="stop doubling cells at this relative change")
        p.add_argument("--jacobian-step", dest="jacobian_step", type=float, default=None)

    p = sub.add_parser("derive", help="stencil exterior derivative at a point")
    common(p, point=True)
    deriv_flags(p)
    p.add_argument("--subdiv", type=int, default=None, help="midpoint cells per face axis")

    p = sub.add_parser("integrate", help="integrate a form over a chain")
    common(p, region=True)
    quad_flags(p)

    p = sub.add_parser("stokes", help="compare the boundary integral with the integral of D")
    common(p, region=True)
    quad_flags(p)
    deriv_flags(p)

    p = sub.add_parser("mvt", help="locate a mean-value point by trisection")
    common(p)
    p.add_argument("--block", type=_floats, required=True, help="block a1,b1,a2,b2,...")
    p.add_argument("--max-depth", dest="max_depth", type=int, default=None)
    p.add_argument("--tol", type=float, default=None, help="stop once the longest side is below this")
    quad_flags(p)
    deriv_flags(p)

    p = sub.add_parser("dsq", help="D applied twice at a point")
    common(p, point=True)
    p.add_argument("--eps-outer", dest="eps_outer", type=float, default=None)
    p.add_argument("--eps-inner", dest="eps_inner", type=float, default=None)

    p = sub.add_parser("convergence", help="empirical order of the stencil")
    common(p, point=True)
    p.add_argument("--eps-seq", dest="eps_seq", type=_floats, default=None, help="decreasing step sizes")
    p.add_argument("--reference", help="expression for the exact derivative (default: Richardson estimate)")
    return parser


# ---------------------------------------------------------------------------
# inputs


def _settings(args) -> dict:
    cfg = dict(CONFIG_DEFAULTS)
    if args.config:
        with open(args.config) as fh:
            loaded = json.load(fh)
        unknown = set(loaded) - set(CONFIG_DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key in CONFIG_DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def _load_chain(spec: str) -> Chain:
    if os.path.exists(spec):
        with open(spec) as fh:
            return chain_from_json(json.load(fh))
    if spec in NAMED_CHAINS:
        return chain_from_json(NAMED_CHAINS[spec])
    raise UsageError(f"--chain {spec!r} is neither a file nor a named chain ({', '.join(NAMED_CHAINS)})")


def _block(values: list[float]) -> Block:
    if len(values) % 2:
        raise UsageError("--block needs an even number of values a1,b1,a2,b2,...")
    return Block.from_flat(values)


def _infer_dim(args, region_dim: int | None) -> int:
    if args.dim is not None:
        return args.dim
    if getattr(args, "at", None) is not None:
        return len(args.at)
    if region_dim is not None:
        return region_dim
    found = [int(v) for v in re.findall(r"(?<![A-Za-z0-9_])d?x(\d+)", args.form)]
    if not found:
        raise UsageError("cannot infer the dimension; pass --dim")
    return max(found)


def _field(args, cfg, region_dim=None) -> tuple[FormField, dict]:
    if args.cloud:
        with open(args.cloud) as fh:
            cloud = DataCloud.from_json(json.load(fh))
        if args.degree is not None and args.degree != cloud.degree:
            raise UsageError(f"--degree {args.degree} disagrees with the cloud's degree {cloud.degree}")
        field = field_from_cloud(cloud, matching=cfg["matching"])
        return field, {"cloud": args.cloud, "n": cloud.n, "degree": cloud.degree}
    n = _infer_dim(args, region_dim)
    expr = parse_form(args.form, n, args.degree)
    return expr.to_field(), {"form": args.form, "n": n, "degree": expr.degree}


def _region(args) -> tuple[Chain, dict]:
    if args.chain is not None:
        return _load_chain(args.chain), {"chain": args.chain}
    block = _block(args.block)
    return Chain.of(SingularBlock.inclusion(block)), {"block": block.to_json()}


def _deriv_config(cfg, eps=None) -> DerivConfig:
    return DerivConfig(
        eps=cfg["eps"] if eps is None else eps,
        aspect_bound=cfg["aspect_bound"],
        face_subdivisions=cfg["subdiv"] or 1,
        richardson_levels=cfg["richardson"] or 0,
        jacobian_step=cfg["jacobian_step"],
    )


def _quadrature(cfg) -> QuadratureSpec:
    return QuadratureSpec(subdivisions=cfg["subdiv"] or 32, rtol=cfg["rtol"], jacobian_step=cfg["jacobian_step"])


def _point(args, n) -> np.ndarray:
    x = np.asarray(args.at, dtype=float)
    if x.shape != (n,):
        raise UsageError(f"--at has {x.size} coordinates, the form lives on R^{n}")
    return x


# ---------------------------------------------------------------------------
# commands


def cmd_derive(args, cfg):
    field, inputs = _field(args, cfg)
    x = _point(args, field.n)
    dcfg = _deriv_config(cfg)
    inputs.update(at=x.tolist(), config={"eps": dcfg.eps_at(x), "face_subdivisions": dcfg.face_subdivisions, "richardson_levels": dcfg.richardson_levels})
    if dcfg.richardson_levels:
        tensor, err = exterior_derivative_refined(field, x, dcfg)
        return inputs, {**tensor.to_json(), "error_estimate": err}
    return inputs, exterior_derivative_at(field, x, dcfg).to_json()


def cmd_integrate(args, cfg):
    chain, region = _region(args)
    field, inputs = _field(args, cfg, chain.n)
    q = _quadrature(cfg)
    inputs.update(region, config={"subdivisions": q.subdivisions, "rtol": q.rtol})
    return inputs, {"value": integrate_over_chain(field, chain, q)}


def cmd_stokes(args, cfg):
    chain, region = _region(args)
    field, inputs = _field(args, cfg, chain.n)
    q = _quadrature(cfg)
    dcfg = _deriv_config(cfg)
    dcfg = DerivConfig(dcfg.eps, dcfg.aspect_bound, 1, 0, dcfg.jacobian_step)
    inputs.update(region, config={"subdivisions": q.subdivisions, "rtol": q.rtol, "eps": dcfg.eps})
    lhs, rhs = stokes_sides(field, chain, dcfg, q)
    return inputs, {"lhs": lhs, "rhs": rhs, "residual": abs(lhs - rhs)}


def cmd_mvt(args, cfg):
    block = _block(args.block)
    field, inputs = _field(args, cfg, block.dim)
    q = QuadratureSpec(subdivisions=cfg["subdiv"] or 16, jacobian_step=cfg["jacobian_step"])
    dcfg = None if cfg["eps"] is None else DerivConfig(eps=cfg["eps"])
    inputs.update(block=block.to_json(), config={"subdivisions": q.subdivisions, "max_depth": cfg["max_depth"], "tol": cfg["tol"], "eps": cfg["eps"]})
    res = mvt_locate(field, block, dcfg, q, max_depth=int(cfg["max_depth"]), tol=cfg["tol"])
    return inputs, {
        "xi": res.xi.tolist(),
        "target": res.target,
        "attained": res.attained,
        "depth": res.depth,
        "residual": res.residual,
        "levels": [{"block": lv.block.to_json(), "average": lv.average, "mismatch": lv.mismatch, "case": lv.case} for lv in res.levels],
    }


def cmd_dsq(args, cfg):
    field, inputs = _field(args, cfg)
    x = _point(args, field.n)
    outer, inner = DerivConfig(eps=cfg["eps_outer"]), DerivConfig(eps=cfg["eps_inner"])
    inputs.update(at=x.tolist(), config={"eps_outer": outer.eps, "eps_inner": inner.eps})
    tensor = d_squared(field, x, outer, inner)
    return inputs, {**tensor.to_json(), "residual": tensor.max_abs()}


def cmd_convergence(args, cfg):
    field, inputs = _field(args, cfg)
    x = _point(args, field.n)
    base = 1e-2 * max(1.0, float(np.max(np.abs(x))))
    eps_seq = cfg["eps_seq"] or [base / 2**i for i in range(5)]
    if args.reference:
        reference = parse_form(args.reference, field.n, field.degree + 1).evaluate(x)
        ref_kind = "expression"
    else:
        reference, _ = exterior_derivative_refined(field, x, DerivConfig(eps=min(eps_seq), richardson_levels=3))
        ref_kind = "richardson"
    inputs.update(at=x.tolist(), config={"eps_seq": list(eps_seq), "reference": args.reference or ref_kind})
    order = convergence_order(field, x, eps_seq, reference)
    errors = stencil_errors(field, x, eps_seq, reference)
    return inputs, {"order": order, "errors": errors.tolist(), "reference": reference.to_json()}


COMMANDS = {
    "derive": cmd_derive,
    "integrate": cmd_integrate,
    "stokes": cmd_stokes,
    "mvt": cmd_mvt,
    "dsq": cmd_dsq,
    "convergence": cmd_convergence,
}


# ---------------------------------------------------------------------------
# output


def _clean(obj):
    """Make a report JSON-safe: numpy scalars to Python, -0.0 to 0.0, non-finite to strings."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            return repr(v)
        return v + 0.0
    return obj


def dumps(report: dict) -> str:
    # float repr is the shortest string that round-trips binary64
    return json.dumps(_clean(report), indent=2, allow_nan=False) + "\n"


def _emit_error(exc, code: int, command: str | None) -> int:
    if isinstance(exc, FluxFormError):
        payload = exc.payload()
    else:
        payload = {"type": type(exc).__name__, "message": str(exc)}
    sys.stderr.write(dumps({"command": command, "error": payload, "exit_code": code, "version": __version__}))
    return code


def run(argv=None) -> tuple[int, dict | None]:
    """Run the CLI and return ``(exit_code, report)``; errors are written to stderr."""
    command = None
    try:
        args = build_parser().parse_args(argv)
        command = args.command
        cfg = _settings(args)
        start = time.perf_counter()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            inputs, outputs = COMMANDS[command](args, cfg)
        elapsed = time.perf_counter() - start
        report = {
            "command": command,
            "inputs": inputs,
            "outputs": outputs,
            "warnings": [str(w.message) for w in caught],
            "timings": {"total_s": elapsed} if args.timings else None,
            "version": __version__,
        }
        text = dumps(report)
        sys.stdout.write(text)
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text)
        return 0, report
    except (UsageError, FormSyntaxError, argparse.ArgumentTypeError) as exc:
        return _emit_error(exc, EXIT_USAGE, command), None
    except SamplingError as exc:
        return _emit_error(exc, EXIT_SAMPLING, command), None
    except BracketingError as exc:
        return _emit_error(exc, EXIT_BRACKETING, command), None
    except (FluxFormError, ValueError, OSError, KeyError) as exc:
        return _emit_error(exc, 1, command), None


def main(argv=None) -> int:
    return run(argv)[0]


if __name__ == "__main__":
    sys.exit(main())
