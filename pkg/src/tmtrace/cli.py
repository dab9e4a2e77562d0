"""Command-line front end: deterministic reports over every package op.

Output contract: JSON is canonical (sorted keys, two-space indent, decimal
strings that round-trip at the working precision), CSV uses standard
quoting, and a fixed configuration always produces byte-identical bytes.
Exit status: 0 when everything requested verified, 2 when the run finished
but some assertion was flagged (failed certificate, widened band edge,
ratio under the floor), 1 on hard errors including usage errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import dataclass
from fractions import Fraction

from .cantor import build_tree, dimension_lower_bound
from .constants import K_DEFAULT
from .germ import (
    Closeness,
    closeness,
    initial_germ,
    verify_constants,
)
from .reals import PrecisionError, context, parse_exact, real_str, to_real
from .rootfind import NotFoundError, UnresolvedWindowError, isolate_zeros
from .spectrum import approximant_bands, box_dimension, sigma_points
from .tracepoly import ModelParams, eval_trace

__all__ = ["RunConfig", "parse_args", "main"]

_SUBCOMMANDS = (
    "eval",
    "roots",
    "germ-check",
    "cantor-build",
    "dim-bound",
    "constants-check",
    "bands",
    "sigma",
    "boxdim",
)

_PLOT_CAPABLE = {"cantor-build", "bands", "sigma"}


@dataclass
class RunConfig:
    """Parsed invocation: every knob a subcommand might read.

    lam and x stay strings until a handler parses them exactly, so a bad
    value is diagnosed with the flag name attached.
    """

    lam: str = "3"
    precision_bits: int = 256
    K: int = K_DEFAULT
    depth: int = 2
    order: int = 40
    n: int | None = None
    k: int | None = None
    x: str | None = None
    window: tuple[str, str] | None = None
    output_format: str | None = None
    emit_plot_data: str | None = None
    side: str | None = None
    resolution: int = 256
    scales: str | None = None


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage problems are errors (exit 1), not flagged assertions (exit 2)
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(
        prog="tmtrace",
        description="Trace-polynomial tangency toolkit: certified zeros, "
        "cosine-closeness certificates, nested interval trees, band "
        "spectra, and box-counting reports.",
    )
    p.add_argument("subcommand", choices=_SUBCOMMANDS)
    p.add_argument("--lambda", dest="lam", default="3",
                   help="coupling constant, exact decimal or p/q (default 3)")
    p.add_argument("--precision-bits", type=int, default=None,
                   help="working precision (default 256 or TM_PRECISION_BITS)")
    p.add_argument("--K", type=int, default=K_DEFAULT,
                   help=f"tree schedule step (default {K_DEFAULT})")
    p.add_argument("--depth", type=int, default=2,
                   help="tree depth in generations (default 2)")
    p.add_argument("--order", type=int, default=40,
                   help="jet order for certificates (default 40)")
    p.add_argument("--n", type=int, default=None,
                   help="trace index (eval/roots/bands); level cap for sigma")
    p.add_argument("--k", type=int, default=None,
                   help="iterate count for germ-check (default: --K)")
    p.add_argument("--x", default=None,
                   help="evaluation point, exact decimal or p/q")
    p.add_argument("--window", default=None, metavar="LO:HI",
                   help="search window, exact decimals separated by a colon")
    p.add_argument("--format", dest="output_format",
                   choices=("json", "csv"), default=None)
    p.add_argument("--emit-plot-data", metavar="PATH", default=None,
                   help="write plot samples to PATH (cantor-build/bands/sigma)")
    p.add_argument("--side", choices=("left", "right"), default=None,
                   help="side of the anchor the tree grows on (default right)")
    p.add_argument("--resolution", type=int, default=256,
                   help="band scan sample count (default 256)")
    p.add_argument("--scales", default=None,
                   help="comma-separated box widths for boxdim "
                   "(default: derived from the tree generations)")
    return p


def parse_args(argv) -> tuple[str, RunConfig]:
    # "--window -3:3": argparse reads the value as an unknown flag, so glue
    # it into --window=-3:3 form first
    argv = list(argv)
    merged = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok == "--window" and i + 1 < len(argv):
            merged.append(f"--window={argv[i + 1]}")
            i += 2
        else:
            merged.append(tok)
            i += 1
    ns = _build_parser().parse_args(merged)
    bits = ns.precision_bits
    if bits is None:
        env = os.environ.get("TM_PRECISION_BITS")
        if env is not None:
            try:
                bits = int(env)
            except ValueError:
                raise _UsageError(
                    f"TM_PRECISION_BITS must be an integer, got {env!r}"
                )
        else:
            bits = 256
    window = None
    if ns.window is not None:
        parts = ns.window.split(":")
        if len(parts) != 2:
            raise _UsageError("--window must be LO:HI")
        window = (parts[0], parts[1])
    cfg = RunConfig(
        lam=ns.lam,
        precision_bits=bits,
        K=ns.K,
        depth=ns.depth,
        order=ns.order,
        n=ns.n,
        k=ns.k,
        x=ns.x,
        window=window,
        output_format=ns.output_format,
        emit_plot_data=ns.emit_plot_data,
        side=ns.side,
        resolution=ns.resolution,
        scales=ns.scales,
    )
    return ns.subcommand, cfg


def _exact(field: str, text: str) -> Fraction:
    try:
        return parse_exact(text)
    except (ValueError, TypeError, ZeroDivisionError) as exc:
        raise _UsageError(f"--{field}: cannot parse {text!r} exactly ({exc})")


def _params(cfg: RunConfig) -> ModelParams:
    lam = _exact("lambda", cfg.lam)
    if cfg.precision_bits < 64:
        raise _UsageError("--precision-bits must be >= 64")
    return ModelParams(lam, cfg.precision_bits)


def _need(cfg: RunConfig, field: str):
    val = getattr(cfg, "lam" if field == "lambda" else field)
    if val is None:
        raise _UsageError(f"--{field} is required for this subcommand")
    return val


def _window_or_default(cfg: RunConfig, params: ModelParams):
    if cfg.window is not None:
        return _exact("window", cfg.window[0]), _exact("window", cfg.window[1])
    lam = params.lam_exact
    return -abs(lam) - 3, abs(lam) + 3


def _json_bytes(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _csv_text(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerows(rows)
    return buf.getvalue()


def _render(cfg, *, json_obj, csv_rows=None, text_lines=None, default="json"):
    fmt = cfg.output_format or default
    if fmt == "csv":
        if csv_rows is None:
            raise _UsageError("this subcommand has no CSV form")
        return _csv_text(csv_rows)
    if fmt == "text":
        return "\n".join(text_lines) + "\n"
    return _json_bytes(json_obj)


# ---------------------------------------------------------------------------
# subcommand handlers: each returns (exit_code, stdout_text, plot_lines|None)


def _cmd_eval(cfg: RunConfig):
    params = _params(cfg)
    n = int(_need(cfg, "n"))
    x = _exact("x", _need(cfg, "x"))
    value = eval_trace(n, x, params)
    out = _render(
        cfg,
        json_obj={
            "n": n,
            "x": cfg.x,
            "lambda": cfg.lam,
            "precision_bits": cfg.precision_bits,
            "value": real_str(value),
        },
        csv_rows=[["n", "x", "value"], [str(n), cfg.x, real_str(value)]],
        text_lines=[real_str(value)],
        default="text",
    )
    return 0, out, None


def _cmd_roots(cfg: RunConfig):
    params = _params(cfg)
    n = int(_need(cfg, "n"))
    lo, hi = _window_or_default(cfg, params)
    encs = isolate_zeros(n, (to_real(lo, cfg.precision_bits),
                             to_real(hi, cfg.precision_bits)), params)
    rows = [["n", "lo", "hi", "width", "certified"]]
    for e in encs:
        rows.append([str(e.n), real_str(e.lo), real_str(e.hi),
                     real_str(e.width), str(e.certified)])
    out = _render(
        cfg,
        json_obj={
            "n": n,
            "lambda": cfg.lam,
            "window": [str(lo), str(hi)],
            "count": len(encs),
            "zeros": [e.to_json_dict() for e in encs],
        },
        csv_rows=rows,
    )
    code = 0 if all(e.certified for e in encs) else 2
    return code, out, None


def _cmd_germ_check(cfg: RunConfig):
    params = _params(cfg)
    k = cfg.k if cfg.k is not None else cfg.K
    if k < 0:
        raise _UsageError("--k must be >= 0")
    germ = initial_germ(params)
    level, checks = closeness(germ, cfg.order, params, k=k)
    best = checks[
        level.value if level is not Closeness.NONE else Closeness.WEAK.value
    ]
    pair = (germ.pair[0] + k, germ.pair[1] + k)
    cert = {
        "x0": real_str(germ.x0),
        "rho": real_str(germ.scale(pair[1])),
        "pair": list(pair),
        "k": k,
        "delta": real_str(best.delta),
        "beta": best.beta,
        "order_checked": best.order_checked,
        "margin": real_str(best.margin),
        "level": level.value,
        "levels": {
            name: {
                "passed": chk.passed,
                "margin": real_str(chk.margin),
            }
            for name, chk in checks.items()
        },
    }
    rows = [["field", "value"]] + [
        [key, json.dumps(val) if isinstance(val, dict) else str(val)]
        for key, val in sorted(cert.items())
        if key != "levels"
    ]
    out = _render(cfg, json_obj=cert, csv_rows=rows)
    return (0 if level is not Closeness.NONE else 2), out, None


def _cmd_cantor_build(cfg: RunConfig):
    params = _params(cfg)
    tree = build_tree(
        params, cfg.K, cfg.depth,
        side=cfg.side, certificate_order=cfg.order,
    )
    out = _render(
        cfg,
        json_obj=tree.to_json_dict(),
        csv_rows=tree.to_csv_rows(),
    )
    plot = tree.plot_data() if cfg.emit_plot_data else None
    code = 0 if (tree.verified() and not tree.problems) else 2
    return code, out, plot


def _cmd_dim_bound(cfg: RunConfig):
    if cfg.K < 4:
        raise _UsageError("--K must be >= 4")
    bound = dimension_lower_bound(cfg.K)
    formula = "ln2/(K ln 2.1)"
    out = _render(
        cfg,
        json_obj={"K": cfg.K, "bound": bound, "formula": formula},
        csv_rows=[["K", "bound", "formula"], [str(cfg.K), repr(bound), formula]],
        text_lines=[repr(bound), formula],
        default="text",
    )
    return 0, out, None


def _cmd_constants_check(cfg: RunConfig):
    report = verify_constants()
    lines = []
    for chk in report["checks"]:
        lines.append(
            f"{chk['name']}: {chk['lhs']} {chk['relation']} {chk['rhs']} "
            f"-> {chk['holds']}"
        )
    lines.append(f"all_hold: {report['all_hold']}")
    rows = [["name", "lhs", "relation", "rhs", "holds"]] + [
        [c["name"], c["lhs"], c["relation"], c["rhs"], str(c["holds"])]
        for c in report["checks"]
    ]
    out = _render(
        cfg, json_obj=report, csv_rows=rows, text_lines=lines, default="text"
    )
    return (0 if report["all_hold"] else 2), out, None


def _cmd_bands(cfg: RunConfig):
    params = _params(cfg)
    n = int(_need(cfg, "n"))
    lo, hi = _window_or_default(cfg, params)
    bands = approximant_bands(n, (lo, hi), params, cfg.resolution)
    rows = [["n", "lo", "hi"]] + [b.to_csv_row() for b in bands]
    out = _render(
        cfg,
        json_obj={
            "n": n,
            "lambda": cfg.lam,
            "window": [str(lo), str(hi)],
            "resolution": cfg.resolution,
            "bands": [b.to_json_dict() for b in bands],
        },
        csv_rows=rows,
    )
    plot = None
    if cfg.emit_plot_data:
        plot = ["# band n x h_n(x)"]
        with context(cfg.precision_bits):
            for i, b in enumerate(bands):
                stepw = (b.hi - b.lo) / 64
                for j in range(65):
                    x = b.lo + stepw * j if j < 64 else b.hi
                    h = eval_trace(n, x, params, verify=False)
                    plot.append(f"{i} {n} {real_str(x)} {real_str(h)}")
    code = 2 if any(b.flagged for b in bands) else 0
    return code, out, plot


def _cmd_sigma(cfg: RunConfig):
    params = _params(cfg)
    n_max = int(_need(cfg, "n"))
    lo, hi = _window_or_default(cfg, params)
    sample = sigma_points(n_max, (lo, hi), params)
    out = _render(
        cfg,
        json_obj=sample.to_json_dict(),
        csv_rows=sample.to_csv_rows(),
    )
    plot = None
    if cfg.emit_plot_data:
        plot = ["# i levels x width"]
        for i, (enc, lv) in enumerate(zip(sample.points, sample.levels)):
            plot.append(
                f"{i} {';'.join(str(v) for v in lv)} "
                f"{real_str(enc.mid)} {real_str(enc.width)}"
            )
    return 0, out, plot


def _cmd_boxdim(cfg: RunConfig):
    params = _params(cfg)
    tree = build_tree(
        params, cfg.K, cfg.depth,
        side=cfg.side, certificate_order=cfg.order,
    )
    points = [enc.mid for _, _, enc in tree.endpoint_slots()]
    if len(points) < 100:
        raise _UsageError(
            f"the depth-{cfg.depth} tree has only {len(points)} endpoint "
            f"slots; box counting needs at least 100 (--depth 5 gives 126)"
        )
    if cfg.scales is not None:
        scales = [_exact("scales", s) for s in cfg.scales.split(",")]
    else:
        scales = tree.box_scales()
    report = box_dimension(points, scales)
    report["tree"] = tree.dimension_report()
    out = _render(
        cfg,
        json_obj=report,
        csv_rows=[["eps", "count", "count_offset"]]
        + [[str(e), str(c), str(co)] for e, c, co in report["counts"]],
    )
    return (2 if tree.problems else 0), out, None


_HANDLERS = {
    "eval": _cmd_eval,
    "roots": _cmd_roots,
    "germ-check": _cmd_germ_check,
    "cantor-build": _cmd_cantor_build,
    "dim-bound": _cmd_dim_bound,
    "constants-check": _cmd_constants_check,
    "bands": _cmd_bands,
    "sigma": _cmd_sigma,
    "boxdim": _cmd_boxdim,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        sub, cfg = parse_args(argv)
        if cfg.emit_plot_data and sub not in _PLOT_CAPABLE:
            raise _UsageError(
                f"--emit-plot-data is not available for {sub!r} "
                f"(supported: {', '.join(sorted(_PLOT_CAPABLE))})"
            )
        code, out, plot = _HANDLERS[sub](cfg)
        sys.stdout.write(out)
        if cfg.emit_plot_data and plot is not None:
            try:
                with open(cfg.emit_plot_data, "w") as fh:
                    fh.write("\n".join(plot) + "\n")
            except OSError as exc:
                sys.stderr.write(
                    f"error: cannot write plot data to "
                    f"{cfg.emit_plot_data!r}: {exc}\n"
                )
                return 1
        if code == 2:
            _report_flags(sub, out)
        return code
    except _UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return 1
    except (
        NotFoundError,
        UnresolvedWindowError,
        PrecisionError,
        ArithmeticError,
        ValueError,
    ) as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return 1


def _report_flags(sub: str, out: str):
    # surface the flagged items on stderr so exit status 2 is self-explaining
    try:
        obj = json.loads(out)
    except json.JSONDecodeError:
        return
    problems = (
        obj.get("problems")
        or obj.get("dimension", {}).get("problems")
        or obj.get("tree", {}).get("problems")
    )
    if problems:
        for p in problems:
            sys.stderr.write(f"flagged: {p}\n")


if __name__ == "__main__":
    sys.exit(main())
