"""Command-line front end. Every subcommand writes one CSV table."""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
import tempfile
from typing import Iterable, Optional, Sequence

import numpy as np

from . import analysis
from .distributions import (
    MixtureWeightLaw,
    PoissonLogNormalQC,
    UnsupportedError,
    VectorDiffeomixture,
    mixture_weight_grid,
    plqc_grad,
)
from .numerics import DomainError
from .rng import stream
from .schemes import (
    ResourceError,
    gauss_hermite_pushforward,
    lognormal_law,
    quantile_midpoint_bounded,
    quantile_midpoint_halfline,
    sqrt_quantile_midpoint,
    uniform_law,
)
from .transforms import identity

SCHEME_ALIASES = {
    "quant-midpoint": "quantile-midpoint",
    "quantile-midpoint": "quantile-midpoint",
    "sqrt-quant": "sqrt-quantile",
    "sqrt-quantile": "sqrt-quantile",
    "hermite": "hermite-pushforward",
    "hermite-pushforward": "hermite-pushforward",
    "cubature": "cubature",
}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if v == 0.0:
            return "0"
        return f"{v:.9g}"
    return str(v)


def render_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        if len(r) != len(header):
            raise ValueError("row width does not match the header")
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def write_atomic(path: Optional[str], text: str) -> None:
    """Write to ``path`` via a temporary file and rename; ``None`` or '-' means stdout."""
    if path is None or path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def gnuplot_script(kind: str, data_path: str, header: Sequence[str]) -> str:
    lines = ["set datafile separator ','", "set key autotitle columnhead"]
    src = f"'{data_path}'"
    if kind == "points":
        lines += ["set xlabel 'z'", "set ylabel 'w'", f"plot {src} using 2:3 with impulses lw 2"]
    elif kind == "pmf":
        lines += ["set xlabel 'x'", "set style fill solid 0.5", f"plot {src} using 1:2 with boxes"]
    elif kind == "density":
        lines += ["set xlabel 'x'", f"plot {src} using 1:2 with lines"]
    elif kind == "sample":
        if len(header) >= 3:
            lines += [f"plot {src} using 2:3 with dots"]
        else:
            lines += ["binwidth = 0.1", "bin(x) = binwidth * floor(x / binwidth)",
                      f"plot {src} using (bin($2)):(1.0) smooth freq with boxes"]
    elif kind == "sweep":
        lines += ["set logscale y", "set xlabel 'n'", "set ylabel 'tv'",
                  f"plot {src} using 3:8 with points"]
    else:
        lines += [f"plot {src} using 0:3 with points"]
    return "\n".join(lines) + "\n"


def _emit(args, kind: str, header: Sequence[str], rows) -> None:
    text = render_csv(header, rows)
    write_atomic(args.out, text)
    if args.gnuplot:
        if args.out in (None, "-"):
            raise UsageError("--gnuplot needs --out pointing at a file")
        write_atomic(args.gnuplot, gnuplot_script(kind, args.out, header))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of integers, got {text!r}") from None


def _mixture_law(pis: list[float], sigma: float, bias: str, softmax: bool) -> MixtureWeightLaw:
    if sigma <= 0:
        raise UsageError("--sigma must be positive")
    arr = np.asarray(pis, dtype=float)
    if bias == "logit-shift":
        arr = arr / sigma
    if softmax:
        return MixtureWeightLaw(arr, sigma, mode="softmax")
    if len(arr) != 1:
        raise UsageError("sigmoid mode takes a single --pi")
    return MixtureWeightLaw(float(arr[0]), sigma)


def cmd_points(args) -> int:
    scheme = SCHEME_ALIASES.get(args.scheme)
    if scheme is None:
        raise UsageError(f"unknown scheme {args.scheme!r}")
    dist, n = args.dist, args.n
    if dist == "sigmoid-normal":
        grid = mixture_weight_grid(_mixture_law([args.pi], args.sigma, args.bias, False), n, scheme)
    elif scheme == "quantile-midpoint" and dist == "uniform":
        grid = quantile_midpoint_bounded(uniform_law(), n)
    elif scheme == "quantile-midpoint" and dist == "lognormal":
        if args.sigma <= 0:
            raise UsageError("--sigma must be positive")
        grid = quantile_midpoint_halfline(lognormal_law(args.mu, args.sigma), n)
    elif scheme == "sqrt-quantile" and dist == "uniform":
        grid = sqrt_quantile_midpoint(lambda z: np.ones_like(np.asarray(z, dtype=float)), (0.0, 1.0), n)
    elif scheme == "hermite-pushforward" and dist == "std-normal":
        grid = gauss_hermite_pushforward(n, identity())
    else:
        raise UsageError(f"scheme {args.scheme} is not available for --dist {dist}")
    rows = [(i + 1, z, w) for i, (z, w) in enumerate(zip(grid.values, grid.weights))]
    _emit(args, "points", ["index", "z", "w"], rows)
    return 0


def cmd_pmf(args) -> int:
    if args.sigma <= 0:
        raise UsageError("--sigma must be positive")
    if args.xmax < 0:
        raise UsageError("--xmax must be nonnegative")
    d = PoissonLogNormalQC(args.mu, args.sigma, args.n)
    xs = np.arange(args.xmax + 1)
    q = d.pmf(xs)
    dmu, dsig = plqc_grad(d, xs)
    rows = [(int(x), q[i], dmu[i], dsig[i]) for i, x in enumerate(xs)]
    _emit(args, "pmf", ["x", "q", "dq_dmu", "dq_dsigma"], rows)
    return 0


def _parse_components(locs: str, scales: Optional[str]):
    comps = [c for c in locs.split(";") if c.strip()]
    if len(comps) < 2:
        raise UsageError("--locs needs at least two components separated by ';'")
    mus = [_floats(c) for c in comps]
    dims = {len(m) for m in mus}
    if len(dims) != 1:
        raise UsageError("components have inconsistent dimensions")
    d = dims.pop()
    if scales is None:
        ls = [1.0] * len(mus)
    else:
        ls = _floats(scales)
        if len(ls) != len(mus):
            raise UsageError("--scales needs one value per component")
    if any(s <= 0 for s in ls):
        raise UsageError("--scales must be positive")
    return np.array(mus), np.array([s * np.eye(d) for s in ls])


def _build_vdm(args) -> VectorDiffeomixture:
    scheme = SCHEME_ALIASES.get(args.scheme)
    if scheme is None:
        raise UsageError(f"unknown scheme {args.scheme!r}")
    locs, scales = _parse_components(args.locs, args.scales)
    pis = _floats(args.pi)
    m = len(locs) - 1
    softmax = m > 1 or scheme == "cubature"
    if len(pis) != m:
        raise UsageError(f"{len(locs)} components need {m} --pi value(s)")
    law = _mixture_law(pis, args.sigma, args.bias, softmax)
    return VectorDiffeomixture(mixture_weight_grid(law, args.n, scheme), locs, scales)


def cmd_vdm(args) -> int:
    v = _build_vdm(args)
    if args.mode == "density":
        if v.dim != 1:
            raise UsageError("density output is limited to d = 1")
        xs = np.linspace(args.xmin, args.xmax, args.grid)
        q = v.density(xs)
        _emit(args, "density", ["x", "q"], list(zip(xs, q)))
    else:
        x = v.sample(stream(args.seed, "vdm-sample"), args.count)
        header = ["k"] + [f"x{i + 1}" for i in range(v.dim)]
        _emit(args, "sample", header, [(k + 1, *row) for k, row in enumerate(x)])
    return 0


_CONFIG_KEYS = {
    "pis": _floats, "sigmas": _floats, "ns": _ints, "mus": _floats,
    "dim": int, "reference_n": int, "schemes": None, "bias": str, "reference_scheme": None,
}


def parse_sweep_config(text: str) -> dict:
    """Flat ``key = value`` lines; lists are comma-separated; '#' starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONFIG_KEYS:
            raise UsageError(f"config line {lineno}: unknown key {key!r}")
        if key == "schemes":
            names = [s.strip() for s in value.split(",") if s.strip()]
            out[key] = tuple(_scheme(s) for s in names)
        elif key == "reference_scheme":
            out[key] = _scheme(value)
        else:
            try:
                out[key] = _CONFIG_KEYS[key](value)
            except ValueError:
                raise UsageError(f"config line {lineno}: bad value for {key}") from None
    return out


def _scheme(name: str) -> str:
    if name not in SCHEME_ALIASES:
        raise UsageError(f"unknown scheme {name!r}")
    return SCHEME_ALIASES[name]


def _sweep_config(args) -> analysis.SweepConfig:
    base = analysis.SweepConfig.standard() if args.paper else analysis.SweepConfig()
    fields = {}
    if args.config:
        with open(args.config) as f:
            fields.update(parse_sweep_config(f.read()))
    for key, conv in (("pis", _floats), ("sigmas", _floats), ("ns", _ints), ("mus", _floats)):
        val = getattr(args, key)
        if val is not None:
            fields[key] = tuple(conv(val))
    if args.schemes is not None:
        fields["schemes"] = tuple(_scheme(s) for s in args.schemes.split(","))
    for key in ("dim", "reference_n", "bias"):
        val = getattr(args, key)
        if val is not None:
            fields[key] = val
    params = {k: getattr(base, k) for k in base.__dataclass_fields__}
    params.update(fields)
    try:
        return analysis.SweepConfig(**params)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_sweep(args) -> int:
    cfg = _sweep_config(args)
    rows = analysis.run_sweep(cfg, self_check=not args.no_self_check)
    header = ["pi", "sigma", "n", "mu", "scheme", "kl_q_p", "kl_p_q", "tv", "error"]
    table = [
        (r.pi, r.sigma, r.n, r.mu, r.scheme,
         *(("", "", "") if not r.ok else (r.kl_q_p, r.kl_p_q, r.tv)), r.error or "")
        for r in rows
    ]
    _emit(args, "sweep", header, table)
    s = analysis.summarize(rows)
    summary = [("scheme", name, "", v["kl_q_p"], v["kl_p_q"], v["tv"]) for name, v in s["scheme"].items()]
    summary += [("n", name, n, "", "", tv) for (n, name), tv in s["tv_by_n"].items()]
    text = render_csv(["group", "scheme", "n", "kl_q_p", "kl_p_q", "tv"], summary)
    if args.summary:
        write_atomic(args.summary, text)
    else:
        sys.stderr.write(text)
    return 0 if all(r.ok for r in rows) else 1


def cmd_gradcheck(args) -> int:
    cases = sorted(analysis.GRAD_CASES) if args.case == "all" else [args.case]
    for c in cases:
        if c not in analysis.GRAD_CASES:
            raise UsageError(f"unknown case {c!r}; expected one of {sorted(analysis.GRAD_CASES)} or all")
    if args.k < 1:
        raise UsageError("--k must be positive")
    rows, ok = [], True
    for c in cases:
        r = analysis.run_gradcheck(c, args.k, args.seed, args.lam)
        ok &= r.passed
        e = r.estimate
        rows.append((c, e.value_mean, e.grad_mean, r.true_grad, e.stderr_grad, r.passed, r.known_biased))
    header = ["case", "value_mean", "grad_mean", "true_grad", "stderr_grad", "pass", "known_biased"]
    _emit(args, "gradcheck", header, rows)
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for every random stream (default 0)")
    common.add_argument("--format", choices=["csv"], default="csv")
    common.add_argument("--out", default=None, help="output file (default stdout)")
    common.add_argument("--gnuplot", default=None, metavar="PATH", help="also write a gnuplot script here")

    mix = argparse.ArgumentParser(add_help=False)
    mix.add_argument("--sigma", type=float, default=1.0)
    mix.add_argument("--bias", choices=["scaled", "logit-shift"], default="scaled",
                     help="scaled: logits sigma*pi + sigma*U; logit-shift: pi + sigma*U")

    p = argparse.ArgumentParser(prog="quadcompound", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("points", parents=[common, mix], help="quadrature points and weights")
    sp.add_argument("--scheme", required=True, help="quant-midpoint | sqrt-quant | hermite")
    sp.add_argument("--dist", required=True, choices=["uniform", "std-normal", "sigmoid-normal", "lognormal"])
    sp.add_argument("--pi", type=float, default=0.0)
    sp.add_argument("--mu", type=float, default=0.0, help="lognormal location")
    sp.add_argument("--n", type=int, required=True)
    sp.set_defaults(func=cmd_points)

    sp = sub.add_parser("pmf", parents=[common], help="Poisson-LogNormal pmf and its gradient")
    sp.add_argument("--mu", type=float, default=0.0)
    sp.add_argument("--sigma", type=float, default=1.0)
    sp.add_argument("--n", type=int, default=8)
    sp.add_argument("--xmax", type=int, default=20)
    sp.set_defaults(func=cmd_pmf)

    sp = sub.add_parser("vdm", parents=[common, mix], help="vector diffeomixture density or samples")
    sp.add_argument("mode", choices=["density", "sample"])
    sp.add_argument("--pi", default="0", help="comma-separated, one per non-reference component")
    sp.add_argument("--locs", default="3;-3", help="component means: ';' between components, ',' within")
    sp.add_argument("--scales", default=None, help="comma-separated scalar scale per component")
    sp.add_argument("--scheme", default="quant-midpoint")
    sp.add_argument("--n", type=int, default=10)
    sp.add_argument("--xmin", type=float, default=-10.0)
    sp.add_argument("--xmax", type=float, default=10.0)
    sp.add_argument("--grid", type=int, default=401, help="number of x values (density mode)")
    sp.add_argument("--count", type=int, default=1000, help="number of draws (sample mode)")
    sp.set_defaults(func=cmd_vdm)

    sp = sub.add_parser("sweep", parents=[common], help="compare schemes against a fine reference")
    sp.add_argument("--paper", action="store_true", help="the standard 80-configuration comparison")
    sp.add_argument("--config", default=None, help="file of key = value lines")
    sp.add_argument("--pis", default=None)
    sp.add_argument("--sigmas", default=None)
    sp.add_argument("--ns", default=None)
    sp.add_argument("--mus", default=None)
    sp.add_argument("--schemes", default=None)
    sp.add_argument("--dim", type=int, default=None)
    sp.add_argument("--reference-n", dest="reference_n", type=int, default=None)
    sp.add_argument("--bias", choices=["scaled", "logit-shift"], default=None)
    sp.add_argument("--summary", default=None, help="summary table path (default stderr)")
    sp.add_argument("--no-self-check", action="store_true")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("gradcheck", parents=[common], help="reparameterized gradient checks")
    sp.add_argument("--case", default="all", help="linear | quadratic | sigmoid-smooth | abs | step | all")
    sp.add_argument("--k", type=int, default=100_000)
    sp.add_argument("--lambda", dest="lam", type=float, default=None)
    sp.set_defaults(func=cmd_gradcheck)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"quadcompound: error: {exc}", file=sys.stderr)
        return 2
    except (DomainError, UnsupportedError, ResourceError, analysis.SelfCheckError) as exc:
        print(f"quadcompound: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
