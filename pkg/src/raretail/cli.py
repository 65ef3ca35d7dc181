"""Command-line interface: ``raretail {approx,sample,estimate,oracle,check,bench}``.

Configs and results are JSON; sweeps and sample dumps are CSV (or a small
binary layout for samples).  Exit codes: 0 ok, 1 other library error,
2 invalid config, 3 failed condition in strict mode or expansion outside
its regime, 4 oracle failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .errors import (ConditionFailure, ConfigError, DimensionError, ExpansionRegimeError,
                     MissingBoundsError, NotPositiveDefiniteError, NotSymmetricError, OracleError,
                     ProblemError, RareTailError)
from .expansion import expand
from .gauss import GaussBoundarySpec, gauss_prob
from .oracle import log_normal_tail, oracle_graph_mc, oracle_quadratic, oracle_radial
from .problem import (Constants, DerivBounds, GeneralProblem, NormalizedProblem, PsiSupBounds, QData,
                      check_conditions, check_conditions_gauss, normalize_general)
from .sampler import HatPiModel, is_estimate, sample, sample_general
from .symtensor import HMetric, as_symmetric

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_CONDITION, EXIT_ORACLE = 0, 1, 2, 3, 4
KINDS = ("gauss-flat", "gauss-quadratic", "gauss-quartic", "gauss-general", "general-local")
BENCH_COLUMNS = ("lambda", "log_p_approx0", "log_p_approx1", "log_p_oracle", "rel_err0", "rel_err1")
_LOG_TINY = math.log(np.finfo(float).tiny)


@dataclass
class ProblemConfig:
    kind: str
    d: int
    lam: float
    payload: dict
    seed: int = 0
    M: int = 1
    strict: bool = False
    order: int = 1
    c_psi: float = 1.0
    C34: float = 1.0
    raw: dict = field(default_factory=dict)


def _num(value, name, cast=float):
    if isinstance(value, bool) or value is None:
        raise ConfigError(f"{name} must be a number")
    try:
        out = cast(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number") from None
    if cast is float and not math.isfinite(out):
        raise ConfigError(f"{name} must be finite")
    return out


def _array(value, name, ndim=None):
    try:
        a = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a numeric array") from None
    if ndim is not None and a.ndim != ndim:
        raise ConfigError(f"{name} must have {ndim} dimensions")
    if not np.all(np.isfinite(a)):
        raise ConfigError(f"{name} has non-finite entries")
    return a


def parse_config(raw: dict) -> ProblemConfig:
    """Validate a config dictionary."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"kind must be one of {', '.join(KINDS)}")
    payload = {k: v for k, v in raw.items()
               if k not in ("kind", "d", "lambda", "seed", "M", "strict", "order", "c_psi", "C34")}
    lam = _num(raw.get("lambda"), "lambda") if kind != "general-local" or "lambda" in raw else math.nan
    if kind != "general-local" and not lam > 0:
        raise ConfigError("lambda must be positive")
    d = raw.get("d")
    if d is not None:
        d = _num(d, "d", int)
        if d < 1:
            raise ConfigError("d must be positive")
    order = _num(raw.get("order", 1), "order", int)
    if order not in (0, 1):
        raise ConfigError("order must be 0 or 1")
    seed = _num(raw.get("seed", 0), "seed", int)
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    cfg = ProblemConfig(kind=kind, d=d, lam=lam, payload=payload, seed=seed,
                        M=_num(raw.get("M", 1), "M", int), strict=bool(raw.get("strict", False)),
                        order=order, c_psi=_num(raw.get("c_psi", 1.0), "c_psi"),
                        C34=_num(raw.get("C34", 1.0), "C34"), raw=raw)
    if cfg.M < 1:
        raise ConfigError("M must be at least 1")
    # build once to validate payload completeness
    build(cfg)
    return cfg


def _bounds(payload: dict, d: int) -> Optional[PsiSupBounds]:
    b = payload.get("bounds")
    if b is None:
        return None
    if not isinstance(b, dict):
        raise ConfigError("bounds must be an object")
    if b.get("type") == "quartic":
        return PsiSupBounds.quartic(_num(b.get("S_norm"), "bounds.S_norm"), b.get("rho0"))
    rho0 = b.get("rho0")
    return PsiSupBounds(_num(b.get("delta2", 0.0), "bounds.delta2"), _num(b.get("delta3", 0.0), "bounds.delta3"),
                        _num(b.get("delta4", 0.0), "bounds.delta4"),
                        math.inf if rho0 is None else _num(rho0, "bounds.rho0"))


def _gauss_spec(cfg: ProblemConfig, lam: Optional[float] = None) -> GaussBoundarySpec:
    p, lam = cfg.payload, cfg.lam if lam is None else lam
    if cfg.kind == "gauss-flat":
        if cfg.d is None:
            raise ConfigError("gauss-flat needs d")
        return GaussBoundarySpec.flat(cfg.d, lam)
    if cfg.kind == "gauss-quadratic":
        if "B" in p:
            B = _array(p["B"], "B", 2)
        elif "eigenvalues" in p:
            B = np.diag(_array(p["eigenvalues"], "eigenvalues", 1))
        elif "beta" in p:
            if cfg.d is None:
                raise ConfigError("beta shorthand needs d")
            beta = p["beta"]
            if beta == "sqrt_lambda":
                beta = math.sqrt(lam)
            elif beta == "inv_d":
                beta = 1.0 / cfg.d
            B = _num(beta, "beta") * np.eye(cfg.d)
        else:
            raise ConfigError("gauss-quadratic needs B, eigenvalues or beta")
        _match_d(cfg, B.shape[0])
        return GaussBoundarySpec.quadratic(B, lam, p.get("rho0"))
    if cfg.kind == "gauss-quartic":
        if "radial_quartic" in p or p.get("S") == "radial-quartic":
            if cfg.d is None:
                raise ConfigError("radial-quartic shorthand needs d")
            scale = p.get("radial_quartic", p.get("scale", 1.0))
            return GaussBoundarySpec.radial_quartic(cfg.d, lam, _num(scale, "scale"), p.get("rho0"))
        if "S" not in p:
            raise ConfigError("gauss-quartic needs S or radial_quartic")
        S = _array(p["S"], "S", 4)
        _match_d(cfg, S.shape[0])
        return GaussBoundarySpec.quartic(S, lam, p.get("S_norm"), p.get("rho0"))
    if "psi2" not in p:
        raise ConfigError("gauss-general needs psi2")
    psi2 = _array(p["psi2"], "psi2", 2)
    _match_d(cfg, psi2.shape[0])
    psi3 = None if p.get("psi3") is None else _array(p["psi3"], "psi3", 3)
    psi4 = None if p.get("psi4") is None else _array(p["psi4"], "psi4", 4)
    return GaussBoundarySpec.general(psi2, psi3, psi4, _bounds(p, psi2.shape[0]), lam=lam, rho0=p.get("rho0"))


def _match_d(cfg: ProblemConfig, d: int) -> None:
    if cfg.d is not None and cfg.d != d:
        raise ConfigError(f"d = {cfg.d} does not match payload dimension {d}")


def _general_local(cfg: ProblemConfig) -> tuple[NormalizedProblem, Optional[DerivBounds]]:
    p = cfg.payload
    q = p.get("q")
    extra = {k: (None if p.get(k) is None else _array(p[k], k)) for k in ("w_xxy", "w_xxx", "w_xxxx")}
    if "general" in p:
        g = p["general"]
        if not isinstance(g, dict):
            raise ConfigError("general must be an object")
        try:
            gp = GeneralProblem(
                u_star=_array(g["u_star"], "u_star", 1),
                lambda_bar=_num(g["lambda_bar"], "lambda_bar"),
                grad_zbar=_array(g["grad_zbar"], "grad_zbar", 1),
                hess_zbar=_array(g["hess_zbar"], "hess_zbar", 2),
                grad_F=_array(g["grad_F"], "grad_F", 1),
                hess_F=_array(g["hess_F"], "hess_F", 2),
                F0=_num(g.get("F0", 0.0), "F0"),
                zbar0=_num(g.get("zbar0", 0.0), "zbar0"),
            )
        except KeyError as exc:
            raise ConfigError(f"general problem is missing {exc.args[0]}") from None
        d = gp.dim_total - 1
        qd = _qdata(q, d)
        prob = normalize_general(gp, q_data=qd, **extra)
    elif "normalized" in p:
        nrm = p["normalized"]
        if not isinstance(nrm, dict) or "H" not in nrm:
            raise ConfigError("normalized needs at least H")
        H = _array(nrm["H"], "H", 2)
        d = H.shape[0]
        lam = cfg.lam
        if not lam > 0:
            raise ConfigError("general-local with normalized data needs lambda")
        prob = NormalizedProblem(
            d=d, lam=lam, metric=HMetric.from_matrix(H), z0=_num(nrm.get("z0", 0.0), "z0"),
            psi2=as_symmetric(_array(nrm.get("psi2", np.zeros((d, d))), "psi2", 2), 2, d, "psi2"),
            w_yy=_num(nrm.get("w_yy", 0.0), "w_yy"), w_xy=_array(nrm.get("w_xy", np.zeros(d)), "w_xy", 1),
            q_data=_qdata(q, d), **{k: (None if v is None else as_symmetric(v, v.ndim, d, k)) for k, v in extra.items()},
        )
    else:
        raise ConfigError("general-local needs a general or normalized block")
    _match_d(cfg, prob.d)
    if cfg.kind == "general-local" and "lambda" in cfg.raw and "general" in p:
        raise ConfigError("lambda is derived from lambda_bar for general problems; omit it")
    db = None
    if p.get("deriv_bounds") is not None:
        try:
            db = DerivBounds.from_dict(dict(p["deriv_bounds"]))
        except TypeError:
            raise ConfigError("deriv_bounds must be an object") from None
    return prob, db


def _qdata(q, d: int) -> Optional[QData]:
    if q is None:
        return None
    if not isinstance(q, dict):
        raise ConfigError("q must be an object")
    return QData(_num(q.get("q0", 1.0), "q.q0"), _array(q.get("q_x", np.zeros(d)), "q.q_x", 1),
                 _num(q.get("q_y", 0.0), "q.q_y"), _array(q.get("q_xx", np.zeros((d, d))), "q.q_xx", 2))


def build(cfg: ProblemConfig):
    try:
        if cfg.kind == "general-local":
            return _general_local(cfg)
        return _gauss_spec(cfg)
    except (ConfigError, ExpansionRegimeError, ConditionFailure):
        raise
    except (ProblemError, DimensionError, NotSymmetricError, NotPositiveDefiniteError,
            MissingBoundsError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _clean(obj):
    """JSON-safe copy: arrays to lists, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def _prob(log_p: float):
    return math.exp(log_p) if log_p > _LOG_TINY else None


def _emit(result: dict, out=None) -> None:
    out = sys.stdout if out is None else out
    out.write(json.dumps(_clean(result), sort_keys=True, indent=2) + "\n")


def cmd_approx(cfg: ProblemConfig, order: int) -> dict:
    if cfg.kind == "general-local":
        prob, db = build(cfg)
        res = expand(prob, db, order=order, M=cfg.M, constants=Constants(cfg.C34, cfg.c_psi), strict=cfg.strict)
    else:
        res = gauss_prob(build(cfg), order, strict=cfg.strict, c_psi=cfg.c_psi)
    out = res.to_dict()
    out["prob"] = _prob(res.log_value)
    out["prob_if_representable"] = out["prob"]
    return out


def cmd_check(cfg: ProblemConfig) -> dict:
    if cfg.kind == "general-local":
        prob, db = build(cfg)
        if db is None:
            raise ConfigError("check for general-local needs deriv_bounds")
        rep = check_conditions(prob, db, cfg.M, Constants(cfg.C34, cfg.c_psi))
    else:
        spec = build(cfg)
        rep = check_conditions_gauss(spec.bounds, spec.d, spec.lam, cfg.c_psi)
    if cfg.strict and not rep.overall:
        raise ConditionFailure("validity conditions failed: " + ", ".join(rep.failed), rep)
    return {"conditions": rep.to_dict()}


def _model(cfg: ProblemConfig, seed: int) -> HatPiModel:
    if cfg.kind == "general-local":
        prob, _ = build(cfg)
        return HatPiModel.from_problem(prob, seed)
    spec = build(cfg)
    return HatPiModel.gaussian(spec.psi2, spec.lam, seed)


def cmd_sample(cfg: ProblemConfig, n: int, seed: int, out_path: Optional[str], fmt: str) -> dict:
    if n < 1:
        raise ConfigError("n must be at least 1")
    model = _model(cfg, seed)
    batch = sample_general(model, n) if model.frame is not None else sample(model, n)
    res = {"n": n, "seed": seed, "stream_count": batch.stream_count, "chunk": batch.chunk,
           "frame_applied": batch.frame_applied, "format": fmt, "out": out_path,
           "mean": batch.points.mean(axis=0)}
    if out_path is not None:
        if fmt == "csv":
            batch.to_csv(out_path)
        elif fmt == "bin":
            batch.to_binary(out_path)
        else:
            with open(out_path, "w") as fh:
                json.dump({"d": batch.d, "points": batch.points.tolist()}, fh)
    elif fmt == "json":
        res["points"] = batch.points
    return res


def _gauss_target(d: int):
    c = -0.5 * (d + 1) * math.log(2.0 * math.pi)
    return lambda u: c - 0.5 * np.sum(u * u, axis=1)


def _psi_poly(spec: GaussBoundarySpec):
    """Taylor polynomial of psi from its derivatives (exact for the built-in kinds)."""
    psi2, psi3, psi4 = spec.psi2, spec.psi3, spec.psi4

    def psi(x):
        v = 0.5 * np.einsum("ij,jk,ik->i", x, psi2, x)
        if psi3 is not None:
            v = v + np.einsum("ijk,ai,aj,ak->a", psi3, x, x, x) / 6.0
        if psi4 is not None:
            v = v + np.einsum("ijkl,ai,aj,ak,al->a", psi4, x, x, x, x) / 24.0
        return v

    return psi


def _in_gauss_event(spec: GaussBoundarySpec):
    psi = _psi_poly(spec)
    sl = math.sqrt(spec.lam)
    return lambda u: u[:, -1] >= sl + sl * psi(u[:, :-1] / sl)


def cmd_estimate(cfg: ProblemConfig, n: int, seed: int, variant: str) -> dict:
    if n < 1:
        raise ConfigError("n must be at least 1")
    if cfg.kind == "general-local":
        raise ConfigError("estimate needs a gauss-* kind (the target density must be known)")
    spec = build(cfg)
    model = HatPiModel.gaussian(spec.psi2, spec.lam, seed)
    est = is_estimate(model, _gauss_target(spec.d), _in_gauss_event(spec), n, variant)
    out = est.to_dict()
    out["prob"] = _prob(est.log_p_hat)
    out["seed"] = seed
    return out


def _radial_phi(spec: GaussBoundarySpec):
    """Radial profile when psi depends only on |x| (flat, B = beta I, radial quartic)."""
    d = spec.d
    if spec.psi3 is not None:
        return None
    B = spec.psi2
    beta = B[0, 0]
    if not np.allclose(B, beta * np.eye(d), rtol=0, atol=0):
        return None
    c4 = 0.0
    if spec.psi4 is not None:
        from .symtensor import sym_outer

        S = spec.psi4
        c4 = S[0, 0, 0, 0]
        if not np.allclose(S, c4 * sym_outer(np.eye(d)), rtol=1e-12, atol=1e-14):
            return None
    return lambda r: 0.5 * beta * r * r + c4 * r ** 4 / 24.0


def oracle_for(spec: GaussBoundarySpec, n: int = 10 ** 6, seed: int = 0, tol: float = 1e-10):
    """Reference log-probability: exact tail, radial quadrature, or Rao-Blackwellized MC."""
    if spec.kind == "flat":
        from .oracle import OracleResult

        return OracleResult(float(log_normal_tail(math.sqrt(spec.lam))), 0.0, "normal-tail", 1)
    phi = _radial_phi(spec)
    if phi is not None:
        return oracle_radial(phi, spec.d, spec.lam, tol)
    if spec.psi3 is None and spec.psi4 is None:
        return oracle_quadratic(spec.psi2, spec.d, spec.lam, max(n, 1000), seed)
    return oracle_graph_mc(_psi_poly(spec), spec.d, spec.lam, n, seed)


def cmd_oracle(cfg: ProblemConfig, n: int, seed: int, tol: float) -> dict:
    if cfg.kind == "general-local":
        raise ConfigError("oracle needs a gauss-* kind")
    if n < 1:
        raise ConfigError("n must be at least 1")
    res = oracle_for(build(cfg), n, seed, tol).to_dict()
    res["prob"] = _prob(res["log_p"])
    return res


def _rel(log_a: Optional[float], log_b: float) -> Optional[float]:
    if log_a is None:
        return None
    return abs(math.expm1(log_a - log_b))


def cmd_bench(cfg: ProblemConfig, grid: list, n: int, seed: int, tol: float) -> list:
    if cfg.kind == "general-local":
        raise ConfigError("bench needs a gauss-* kind")
    rows = []
    for lam in grid:
        spec = _gauss_spec(cfg, lam)
        r0 = gauss_prob(spec, 0)
        lfo = r0.log_value_first_order
        lo = oracle_for(spec, n, seed, tol).log_p
        rows.append({"lambda": lam, "log_p_approx0": r0.log_value, "log_p_approx1": lfo,
                     "log_p_oracle": lo, "rel_err0": _rel(r0.log_value, lo), "rel_err1": _rel(lfo, lo)})
    return rows


def bench_csv(rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCH_COLUMNS)
    for r in rows:
        w.writerow(["" if r[c] is None else repr(float(r[c])) for c in BENCH_COLUMNS])
    return buf.getvalue()


def _grid(text: str) -> list:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError("lambda grid must be a comma-separated list of numbers") from None
    if not vals or any(not v > 0 for v in vals):
        raise ConfigError("lambda grid must list positive numbers")
    return vals


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="raretail", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("approx", "sample", "estimate", "oracle", "check", "bench"):
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="path to a JSON problem config ('-' for stdin)")
        s.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        s.add_argument("--n", type=int, default=None, help="sample / Monte Carlo size")
        s.add_argument("--order", type=int, choices=(0, 1), default=None)
        s.add_argument("--strict", action="store_true", help="fail (exit 3) on violated conditions")
        s.add_argument("--out", default=None, help="data output path")
        s.add_argument("--format", choices=("json", "csv", "bin"), default=None)
        s.add_argument("--tol", type=float, default=1e-10, help="quadrature tolerance")
        s.add_argument("--lambda-grid", default=None, help="comma-separated lambda values")
        s.add_argument("--variant", choices=("standard", "self_normalized"), default="self_normalized")
    return p


def _load(path: str) -> dict:
    try:
        if path == "-":
            return json.load(sys.stdin)
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON config: {exc}") from None


def run(argv=None, stdout=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    args = make_parser().parse_args(argv)
    try:
        raw = _load(args.config)
        cfg = parse_config(raw)
        if args.strict:
            cfg.strict = True
        seed = cfg.seed if args.seed is None else args.seed
        if not 0 <= seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        order = cfg.order if args.order is None else args.order
        cmd = args.command
        if cmd == "approx":
            res = cmd_approx(cfg, order)
        elif cmd == "check":
            res = cmd_check(cfg)
        elif cmd == "sample":
            res = cmd_sample(cfg, 1000 if args.n is None else args.n, seed, args.out, args.format or "csv")
        elif cmd == "estimate":
            res = cmd_estimate(cfg, 10 ** 5 if args.n is None else args.n, seed, args.variant)
        elif cmd == "oracle":
            res = cmd_oracle(cfg, 10 ** 6 if args.n is None else args.n, seed, args.tol)
        else:
            grid = _grid(args.lambda_grid) if args.lambda_grid else [cfg.lam]
            rows = cmd_bench(cfg, grid, 10 ** 6 if args.n is None else args.n, seed, args.tol)
            text = bench_csv(rows)
            if args.out is None:
                stdout.write(text)
                return EXIT_OK
            with open(args.out, "w") as fh:
                fh.write(text)
            res = {"rows": rows, "out": args.out, "columns": list(BENCH_COLUMNS)}
        res["command"] = cmd
        res["config"] = raw
        _emit(res, stdout)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConditionFailure, ExpansionRegimeError) as exc:
        print(f"condition failure: {exc}", file=sys.stderr)
        return EXIT_CONDITION
    except OracleError as exc:
        print(f"oracle failure: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except RareTailError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
