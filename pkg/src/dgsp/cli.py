"""Command-line interface: ``dgsp <command> [options]``.

Exit codes: 0 ok, 2 parse/config error, 3 dimension mismatch, 4 numerical
failure, 5 sampling certificate failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments, io
from .basechange import DiscreteMap, pullback_filter_via_fibers, pullback_kernel_filter
from .ensemble import IntervalFamily, compile_spec
from .errors import DGSPError, DimensionError, NumericalError, ParseError
from .filters import BandSpec, FilterKernel, band_pass, bandlimit_residual, convolution_matrix, response_kernel
from .learning import (
    AnomalyDetector,
    AnomalyLoss,
    GibbsConfig,
    HighFreqLoss,
    MHConfig,
    TrainingSet,
    calibrate_threshold,
    empirical_risk,
    gibbs_exact,
    highfreq_loss,
    mh_sample,
    posterior_spec,
)
from .operators import knn_graph, laplacian_from_edges
from .sampling import analyze, make_plan, cut_index, reconstruct
from .synth import SyntheticSpec, synth, write_synth
from .transform import SpectralCoefficients, forward, inverse

log = logging.getLogger("dgsp")


def _emit(text: str, out):
    if out is None:
        sys.stdout.write(text)
    else:
        io.atomic_write(out, text)


def _outdir(args) -> Path:
    return Path(args.out or ".")


def _load_config(args) -> dict:
    return io.read_json(args.config) if args.config else {}


def _read_signal_rows(path, row=None):
    vs, S = io.read_signals(path)
    if S.shape[0] == 0:
        raise ParseError("signal file has no rows", path)
    if row is None:
        return vs, S
    if not 0 <= row < S.shape[0]:
        raise ParseError(f"row {row} out of range (file has {S.shape[0]} signals)", path)
    return vs, S[row]


def _ensemble(args):
    spec = io.read_spec(args.spec, allow_indefinite=getattr(args, "allow_indefinite", False))
    return spec, compile_spec(spec)


def _check_n(ens, vs):
    if vs.n != ens.n:
        raise DimensionError(f"signal has {vs.n} vertices, operators have {ens.n}")


def kernel_callable(desc: dict):
    """Spectral response ``(t, lam) -> multipliers`` for non-table kernel specs."""
    variant = desc.get("variant")
    if variant == "band":
        m = int(desc["bottom"])
        return lambda t, lam: (np.arange(lam.size) < m).astype(float)
    if variant == "lambda":
        p = int(desc.get("power", 1))
        return lambda t, lam: lam**p
    if variant == "allpass":
        return lambda t, lam: np.ones_like(lam)
    if variant == "constant":
        v = float(desc["value"])
        return lambda t, lam: np.full_like(lam, v)
    if variant == "heat":
        tau = float(desc["tau"])
        return lambda t, lam: np.exp(-tau * lam)
    raise ParseError(f"kernel variant {variant!r} is not available as a spectral response")


def parse_kernel_arg(arg: str):
    """Shorthands ``allpass``, ``lambda[:p]``, ``bottom:m``, ``heat:tau``, or a JSON file."""
    if arg == "allpass":
        return {"variant": "allpass"}, "."
    head, _, tail = arg.partition(":")
    try:
        if head == "lambda":
            return {"variant": "lambda", "power": int(tail or 1)}, "."
        if head == "bottom":
            return {"variant": "band", "bottom": int(tail)}, "."
        if head == "heat":
            return {"variant": "heat", "tau": float(tail)}, "."
    except ValueError:
        raise ParseError(f"bad kernel shorthand {arg!r}") from None
    return io.read_json(arg), str(Path(arg).parent)


def _kernel_for(ens, arg) -> FilterKernel:
    desc, base = parse_kernel_arg(arg)
    if desc.get("variant") == "heat":
        return response_kernel(ens, kernel_callable(desc))
    return io.kernel_from_dict(desc, ens, base)


# -- commands --------------------------------------------------------------------


def cmd_transform(args):
    spec, ens = _ensemble(args)
    if args.inverse:
        params, weights, table = io.read_coefficients(args.inverse)
        c = SpectralCoefficients(table, ens)
        f = inverse(c)
        _emit(io.csv_text([str(i) for i in range(ens.n)], [f]), args.out)
        return
    vs, f = _read_signal_rows(args.signal, args.row)
    _check_n(ens, vs)
    _emit(io.coefficients_text(forward(f, ens)), args.out)


def cmd_filter(args):
    spec, ens = _ensemble(args)
    vs, S = _read_signal_rows(args.signal)
    _check_n(ens, vs)
    F = convolution_matrix(_kernel_for(ens, args.kernel)).matrix
    if args.matrix_out:
        io.write_matrix(args.matrix_out, F)
    _emit(io.csv_text(vs.labels, S @ F.T), args.out)


def _band(args, ens):
    if args.band_json:
        return io.band_from_dict(io.read_json(args.band_json))
    return BandSpec(bottom=ens.n if args.band is None else args.band)


def cmd_bandpass(args):
    spec, ens = _ensemble(args)
    B = band_pass(_band(args, ens), ens)
    if args.spectrum_out:
        s = analyze(B)
        io.atomic_write(args.spectrum_out, io.csv_text(["index", "eigenvalue"], ([str(i), v] for i, v in enumerate(s.eigenvalues))))
    _emit(io.csv_text(None, B.matrix), args.out)


def cmd_sample(args):
    spec, ens = _ensemble(args)
    B = band_pass(_band(args, ens), ens)
    s = analyze(B)
    j = cut_index(s, budget=args.budget, threshold=args.threshold)
    p = make_plan(s, j)
    truth = None
    if args.samples:
        samples = io.read_samples(args.samples)
    elif args.signal:
        vs, truth = _read_signal_rows(args.signal, args.row)
        _check_n(ens, vs)
        samples = {v: float(truth[v]) for v in p.V_j}
    else:
        raise ParseError("sample needs --signal or --samples")
    if args.epsilon is not None:
        eps = args.epsilon
    elif truth is not None:
        eps = bandlimit_residual(truth, B)
    else:
        eps = 0.0
    rep = reconstruct(p, samples, eps)
    out = _outdir(args)
    io.write_json(out / "plan.json", p.to_dict())
    io.atomic_write(out / "reconstruction.csv", io.csv_text([str(i) for i in range(ens.n)], [rep.f_prime]))
    report = {
        "epsilon": rep.epsilon,
        "j": rep.j,
        "bound_a": rep.bound_a,
        "epsilon_prime": rep.epsilon_prime,
        "residual_f_prime": bandlimit_residual(rep.f_prime, B),
    }
    if truth is not None:
        report["error"] = float(np.linalg.norm(rep.f_prime - truth))
    io.write_json(out / "report.json", report)


def cmd_basechange(args):
    spec_y = io.read_spec(args.spec_y)
    Y = compile_spec(spec_y)
    spec_x = io.read_spec(args.spec_x)
    h = io.basemap_from_dict(io.read_json(args.map))
    desc, base = parse_kernel_arg(args.kernel)
    if isinstance(h, DiscreteMap) or not isinstance(spec_x, IntervalFamily) or desc.get("variant") == "table":
        X = compile_spec(spec_x)
        kernel = io.kernel_from_dict(desc, X, base) if desc.get("variant") != "heat" else kernel_callable(desc)
    else:
        X = spec_x
        kernel = kernel_callable(desc)
    F_fib = pullback_filter_via_fibers(kernel, h, Y, X)
    F_ker = pullback_kernel_filter(kernel, h, Y, X)
    out = _outdir(args)
    io.write_matrix(out / "filter_via_fibers.csv", F_fib)
    io.write_matrix(out / "filter_kernel_pullback.csv", F_ker)
    if args.signal:
        vs, S = _read_signal_rows(args.signal)
        _check_n(Y, vs)
        io.write_signals(out / "via_fibers.csv", S @ F_fib.T, vs.labels)
        io.write_signals(out / "kernel_pullback.csv", S @ F_ker.T, vs.labels)


def _candidates_from_config(cfg, base):
    cands, params = [], []
    spec = cfg.get("candidates")
    if isinstance(spec, dict) and "knn" in spec:
        k = spec["knn"]
        _, coords = io.read_coords(base / k["coords"])
        for kk in range(int(k.get("k_min", 2)), int(k.get("k_max", 10)) + 1):
            cands.append(laplacian_from_edges(knn_graph(coords, kk), coords.shape[0], name=f"knn{kk}"))
            params.append(float(kk))
        return cands, params
    if isinstance(spec, list):
        for path in spec:
            cands.append(io.read_operator(base / path))
        return cands, None
    raise ParseError("learning config needs 'candidates' (list of matrix files or {'knn': ...})")


def run_learn(cfg: dict, base: Path, out: Path, seed: int | None = None) -> dict:
    cands, params = _candidates_from_config(cfg, base)
    vs, S = io.read_signals(base / cfg["signals"])
    if vs.n != cands[0].n:
        raise DimensionError(f"signals have {vs.n} vertices, candidates have {cands[0].n}")
    labels = cfg.get("labels")
    train = TrainingSet(S, labels)
    loss_cfg = cfg.get("loss", {"kind": "highfreq_energy"})
    b = int(loss_cfg.get("bandwidth", max(1, -(-vs.n // 20))))
    if loss_cfg.get("kind", "highfreq_energy") == "highfreq_energy":
        loss = HighFreqLoss(b)
    elif loss_cfg["kind"] == "anomaly":
        if train.labels is None:
            raise ParseError("anomaly loss needs 'labels'")
        th = loss_cfg.get("threshold", "calibrate")
        if th == "calibrate":
            dets = tuple(
                AnomalyDetector(b, calibrate_threshold([highfreq_loss(x, f, b) for f in S], train.labels)) for x in cands
            )
        else:
            dets = AnomalyDetector(b, float(th))
        loss = AnomalyLoss(dets)
    else:
        raise ParseError(f"unknown loss kind {loss_cfg.get('kind')!r}")
    risks = empirical_risk(cands, train, loss)
    gibbs = GibbsConfig(float(cfg.get("gamma", 1.0)), cfg.get("prior"))
    mh_cfg = cfg.get("mh")
    result = {"risks": [float(r) for r in risks.risks]}
    if cfg.get("method", "mh") == "exact":
        w = gibbs_exact(risks, gibbs)
        result["acceptance_rate"] = None
    else:
        mh_cfg = dict(mh_cfg or {})
        if seed is not None:
            mh_cfg["seed"] = seed
        res = mh_sample(risks, len(cands), gibbs, MHConfig(**mh_cfg))
        w = res.weights
        result["acceptance_rate"] = res.acceptance_rate
    result["weights"] = [float(x) for x in w]
    io.write_json(out / "posterior_weights.json", result)
    io.write_spec(out / "posterior.json", posterior_spec(cands, w, params))
    return result


def cmd_learn(args):
    if not args.config:
        raise ParseError("learn needs --config")
    cfg = _load_config(args)
    run_learn(cfg, Path(args.config).parent, _outdir(args), args.seed)


def cmd_experiment(args):
    cfg = _load_config(args)
    if args.seed is not None:
        cfg["seed"] = args.seed
    fn = experiments.PIPELINES[args.pipeline]
    fn(cfg, _outdir(args))


def cmd_synth(args):
    cfg = _load_config(args)
    if args.lattice:
        try:
            r, c = (int(v) for v in args.lattice.lower().split("x"))
        except ValueError:
            raise ParseError(f"--lattice expects ROWSxCOLS, got {args.lattice!r}") from None
        cfg["graph"] = {"kind": "lattice", "rows": r, "cols": c}
    if args.count is not None:
        cfg["count"] = args.count
    if "graph" not in cfg:
        raise ParseError("synth needs a graph (--lattice or a config with 'graph')")
    data = synth(SyntheticSpec.from_dict(cfg), cfg.get("seed", 0) if args.seed is None else args.seed)
    write_synth(data, _outdir(args))


def cmd_spectra(args):
    spec, ens = _ensemble(args)
    vs, f = _read_signal_rows(args.signal, args.row)
    _check_n(ens, vs)
    _emit(experiments.export_spectra(f, spec), args.out)


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="seed for all randomness")
    common.add_argument("--out", default=None, help="output file (single-output commands) or directory")
    common.add_argument("--config", default=None, help="JSON configuration file")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="dgsp", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    def spec_args(sp):
        sp.add_argument("--spec", required=True, help="distribution spec JSON")
        sp.add_argument("--allow-indefinite", action="store_true", help="accept symmetric non-PSD operators")

    sp = sub.add_parser("transform", parents=[common], help="distributional Fourier transform")
    spec_args(sp)
    sp.add_argument("--signal")
    sp.add_argument("--row", type=int, default=0)
    sp.add_argument("--inverse", metavar="COEFFS", help="apply the left inverse to a coefficients CSV")
    sp.set_defaults(func=cmd_transform)

    sp = sub.add_parser("filter", parents=[common], help="apply a convolution filter")
    spec_args(sp)
    sp.add_argument("--signal", required=True)
    sp.add_argument("--kernel", required=True, help="allpass | lambda[:p] | bottom:m | heat:tau | kernel JSON")
    sp.add_argument("--matrix-out")
    sp.set_defaults(func=cmd_filter)

    def band_args(sp):
        sp.add_argument("--band", type=int, default=None, help="bottom(m) band; default all frequencies")
        sp.add_argument("--band-json", help="band spec JSON")

    sp = sub.add_parser("bandpass", parents=[common], help="band-pass filter matrix")
    spec_args(sp)
    band_args(sp)
    sp.add_argument("--spectrum-out")
    sp.set_defaults(func=cmd_bandpass)

    sp = sub.add_parser("sample", parents=[common], help="sample and reconstruct")
    spec_args(sp)
    band_args(sp)
    cut = sp.add_mutually_exclusive_group(required=True)
    cut.add_argument("--budget", type=int)
    cut.add_argument("--threshold", type=float)
    sp.add_argument("--signal")
    sp.add_argument("--row", type=int, default=0)
    sp.add_argument("--samples", help="samples CSV vertex,value")
    sp.add_argument("--epsilon", type=float, default=None)
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("basechange", parents=[common], help="pullback filters along a base map")
    sp.add_argument("--spec-x", required=True)
    sp.add_argument("--spec-y", required=True)
    sp.add_argument("--map", required=True, help="base map JSON")
    sp.add_argument("--kernel", required=True)
    sp.add_argument("--signal")
    sp.set_defaults(func=cmd_basechange)

    sp = sub.add_parser("learn", parents=[common], help="learn an operator distribution")
    sp.set_defaults(func=cmd_learn)

    sp = sub.add_parser("experiment", parents=[common], help="run an end-to-end pipeline")
    sp.add_argument("--pipeline", required=True, choices=sorted(experiments.PIPELINES))
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("synth", parents=[common], help="generate synthetic graph and signals")
    sp.add_argument("--lattice", help="ROWSxCOLS")
    sp.add_argument("--count", type=int)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("spectra", parents=[common], help="spectral magnitude grid for plotting")
    spec_args(sp)
    sp.add_argument("--signal", required=True)
    sp.add_argument("--row", type=int, default=0)
    sp.set_defaults(func=cmd_spectra)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except DGSPError as exc:
        log.error("%s", exc)
        return exc.exit_code
    except np.linalg.LinAlgError as exc:
        log.error("numerical failure: %s", exc)
        return NumericalError.exit_code
    except (ValueError, KeyError, TypeError, OSError) as exc:
        log.error("invalid input: %s", exc)
        return ParseError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
