"""Command-line interface.

Exit codes: 0 ok, 2 data violation, 3 self-check failure, 4 empty result,
64 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from . import codec, cost, dse, im2col_unit, tensor, workload
from .errors import (
    DensityViolation, EmptySpace, MalformedBlock, ModeMismatch, ParseError, ValidationError, VdbbError,
)
from .sim import Mode, parse_config, simulate_gemm

EXIT_OK, EXIT_DATA, EXIT_SELFCHECK, EXIT_EMPTY, EXIT_USAGE = 0, 2, 3, 4, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _tool_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0+unknown"


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(args, inputs, outputs, dest: Path | None) -> dict:
    stamp = os.environ.get("SOURCE_DATE_EPOCH")
    ts = int(stamp) if stamp else int(time.time())
    manifest = {
        "tool_version": _tool_version(),
        "command": ["vdbb", *args.argv],
        "seed": getattr(args, "seed", 0),
        "input_hashes": {str(p): _sha256(p) for p in inputs if p and Path(p).is_file()},
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(ts)),
        "outputs": sorted(str(p) for p in outputs),
    }
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    if dest is None:
        sys.stderr.write("manifest: " + json.dumps(manifest, sort_keys=True) + "\n")
    else:
        dest.write_text(text)
    return manifest


def _manifest_for(out: str | None) -> Path | None:
    return Path(str(out) + ".manifest.json") if out else None


def _fmt(args) -> codec.DbbFormat:
    try:
        return codec.DbbFormat(args.bz, args.nnz)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _read_matrix(path) -> np.ndarray:
    try:
        arr = tensor.load_matrix(path)
    except FileNotFoundError:
        raise UsageError(f"no such file: {path}") from None
    if arr.ndim != 2:
        raise ParseError(f"{path}: expected a 2-D matrix, got shape {arr.shape}")
    return arr


# ---------------------------------------------------------------- commands


def cmd_encode(args) -> int:
    fmt = _fmt(args)
    dense = _read_matrix(args.input)
    try:
        enc = codec.encode_matrix(dense, fmt, args.axis)
    except DensityViolation as exc:
        print(f"vdbb: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    codec.save(enc, args.output)
    ratio = codec.compression_ratio(fmt)
    print(f"ratio={float(ratio):.3f} blocks={enc.nblocks} pad_count={enc.pad_count}")
    write_manifest(args, [args.input], [args.output], _manifest_for(args.output))
    return EXIT_OK


def cmd_decode(args) -> int:
    try:
        enc = codec.load(args.input)
    except FileNotFoundError:
        raise UsageError(f"no such file: {args.input}") from None
    tensor.save_matrix(codec.decode_matrix(enc), args.output)
    print(f"rows={enc.rows} cols={enc.cols} format={enc.fmt}")
    write_manifest(args, [args.input], [args.output], _manifest_for(args.output))
    return EXIT_OK


def retained_fraction(dense, pruned) -> float:
    total = np.abs(np.asarray(dense, dtype=np.int64)).sum()
    kept = np.abs(np.asarray(pruned, dtype=np.int64)).sum()
    return float(kept / total) if total else 1.0


def cmd_prune(args) -> int:
    fmt = _fmt(args)
    dense = _read_matrix(args.input)
    pruned = codec.prune_to_dbb(dense, fmt, args.axis)
    tensor.save_matrix(pruned, args.output)
    report = {
        "format": str(fmt),
        "retained_magnitude_fraction": retained_fraction(dense, pruned),
        "nonzeros_before": int(np.count_nonzero(dense)),
        "nonzeros_after": int(np.count_nonzero(pruned)),
    }
    print(json.dumps(report, sort_keys=True))
    write_manifest(args, [args.input], [args.output], _manifest_for(args.output))
    return EXIT_OK


def cmd_check(args) -> int:
    fmt = _fmt(args)
    dense = _read_matrix(args.input)
    bad = codec.check_dbb(dense, fmt, args.axis)
    for v in bad[: args.limit]:
        print(f"block {v.coord}: {v.count} non-zeros > {fmt.nnz}")
    print(f"violations={len(bad)}")
    write_manifest(args, [args.input], [], None)
    return EXIT_DATA if bad else EXIT_OK


def _parse_dims(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(x) for x in text.lower().replace("×", "x").split("x"))
    except ValueError:
        raise UsageError(f"bad dimensions {text!r}") from None
    if len(dims) != 3 or min(dims) < 1:
        raise UsageError(f"--random expects MxKxN, got {text!r}")
    return dims


def _random_case(rng, cfg, m, k, n, nnz):
    act = rng.integers(-128, 128, size=(m, k)).astype(np.int8)
    act[rng.random((m, k)) < 0.5] = 0
    wt = rng.integers(-128, 128, size=(k, n)).astype(np.int8)
    if cfg.mode.sparse:
        fmt = codec.DbbFormat(cfg.b, nnz)
        wt = codec.prune_to_dbb(wt, fmt)
        return act, wt, codec.encode_matrix(wt, fmt)
    return act, wt, wt


def _config(args):
    try:
        gating = None if args.gating is None else args.gating
        nnz = args.nnz
        cfg = parse_config(args.config, mode=args.mode, nnz=nnz if _sparse_hint(args) else None,
                           gating=gating, im2col=args.im2col or None)
    except (ParseError, ModeMismatch, ValueError) as exc:
        raise UsageError(str(exc)) from None
    return cfg


def _sparse_hint(args) -> bool:
    text = args.config.upper()
    mode = (args.mode or "").upper()
    return "DBB" in text or "DBB" in mode


def _self_check(args, cfg, rng) -> int:
    failures = 0
    for i in range(args.self_check):
        m, k, n = (int(x) for x in rng.integers(1, 40, size=3))
        nnz = int(rng.integers(1, cfg.b + 1)) if cfg.mode is Mode.STA_VDBB else (
            cfg.sdp_width if cfg.mode is Mode.STA_DBB else None)
        act, wt, wt_in = _random_case(rng, cfg, m, k, n, nnz)
        res = simulate_gemm(cfg, act, wt_in, nnz if cfg.mode is Mode.STA_VDBB else None)
        if not np.array_equal(res.output, tensor.gemm_ref(act, wt)):
            failures += 1
            print(f"case {i}: mismatch for {m}x{k}x{n}", file=sys.stderr)
    print(json.dumps({"config": cfg.name, "cases": args.self_check, "failures": failures}))
    return EXIT_SELFCHECK if failures else EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _config(args)
    rng = np.random.default_rng(args.seed)
    if args.self_check:
        return _self_check(args, cfg, rng)
    inputs = []
    run_nnz = args.nnz if cfg.mode is Mode.STA_VDBB else None
    if args.random:
        m, k, n = _parse_dims(args.random)
        nnz = args.nnz or (cfg.sdp_width if cfg.mode is Mode.STA_DBB else cfg.b)
        act, wt_dense, wt = _random_case(rng, cfg, m, k, n, nnz)
    else:
        if not args.act or not args.wt:
            raise UsageError("give --act and --wt, or --random MxKxN")
        act = _read_matrix(args.act)
        inputs = [args.act, args.wt]
        if str(args.wt).endswith(".dbb"):
            wt = codec.load(args.wt)
            wt_dense = wt.to_dense()
        else:
            wt = wt_dense = _read_matrix(args.wt)
            if cfg.mode.sparse:
                wt = codec.encode_matrix(wt_dense, codec.DbbFormat(cfg.b, args.nnz or cfg.dbb_fmt.nnz))
    res = simulate_gemm(cfg, act, wt, run_nnz, trace=bool(args.trace), backend_name=args.backend)
    ok = np.array_equal(res.output, tensor.gemm_ref(act, wt_dense))
    out = {
        "config": cfg.name,
        "mode": cfg.mode.value,
        "act_clock_gating": cfg.act_clock_gating,
        "shape": [int(act.shape[0]), int(act.shape[1]), int(res.output.shape[1])],
        "output_sha256": hashlib.sha256(res.output.astype("<i4").tobytes()).hexdigest(),
        "matches_reference": ok,
        **res.summary(),
    }
    text = json.dumps(out, indent=2, sort_keys=True) + "\n"
    outputs = []
    if args.output:
        Path(args.output).write_text(text)
        outputs.append(args.output)
    else:
        sys.stdout.write(text)
    if args.trace:
        Path(args.trace).write_text(res.trace_csv())
        outputs.append(args.trace)
    write_manifest(args, inputs, outputs, _manifest_for(args.output))
    return EXIT_OK if ok else EXIT_SELFCHECK


def cmd_im2col_bench(args) -> int:
    rng = np.random.default_rng(args.seed)
    fm = rng.integers(-128, 128, size=(args.height, args.width, args.channels)).astype(np.int8)
    try:
        res = im2col_unit.stream_feature_map(fm, args.kernel, args.stride, args.pad, keep_stream=True)
    except VdbbError as exc:
        raise UsageError(str(exc)) from None
    ok = True
    if res.output_stream is not None:
        ref = tensor.im2col_lower(fm, args.kernel, args.stride, args.pad)
        ok = bool(np.array_equal(res.output_stream.to_matrix(*ref.shape), ref))
    out = {
        "sram_read_bytes": res.sram_read_bytes,
        "delivered_bytes": res.delivered_bytes,
        "cycles": res.cycles,
        "phases": res.phases,
        "magnification": im2col_unit.magnification(res),
        "bypassed": res.bypassed,
        "software_fallback": res.software_fallback,
        "matches_software": ok,
    }
    print(json.dumps(out, sort_keys=True))
    write_manifest(args, [], [], None)
    return EXIT_OK if ok else EXIT_SELFCHECK


def _coeffs(args) -> cost.CostCoefficients:
    try:
        return cost.load_coefficients(args.coeffs)
    except FileNotFoundError:
        raise UsageError(f"no such file: {args.coeffs}") from None


def cmd_sweep(args) -> int:
    coeffs = _coeffs(args)
    spec = dse.load_sweep(args.spec)
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        enum = dse.enumerate_designs(spec, coeffs)
    except EmptySpace as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    front = dse.pareto(enum.points)
    ids = {p.id for p in front}
    files = {
        "points.csv": dse.points_csv(enum.points, ids),
        "points.json": dse.points_json(enum.points, ids),
        "pareto.csv": dse.points_csv(front, ids),
        "excluded.csv": "config,reason\n" + "".join(f"{c},\"{r}\"\n" for c, r in enum.excluded),
    }
    scan = ["config,weight_nnz,weight_bz,effective_tops,power_mw,tops_per_w,tops_per_mm2"]
    for p in front:
        for r in dse.sparsity_scan(p.cfg, coeffs, spec.act_sparsity):
            scan.append(f"{p.cfg.name},{r.weight_nnz},{r.weight_bz},{r.effective_tops:.6g},"
                        f"{r.total_power_mw:.6g},{r.tops_per_w:.6g},{r.tops_per_mm2:.6g}")
    files["sparsity_scan.csv"] = "\n".join(scan) + "\n"
    inputs = [args.spec, args.coeffs or os.environ.get("VDBB_COEFFS")]
    if args.workload:
        if Path(args.workload).is_file():
            wl = workload.load_workload(args.workload)
            inputs.append(args.workload)
        else:
            try:
                wl = workload.bundled_workload(args.workload)
            except FileNotFoundError:
                raise UsageError(f"no such workload: {args.workload}") from None
        designs = list(front)
        for text in args.design or []:
            designs.append(dse.DesignPoint(parse_config(text, nnz=spec.dbb_nnz if "_DBB" in text.upper() else None)))
        results = [dse.layer_sweep(p, wl, coeffs, simulate=args.simulate, seed=args.seed) for p in designs]
        files["layers.csv"] = dse.layers_csv(results)
    for name, text in files.items():
        (outdir / name).write_text(text)
    print(f"points={len(enum.points)} excluded={len(enum.excluded)} pareto={len(front)}")
    for p in front:
        print(f"  pareto {p.cfg.name} [{p.group}] {p.metrics.tops_per_w:.2f} TOPS/W "
              f"{p.metrics.tops_per_mm2:.2f} TOPS/mm2")
    write_manifest(args, inputs, [outdir / n for n in files], outdir / "manifest.json")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    table = _coeffs(args)
    anchors = cost.load_anchors(args.anchors)
    cal = cost.calibrate(anchors, table)
    print(json.dumps({
        "slope_mw_per_unit": cal.slope,
        "intercept_mw": cal.intercept,
        "power_at_bz_over_nnz_2": cal.power_at(2.0),
        "residuals_mw": cal.residuals,
    }, indent=2))
    outputs = []
    if args.output:
        cost.save_coefficients(cal.coeffs, args.output)
        outputs.append(args.output)
    write_manifest(args, [args.anchors, args.coeffs], outputs, _manifest_for(args.output))
    return EXIT_OK


def cmd_report(args) -> int:
    coeffs = _coeffs(args)
    try:
        cfg = parse_config(args.config, nnz=args.hw_nnz)
    except (ParseError, ModeMismatch, ValueError) as exc:
        raise UsageError(str(exc)) from None
    im2col = False if args.no_im2col else None
    r = cost.estimate_cost(cfg, coeffs, args.nnz, args.act_sparsity, im2col)
    d = r.to_dict()
    d["reuse"] = {k: str(v) for k, v in cost.reuse_metrics(cfg, args.nnz if cfg.mode is Mode.STA_VDBB else None).__dict__.items()}
    print(json.dumps(d, indent=2, sort_keys=True))
    write_manifest(args, [args.coeffs], [], None)
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vdbb", description="DBB sparse tensor-array toolkit")
    p.add_argument("--seed", type=int, default=0, help="seed for all randomness (default 0)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def fmt_args(sp, need_out=True):
        sp.add_argument("input")
        sp.add_argument("--bz", type=int, required=True)
        sp.add_argument("--nnz", type=int, required=True)
        sp.add_argument("--axis", type=int, choices=(0, 1), default=0)
        if need_out:
            sp.add_argument("-o", "--output", required=True)

    sp = sub.add_parser("encode", help="encode a dense int8 matrix as a DBB file")
    fmt_args(sp)
    sp.set_defaults(func=cmd_encode)

    sp = sub.add_parser("decode", help="decode a DBB file to a dense matrix")
    sp.add_argument("input")
    sp.add_argument("-o", "--output", required=True)
    sp.set_defaults(func=cmd_decode)

    sp = sub.add_parser("prune", help="magnitude-prune a matrix to a DBB format")
    fmt_args(sp)
    sp.set_defaults(func=cmd_prune)

    sp = sub.add_parser("check", help="list blocks violating a DBB format")
    fmt_args(sp, need_out=False)
    sp.add_argument("--limit", type=int, default=20)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("simulate", help="cycle-level GEMM simulation")
    sp.add_argument("--config", required=True, help='e.g. "2x8x4_2x2_VDBB"')
    sp.add_argument("--mode", choices=[m.value for m in Mode])
    sp.add_argument("--nnz", type=int, help="DBB bound (fixed DBB) or run density (VDBB)")
    sp.add_argument("--act", help="activation matrix file (M x K)")
    sp.add_argument("--wt", help="weight matrix file (K x N), dense or .dbb")
    sp.add_argument("--random", metavar="MxKxN", help="random operands of this shape")
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--gating", dest="gating", action="store_true", default=None)
    g.add_argument("--no-gating", dest="gating", action="store_false")
    sp.add_argument("--im2col", action="store_true")
    sp.add_argument("--self-check", type=int, default=0, metavar="N",
                    help="run N random cases against the reference GEMM")
    sp.add_argument("--trace", help="write a CSV event trace (numpy backend)")
    sp.add_argument("--backend", choices=("c", "python"))
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("im2col-bench", help="stream a random feature map through the im2col unit")
    sp.add_argument("--height", type=int, default=56)
    sp.add_argument("--width", type=int, default=56)
    sp.add_argument("--channels", type=int, default=4)
    sp.add_argument("--kernel", type=int, default=3)
    sp.add_argument("--stride", type=int, default=1)
    sp.add_argument("--pad", type=int, default=1)
    sp.set_defaults(func=cmd_im2col_bench)

    sp = sub.add_parser("sweep", help="iso-throughput design sweep and pareto frontier")
    sp.add_argument("--spec", help="sweep spec JSON (default: bundled 4-TOPS sweep)")
    sp.add_argument("--workload", help="workload JSON, or a bundled name such as resnet50")
    sp.add_argument("--coeffs", help="coefficient JSON (default: $VDBB_COEFFS or bundled)")
    sp.add_argument("--design", action="append", help="extra config for the layer sweep")
    sp.add_argument("--simulate", action="store_true", help="per-layer cycles from the simulator")
    sp.add_argument("-o", "--output", required=True, help="output directory")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("calibrate", help="fit the NNZ slope to efficiency anchors")
    sp.add_argument("--anchors", help="anchor JSON (default: bundled)")
    sp.add_argument("--coeffs", help="coefficient JSON holding the component table")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("report", help="power/area/efficiency of one design")
    sp.add_argument("--config", default="4x8x8_4x8_VDBB_IM2C")
    sp.add_argument("--hw-nnz", type=int, help="fixed-DBB hardware bound")
    sp.add_argument("--nnz", type=int, default=3, help="model non-zeros per block")
    sp.add_argument("--act-sparsity", type=float, default=0.5)
    sp.add_argument("--no-im2col", action="store_true")
    sp.add_argument("--coeffs")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    args.argv = argv
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"vdbb: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DensityViolation, MalformedBlock, ParseError, ValidationError) as exc:
        print(f"vdbb: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except EmptySpace as exc:
        print(f"vdbb: {exc}", file=sys.stderr)
        return EXIT_EMPTY


if __name__ == "__main__":
    sys.exit(main())
