"""Command-line entry point: ``pshape <command> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, treefile
from .analysis import (REFERENCE_FRAME, REFERENCE_PARAMS, SingleErrorParams, bound_bber,
                       bound_post_invdm_ber, compute_gammas, error_insertion_test,
                       exhaustive_single_error, post_invdm_ratio, required_post_fec_ber)
from .ccdm import CcdmCodec, Composition, design_composition, num_input_bits
from .config import DATA_DIR, SCHEMA_VERSION, load_config
from .constellation import AmplitudeAlphabet, Pmf, mb_pmf, solve_mb_lambda
from .hidm import build_tree, storage_bits
from .pipeline import CSV_COLUMNS, default_workers, run_link
from .shaping_metrics import shaping_summary

log = logging.getLogger("pshape")


def _header(command: str, digest: str | None = None) -> list[str]:
    line = f"# pshape {__version__} {command} schema={SCHEMA_VERSION}"
    if digest:
        line += f" config={digest}"
    return [line]


def _write_csv(path: Path, header: list[str], columns, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        for h in header:
            fh.write(h + "\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow(["" if v is None else v for v in row])


def _fmt_pmf(pmf: Pmf) -> str:
    return " ".join(f"{float(p):.4f}" for p in pmf.probs)


# ------------------------------------------------------------- commands

def cmd_build_tree(args) -> int:
    spec, _ = treefile.load(args.spec)
    codec = build_tree(spec)
    text = treefile.dumps(spec, codec.tables, treefile.leading_comments(Path(args.spec).read_text()))
    if args.out:
        Path(args.out).write_text(text)
        dm, inv = storage_bits(spec)
        print(f"wrote {args.out}: {spec.input_bits} -> {spec.output_bits} bits, storage DM {dm} invDM {inv}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_inspect_tree(args) -> int:
    codec = treefile.load_codec(args.tree)
    spec = codec.spec
    dm, inv = storage_bits(spec)
    pmf = codec.amplitude_pmf()
    e = codec.expected_energy()
    print(f"layers         {len(spec.layers)}")
    for i, (layer, luts) in enumerate(zip(spec.layers, spec.lut_counts), start=1):
        print(f"  layer {i}: {luts} LUT(s) u={layer.u} r={layer.r} s={layer.s} t={layer.t}")
    print(f"input bits     {spec.input_bits}")
    print(f"output bits    {spec.output_bits} ({spec.num_symbols} amplitudes)")
    print(f"storage bits   DM {dm}  invDM {inv}")
    print(f"amplitude PMF  {_fmt_pmf(pmf)}")
    print(f"E[|X|^2] 1D    {float(e):.6g} ({e})")
    if args.summary:
        s = shaping_summary(pmf, spec.input_bits, spec.num_symbols, code_rate=1.0,
                            bits_per_qam=2 * (1 + spec.bits_per_amplitude),
                            shaped_bits_per_qam=2 * len(spec.shaped_levels))
        print(f"E 2D           {s.energy_2d:.4f}")
        print(f"2H(X)          {s.entropy_2d:.4f}")
        print(f"rate loss      {s.rate_loss:.4f} bits/2D")
        print(f"gain           {s.gain_db:.4f} dB")
    return 0


def cmd_design_composition(args) -> int:
    alphabet = AmplitudeAlphabet(args.amplitude_bits)
    if args.pmf:
        target = tuple(float(x) for x in args.pmf.split(","))
    else:
        lam = solve_mb_lambda(alphabet, entropy_2d_target=args.mb_entropy)
        full = mb_pmf(lam, alphabet)
        size = args.class_size
        target = Pmf(tuple(sum(full.probs[i:i + size]) for i in range(0, len(full), size)))
        print(f"MB lambda      {lam:.6f}")
    energies = [sum((2 * j + 1) ** 2 for j in range(c * args.class_size, (c + 1) * args.class_size))
                / args.class_size for c in range(len(target))]
    comp = design_composition(target, args.word_len, input_bits=args.input_bits, class_energies=energies)
    print("composition    " + ",".join(map(str, comp.counts)))
    print(f"input bits     {num_input_bits(comp)}")
    return 0


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    digest = cfg.digest()

    def progress(p):
        log.info("%6.2f dB  codewords %d  post-FEC BER %.3e  post-invDM BER %.3e",
                 p.snr_db, p.codewords, p.post_fec_ber, p.post_invdm_ber)

    res = run_link(cfg, workers=args.workers or default_workers(), base_dir=Path(args.config).parent,
                   progress=progress)
    stem = args.name or Path(args.config).stem
    _write_csv(out / f"{stem}.csv", _header("simulate", digest), CSV_COLUMNS,
               [[getattr(p, c) for c in CSV_COLUMNS] for p in res.points])
    doc = {"schema_version": SCHEMA_VERSION, "config": cfg.model_dump(mode="json"), **res.to_dict()}
    (out / f"{stem}.json").write_text(json.dumps(doc, indent=2, default=_json_default) + "\n")
    print(f"wrote {out / (stem + '.csv')} and {out / (stem + '.json')}")
    return 0


def _json_default(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    raise TypeError(type(x).__name__)


def _load_dm(args):
    if args.dm == "ccdm":
        comp = Composition(tuple(int(c) for c in args.composition.split(",")))
        return CcdmCodec.from_composition(comp, args.input_bits)
    return treefile.load_codec(args.tree or DATA_DIR / "hidm_320.spec")


def cmd_insert_errors(args) -> int:
    codec = _load_dm(args)
    rows = []
    if args.exhaustive:
        alpha = exhaustive_single_error(codec)
        rows.append([1, float(alpha) / codec.input_bits, float(alpha), "exhaustive"])
    else:
        for n_err in range(1, args.max_errors + 1):
            rng = np.random.default_rng(np.random.SeedSequence([args.seed, n_err]))
            r = error_insertion_test(codec, n_err, args.trials, rng)
            rows.append([n_err, r.ber, r.alpha, r.trials])
    columns = ("n_errors", "ber", "alpha", "trials")
    if args.out:
        _write_csv(Path(args.out), _header("insert-errors"), columns, rows)
    for row in rows:
        print(f"{row[0]:3d} errors  BER {row[1]:.4f}  alpha {row[2]:.3f}")
    return 0


def cmd_bounds(args) -> int:
    params = dict(REFERENCE_PARAMS)
    if args.alpha_hidm is not None:
        params["hidm"] = SingleErrorParams(args.alpha_hidm, params["hidm"].theta,
                                           params["hidm"].gamma_in, params["hidm"].gamma_out)
    if args.alpha_ccdm is not None:
        params["ccdm"] = SingleErrorParams(args.alpha_ccdm, params["ccdm"].theta,
                                           params["ccdm"].gamma_in, params["ccdm"].gamma_out)
    geom = REFERENCE_FRAME
    print(f"gamma_in, gamma_out  {compute_gammas(geom)[0]:.5f}, {compute_gammas(geom)[1]:.3f}")
    print(f"denominator factor   {geom.rate_factor:.4f}")
    for name in ("ccdm", "hidm"):
        p = params[name]
        print(f"{name}: r_E1 bound {post_invdm_ratio(p, geom):.2f}, post-FEC BER for "
              f"{args.target:g} post-invDM: {required_post_fec_ber(p, geom, args.target):.3g}")
    grid = np.logspace(args.min_exp, args.max_exp, args.points)
    rows = []
    for e in grid:
        row = [e]
        for name in ("ccdm", "hidm", "bicm"):
            p = params[name]
            g = geom if name != "bicm" else geom.bicm()
            inv = bound_post_invdm_ber(p, g, e).total
            blk = bound_bber(p, g, e, args.block_bits, args.k)
            row += [inv, blk.bber, blk.fec_fer]
        rows.append(row)
    cols = ["post_fec_ber"] + [f"{n}_{q}" for n in ("ccdm", "hidm", "bicm")
                               for q in ("post_invdm_ber", "bber", "fec_fer")]
    if args.out:
        _write_csv(Path(args.out), _header("bounds"), cols, rows)
        print(f"wrote {args.out}")
    return 0


def cmd_metrics(args) -> int:
    rows = []
    comp = Composition(tuple(int(c) for c in args.composition.split(",")))
    ccdm_pmf = comp.pmf().expand_classes(2)
    s = shaping_summary(ccdm_pmf, args.input_bits, comp.word_len)
    rows.append(("ccdm", ccdm_pmf, s))
    alphabet = AmplitudeAlphabet(3)
    lam = solve_mb_lambda(alphabet, entropy_2d_target=s.beta)
    mb = mb_pmf(lam, alphabet)
    rows.append(("mb", mb, shaping_summary(mb, args.input_bits, comp.word_len)))
    tree = treefile.load_codec(args.tree or DATA_DIR / "hidm_320.spec")
    rows.append(("hidm", tree.amplitude_pmf(),
                 shaping_summary(tree.amplitude_pmf(), tree.input_bits, tree.spec.num_symbols)))
    for name, pmf, s in rows:
        print(f"{name:5s} E2D {s.energy_2d:8.4f}  2H {s.entropy_2d:.4f}  R_loss {s.rate_loss:.4f}  "
              f"G {s.gain_db:.4f} dB  PMF {_fmt_pmf(pmf)}")
    if args.out:
        cols = ["scheme", "energy_2d", "entropy_2d", "rate_loss", "gain_db"] + [f"p{2 * i + 1}" for i in range(8)]
        _write_csv(Path(args.out), _header("metrics"), cols,
                   [[n, s.energy_2d, s.entropy_2d, s.rate_loss, s.gain_db, *map(float, p.probs)]
                    for n, p, s in rows])
    return 0


# --------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pshape", description="Probabilistic amplitude shaping toolkit")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-tree", help="build LUT contents for a tree spec")
    p.add_argument("spec")
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_build_tree)

    p = sub.add_parser("inspect-tree", help="print storage, PMF and energy of a tree")
    p.add_argument("tree")
    p.add_argument("--summary", action="store_true", help="also print 256-QAM shaping figures")
    p.set_defaults(func=cmd_inspect_tree)

    p = sub.add_parser("design-composition", help="round a target PMF to a CCDM composition")
    p.add_argument("--word-len", type=int, required=True)
    p.add_argument("--input-bits", type=int)
    p.add_argument("--pmf", help="comma-separated class probabilities")
    p.add_argument("--mb-entropy", type=float, default=2 * (2 + 1014 / 640),
                   help="2D entropy target of a Maxwell-Boltzmann PMF (used without --pmf)")
    p.add_argument("--amplitude-bits", type=int, default=3)
    p.add_argument("--class-size", type=int, default=2)
    p.set_defaults(func=cmd_design_composition)

    p = sub.add_parser("simulate", help="run a link-level simulation from a YAML config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", default="results")
    p.add_argument("--name", help="output file stem (default: config file stem)")
    p.add_argument("--workers", type=int, help="worker processes (default: $PSHAPE_WORKERS or 1)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("insert-errors", help="error-insertion sweep on a DM")
    p.add_argument("--dm", choices=("hidm", "ccdm"), required=True)
    p.add_argument("--tree")
    p.add_argument("--composition", default="318,208,89,25")
    p.add_argument("--input-bits", type=int, default=1014)
    p.add_argument("--max-errors", type=int, default=10)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--exhaustive", action="store_true", help="exact single-error alpha (small trees only)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_insert_errors)

    p = sub.add_parser("bounds", help="post-dematcher BER and BBER bounds vs post-FEC BER")
    p.add_argument("--target", type=float, default=1e-15)
    p.add_argument("--alpha-ccdm", type=float)
    p.add_argument("--alpha-hidm", type=float)
    p.add_argument("--min-exp", type=float, default=-18)
    p.add_argument("--max-exp", type=float, default=-2)
    p.add_argument("--points", type=int, default=33)
    p.add_argument("--block-bits", type=int, default=130560)
    p.add_argument("--k", type=int, default=54000, help="FEC payload bits per codeword")
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("metrics", help="energy, entropy, rate loss and gain of CCDM, MB and HiDM")
    p.add_argument("--composition", default="318,208,89,25")
    p.add_argument("--input-bits", type=int, default=1014)
    p.add_argument("--tree")
    p.add_argument("-o", "--out")
    p.set_defaults(func=cmd_metrics)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"pshape: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
