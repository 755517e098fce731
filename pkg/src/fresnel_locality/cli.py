"""Command-line entry point: constants, maps, reproduction, verification, propagation."""

from __future__ import annotations

import argparse
import hashlib
import math
import sys
from pathlib import Path

import numpy as np

from . import bounds, phaseless, verify
from .bounds import (
    c_stab_complex,
    c_stab_real,
    c_sym_delta,
    global_factor,
    report_text,
    resolution_map,
    stability_map,
    sweep_nu,
    wavepacket_resolution_bound,
    write_map_csv,
    write_pgm,
)
from .core import (
    ComplexField,
    FresnelParams,
    Grid,
    WrapAroundError,
    gaussian,
    propagate_fft,
    propagate_gaussian,
    read_field,
    write_field,
    write_slice_csv,
)
from .geometry import DomainSpec
from .splines import c_band

EX_USAGE = 64
FIG4_ORDERS = (0, 1, 3, 5, 7)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(EX_USAGE, f"{self.prog}: error: {message}\n")


def parse_length(text: str) -> float:
    """'0.002' is a length; '500inv' means 1/500."""
    t = str(text).strip()
    try:
        val = 1.0 / float(t[:-3]) if t.endswith("inv") else float(t)
    except (ValueError, ZeroDivisionError) as err:
        raise argparse.ArgumentTypeError(f"invalid length {text!r}") from err
    if not val > 0 or not math.isfinite(val):
        raise argparse.ArgumentTypeError(f"length must be positive: {text!r}")
    return val


def read_config(path: str | Path) -> dict[str, str]:
    """Flat 'key = value' file; '#' starts a comment."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{n}: expected 'key = value'")
        out[key.strip().replace("-", "_")] = val.strip()
    return out


def _config_text(args: argparse.Namespace) -> str:
    items = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config")}
    return "".join(f"{k} = {v}\n" for k, v in items.items())


def write_run_config(args: argparse.Namespace, out: Path) -> str:
    """Write the resolved config next to the outputs; returns its short hash.

    The hash skips the output directory and thread count, which do not change results.
    """
    text = _config_text(args)
    semantic = "".join(ln + "\n" for ln in text.splitlines()
                       if ln.split(" = ")[0] not in ("out", "threads"))
    digest = hashlib.sha256(semantic.encode()).hexdigest()[:16]
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(f"# config_hash={digest}\n{text}")
    return digest


# constants --------------------------------------------------------------------

def _margin(args: argparse.Namespace) -> float | None:
    if args.f_delta is not None:
        return args.f_delta
    if args.omega_box is not None:
        delta = 0.5 - args.omega_box
        if not 0 < delta < 0.5:
            raise UsageError("--omega-box must lie in (0, 1/2)")
        return delta * delta * args.f
    return None


def cmd_constants(args: argparse.Namespace) -> int:
    out = Path(args.out)
    digest = write_run_config(args, out)
    lines = [f"# config_hash={digest}"]
    if args.nu is not None:
        lines.append(report_text(c_band(args.k, args.nu, args.m)).rstrip())
    f_r = args.f_r
    if f_r is None and args.r is not None:
        if args.f is None:
            raise UsageError("--r needs --f")
        f_r = args.r**2 * args.f
    if args.variant == "complex":
        if args.omega_box is not None and args.f is None:
            raise UsageError("--omega-box needs --f")
        f_delta = _margin(args)
        if f_delta is not None and f_r is not None:
            if args.sweep_nu:
                best, table = sweep_nu(f_delta, f_r, args.k, args.m)
                lines.append("# nu c_stab guarantee")
                lines += [f"{c.nu:.4g} {c.c_stab:.6f} {c.guarantee:.6f}" for c in table]
                lines.append(f"best_nu = {best.nu:.4g}")
            elif args.nu is not None:
                lines.append(report_text(c_stab_complex(f_delta, f_r, args.k, args.nu, args.m)).rstrip())
    else:
        if args.f is None or f_r is None:
            raise UsageError("real variants need --f and a resolution (--r or --f-r)")
        if args.nu is None:
            raise UsageError("real variants need --nu")
        f_delta = _margin(args) if args.variant == "real_m" else None
        if args.variant == "real_m" and f_delta is None:
            raise UsageError("real_m needs --f-delta or --omega-box")
        lines.append(report_text(c_stab_real(args.f, f_delta, f_r, args.k, args.nu, args.m,
                                             args.variant)).rstrip())
    if args.f_delta is not None and args.variant == "complex":
        lines.append(f"c_sym_delta = {c_sym_delta(args.f_delta):.12g}")
    text = "\n".join(lines) + "\n"
    (out / "constants.txt").write_text(text)
    print(text, end="")
    return 0


# maps ------------------------------------------------------------------------

def _write_map(rmap: bounds.ResolutionMap, out: Path, name: str, digest: str) -> None:
    write_map_csv(out / f"{name}.csv", rmap, {"config_hash": digest})
    write_pgm(out / f"{name}.pgm", rmap, comment=f"config_hash={digest}")
    meta = {**rmap.meta, "config_hash": digest, "max": float(np.max(rmap.values))}
    (out / f"{name}.meta.txt").write_text(report_text(meta))


def cmd_map(args: argparse.Namespace) -> int:
    out = Path(args.out)
    digest = write_run_config(args, out)
    if args.C is not None:
        rmap = resolution_map(args.f, args.C, args.k, args.nu, args.variant, args.pixels,
                              threads=args.threads)
        name = f"resolution_{args.variant}"
    else:
        rmap = stability_map(args.f, args.r, args.k, args.nu, args.variant, args.pixels,
                             threads=args.threads)
        name = f"stability_{args.variant}"
    _write_map(rmap, out, name, digest)
    v = rmap.values
    c = v.shape[0] // 2
    print(f"{name}: max = {np.max(v):.6g}, center = {v[c, c]:.6g}, "
          f"edge midpoint = {v[0, c]:.6g}, corner = {v[0, 0]:.6g}")
    return 0


# reproduce --------------------------------------------------------------------

def _check(rows: list[str], name: str, computed: float, target: str, ok: bool) -> bool:
    rows.append(f"{name} computed={computed:.6g} target={target} status={'ok' if ok else 'MISMATCH'}")
    return ok


def _interior_mask(pixels: int) -> np.ndarray:
    ax = bounds.map_axes(pixels)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    return (np.abs(X) < 0.5) & (np.abs(Y) < 0.5)


def reproduce_fig4(out: Path, digest: str, rows: list[str]) -> bool:
    nus = np.round(np.arange(1.0, 4.0001, 0.01), 2)
    with open(out / "fig4_c_band.csv", "w") as fh:
        fh.write(f"# config_hash={digest}\n# scale=semilog\n")
        fh.write("nu," + ",".join(f"k{k}" for k in FIG4_ORDERS) + "\n")
        for nu in nus:
            nu_eval = 1 + 1e-9 if nu == 1.0 else float(nu)
            vals = [c_band(k, nu_eval).C_band for k in FIG4_ORDERS]
            fh.write(f"{nu:.2f}," + ",".join(f"{v:.10g}" for v in vals) + "\n")
    ok = True
    v = c_band(7, 1 + 1e-9).C_band
    ok &= _check(rows, "fig4 C_band(7, 1+)", v, "0.7071+-1e-3", abs(v - 2**-0.5) <= 1e-3)
    drop = c_band(7, 1.5).C_band
    ok &= _check(rows, "fig4 C_band(7, 1.5)", drop, "< 1e-2", drop < 1e-2)
    plateau = [c_band(7, nu).C_band for nu in (1.5, 2.0, 2.5, 2.99)]
    spread = max(plateau) / min(plateau)
    ok &= _check(rows, "fig4 plateau ratio on [1.5, 3)", spread, "<= 1.05", spread <= 1.05)
    return ok


def reproduce_fig5(out: Path, digest: str, rows: list[str], pixels: int, threads: int,
                   variant: str = "complex") -> bool:
    f = 1e4
    smap = stability_map(f, 1 / 500, 7, 1.2, variant, pixels, threads=threads)
    rmap = resolution_map(f, 0.25, 7, 1.2, variant, pixels, threads=threads)
    tag = "fig5" if variant == "complex" else "fig8"
    _write_map(smap, out, f"{tag}_stability", digest)
    _write_map(rmap, out, f"{tag}_resolution", digest)
    ax = smap.x
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    pts = np.stack([X, Y], axis=-1)
    K = DomainSpec.cube(0.5, 2)
    c = pixels // 2
    ok = True
    if variant == "complex":
        wp = wavepacket_resolution_bound(pts, K, f, "complex")
        g = global_factor(wp, rmap.values, _interior_mask(pixels))
        ok &= _check(rows, "fig5 global factor", g, "[1.0, 1.4]", 1.0 <= g <= 1.4)
        top = float(np.max(rmap.values))
        ok &= _check(rows, "fig5 max resolution", top, "f/(2pi)+-25%",
                     abs(top / (f / (2 * math.pi)) - 1) <= 0.25)
    else:
        mid, corner = float(smap.values[0, c]), float(smap.values[0, 0])
        ok &= _check(rows, "fig8 stability edge midpoint", mid, "> 0", mid > 0)
        ok &= _check(rows, "fig8 stability corner", corner, "= 0", corner == 0)
        rmid = float(rmap.values[0, c])
        ok &= _check(rows, "fig8 resolution edge midpoint", rmid, "> 0", rmid > 0)
    return ok


def reproduce_examples(out: Path, digest: str, rows: list[str], use_cache: bool) -> bool:
    K = DomainSpec.cube(0.5, 2)
    ok = True
    lines = [f"# config_hash={digest}",
             "example,reference_guarantee,guarantee_with_reference_cip,guarantee_computed,"
             "reference_cip,computed_cip,extrapolated_cip,reference_cstab,computed_cstab"]
    for i, ex in phaseless.EXAMPLES.items():
        g_p, cip_p, cs_p = ex["reference"]
        full = phaseless.fullfov_stability_constant(ex["omega"], ex["f"], ex["alpha"],
                                                    ex["grids"], use_cache)
        with_ref = phaseless.phaseless_stability_bound(ex["omega"], K, ex["f"], ex["alpha"],
                                                         1 / ex["inv_r"], 7, ex["nu"], c_ip=cip_p)
        computed = phaseless.phaseless_stability_bound(ex["omega"], K, ex["f"], ex["alpha"],
                                                       1 / ex["inv_r"], 7, ex["nu"], c_ip=full.value)
        cs = with_ref.c_stab ** 2
        ext = full.extrapolated if full.extrapolated is not None else math.nan
        lines.append(f"{i},{g_p},{with_ref.guarantee:.6f},{computed.guarantee:.6f},{cip_p},"
                     f"{full.value:.6f},{ext:.6f},{cs_p},{cs:.6f}")
        ok &= _check(rows, f"example {i} C_stab^m", cs, f"{cs_p}+-1e-3", abs(cs - cs_p) <= 1e-3)
        ok &= _check(rows, f"example {i} C_IP", full.value, f"{cip_p}+-15%",
                     abs(full.value / cip_p - 1) <= 0.15 and full.monotone)
        ok &= _check(rows, f"example {i} guarantee (reference C_IP)", with_ref.guarantee,
                     f">= {g_p}", with_ref.guarantee >= g_p)
        ok &= _check(rows, f"example {i} guarantee (computed C_IP)", computed.guarantee,
                     "> 0", computed.guarantee > 0)
    (out / "examples.csv").write_text("\n".join(lines) + "\n")
    return ok


def cmd_reproduce(args: argparse.Namespace) -> int:
    out = Path(args.out)
    digest = write_run_config(args, out)
    rows: list[str] = []
    if args.target == "fig4":
        ok = reproduce_fig4(out, digest, rows)
    elif args.target == "fig5":
        ok = reproduce_fig5(out, digest, rows, args.pixels, args.threads, "complex")
    elif args.target == "fig8":
        ok = reproduce_fig5(out, digest, rows, args.pixels, args.threads, "real")
    else:
        ok = reproduce_examples(out, digest, rows, not args.no_cache)
    text = f"# config_hash={digest}\n" + "\n".join(rows) + "\n"
    (out / f"manifest_{args.target}.txt").write_text(text)
    print(text, end="")
    return 0 if ok else 1


# verify / propagate ----------------------------------------------------------

def cmd_verify(args: argparse.Namespace) -> int:
    if not args.all and not args.scenario:
        raise UsageError("give --all or at least one --scenario")
    names = verify.SCENARIOS if args.all else args.scenario
    out = Path(args.out)
    digest = write_run_config(args, out)
    rep = verify.run_suite(args.seeds, names, threads=args.threads)
    (out / "verify_records.txt").write_text(f"# config_hash={digest}\n" + rep.records() + "\n")
    print(rep.table())
    for r in rep.reports:
        if r.scenario == "sym_opnorm":
            print(f"sym_opnorm: C_sym ~ {r.measured:.4f}")
    return rep.exit_code


def cmd_propagate(args: argparse.Namespace) -> int:
    out = Path(args.out)
    digest = write_run_config(args, out)
    params = FresnelParams(args.f, args.m)
    if args.gaussian is not None:
        grid = Grid(args.m, args.n, args.extent)
        sigma = args.gaussian
        field = ComplexField.from_function(grid, lambda x: gaussian(x, sigma, args.m))
        exact = propagate_gaussian(args.gaussian, params)
    elif args.object is not None:
        field = read_field(args.object)
        exact = None
    else:
        raise UsageError("give --gaussian SIGMA or --object FILE")
    try:
        res = propagate_fft(field, params)
    except WrapAroundError as err:
        print(f"inconclusive: {err}", file=sys.stderr)
        return 2
    write_field(out / "propagated.flf", res)
    (out / "propagated.flf.meta.txt").write_text(f"config_hash = {digest}\n")
    write_slice_csv(out / "propagated_slice.csv", res, 0, {"config_hash": digest, "f": args.f})
    if exact is not None:
        err = float(np.max(np.abs(res.samples - exact(res.grid.points()))))
        print(f"max |FFT - analytic| = {err:.3e}")
    print(f"wrote {out / 'propagated.flf'}")
    return 0


# parser ----------------------------------------------------------------------

def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    p = _Parser(prog="fresnel-locality", description=__doc__)
    p.add_argument("--config", help="flat 'key = value' file; flags override it")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    subs = {}

    def common(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--out", default="fresnel_out", help="output directory")
        sp.add_argument("--threads", type=int, default=1, help="worker threads (0 = auto)")

    c = sub.add_parser("constants", help="band-limitation and stability constants",
                       description="nu is rounded to 12 decimals before the series start "
                                   "ceil((nu-1)/2) so odd integers are exact.")
    c.add_argument("--k", type=int, required=True)
    c.add_argument("--nu", type=float)
    c.add_argument("--m", type=int, default=2)
    c.add_argument("--f", type=float)
    g = c.add_mutually_exclusive_group()
    g.add_argument("--f-delta", type=float)
    g.add_argument("--omega-box", type=float, help="half-width of the centered object square")
    rg = c.add_mutually_exclusive_group()
    rg.add_argument("--r", type=parse_length, help="resolution length, e.g. 0.002 or 500inv")
    rg.add_argument("--f-r", type=float)
    c.add_argument("--variant", choices=("complex", "real_1d", "real_m"), default="complex")
    c.add_argument("--sweep-nu", action="store_true")
    common(c)
    c.set_defaults(func=cmd_constants)
    subs["constants"] = c

    mp = sub.add_parser("map", help="local stability or resolution map over the square detector")
    mp.add_argument("--f", type=float, required=True)
    mg = mp.add_mutually_exclusive_group(required=True)
    mg.add_argument("--C", type=float, help="stability threshold for a resolution map")
    mg.add_argument("--r", type=parse_length, help="resolution for a stability map")
    mp.add_argument("--k", type=int, default=7)
    mp.add_argument("--nu", type=float, default=1.2)
    mp.add_argument("--variant", choices=("complex", "real"), default="complex")
    mp.add_argument("--pixels", type=int, default=201)
    common(mp)
    mp.set_defaults(func=cmd_map)
    subs["map"] = mp

    rp = sub.add_parser("reproduce", help="regenerate curves, maps and example constants")
    rp.add_argument("target", choices=("fig4", "fig5", "fig8", "examples"))
    rp.add_argument("--pixels", type=int, default=201)
    rp.add_argument("--no-cache", action="store_true")
    common(rp)
    rp.set_defaults(func=cmd_reproduce)
    subs["reproduce"] = rp

    vp = sub.add_parser("verify", help="randomized oracle suite")
    vp.add_argument("--all", action="store_true")
    vp.add_argument("--scenario", action="append", choices=verify.SCENARIOS)
    vp.add_argument("--seeds", type=int, default=100)
    common(vp)
    vp.set_defaults(func=cmd_verify)
    subs["verify"] = vp

    pp = sub.add_parser("propagate", help="FFT propagation of a Gaussian or a dumped field")
    pp.add_argument("--gaussian", type=float, metavar="SIGMA")
    pp.add_argument("--object", help="field dump to propagate")
    pp.add_argument("--f", type=float, required=True)
    pp.add_argument("--m", type=int, default=1)
    pp.add_argument("--n", type=int, default=4096)
    pp.add_argument("--extent", type=float, default=8.0)
    common(pp)
    pp.set_defaults(func=cmd_propagate)
    subs["propagate"] = pp
    return p, subs


def _apply_config(argv: list[str], subs: dict[str, argparse.ArgumentParser]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if not known.config:
        return
    cfg = read_config(known.config)
    cmd = next((a for a in rest if a in subs), None)
    if cmd is None:
        return
    sp = subs[cmd]
    dests = {a.dest: a for a in sp._actions}
    defaults = {}
    for key, val in cfg.items():
        if key not in dests:
            raise UsageError(f"unknown config key {key!r} for {cmd}")
        act = dests[key]
        if act.type is not None:
            defaults[key] = act.type(val)
        elif isinstance(act, (argparse._StoreTrueAction,)):
            defaults[key] = val.lower() in ("1", "true", "yes")
        else:
            defaults[key] = val
        act.required = False
    sp.set_defaults(**defaults)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subs = build_parser()
    try:
        _apply_config(argv, subs)
        args = parser.parse_args(argv)
        if getattr(args, "threads", 1) < 0:
            raise UsageError("--threads must be >= 0")
        return int(args.func(args))
    except (UsageError, argparse.ArgumentTypeError, OSError, ValueError) as err:
        print(f"fresnel-locality: error: {err}", file=sys.stderr)
        return EX_USAGE


if __name__ == "__main__":
    sys.exit(main())
