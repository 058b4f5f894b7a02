"""Command line interface: ``spdstat synth|average|compare|cr|bench``.

Exit codes: 0 success, 2 configuration error, 3 file format error,
4 numeric failure.
"""

import argparse
import csv
import sys
import time

import numpy as np

from .errors import ConfigError, InvalidArgumentError, NumericFailure, SpdStatError, VolumeFormatError
from .geometry import MetricKind
from .inference import build_cr, cr_extreme_points, cr_statistic
from .means import KarcherConfig
from .pipeline import compute_averages, ellipsoid_axes, voxelwise_analysis, write_report, write_summary
from .symcore import dim_q, vecd, vecd_inv
from .volume import Region, TensorVolume, load_volume, save_volume, synth_volume

EXIT_OK, EXIT_CONFIG, EXIT_FORMAT, EXIT_NUMERIC = 0, 2, 3, 4


def _floats(text, what):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"{what}: expected comma-separated numbers, got {text!r}") from None


def _ints(text, what, count):
    try:
        vals = [int(t) for t in text.split(",")]
    except ValueError:
        raise ConfigError(f"{what}: expected {count} comma-separated integers, got {text!r}") from None
    if len(vals) != count:
        raise ConfigError(f"{what}: expected {count} values, got {len(vals)}")
    return vals


def _rotation(angles, p):
    if p == 2:
        if len(angles) != 1:
            raise ConfigError("rot for p=2 takes one angle")
        a = np.radians(angles[0])
        return np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    if p == 3:
        from scipy.spatial.transform import Rotation

        if len(angles) != 3:
            raise ConfigError("rot for p=3 takes three angles (z, y, x Euler, degrees)")
        return Rotation.from_euler("zyx", angles, degrees=True).as_matrix()
    raise ConfigError("rot is only supported for p = 2 or 3")


def parse_region(text, dims, p, default_model):
    """Parse ``BOX;key=value;...``.

    ``BOX`` is ``all`` or ``x0:x1,y0:y1,z0:z1`` (half-open).  Keys:
    ``eig`` (p eigenvalues, default all ones), ``rot`` (Euler angles in
    degrees), ``vecd`` (q entries of M, instead of eig/rot), ``sigma``
    (scalar s for s*I, or q diagonal entries) and ``model`` (typeI/typeII).
    """
    fields = [f.strip() for f in text.split(";") if f.strip()]
    if not fields:
        raise ConfigError("empty region spec")
    box_txt = fields[0]
    if box_txt == "all":
        box = (0, dims[0], 0, dims[1], 0, dims[2])
    else:
        axes = box_txt.split(",")
        if len(axes) != 3:
            raise ConfigError(f"region box must be x0:x1,y0:y1,z0:z1 or 'all', got {box_txt!r}")
        box = []
        for ax in axes:
            lo_hi = ax.split(":")
            if len(lo_hi) != 2:
                raise ConfigError(f"bad box interval {ax!r}")
            try:
                box += [int(lo_hi[0]), int(lo_hi[1])]
            except ValueError:
                raise ConfigError(f"bad box interval {ax!r}") from None
        box = tuple(box)
    opts = {}
    for f in fields[1:]:
        if "=" not in f:
            raise ConfigError(f"region option {f!r} must be key=value")
        k, v = f.split("=", 1)
        opts[k.strip()] = v.strip()
    unknown = set(opts) - {"eig", "rot", "vecd", "sigma", "model"}
    if unknown:
        raise ConfigError(f"unknown region option(s): {', '.join(sorted(unknown))}")
    q = dim_q(p)
    if "vecd" in opts:
        v = _floats(opts["vecd"], "vecd")
        if len(v) != q:
            raise ConfigError(f"vecd needs {q} entries for p={p}")
        M = vecd_inv(np.array(v))
    else:
        eig = _floats(opts["eig"], "eig") if "eig" in opts else [1.0] * p
        if len(eig) != p:
            raise ConfigError(f"eig needs {p} entries")
        if min(eig) <= 0:
            raise ConfigError("eigenvalues must be positive")
        M = np.diag(eig)
        if "rot" in opts:
            R = _rotation(_floats(opts["rot"], "rot"), p)
            M = R @ M @ R.T
    s = _floats(opts.get("sigma", "0.05"), "sigma")
    if len(s) == 1:
        sigma = s[0] * np.eye(q)
    elif len(s) == q:
        sigma = np.diag(s)
    else:
        raise ConfigError(f"sigma needs 1 or {q} entries")
    return Region(box, M, sigma, opts.get("model", default_model))


def _karcher_cfg(args):
    try:
        return KarcherConfig(tol=args.tol, max_iter=args.max_iter)
    except InvalidArgumentError as exc:
        raise ConfigError(str(exc)) from None


def cmd_synth(args):
    dims = _ints(args.dims, "--dims", 3)
    if not args.region:
        raise ConfigError("give at least one --region")
    regions = [parse_region(r, dims, args.p, args.model) for r in args.region]
    vol = synth_volume(dims, args.p, args.n, regions, seed=args.seed)
    save_volume(vol, args.out)
    print(f"wrote {args.out}: dims={vol.dims} p={vol.p} n={vol.n} voxels={int(vol.mask.sum())}")
    return EXIT_OK


def cmd_average(args):
    vol = load_volume(args.inp)
    avg, ok = compute_averages(vol, args.method, _karcher_cfg(args))
    mask = vol.mask & ok
    failed = int(vol.mask.sum() - mask.sum())
    out = TensorVolume(vol.dims, vol.p, 1, vecd(avg)[:, None, :] * mask[:, None, None], mask)
    save_volume(out, args.out)
    print(f"wrote {args.out}: {int(mask.sum())} voxels averaged ({MetricKind.parse(args.method).value}), "
          f"{failed} failed to converge")
    return EXIT_OK


def cmd_compare(args):
    vol = load_volume(args.inp)
    pairs = args.pair or ["log-euclidean:euclidean"]
    result = voxelwise_analysis(vol, pairs=pairs, alpha=args.alpha, fdr_q=args.fdr_q,
                                cfg=_karcher_cfg(args), workers=args.workers)
    if args.report == "-":
        write_report(result, sys.stdout)
    else:
        with open(args.report, "w", newline="") as fh:
            write_report(result, fh)
    write_summary(result, sys.stdout if args.report != "-" else sys.stderr)
    return EXIT_OK


def cmd_cr(args):
    vol = load_volume(args.inp)
    x, y, z = _ints(args.voxel, "--voxel", 3)
    i = vol.linear_index(x, y, z)
    if not vol.mask[i]:
        raise ConfigError(f"voxel ({x},{y},{z}) is masked out")
    try:
        cr = build_cr(args.method, vol.matrices(i), args.alpha, _karcher_cfg(args))
    except InvalidArgumentError as exc:
        raise ConfigError(str(exc)) from None
    plus, minus = cr_extreme_points(cr)
    fh = sys.stdout if args.out in (None, "-") else open(args.out, "w", newline="")
    try:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        fh.write(f"# kind={cr.kind.value} n={cr.n} alpha={cr.alpha:g} threshold={cr.threshold!r}\n")
        fh.write(f"# statistic plus={float(cr_statistic(cr, plus))!r} minus={float(cr_statistic(cr, minus))!r}\n")
        w.writerow(["point", "axis", "length"] + [f"dir_{k + 1}" for k in range(vol.p)])
        for name, X in (("center", cr.center), ("plus", plus), ("minus", minus)):
            for k, (length, d) in enumerate(ellipsoid_axes(X).triplets()):
                w.writerow([name, k + 1, repr(length)] + [repr(float(c)) for c in d])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def cmd_bench(args):
    vol = load_volume(args.inp)
    cfg = _karcher_cfg(args)
    print("method\tseconds\tvoxels")
    for kind in MetricKind:
        t0 = time.perf_counter()
        _, ok = compute_averages(vol, kind, cfg)
        dt = time.perf_counter() - t0
        print(f"{kind.value}\t{dt:.4f}\t{int(ok.sum())}")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="spdstat", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def karcher_opts(p):
        p.add_argument("--tol", type=float, default=1e-12, help="canonical average tolerance")
        p.add_argument("--max-iter", type=int, default=100)

    s = sub.add_parser("synth", help="generate a synthetic lognormal tensor volume")
    s.add_argument("--dims", required=True, help="nx,ny,nz")
    s.add_argument("--p", type=int, default=3)
    s.add_argument("--n", type=int, default=34, help="subjects per voxel")
    s.add_argument("--model", choices=["typeI", "typeII"], default="typeI")
    s.add_argument("--region", action="append", help="BOX;eig=..;rot=..;sigma=..  (repeatable)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    a = sub.add_parser("average", help="voxelwise average, written as an n=1 volume")
    a.add_argument("--method", choices=[k.value for k in MetricKind], required=True)
    karcher_opts(a)
    a.add_argument("--in", dest="inp", required=True)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_average)

    c = sub.add_parser("compare", help="p-value maps of one average inside another's CR")
    c.add_argument("--pair", action="append", help="<avg>:<cr>, e.g. log-euclidean:euclidean (repeatable)")
    c.add_argument("--alpha", type=float, default=0.05)
    c.add_argument("--fdr-q", type=float, default=0.2)
    c.add_argument("--workers", type=int, default=1)
    karcher_opts(c)
    c.add_argument("--in", dest="inp", required=True)
    c.add_argument("--report", required=True, help="output TSV path, or - for stdout")
    c.set_defaults(func=cmd_compare)

    r = sub.add_parser("cr", help="confidence region center and extreme points at one voxel")
    r.add_argument("--method", choices=[k.value for k in MetricKind], required=True)
    r.add_argument("--alpha", type=float, default=0.05)
    r.add_argument("--voxel", required=True, help="x,y,z")
    karcher_opts(r)
    r.add_argument("--in", dest="inp", required=True)
    r.add_argument("--out", default=None)
    r.set_defaults(func=cmd_cr)

    b = sub.add_parser("bench", help="time the three averages over all voxels")
    karcher_opts(b)
    b.add_argument("--in", dest="inp", required=True)
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InvalidArgumentError) as exc:
        print(f"spdstat: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (VolumeFormatError, OSError) as exc:
        print(f"spdstat: format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except NumericFailure as exc:
        print(f"spdstat: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SpdStatError as exc:
        print(f"spdstat: error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
