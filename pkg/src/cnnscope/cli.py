"""Command-line surface: one subcommand per pipeline.

Exit codes are part of the contract so scripts can branch on them:
0 success, 2 usage/parse/selection error, 3 file I/O or format error,
4 data/precondition error.  No partially-written output files: every
writer goes through a temp file renamed on success.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import fileio, fixtures
from .engine import preprocess, run_forward, top_k_predictions, validate_weights
from .errors import (CnnScopeError, EngineError, ImageFormatError, NetSpecError,
                     PreconditionError, SelectionError, WeightFormatError)
from .netspec import (BUILTIN_NAMES, Conv, MaxPool, Relu, Softmax,
                      builtin_netspec, parse_netspec, print_netspec,
                      receptive_fields, shape_trace)
from .patches import compose_grid, extract_patches, grid_fill, top_patches_for_filter
from .plotting import line_plot
from .reconstruct import Selection, reconstruct, to_displayable
from .sparsity import compare_sparsity, layer_sparsity
from .tsne import run_tsne

OUT_DIR_ENV = "CNNSCOPE_OUT"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DATA = 4


def _add_net_args(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--builtin", choices=sorted(BUILTIN_NAMES) + sorted(fixtures.FIXTURE_NAMES),
                   help="built-in architecture name")
    g.add_argument("--spec", metavar="FILE", help="architecture description file")


def _add_out_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", metavar="DIR",
                   default=os.environ.get(OUT_DIR_ENV, "."),
                   help=f"output directory (default: ${OUT_DIR_ENV} or cwd)")
    p.add_argument("--png", action="store_true",
                   help="write PNG instead of PPM images")


def _load_net(args):
    if args.builtin is not None:
        if args.builtin in fixtures.FIXTURE_NAMES:
            return fixtures.fixture_netspec(args.builtin)
        return builtin_netspec(args.builtin)
    return parse_netspec(Path(args.spec).read_text(encoding="utf-8"))


def _load_weights(args, net):
    weights, mean = fileio.read_weights(args.weights)
    validate_weights(net, weights)
    if getattr(args, "no_mean", False):
        mean = None
    return weights, mean


def _load_image(path, net) -> np.ndarray:
    """Read an image and adapt it to the net's input geometry."""
    img = fileio.read_image(path)
    want_c, want_h, want_w = net.input_shape
    if img.shape[1:] != (want_h, want_w):
        img = fileio.resize_nearest(img, want_h, want_w)
    if want_c == 3:
        return img
    if want_c == 1:
        gray = np.rint(img.astype(np.float32).mean(axis=0)).astype(np.uint8)
        return gray[None]
    raise PreconditionError(
        f"cannot adapt a 3-channel image to a {want_c}-channel input"
    )


def _load_dataset(args, net) -> list[tuple[str, np.ndarray]]:
    entries = fileio.read_manifest(args.manifest)
    return [(Path(p).name, _load_image(p, net)) for p, _ in entries]


def _image_path(out_dir: str, stem: str, png: bool) -> Path:
    return Path(out_dir) / f"{stem}{'.png' if png else '.ppm'}"


def _ensure_out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_arch(args) -> int:
    net = _load_net(args)
    lines = ["# layer\ttype\tout_shape"]
    kinds = {"Conv": "conv", "Relu": "relu", "MaxPool": "pool",
             "Fc": "fc", "Softmax": "softmax"}
    for layer, (name, shape) in zip(net.layers, shape_trace(net)):
        kind = kinds[type(layer).__name__]
        lines.append(f"{name}\t{kind}\t{'x'.join(str(d) for d in shape)}")
    lines.append("")
    lines.append("# layer\tsize\tstride\toffset")
    for name, rf in receptive_fields(net):
        if isinstance(net.layer(name), (Conv, MaxPool)):
            lines.append(f"{name}\t{rf.size}\t{rf.stride}\t{rf.offset}")
    print("\n".join(lines))
    return EXIT_OK


def cmd_forward(args) -> int:
    net = _load_net(args)
    weights, mean = _load_weights(args, net)
    x = preprocess(_load_image(args.image, net), mean)
    trace = run_forward(net, weights, x)

    if args.trace_out:
        tensors = {"__input__": trace.input}
        tensors.update(trace.activations)
        fileio.write_tensors(args.trace_out, tensors)
        print(f"wrote {len(tensors)} tensors to {args.trace_out}")

    if any(isinstance(l, Softmax) for l in net.layers):
        dim = trace.final.size
        if args.labels:
            labels = Path(args.labels).read_text(encoding="utf-8").splitlines()
            labels = [l for l in labels if l.strip()]
            if len(labels) != dim:
                raise SelectionError(
                    f"label file has {len(labels)} entries, net outputs {dim}"
                )
        else:
            labels = [f"class_{i}" for i in range(dim)]
        k = dim if args.k is None else args.k
        if not 1 <= k <= dim:
            raise SelectionError(f"--k {k} out of range for {dim} outputs")
        print("# rank\tlabel\tprobability")
        for rank, (label, prob) in enumerate(top_k_predictions(trace, k, labels), 1):
            print(f"{rank}\t{label}\t{prob:.6f}")
    elif not args.trace_out:
        raise SelectionError("net has no softmax; use --trace-out to dump activations")
    return EXIT_OK


def _parse_selection(layer: str, text: str) -> Selection:
    if text == "full":
        return Selection.full(layer)
    kind, _, rest = text.partition(":")
    try:
        if kind == "filter":
            return Selection.single_filter(layer, int(rest))
        if kind == "neuron":
            k, r, c = (int(v) for v in rest.split(","))
            return Selection.neuron(layer, k, r, c)
        if kind == "topk":
            return Selection.top_filters(layer, int(rest))
    except ValueError:
        raise SelectionError(f"malformed selection {text!r}") from None
    raise SelectionError(
        f"unknown selection {text!r} (use full, filter:K, neuron:K,R,C, topk:N)"
    )


def cmd_reconstruct(args) -> int:
    net = _load_net(args)
    weights, mean = _load_weights(args, net)
    img = _load_image(args.image, net)
    trace = run_forward(net, weights, preprocess(img, mean))
    stem = Path(args.image).stem

    if args.layers:
        if args.layers == "all-conv":
            layer_names = [l.name for l in net.layers if isinstance(l, Conv)]
        elif args.layers == "all":
            layer_names = [l.name for l in net.layers
                           if isinstance(l, (Conv, Relu, MaxPool))]
        else:
            layer_names = args.layers.split(",")
        selections = [Selection.full(n) for n in layer_names]
    elif args.layer:
        selections = [_parse_selection(args.layer, args.select)]
    else:
        raise SelectionError("give either --layers or --layer")

    rendered = [(sel.layer, to_displayable(reconstruct(net, weights, trace, sel)))
                for sel in selections]
    out = _ensure_out(args)
    for layer_name, img8 in rendered:
        path = _image_path(out, f"{stem}_{layer_name}", args.png)
        fileio.write_image(path, img8)
        print(f"wrote {path}")
    return EXIT_OK


def cmd_embed(args) -> int:
    net = _load_net(args)
    weights, mean = _load_weights(args, net)
    dataset = _load_dataset(args, net)
    records = extract_patches(dataset, net, weights, args.layer,
                              sampling=args.sampling.replace("-", "_"),
                              n=args.n, seed=args.seed, mean=mean,
                              threads=args.threads)
    vectors = np.stack([r.activation for r in records]).astype(np.float64)
    result = run_tsne(vectors, perplexity=args.perplexity,
                      iterations=args.iterations, seed=args.seed)

    out = _ensure_out(args)
    rows = [[i, r.image_id, r.position[0], r.position[1],
             f"{result.embedding[i, 0]:.8f}", f"{result.embedding[i, 1]:.8f}"]
            for i, r in enumerate(records)]
    tsv_path = out / "embedding.tsv"
    fileio.write_tsv(tsv_path, ["patch_id", "image_id", "row", "col", "x", "y"], rows)

    assign = grid_fill(result.embedding, args.grid)
    canvas = compose_grid(assign, records, cell=args.cell)
    grid_path = _image_path(out, "grid", args.png)
    fileio.write_image(grid_path, canvas)
    print(f"embedded {len(records)} patches; kl={result.kl:.4f}")
    print(f"wrote {tsv_path}")
    print(f"wrote {grid_path}")
    return EXIT_OK


def cmd_sparsity(args) -> int:
    net = _load_net(args)
    weights, mean = _load_weights(args, net)
    dataset = _load_dataset(args, net)
    layers = args.layers.split(",") if args.layers else None
    report = layer_sparsity(net, weights, dataset, layers=layers,
                            post_relu=not args.pre_relu,
                            threshold=args.threshold, mean=mean,
                            threads=args.threads)

    out = _ensure_out(args)
    columns = ["layer", "zeros", "total", "sparsity"]
    tsv_path = out / "sparsity.tsv"
    fileio.write_tsv(tsv_path, columns, report.to_tsv_rows())
    print(fileio.format_tsv(columns, report.to_tsv_rows()), end="")

    series = [("sparsity", [r.sparsity for r in report.rows])]
    if args.compare:
        _, rows = fileio.read_tsv(args.compare)
        other = {r[0]: float(r[3]) for r in rows}
        table = [(name, report.sparsity(name) if name in report.layers() else None,
                  other.get(name))
                 for name in list(report.layers()) +
                 [n for n in other if n not in report.layers()]]
        cmp_rows = [[n, "-" if a is None else f"{a:.6f}",
                     "-" if b is None else f"{b:.6f}"] for n, a, b in table]
        fileio.write_tsv(out / "sparsity_compare.tsv",
                         ["layer", "sparsity_a", "sparsity_b"], cmp_rows)
        shared = [r.layer for r in report.rows if r.layer in other]
        series.append(("compare", [other[n] for n in shared]))
    plot_path = _image_path(out, "sparsity", args.png)
    fileio.write_image(plot_path, line_plot(series))
    print(f"wrote {tsv_path}")
    print(f"wrote {plot_path}")
    return EXIT_OK


def cmd_top_patches(args) -> int:
    net = _load_net(args)
    weights, mean = _load_weights(args, net)
    dataset = _load_dataset(args, net)
    records = top_patches_for_filter(dataset, net, weights, args.layer,
                                     args.filter, args.n, mean=mean,
                                     threads=args.threads)

    by_id = dict(dataset)
    out = _ensure_out(args)
    outputs = []
    for rank, rec in enumerate(records):
        outputs.append((f"{args.layer}_f{args.filter}_r{rank}_patch", rec.pixels))
        if args.recon != "none":
            trace = run_forward(net, weights,
                                preprocess(by_id[rec.image_id], mean))
            if args.recon == "neuron":
                sel = Selection.neuron(args.layer, args.filter,
                                       rec.position[0], rec.position[1])
            else:
                sel = Selection.single_filter(args.layer, args.filter)
            pix = to_displayable(reconstruct(net, weights, trace, sel))
            outputs.append((f"{args.layer}_f{args.filter}_r{rank}_recon", pix))
    for stem, img8 in outputs:
        path = _image_path(out, stem, args.png)
        fileio.write_image(path, img8)
        print(f"wrote {path}")
    return EXIT_OK


def cmd_fixture(args) -> int:
    net = fixtures.fixture_netspec(args.name)
    weights = fixtures.fixture_weights(net, seed=args.seed)
    out = _ensure_out(args)

    spec_path = out / f"{args.name}.net"
    fileio.atomic_write_bytes(spec_path, print_netspec(net).encode())
    weights_path = out / f"{args.name}.cnnw"
    fileio.write_weights(weights_path, weights)

    rows = []
    for i in range(args.images):
        img = fixtures.fixture_image((3, *net.input_shape[1:]),
                                     seed=args.seed + 100 + i)
        path = _image_path(out, f"img_{i:02d}", args.png)
        fileio.write_image(path, img)
        rows.append([path.name])
    fileio.write_tsv(out / "manifest.tsv", ["path"], rows)
    print(f"wrote {spec_path}, {weights_path}, {args.images} images, manifest.tsv")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cnnscope",
        description="Inspect CNN representations: receptive fields, "
                    "reconstructions, patch embeddings, sparsity.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("arch", help="print shape trace and receptive fields")
    _add_net_args(p)
    p.set_defaults(func=cmd_arch)

    p = sub.add_parser("forward", help="run one image through a net")
    _add_net_args(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--labels", help="file with one class label per line")
    p.add_argument("--k", type=int, help="how many predictions (default: all)")
    p.add_argument("--trace-out", metavar="FILE",
                   help="dump all layer activations to a tensor container")
    p.add_argument("--no-mean", action="store_true",
                   help="skip mean subtraction even if the weight file has one")
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("reconstruct", help="project representations to pixels")
    _add_net_args(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--layers", metavar="LIST",
                   help="comma-separated layers, or all-conv, or all")
    p.add_argument("--layer", help="single layer (with --select)")
    p.add_argument("--select", default="full",
                   help="full | filter:K | neuron:K,R,C | topk:N")
    p.add_argument("--no-mean", action="store_true")
    _add_out_arg(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("embed", help="t-SNE a layer's patch representations")
    _add_net_args(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--layer", required=True)
    p.add_argument("--sampling", default="top-norm",
                   choices=["all", "random", "top-norm"],
                   help="patch sampling rule (default: top-norm)")
    p.add_argument("--n", type=int, default=500,
                   help="sample cap for random/top-norm (default: 500)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--grid", type=int, default=8)
    p.add_argument("--cell", type=int, help="grid cell pixel size")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--no-mean", action="store_true")
    _add_out_arg(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("sparsity", help="zero-activation fractions per layer")
    _add_net_args(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--layers", metavar="LIST", help="comma-separated layer names")
    p.add_argument("--pre-relu", action="store_true",
                   help="measure conv/fc outputs before rectification")
    p.add_argument("--threshold", type=float, default=0.0,
                   help="treat |v| <= threshold as zero (default exact)")
    p.add_argument("--compare", metavar="TSV",
                   help="second sparsity.tsv to align against")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--no-mean", action="store_true")
    _add_out_arg(p)
    p.set_defaults(func=cmd_sparsity)

    p = sub.add_parser("top-patches", help="strongest patches for one filter")
    _add_net_args(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--layer", required=True)
    p.add_argument("--filter", type=int, required=True)
    p.add_argument("--n", type=int, default=5)
    p.add_argument("--recon", default="filter", choices=["filter", "neuron", "none"],
                   help="pair each patch with a reconstruction (default filter)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--no-mean", action="store_true")
    _add_out_arg(p)
    p.set_defaults(func=cmd_top_patches)

    p = sub.add_parser("fixture", help="write a seeded demo net + images")
    p.add_argument("--name", required=True, choices=sorted(fixtures.FIXTURE_NAMES))
    p.add_argument("--images", type=int, default=4)
    p.add_argument("--seed", type=int, default=7)
    _add_out_arg(p)
    p.set_defaults(func=cmd_fixture)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (NetSpecError, SelectionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (WeightFormatError, ImageFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (PreconditionError, EngineError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CnnScopeError as exc:  # any stray typed error: treat as data
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
