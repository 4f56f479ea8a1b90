"""Command-line pipeline: synthesize data, fit operators, analyze spectra.

Subcommands write NPY tensors/matrices, UTF-8 CSVs with a header row, and a
single accumulating ``report.json`` validated against the shipped schema.
Every command is deterministic given its seed; floats are serialized with
shortest-round-trip repr so reruns are byte-identical.

Exit codes: 0 success, 1 runtime or data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, harness, koopman, metrics, report, spectral, state_io
from .errors import ModeClosureError, NumericsError

DEFAULT_EPSILON = spectral.DEFAULT_EPSILON
DEFAULT_DOMINANT_COUNT = 4
DEFAULT_SILHOUETTE_DIM = 5

_BASIS_CHOICES = {"svd": koopman.BASIS_SVD, "pca": koopman.BASIS_PCA}

TENSOR_FILE = "tensor.npy"
LABELS_FILE = "labels.txt"
MANIFEST_FILE = "manifest.json"
OPERATOR_FILE = "C.npy"
BASIS_FILE = "B.npy"
BASIS_MEAN_FILE = "basis_mean.npy"


class UsageError(Exception):
    """Bad command-line level input; maps to exit code 2."""


def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _parse_modes(text: str) -> tuple[int, ...]:
    try:
        modes = tuple(int(part) for part in text.split(",") if part.strip() != "")
    except ValueError as exc:
        raise UsageError(f"--modes must be a comma-separated index list, got {text!r}") from exc
    if not modes:
        raise UsageError("--modes must name at least one mode index")
    return modes


def _load_fitted(out: Path):
    report_path = out / report.REPORT_NAME
    if not report_path.exists():
        raise FileNotFoundError(f"no {report.REPORT_NAME} in {out}; run `fit` first")
    doc = report.read_report(report_path)
    if "operator" not in doc or "basis" not in doc:
        raise ValueError(f"{report_path} has no fitted operator; run `fit` first")
    vectors = state_io.load_matrix(out / doc["operator"]["b_path"])
    mean = None
    if doc["operator"].get("mean_path"):
        mean = state_io.load_vector(out / doc["operator"]["mean_path"])
    basis = koopman.SpectralBasis(
        vectors,
        np.asarray(doc["basis"]["singular_values"], dtype=np.float64),
        method=doc["basis"]["method"],
        mean=mean,
    )
    matrix = state_io.load_matrix(out / doc["operator"]["c_path"])
    operator = koopman.KoopmanOperator(matrix, basis, float(doc["operator"]["fit_residual"]))
    eigsys = spectral.decompose(operator)
    return doc, basis, operator, eigsys


def _load_manifest_arg(args) -> state_io.DatasetManifest:
    if not getattr(args, "manifest", None):
        raise UsageError("--manifest is required for this command")
    return state_io.load_manifest(args.manifest)


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def cmd_synth_linear(args) -> None:
    if args.k < 1 or args.s < 1 or args.n < 2:
        raise UsageError("need --k >= 1, --s >= 1, --n >= 2")
    if args.noise < 0:
        raise UsageError("--noise must be >= 0")
    if args.spectral_radius > harness.MAX_SPECTRAL_RADIUS and not args.force:
        raise UsageError(
            f"--spectral-radius {args.spectral_radius} exceeds "
            f"{harness.MAX_SPECTRAL_RADIUS}; pass --force for unstable dynamics"
        )
    out = _out_dir(args)
    dynamics = harness.LinearDynamics.random(args.k, args.spectral_radius, args.seed)
    tensor = harness.gen_linear(
        dynamics, args.s, args.n, noise_rel=args.noise, seed=args.seed, force=args.force
    )
    state_io.save_tensor(tensor, out / TENSOR_FILE)
    manifest = state_io.DatasetManifest(
        name=f"linear-k{args.k}-s{args.s}-n{args.n}-seed{args.seed}",
        tensor_path=TENSOR_FILE,
        base_dir=out,
    )
    state_io.save_manifest(manifest, out / MANIFEST_FILE)
    print(f"seed: {args.seed}")


def cmd_synth_counter(args) -> None:
    if args.k < 2 or args.s < 1 or args.len < 1:
        raise UsageError("need --k >= 2, --s >= 1, --len >= 1")
    if not 0.0 < args.decay < 1.0:
        raise UsageError("--decay must lie in (0, 1)")
    out = _out_dir(args)
    rnn = harness.build_counter_rnn(args.k, decay=args.decay, seed=args.seed)
    streams = harness.sample_token_streams(rnn.vocab, args.s, args.len, seed=args.seed)
    tensor = rnn.run(streams)
    labels = (tensor.data[:, -1, 0] > 0).astype(np.int64)
    state_io.save_tensor(tensor, out / TENSOR_FILE)
    state_io.save_labels(labels, out / LABELS_FILE)
    state_io.save_matrix(rnn.readout.weights, out / "readout_weights.npy")
    state_io.save_vector(rnn.readout.bias, out / "readout_bias.npy")
    manifest = state_io.DatasetManifest(
        name=f"counter-k{args.k}-s{args.s}-len{args.len}-seed{args.seed}",
        tensor_path=TENSOR_FILE,
        labels_path=LABELS_FILE,
        readout_path=("readout_weights.npy", "readout_bias.npy"),
        readout_kind=state_io.READOUT_SIGMOID,
        base_dir=out,
    )
    state_io.save_manifest(manifest, out / MANIFEST_FILE)
    print(f"seed: {args.seed}")


def cmd_synth_clusters(args) -> None:
    if args.k < 1 or args.s < 2 or args.n < 1:
        raise UsageError("need --k >= 1, --s >= 2, --n >= 1")
    out = _out_dir(args)
    tensor, labels = harness.gen_labeled_clusters(
        args.k,
        args.s,
        args.n,
        separation=args.separation,
        seed=args.seed,
        same_distribution=args.same_class,
    )
    state_io.save_tensor(tensor, out / TENSOR_FILE)
    state_io.save_labels(labels, out / LABELS_FILE)
    manifest = state_io.DatasetManifest(
        name=f"clusters-k{args.k}-s{args.s}-n{args.n}-seed{args.seed}",
        tensor_path=TENSOR_FILE,
        labels_path=LABELS_FILE,
        base_dir=out,
    )
    state_io.save_manifest(manifest, out / MANIFEST_FILE)
    print(f"seed: {args.seed}")


# ---------------------------------------------------------------------------
# fit / spectrum / project / predict / silhouette / report
# ---------------------------------------------------------------------------


def cmd_fit(args) -> None:
    manifest = _load_manifest_arg(args)
    out = _out_dir(args)
    tensor, _, _ = state_io.load_dataset(manifest)
    method = _BASIS_CHOICES[args.basis]
    rank = args.rank
    if rank is None:
        full = min(tensor.hidden_dim, tensor.stacked_valid().shape[0])
        probe = koopman.compute_basis(tensor, full, method=method)
        rank = koopman.choose_rank(probe.singular_values, args.energy)
    basis = koopman.compute_basis(tensor, rank, method=method)
    operator = koopman.fit_koopman(tensor, basis, include_padded=args.include_padding)
    eigsys = spectral.decompose(operator)

    state_io.save_matrix(basis.vectors, out / BASIS_FILE)
    state_io.save_matrix(operator.matrix, out / OPERATOR_FILE)
    mean_path = None
    if basis.mean is not None:
        mean_path = BASIS_MEAN_FILE
        state_io.save_vector(basis.mean, out / BASIS_MEAN_FILE)

    count = min(args.dominant, basis.rank)
    doc = report.new_report(manifest.to_json_dict(), seed=args.seed)
    doc["basis"] = {
        "method": basis.method,
        "r": basis.rank,
        "singular_values": [float(v) for v in basis.singular_values],
    }
    doc["operator"] = {
        "fit_residual": operator.fit_residual,
        "c_path": OPERATOR_FILE,
        "b_path": BASIS_FILE,
        "mean_path": mean_path,
    }
    doc["epsilon"] = args.epsilon
    doc["spectrum"] = report.spectrum_entries(eigsys, args.epsilon)
    doc["dominant_modes"] = list(spectral.dominant_modes(eigsys, count, tensor, basis))
    doc["errors"] = {
        "relative_error": koopman.one_step_error(
            tensor, operator, include_padded=args.include_padding
        ),
        "separability_residual": spectral.separability_residual(
            tensor, basis, eigsys, include_padded=args.include_padding
        ),
    }
    report.write_report(doc, out / report.REPORT_NAME)
    if args.verbose:
        print(f"rank {basis.rank}, fit residual {_fmt(operator.fit_residual)}", file=sys.stderr)


def cmd_spectrum(args) -> None:
    out = _out_dir(args)
    _, _, _, eigsys = _load_fitted(out)
    entries = report.spectrum_entries(eigsys, args.epsilon)
    rows = [
        [
            entry["index"],
            _fmt(entry["lambda_re"]),
            _fmt(entry["lambda_im"]),
            _fmt(entry["modulus"]),
            entry["memory_horizon"]
            if isinstance(entry["memory_horizon"], str)
            else _fmt(entry["memory_horizon"]),
        ]
        for entry in entries
    ]
    _write_csv(
        out / "spectrum.csv",
        ["index", "lambda_re", "lambda_im", "modulus", "memory_horizon"],
        rows,
    )
    report.update_report(
        out / report.REPORT_NAME, {"spectrum": entries, "epsilon": args.epsilon}
    )


def cmd_project(args) -> None:
    if not args.magnitudes and not args.subspace:
        raise UsageError("pass --magnitudes and/or --subspace")
    manifest = _load_manifest_arg(args)
    out = _out_dir(args)
    _, basis, _, eigsys = _load_fitted(out)
    tensor, _, _ = state_io.load_dataset(manifest)
    modes = _parse_modes(args.modes)
    modes = spectral.require_conjugate_closed(eigsys.values, modes)
    if args.magnitudes:
        series = spectral.magnitude_series(tensor, basis, eigsys, modes)
        header = ["sample"] + [f"t{j}" for j in range(tensor.timesteps)]
        rows = [[s] + [_fmt(v) for v in series[s]] for s in range(tensor.samples)]
        _write_csv(out / "magnitudes.csv", header, rows)
    if args.subspace:
        projector = spectral.subspace_projector(basis, eigsys, modes)
        state_io.save_matrix(projector, out / "subspace_projector.npy")
        projected = tensor.data.reshape(-1, tensor.hidden_dim) @ projector
        state_io.save_tensor(
            state_io.HiddenStateTensor(projected.reshape(tensor.data.shape), tensor.mask),
            out / "subspace_tensor.npy",
        )


def cmd_predict(args) -> None:
    manifest = _load_manifest_arg(args)
    out = _out_dir(args)
    _, basis, operator, eigsys = _load_fitted(out)
    tensor, _, readout = state_io.load_dataset(manifest)
    if args.steps < 1:
        raise UsageError("--steps must be >= 1")
    errors = {
        "relative_error": koopman.one_step_error(
            tensor, operator, include_padded=args.include_padding
        ),
        "separability_residual": spectral.separability_residual(
            tensor, basis, eigsys, include_padded=args.include_padding
        ),
    }
    if args.steps > 1:
        multi = koopman.multi_step_errors(
            tensor, operator, args.steps, include_padded=args.include_padding
        )
        errors["multi_step"] = [
            {"steps": step, "relative_error": err} for step, err in enumerate(multi, start=1)
        ]
    updates: dict = {"errors": errors}
    if readout is not None:
        x, y = state_io.flatten_valid(tensor, include_padded=args.include_padding)
        _, network_cats = state_io.apply_readout(readout, y)
        _, surrogate_cats = state_io.apply_readout(readout, koopman.predict_next(x, operator))
        num_categories = max(2, readout.weights.shape[1])
        agree = metrics.agreement(network_cats, surrogate_cats, num_categories)
        updates["agreement"] = {
            "total": agree.total,
            "matching": agree.matching,
            "confusion": agree.confusion.tolist(),
        }
    report.update_report(out / report.REPORT_NAME, updates)
    if args.verbose:
        print(f"relative_error {_fmt(errors['relative_error'])}", file=sys.stderr)


def cmd_silhouette(args) -> None:
    manifest = _load_manifest_arg(args)
    out = _out_dir(args)
    _, basis, _, eigsys = _load_fitted(out)
    tensor, labels, _ = state_io.load_dataset(manifest)
    if labels is None:
        raise UsageError("silhouette needs a labels file in the manifest")
    if np.unique(labels).size < 2:
        raise UsageError("silhouette needs at least 2 distinct classes")
    dim = min(args.dim, basis.rank)
    curves = {}
    for embedding in metrics.EMBEDDINGS:
        curve = metrics.silhouette_curve(
            tensor, basis, labels, embedding=embedding, dim=dim, eigsys=eigsys
        )
        curves[embedding] = curve
    header = ["t"] + list(metrics.EMBEDDINGS)
    rows = [
        [t] + [_fmt(curves[e].values[t]) for e in metrics.EMBEDDINGS]
        for t in range(tensor.timesteps)
    ]
    _write_csv(out / "silhouette.csv", header, rows)
    report.update_report(
        out / report.REPORT_NAME,
        {
            "silhouette": {
                "dim": dim,
                "curves": {
                    e: [float(v) for v in curves[e].values] for e in metrics.EMBEDDINGS
                },
            }
        },
    )


def cmd_report(args) -> None:
    out = Path(args.out)
    path = out / report.REPORT_NAME
    if not path.exists():
        raise FileNotFoundError(f"no {report.REPORT_NAME} in {out}")
    doc = report.read_report(path)
    print(f"toolkit_version: {doc['toolkit_version']}")
    if "manifest" in doc:
        print(f"dataset: {doc['manifest']['name']}")
    if "basis" in doc:
        print(f"basis: method={doc['basis']['method']} r={doc['basis']['r']}")
    if "operator" in doc:
        print(f"fit_residual: {_fmt(doc['operator']['fit_residual'])}")
    for entry in doc.get("spectrum", [])[:8]:
        horizon = entry["memory_horizon"]
        horizon_text = horizon if isinstance(horizon, str) else _fmt(horizon)
        print(
            f"mode {entry['index']}: lambda={_fmt(entry['lambda_re'])}"
            f"{'+' if entry['lambda_im'] >= 0 else '-'}{_fmt(abs(entry['lambda_im']))}i "
            f"|lambda|={_fmt(entry['modulus'])} horizon={horizon_text}"
        )
    if "dominant_modes" in doc:
        print(f"dominant_modes: {','.join(str(i) for i in doc['dominant_modes'])}")
    if "errors" in doc:
        for key in ("relative_error", "separability_residual"):
            if key in doc["errors"]:
                print(f"{key}: {_fmt(doc['errors'][key])}")
    if "agreement" in doc:
        total = doc["agreement"]["total"]
        matching = doc["agreement"]["matching"]
        frac = matching / total if total else 0.0
        print(f"agreement: {matching}/{total} ({_fmt(frac)})")
    if "silhouette" in doc:
        for name, values in sorted(doc["silhouette"]["curves"].items()):
            if values:
                print(f"silhouette[{name}] final: {_fmt(values[-1])}")


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_common(parser, *, manifest=False, epsilon=False, fit_options=False, verbose=True):
    parser.add_argument("--out", default=".", help="output directory (default: .)")
    parser.add_argument("--seed", type=int, default=0, help="seed for any sampling")
    if manifest:
        parser.add_argument("--manifest", help="dataset manifest JSON path")
    if epsilon:
        parser.add_argument(
            "--epsilon",
            type=float,
            default=DEFAULT_EPSILON,
            help=f"memory-horizon decay threshold in (0, 1) (default {DEFAULT_EPSILON})",
        )
    if fit_options:
        parser.add_argument("--rank", type=int, default=None, help="basis rank (default: by energy)")
        parser.add_argument(
            "--energy",
            type=float,
            default=koopman.DEFAULT_ENERGY,
            help="cumulative squared singular-value energy for automatic rank",
        )
        parser.add_argument(
            "--basis", choices=sorted(_BASIS_CHOICES), default="svd", help="basis construction"
        )
        parser.add_argument(
            "--include-padding",
            action="store_true",
            help="fit over padded steps too instead of masking them out",
        )
    if verbose:
        parser.add_argument("--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="koopstate",
        description="Fit and analyze linear surrogates of hidden-state dynamics.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")

    synth = sub.add_parser("synth", help="generate synthetic datasets")
    synth_sub = synth.add_subparsers(dest="generator", metavar="generator")

    p = synth_sub.add_parser("linear", help="seeded linear dynamics trajectories")
    _add_common(p)
    p.add_argument("--k", type=int, default=8, help="hidden dimension")
    p.add_argument("--s", type=int, default=16, help="number of samples")
    p.add_argument("--n", type=int, default=40, help="trajectory length")
    p.add_argument("--noise", type=float, default=0.0, help="relative per-step noise")
    p.add_argument("--spectral-radius", type=float, default=0.9)
    p.add_argument("--force", action="store_true", help="allow unstable dynamics")
    p.set_defaults(func=cmd_synth_linear)

    p = synth_sub.add_parser("counter", help="constructed sentiment-counter network")
    _add_common(p)
    p.add_argument("--k", type=int, default=8, help="hidden dimension")
    p.add_argument("--s", type=int, default=32, help="number of token streams")
    p.add_argument("--len", type=int, default=50, help="stream length")
    p.add_argument("--decay", type=float, default=0.5, help="decay of non-counting coordinates")
    p.set_defaults(func=cmd_synth_counter)

    p = synth_sub.add_parser("clusters", help="two-class attractor trajectories")
    _add_common(p)
    p.add_argument("--k", type=int, default=6, help="hidden dimension")
    p.add_argument("--s", type=int, default=24, help="number of samples")
    p.add_argument("--n", type=int, default=30, help="trajectory length")
    p.add_argument("--separation", type=float, default=10.0, help="attractor separation")
    p.add_argument(
        "--same-class",
        action="store_true",
        help="draw both labels from one distribution (null control)",
    )
    p.set_defaults(func=cmd_synth_clusters)

    p = sub.add_parser("fit", help="fit basis + operator, write report")
    _add_common(p, manifest=True, epsilon=True, fit_options=True)
    p.add_argument(
        "--dominant",
        type=int,
        default=DEFAULT_DOMINANT_COUNT,
        help=f"modes to rank as dominant (default {DEFAULT_DOMINANT_COUNT})",
    )
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("spectrum", help="per-mode eigenvalue/horizon CSV")
    _add_common(p, epsilon=True)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("project", help="projection magnitudes / subspace reconstruction")
    _add_common(p, manifest=True)
    p.add_argument("--modes", required=True, help="comma-separated mode indices, e.g. 0,1")
    p.add_argument("--magnitudes", action="store_true", help="write per-state magnitude CSV")
    p.add_argument(
        "--subspace", action="store_true", help="write the subspace projector and projected tensor"
    )
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("predict", help="prediction errors and readout agreement")
    _add_common(p, manifest=True)
    p.add_argument("--steps", type=int, default=1, help="also measure up to l-step errors")
    p.add_argument(
        "--include-padding", action="store_true", help="evaluate over padded steps too"
    )
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("silhouette", help="class-separation curves over time")
    _add_common(p, manifest=True)
    p.add_argument(
        "--dim",
        type=int,
        default=DEFAULT_SILHOUETTE_DIM,
        help=f"embedding dimension (default {DEFAULT_SILHOUETTE_DIM})",
    )
    p.set_defaults(func=cmd_silhouette)

    p = sub.add_parser("report", help="validate and summarize the analysis report")
    _add_common(p, verbose=False)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_usage(sys.stderr)
        return 2
    try:
        args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ModeClosureError as exc:
        suggestion = ",".join(str(i) for i in exc.completed)
        print(f"error: {exc}; try --modes {suggestion}", file=sys.stderr)
        return 2
    except (OSError, ValueError, NumericsError, jsonschema.ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
