"""Command-line entry points.

Subcommands: train-ann, convert, eval-snn, stdp-train, stdp-eval,
noc-bench, footprint, report.  A ``--config`` key=value file supplies
defaults; explicit flags override it.  Dataset location comes from
--data-dir or the NEUROSOC_DATA_DIR environment variable.

Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import datasets, kernel_backend
from .config import ConfigError, load_config
from .convert import convert_to_snn, evaluate, normalize_for_snn, save_snn
from .encoding import EncoderParams
from .fixedpoint import FixedPoint
from .harness import (FootprintQuery, StdpConfig, aer_vs_array_footprint,
                      load_trained, save_trained, sparsity_break_even,
                      sparsity_max_ratio, sparsity_saving_ratio, stdp_evaluate,
                      stdp_train)
from .learning import StdpParams
from .mlp import MlpConfig, accuracy, load_mlp, save_mlp, train_mlp
from .noc import Flit, FlitKind, FlitTraceWriter, Mesh, PeAddress, RouterConfig

__all__ = ["main"]


class ValidationError(ValueError):
    pass


def _write_metrics(path, metrics: dict):
    with open(path, "w") as fh:
        fh.write("key,value\n")
        for key in sorted(metrics):
            value = metrics[key]
            if isinstance(value, float):
                fh.write(f"{key},{value:.6f}\n")
            else:
                fh.write(f"{key},{value}\n")


def _merged(args, keys: dict):
    """File config overridden by explicit CLI flags."""
    merged = {}
    if getattr(args, "config", None):
        merged.update(load_config(args.config))
    for key, default in keys.items():
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
        elif key not in merged:
            merged[key] = default
    return merged


def _load_data(args, need_train=True, need_test=True):
    train, test, origin = datasets.load_digits(getattr(args, "data_dir", None))
    return train, test, origin


def _parse_layers(text) -> tuple:
    if isinstance(text, (tuple, list)):
        return tuple(int(v) for v in text)
    try:
        sizes = tuple(int(p) for p in str(text).split(":"))
    except ValueError:
        raise ValidationError(f"bad layer spec {text!r}; expected like 784:48:10")
    if len(sizes) < 2:
        raise ValidationError("need at least input and output layer sizes")
    return sizes


def _cmd_train_ann(args):
    cfg = _merged(args, {"layers": "784:48:10", "epochs": 8, "lr": 0.1,
                         "batch_size": 100, "seed": 1})
    sizes = _parse_layers(cfg["layers"])
    train, test, origin = _load_data(args)
    if sizes[0] != train.width:
        raise ValidationError(f"input layer {sizes[0]} != dataset width {train.width}")
    model, report = train_mlp(
        train.pixels, train.labels,
        MlpConfig(layer_sizes=sizes, epochs=int(cfg["epochs"]), lr=float(cfg["lr"]),
                  batch_size=int(cfg["batch_size"]), seed=int(cfg["seed"])),
        test.pixels, test.labels, log=lambda msg: print(msg))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_mlp(out / "mlp.npz", model)
    metrics = {
        "dataset": origin,
        "test_accuracy": report["test_acc"][-1],
        "train_accuracy": report["train_acc"][-1],
        "final_loss": report["epoch_loss"][-1],
    }
    _write_metrics(out / "metrics.csv", metrics)
    print(f"test accuracy {metrics['test_accuracy']:.4f} -> {out}/mlp.npz")
    return 0


def _cmd_convert(args):
    cfg = _merged(args, {"frac_bits": 7, "calibration": 1000})
    model = load_mlp(Path(args.model) / "mlp.npz")
    train, _, _ = _load_data(args, need_test=False)
    calib = train.pixels[:int(cfg["calibration"])]
    norm = normalize_for_snn(model, calib)
    fb = int(cfg["frac_bits"])
    net = convert_to_snn(norm, mode="fixed", frac_bits=fb)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_snn(out, net, fb, 1 << fb, norm.layer_sizes)
    save_mlp(out / "normalized.npz", norm)
    print(f"converted {norm.layer_sizes} at {fb} fractional bits -> {out}")
    return 0


def _variant_nets(norm, variants):
    nets = {}
    for v in variants:
        v = str(v).strip()
        if v == "float":
            nets["float"] = convert_to_snn(norm, mode="float")
        elif v == "int":
            nets["int"] = convert_to_snn(norm, mode="int")
        else:
            nets[f"fixed{int(v)}"] = convert_to_snn(norm, mode="fixed", frac_bits=int(v))
    return nets


def _cmd_eval_snn(args):
    cfg = _merged(args, {"samples": 1000, "n_steps": 350, "dt": 0.001,
                         "max_rate": 255.0, "seed": 0, "variants": "float,7,5,3,int"})
    norm = load_mlp(Path(args.model) / "normalized.npz")
    _, test, origin = _load_data(args, need_train=False)
    n = min(int(cfg["samples"]), len(test))
    variants = cfg["variants"]
    if isinstance(variants, str):
        variants = variants.split(",")
    nets = _variant_nets(norm, variants)
    params = EncoderParams(dt=float(cfg["dt"]), n_steps=int(cfg["n_steps"]),
                           max_rate=float(cfg["max_rate"]), rng_seed=int(cfg["seed"]))
    report = evaluate(nets, test.pixels[:n], test.labels[:n], params,
                      progress=lambda done, total: print(f"  {done}/{total} samples"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out / "report.csv")
    metrics = {"dataset": origin, "samples": n, "backend": kernel_backend}
    for name in sorted(report.curves):
        metrics[f"final_accuracy_{name}"] = report.final_accuracy(name)
        metrics[f"saturation_step_{name}"] = report.saturation_step(name)
    _write_metrics(out / "metrics.csv", metrics)
    for name in sorted(report.curves):
        print(f"{name}: {report.final_accuracy(name):.4f} "
              f"(saturates at step {report.saturation_step(name)})")
    return 0


def _stdp_config(cfg) -> StdpConfig:
    return StdpConfig(
        n_neurons=int(cfg["neurons"]),
        threshold=float(cfg["threshold"]), leak=float(cfg["leak"]),
        w_inh=float(cfg["w_inh"]),
        stdp=StdpParams(
            theta_plus=FixedPoint(int(cfg["theta_plus_raw"]), 7, 24),
            theta_decay=float(cfg["theta_decay"])),
        encoder=EncoderParams(n_steps=int(cfg["n_steps"]), dt=float(cfg["dt"]),
                              max_rate=float(cfg["max_rate"]),
                              rng_seed=int(cfg["seed"])),
        n_train=int(cfg["train_samples"]), n_assign=int(cfg["assign_samples"]),
        seed=int(cfg["seed"]),
    )


_STDP_DEFAULTS = {
    "neurons": 100, "train_samples": 10000, "assign_samples": 2500,
    "threshold": 22.0, "leak": 0.08, "w_inh": -6.0,
    "theta_plus_raw": 40, "theta_decay": 0.99998,
    "n_steps": 350, "dt": 0.001, "max_rate": 160.0, "seed": 7,
}


def _cmd_stdp_train(args):
    cfg = _merged(args, _STDP_DEFAULTS)
    scfg = _stdp_config(cfg)
    train, _, origin = _load_data(args, need_test=False)
    trained = stdp_train(scfg, train, log=lambda msg: print(msg))
    out = Path(args.out)
    save_trained(out, trained)
    _write_metrics(out / "metrics.csv", {
        "dataset": origin, "backend": kernel_backend,
        "train_samples": scfg.n_train,
        "train_output_spikes": trained.train_spike_total,
        "assigned_classes": int(np.unique(trained.assignments).size),
    })
    print(f"trained {scfg.n_train} samples -> {out}")
    return 0


def _cmd_stdp_eval(args):
    cfg = _merged(args, {"samples": 1000})
    trained = load_trained(args.model)
    _, test, origin = _load_data(args, need_train=False)
    acc, preds, counts = stdp_evaluate(trained, test, int(cfg["samples"]))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "predictions.csv", "w") as fh:
        fh.write("sample,label,predicted,total_spikes\n")
        for i, p in enumerate(preds):
            fh.write(f"{i},{int(test.labels[i])},{int(p)},{int(counts[i].sum())}\n")
    _write_metrics(out / "metrics.csv", {
        "dataset": origin, "backend": kernel_backend,
        "samples": len(preds), "accuracy": acc,
        "mean_spikes_per_sample": float(counts.sum(axis=1).mean()),
    })
    print(f"accuracy {acc:.4f} on {len(preds)} samples")
    return 0


def _cmd_noc_bench(args):
    cfg = _merged(args, {"dims": (4, 4, 2), "cycles": 100000, "rate": 0.2,
                         "seed": 0, "buffer_depth": 4})
    dims = cfg["dims"]
    if isinstance(dims, str):
        dims = tuple(int(p) for p in dims.split("x"))
    dims = tuple(dims)
    rate = float(cfg["rate"])
    cycles = int(cfg["cycles"])
    rng = np.random.Generator(np.random.PCG64(int(cfg["seed"])))
    trace_fh = open(args.trace, "w") if args.trace else None
    mesh = Mesh(dims, RouterConfig(buffer_depth=int(cfg["buffer_depth"])),
                trace=FlitTraceWriter(trace_fh) if trace_fh else None)
    nodes = [PeAddress(x, y, z) for (x, y, z) in sorted(mesh.routers)]
    backlog = {a: [] for a in nodes}
    violations = 0
    for _ in range(cycles):
        for a in nodes:
            if rng.random() < rate:
                dest = nodes[int(rng.integers(len(nodes) - 1))]
                if dest == a:
                    dest = nodes[-1] if a != nodes[-1] else nodes[0]
                backlog[a].append(Flit(FlitKind.SPIKE, dest, a,
                                       neuron_id=int(rng.integers(256))))
            q = backlog[a]
            while q and mesh.offer_local(a, q[0]):
                q.pop(0)
        mesh.cycle()
        if not mesh.conservation_ok():
            violations += 1
    pending = sum(len(q) for q in backlog.values())
    while mesh.in_flight:
        mesh.cycle()
        if not mesh.conservation_ok():
            violations += 1
    if trace_fh:
        trace_fh.close()
    metrics = {
        "dims": "x".join(str(d) for d in dims), "cycles": cycles,
        "injection_rate": rate, "injected": mesh.injected,
        "delivered": mesh.delivered, "dropped": mesh.dropped,
        "undelivered_backlog": pending,
        "conservation_violations": violations,
    }
    if args.out:
        _write_metrics(args.out, metrics)
    for k in sorted(metrics):
        print(f"{k}: {metrics[k]}")
    return 0 if violations == 0 else 2


def _cmd_footprint(args):
    m, X, w = int(args.m), int(args.X), int(args.w)
    print(f"break-even connected inputs n_max = {sparsity_break_even(m, w):g}")
    print(f"break-even sparsity ratio s_max = {sparsity_max_ratio(m, X, w):.4f}")
    if args.n is not None:
        q = FootprintQuery(X=X, n=int(args.n), m=m, w=w)
        print(f"saving ratio at n={q.n} (s={q.s:.4f}): {sparsity_saving_ratio(q):.4f}")
    if args.aer is not None:
        n, events = (int(p) for p in args.aer.split(","))
        rec = aer_vs_array_footprint(n, events)
        print(f"AER storage: {rec.aer_bits} bits ({rec.aer_bits_pipelined} pipelined), "
              f"overflow at {rec.aer_overflow_at} events")
        print(f"spike-array storage: {rec.array_bits} bits "
              f"({rec.array_bits_pipelined} pipelined), no overflow")
    return 0


def _cmd_report(args):
    """Re-shape a report.csv into gnuplot-ready blocks (one per variant)."""
    rows = {}
    with open(args.input) as fh:
        header = fh.readline()
        if not header.startswith("step,variant,accuracy"):
            raise ValidationError(f"{args.input} is not an accuracy report CSV")
        for line in fh:
            step, variant, acc = line.strip().split(",")
            rows.setdefault(variant, []).append((int(step), float(acc)))
    with open(args.out, "w") as fh:
        for variant in sorted(rows):
            fh.write(f"# variant: {variant}\n# step accuracy\n")
            for step, acc in sorted(rows[variant]):
                fh.write(f"{step} {acc:.6f}\n")
            fh.write("\n\n")
    print(f"wrote gnuplot data for {len(rows)} variants -> {args.out}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="neurosoc",
                                description="spiking-SoC model experiments")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True):
        sp.add_argument("--config", help="key=value config file")
        if data:
            sp.add_argument("--data-dir", dest="data_dir",
                            help="IDX dataset dir (default $NEUROSOC_DATA_DIR)")

    sp = sub.add_parser("train-ann", help="train the bias-free ReLU MLP")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--layers")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--batch-size", dest="batch_size", type=int)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=_cmd_train_ann)

    sp = sub.add_parser("convert", help="normalize + quantize an MLP into an SNN")
    common(sp)
    sp.add_argument("--model", required=True, help="train-ann output dir")
    sp.add_argument("--out", required=True)
    sp.add_argument("--frac-bits", dest="frac_bits", type=int)
    sp.add_argument("--calibration", type=int)
    sp.set_defaults(func=_cmd_convert)

    sp = sub.add_parser("eval-snn", help="accuracy-vs-step evaluation of SNN variants")
    common(sp)
    sp.add_argument("--model", required=True, help="convert output dir")
    sp.add_argument("--out", required=True)
    sp.add_argument("--samples", type=int)
    sp.add_argument("--variants", help="comma list: float,7,5,3,int")
    sp.add_argument("--n-steps", dest="n_steps", type=int)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--max-rate", dest="max_rate", type=float)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=_cmd_eval_snn)

    sp = sub.add_parser("stdp-train", help="unsupervised hardware-mode training")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--neurons", type=int)
    sp.add_argument("--train-samples", dest="train_samples", type=int)
    sp.add_argument("--assign-samples", dest="assign_samples", type=int)
    sp.add_argument("--threshold", type=float)
    sp.add_argument("--leak", type=float)
    sp.add_argument("--w-inh", dest="w_inh", type=float)
    sp.add_argument("--theta-plus-raw", dest="theta_plus_raw", type=int)
    sp.add_argument("--theta-decay", dest="theta_decay", type=float)
    sp.add_argument("--max-rate", dest="max_rate", type=float)
    sp.add_argument("--n-steps", dest="n_steps", type=int)
    sp.add_argument("--dt", type=float)
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=_cmd_stdp_train)

    sp = sub.add_parser("stdp-eval", help="classify with a trained STDP network")
    common(sp)
    sp.add_argument("--model", required=True, help="stdp-train output dir")
    sp.add_argument("--out", required=True)
    sp.add_argument("--samples", type=int)
    sp.set_defaults(func=_cmd_stdp_eval)

    sp = sub.add_parser("noc-bench", help="random-traffic mesh benchmark")
    common(sp, data=False)
    sp.add_argument("--dims")
    sp.add_argument("--cycles", type=int)
    sp.add_argument("--rate", type=float)
    sp.add_argument("--buffer-depth", dest="buffer_depth", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--trace", help="write flit trace CSV here")
    sp.add_argument("--out", help="write metrics CSV here")
    sp.set_defaults(func=_cmd_noc_bench)

    sp = sub.add_parser("footprint", help="sparsity/memory sizing calculator")
    sp.add_argument("--m", type=int, default=256)
    sp.add_argument("--X", type=int, default=786)
    sp.add_argument("--w", type=int, default=8)
    sp.add_argument("--n", type=int)
    sp.add_argument("--aer", help="n,X pair for the AER-vs-array comparison")
    sp.set_defaults(func=_cmd_footprint)

    sp = sub.add_parser("report", help="emit gnuplot-ready data from a report CSV")
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=_cmd_report)
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
