"""Command-line surface: training, evaluation, oracles, bases and checks.

Exit codes: 0 on success, 2 on configuration errors, 3 on numerical
failures (divergence, instability, non-finite results).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, InstabilityError, NonFiniteCoefficientError
from .experiment import ExperimentConfig, PRESETS, run_experiment
from .nn import Diverged

_LONG_RUNNING = {"table1-paper", "table3-paper", "table5-paper"}


def _load_config(args) -> ExperimentConfig:
    if args.config and args.preset:
        raise ConfigError("pass either --config or --preset, not both")
    if args.config:
        cfg = ExperimentConfig.from_file(args.config)
        if args.seed is not None:
            cfg.values["seed"] = str(args.seed)
        return cfg
    preset = args.preset or "table1-desk"
    if preset in _LONG_RUNNING:
        print(f"note: preset {preset} is paper-scale and long-running",
              file=sys.stderr)
    return ExperimentConfig.from_preset(preset, seed=args.seed)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat key = value config file")
    p.add_argument("--preset", choices=sorted(PRESETS),
                   help="named desk/paper-scale configuration")
    p.add_argument("--out", type=Path, default=Path("runs/out"),
                   help="output directory for CSV and checkpoints")
    p.add_argument("--seed", type=int, default=None, help="override RNG seed")


def cmd_train(args) -> int:
    cfg = _load_config(args)
    results = run_experiment(cfg, args.out, stages=("train",))
    for name, info in results.items():
        print(f"trained {name}: {int(info['param_count'])} parameters")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    results = run_experiment(cfg, args.out)
    width = max(len(n) for n in results)
    for name, info in results.items():
        mse = info.get("mse", float("nan"))
        print(f"{name:<{width}}  params={int(info['param_count']):>9}  mse={mse:.3e}")
    print(f"rows written to {args.out}/metrics.csv")
    return 0


def cmd_stability(args) -> int:
    cfg = _load_config(args)
    results = run_experiment(cfg, args.out, stages=("train", "stability"))
    for name, info in results.items():
        vals = " ".join(f"T={t}: {v:.3f}" for t, v in info["stability"].items())
        print(f"{name}: {vals}")
    return 0


def cmd_generalize(args) -> int:
    cfg = _load_config(args)
    results = run_experiment(cfg, args.out, stages=("train", "generalize"))
    for name, info in results.items():
        print(f"{name}: generalization mse {info['generalization_mse']:.3e}")
    return 0


def cmd_oracle(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    from .experiment import _Stage
    from .training import sample_family
    st = _Stage(cfg, out)
    basis = st.basis()
    spec = st.family()
    Ct, Ft = sample_family(spec, cfg.geti("eval.n_test"), st.seed + 3, basis)
    if st.geometry == "interval":
        print("interval ground truth is the analytic heat solution; nothing to solve")
        return 0
    coeffs0 = basis.transform(Ft)
    sols = st.oracle(basis, coeffs0, tag=f"{st.geometry}-test")
    norms = [float(np.linalg.norm(s.coeffs[-1])) for s in sols]
    print(f"solved {len(sols)} trajectories (dt={cfg.getf('eval.oracle_dt')}), "
          f"final coefficient norms {min(norms):.3f}..{max(norms):.3f}")
    return 0


def cmd_basis(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    from .experiment import _Stage
    st = _Stage(cfg, out)
    basis = st.basis()
    path = out / "spectrum.csv"
    with open(path, "w") as fh:
        fh.write("k,eigenvalue\n")
        if st.geometry == "interval":
            for k in range(1, 21):
                fh.write(f"{k},{4*np.pi**2*k**2!r}\n")
        elif st.geometry == "sphere":
            for k, lam in enumerate(basis.eigenvalues(), 1):
                fh.write(f"{k},{lam!r}\n")
        else:
            for k, lam in enumerate(basis.eigenvalues_, 1):
                fh.write(f"{k},{lam!r}\n")
    print(f"basis ready; spectrum written to {path}")
    return 0


def cmd_theorem_check(args) -> int:
    from .theorem_nets import (ComponentNetSpec, assemble_theorem_blocks,
                               exact_stepping_reference, fit_component_net,
                               ladder_non_increasing, verify_decay,
                               write_error_ladder)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else 0

    mul = fit_component_net(ComponentNetSpec("mul2", 64), seed=seed)
    print(f"mul2 n=64 sup error: {mul.max_error:.2e}")
    exps = [fit_component_net(ComponentNetSpec("exp_decay", 32, k=k),
                              seed=seed + k, epochs=1500) for k in range(1, 6)]
    block = assemble_theorem_blocks(mul, exps, "stepping")
    bound = block.component_error_bound()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(200):
        c = rng.uniform(-1, 1, 5)
        t = float(rng.uniform(0, 1))
        err = np.max(np.abs(block.stepping(t, c)
                            - exact_stepping_reference(t, c, 0.01)))
        worst = max(worst, err)
    print(f"assembled K=5 stepping error {worst:.2e} <= bound {bound:.2e}: "
          f"{worst <= bound}")

    rows = verify_decay("sine", [8, 16, 32, 64], seed=seed, k=4, epochs=1200)
    write_error_ladder(out / "error_ladder.csv", rows, "sine_k4")
    ok = ladder_non_increasing(rows)
    print(f"sine k=4 ladder {['%d:%.2e' % r for r in rows]} non-increasing: {ok}")
    if mul.max_error > 1e-3 or worst > bound or not ok:
        return 3
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="spectral-pinn",
        description="Spectral physics-informed neural networks for PDEs "
                    "on the interval, sphere and embedded torus.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("train", cmd_train), ("evaluate", cmd_evaluate),
                     ("oracle", cmd_oracle), ("basis", cmd_basis),
                     ("theorem-check", cmd_theorem_check),
                     ("stability", cmd_stability),
                     ("generalize", cmd_generalize)):
        p = sub.add_parser(name)
        _add_common(p)
        p.set_defaults(fn=fn)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (Diverged, InstabilityError, NonFiniteCoefficientError,
            FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
