"""Command-line entry point: run / sweep / rate / verify-lemmas / check-lmo /
estimate-constants over flat key=value config files with [section] headers.

Every run writes a resolved-config snapshot next to its outputs; together
with the seed it reproduces any trace byte for byte. Numbers in CSV output
carry 17 significant digits so parsing them back recovers the exact float.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, fields

import numpy as np

from . import analysis
from .harness import RunRecord, fit_rate, run_experiment, sweep
from .norms import NormKind, dual_norm, lmo_direction, norm, rho_bound
from .oracles import (
    LayerSpec,
    LogisticRegression,
    MatrixFactorization,
    ModelShape,
    NoisyQuadratic,
    Problem,
    TwoLayerMLP,
    estimate_constants,
)
from .optimizers import Method, OptimizerConfig, theorem_schedule


class ConfigError(ValueError):
    """Config file or override rejected; message carries the line number."""


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


# -- config schema ------------------------------------------------------------


def _as_float(value: str) -> float:
    return float(value)


def _as_int(value: str) -> int:
    return int(value)


def _as_positive_float(value: str) -> float:
    x = float(value)
    if x <= 0:
        raise ValueError(f"must be positive, got {x}")
    return x


def _as_nonneg_float(value: str) -> float:
    x = float(value)
    if x < 0:
        raise ValueError(f"must be nonnegative, got {x}")
    return x


def _as_eta(value: str):
    if value.strip().lower() == "auto":
        return "auto"
    return _as_positive_float(value)


def _as_alpha(value: str):
    if value.strip().lower() == "auto":
        return None
    x = float(value)
    if not 0.0 < x <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {x}")
    return x


def _as_beta(value: str) -> float:
    x = float(value)
    if not 0.0 <= x < 1.0:
        raise ValueError(f"beta must lie in [0, 1), got {x}")
    return x


def _as_q(value: str) -> float:
    x = float(value)
    if not 0.0 < x <= 1.0:
        raise ValueError(f"q must lie in (0, 1], got {x}")
    return x


def _as_count(value: str) -> int:
    x = int(value)
    if x < 1:
        raise ValueError(f"must be >= 1, got {x}")
    return x


def _as_nonneg_int(value: str) -> int:
    x = int(value)
    if x < 0:
        raise ValueError(f"must be >= 0, got {x}")
    return x


def _as_method(value: str) -> Method:
    try:
        return Method(value.strip().lower())
    except ValueError:
        raise ValueError(
            f"unknown method {value!r}; expected one of "
            + ", ".join(m.value for m in Method)
        ) from None


def _as_norm(value: str) -> NormKind:
    try:
        return NormKind(value.strip().lower())
    except ValueError:
        raise ValueError(
            f"unknown norm {value!r}; expected one of "
            + ", ".join(k.value for k in NormKind)
        ) from None


def _as_problem_kind(value: str) -> str:
    kind = value.strip().lower()
    if kind not in ("quadratic", "logistic", "matrix_factorization", "mlp"):
        raise ValueError(f"unknown problem {value!r}")
    return kind


def _as_int_list(value: str) -> tuple[int, ...]:
    items = tuple(_as_count(v) for v in value.split(",") if v.strip())
    if not items:
        raise ValueError("expected a comma-separated list of integers")
    return items


def _as_float_list(value: str) -> tuple[float, ...]:
    items = tuple(float(v) for v in value.split(",") if v.strip())
    if not items:
        raise ValueError("expected a comma-separated list of floats")
    return items


_SCHEMA = {
    "optimizer": {
        "method": (_as_method, Method.GLUON_MVR1),
        "eta": (_as_eta, "auto"),
        "beta": (_as_beta, 0.9),
        "alpha": (_as_alpha, None),
        "q": (_as_q, 0.7),
        "K": (_as_count, 5000),
    },
    "problem": {
        "problem": (_as_problem_kind, "logistic"),
        "norm": (_as_norm, NormKind.SPECTRAL),
        "t_i": (_as_positive_float, 1.0),
        "n_points": (_as_count, 1024),
        "dim": (_as_count, 16),
        "classes": (_as_count, 4),
        "minibatch": (_as_nonneg_int, 8),
        "hidden": (_as_count, 16),
        "rank": (_as_count, 4),
        "rows": (_as_count, 16),
        "cols": (_as_count, 16),
        "layers": (_as_count, 1),
        "noise": (_as_nonneg_float, 0.0),
        "label_noise": (_as_nonneg_float, 1.0),
        "data_seed": (_as_int, 0),
    },
    "harness": {
        "seeds": (_as_count, 10),
        "seed0": (_as_int, 0),
        "budgets": (_as_int_list, (500, 1000, 2000, 4000, 8000)),
        "parallelism": (_as_count, 4),
        "sweep_betas": (_as_float_list, (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)),
        "sweep_etas": (_as_float_list, ()),
        "sweep_qs": (_as_float_list, ()),
    },
}

_REQUIRED_SECTIONS = ("optimizer", "problem")


@dataclass(frozen=True)
class ProblemSpec:
    problem: str
    norm: NormKind
    t_i: float
    n_points: int
    dim: int
    classes: int
    minibatch: int
    hidden: int
    rank: int
    rows: int
    cols: int
    layers: int
    noise: float
    label_noise: float
    data_seed: int


@dataclass(frozen=True)
class HarnessConfig:
    seeds: int
    seed0: int
    budgets: tuple[int, ...]
    parallelism: int
    sweep_betas: tuple[float, ...]
    sweep_etas: tuple[float, ...]
    sweep_qs: tuple[float, ...]

    def seed_list(self) -> list[int]:
        return list(range(self.seed0, self.seed0 + self.seeds))


def _read_raw(text: str) -> dict[str, dict[str, tuple[str, int]]]:
    raw: dict[str, dict[str, tuple[str, int]]] = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip().lower()
            if section not in _SCHEMA:
                raise ConfigError(f"line {lineno}: unknown section [{section}]")
            raw.setdefault(section, {})
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        if section is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key not in _SCHEMA[section]:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in [{section}]")
        raw[section][key] = (value, lineno)
    return raw


def apply_overrides(raw, overrides: list[str]) -> None:
    """Merge --set section.key=value pairs into the raw config."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected section.key=value")
        dotted, value = item.split("=", 1)
        if "." not in dotted:
            raise ConfigError(f"override {item!r}: expected section.key=value")
        section, key = (part.strip().lower() for part in dotted.split(".", 1))
        if section not in _SCHEMA:
            raise ConfigError(f"override {item!r}: unknown section {section!r}")
        if key not in _SCHEMA[section]:
            raise ConfigError(f"override {item!r}: unknown key {key!r} in [{section}]")
        raw.setdefault(section, {})[key] = (value.strip(), 0)


def _materialize(raw) -> dict[str, dict]:
    for section in _REQUIRED_SECTIONS:
        if section not in raw:
            raise ConfigError(f"missing required section [{section}]")
    out: dict[str, dict] = {}
    for section, keys in _SCHEMA.items():
        values = {}
        present = raw.get(section, {})
        for key, (convert, default) in keys.items():
            if key in present:
                value, lineno = present[key]
                try:
                    values[key] = convert(value)
                except ValueError as exc:
                    where = f"line {lineno}" if lineno else "override"
                    raise ConfigError(f"{where}: bad value for {key!r}: {exc}") from None
            else:
                values[key] = default
        out[section] = values
    return out


def parse_config(
    text: str, overrides: list[str] | None = None
) -> tuple[OptimizerConfig, ProblemSpec, HarnessConfig]:
    """Parse key=value text with [optimizer]/[problem]/[harness] sections.

    Unknown keys, out-of-range values, and missing required sections are
    hard errors naming the offending line. ``eta = auto`` adopts the full
    theorem schedule for the chosen method and K; an explicit eta wins and
    keeps the configured beta/alpha/q.
    """
    raw = _read_raw(text)
    if overrides:
        apply_overrides(raw, overrides)
    values = _materialize(raw)
    opt = values["optimizer"]
    try:
        if opt["eta"] == "auto":
            config = theorem_schedule(opt["method"], opt["K"])
        else:
            config = OptimizerConfig(
                method=opt["method"],
                eta=opt["eta"],
                beta=opt["beta"],
                alpha=opt["alpha"],
                q=opt["q"],
                K=opt["K"],
            )
    except ValueError as exc:
        raise ConfigError(f"[optimizer]: {exc}") from None
    prob = ProblemSpec(**values["problem"])
    har = HarnessConfig(**values["harness"])
    return config, prob, har


def build_problem(spec: ProblemSpec) -> Problem:
    if spec.problem == "quadratic":
        shape = ModelShape(
            tuple(
                LayerSpec(spec.rows, spec.cols, spec.norm, spec.t_i)
                for _ in range(spec.layers)
            )
        )
        return NoisyQuadratic(shape, noise=spec.noise, data_seed=spec.data_seed)
    if spec.problem == "logistic":
        return LogisticRegression(
            n_points=spec.n_points,
            dim=spec.dim,
            classes=spec.classes,
            minibatch=spec.minibatch,
            norm=spec.norm,
            t_i=spec.t_i,
            data_seed=spec.data_seed,
            label_noise=spec.label_noise,
        )
    if spec.problem == "matrix_factorization":
        return MatrixFactorization(
            m=spec.rows,
            n_cols=spec.n_points,
            d=spec.cols,
            rank=spec.rank,
            minibatch=spec.minibatch,
            norm=spec.norm,
            t_i=spec.t_i,
            data_seed=spec.data_seed,
        )
    if spec.problem == "mlp":
        return TwoLayerMLP(
            n_points=spec.n_points,
            dim=spec.dim,
            hidden=spec.hidden,
            classes=spec.classes,
            minibatch=spec.minibatch,
            norm=spec.norm,
            t_i=spec.t_i,
            data_seed=spec.data_seed,
        )
    raise ConfigError(f"unknown problem kind {spec.problem!r}")


def format_config(config: OptimizerConfig, spec: ProblemSpec, har: HarnessConfig) -> str:
    """Render a fully resolved config; parse_config round-trips it."""
    lines = ["[optimizer]"]
    lines.append(f"method = {config.method.value}")
    lines.append(f"eta = {_fmt(config.eta)}")
    lines.append(f"beta = {_fmt(config.beta)}")
    lines.append(f"alpha = {_fmt(config.alpha)}")
    lines.append(f"q = {_fmt(config.q)}")
    lines.append(f"K = {config.K}")
    lines.append("")
    lines.append("[problem]")
    for f in fields(ProblemSpec):
        value = getattr(spec, f.name)
        if isinstance(value, (NormKind,)):
            value = value.value
        lines.append(f"{f.name} = {_fmt(value)}")
    lines.append("")
    lines.append("[harness]")
    lines.append(f"seeds = {har.seeds}")
    lines.append(f"seed0 = {har.seed0}")
    lines.append("budgets = " + ",".join(str(b) for b in har.budgets))
    lines.append(f"parallelism = {har.parallelism}")
    if har.sweep_betas:
        lines.append("sweep_betas = " + ",".join(_fmt(b) for b in har.sweep_betas))
    if har.sweep_etas:
        lines.append("sweep_etas = " + ",".join(_fmt(b) for b in har.sweep_etas))
    if har.sweep_qs:
        lines.append("sweep_qs = " + ",".join(_fmt(b) for b in har.sweep_qs))
    return "\n".join(lines) + "\n"


# -- CSV output ----------------------------------------------------------------


def ensure_outdir(path: str) -> None:
    """Create the output directory and verify it is writable, failing fast."""
    os.makedirs(path, exist_ok=True)
    probe = os.path.join(path, ".write_probe")
    try:
        with open(probe, "w", encoding="utf-8") as fh:
            fh.write("")
        os.remove(probe)
    except OSError as exc:
        raise OSError(f"output directory {path!r} is not writable: {exc}") from exc


def trace_csv_text(record: RunRecord) -> str:
    p = len(record.rows[0].layer_dual_norms)
    header = "k,f_value,metric,min_metric," + ",".join(
        f"layer_dual_norm_{i}" for i in range(p)
    )
    lines = [header]
    for row in record.rows:
        cells = [str(row.k), _fmt(row.f_value), _fmt(row.metric), _fmt(row.min_metric)]
        cells += [_fmt(d) for d in row.layer_dual_norms]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_trace_csv(outdir: str, record: RunRecord) -> str:
    path = os.path.join(outdir, f"trace_{record.seed}.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(trace_csv_text(record))
    return path


SUMMARY_HEADER = "method,eta,beta,q,K,seed_count,mean_min_metric,std,slope,stderr"


def summary_row(
    config: OptimizerConfig,
    seed_count: int,
    mean_min_metric: float,
    std: float,
    slope: float = np.nan,
    stderr: float = np.nan,
    K: int | None = None,
) -> str:
    cells = [
        config.method.value,
        _fmt(config.eta),
        _fmt(config.beta),
        _fmt(config.q),
        str(config.K if K is None else K),
        str(seed_count),
        _fmt(mean_min_metric),
        _fmt(std),
        _fmt(slope),
        _fmt(stderr),
    ]
    return ",".join(cells)


def write_summary_csv(outdir: str, rows: list[str]) -> str:
    path = os.path.join(outdir, "summary.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join([SUMMARY_HEADER] + rows) + "\n")
    return path


def write_lemma_csv(outdir: str, reports: list[analysis.LemmaReport]) -> str:
    header = "lemma_id,K,t_i,alpha,q,k,lhs,rhs,margin,holds"
    lines = [header]
    for r in reports:
        par = r.parameters
        cells = [
            r.lemma_id,
            str(par.get("K", "")),
            _fmt(par["t_i"]) if "t_i" in par else "",
            _fmt(par["alpha"]) if "alpha" in par else "",
            _fmt(par["q"]) if "q" in par else "",
            str(par.get("k", "")),
            _fmt(r.lhs),
            _fmt(r.rhs),
            _fmt(r.margin),
            "1" if r.holds else "0",
        ]
        lines.append(",".join(cells))
    path = os.path.join(outdir, "lemmas.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


# -- LMO property suite ---------------------------------------------------------


def run_lmo_checks(
    seed: int = 0,
    n_per_kind: int = 1000,
    max_dim: int = 64,
    direction_fn=None,
) -> list[str]:
    """Sharpness, norm-feasibility, Hölder, and rho checks on random matrices.

    Returns a list of violation descriptions (empty when everything holds).
    ``direction_fn`` substitutes for the LMO direction, which lets tests
    verify that a broken rule is detected.
    """
    direction = direction_fn if direction_fn is not None else lmo_direction
    rng = np.random.default_rng(seed)
    violations: list[str] = []
    for kind in NormKind:
        for j in range(n_per_kind):
            m = int(rng.integers(1, max_dim + 1))
            n = int(rng.integers(1, max_dim + 1))
            M = rng.standard_normal((m, n))
            D = direction(kind, M)
            dual = dual_norm(kind, M)
            pairing = float(np.sum(M * D))
            if abs(pairing - dual) > 1e-8 * (1.0 + dual):
                violations.append(
                    f"{kind.value}[{j}] {m}x{n}: <M,D>={pairing!r} != dual {dual!r}"
                )
            if norm(kind, D) > 1.0 + 1e-9:
                violations.append(
                    f"{kind.value}[{j}] {m}x{n}: ||D||={norm(kind, D)!r} > 1"
                )
            Y = rng.standard_normal((m, n))
            if abs(float(np.sum(M * Y))) > dual * norm(kind, Y) * (1.0 + 1e-9) + 1e-12:
                violations.append(f"{kind.value}[{j}] {m}x{n}: Hoelder violated")
            if dual > rho_bound(kind, m, n) * float(np.linalg.norm(M)) * (1.0 + 1e-9):
                violations.append(f"{kind.value}[{j}] {m}x{n}: rho bound violated")
    return violations


# -- subcommands -----------------------------------------------------------------


def _load_config(args) -> tuple[OptimizerConfig, ProblemSpec, HarnessConfig]:
    if not args.config:
        raise ConfigError("this subcommand requires --config PATH")
    with open(args.config, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text, overrides=args.set or [])


def _write_snapshot(outdir, config, spec, har) -> None:
    with open(os.path.join(outdir, "resolved.cfg"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_config(config, spec, har))


def _cmd_run(args) -> int:
    config, spec, har = _load_config(args)
    ensure_outdir(args.out)
    problem = build_problem(spec)
    seed = har.seed0
    record = run_experiment(config, problem, seed)
    write_trace_csv(args.out, record)
    _write_snapshot(args.out, config, spec, har)
    print(
        f"run: method={config.method.value} K={config.K} seed={seed} "
        f"min_metric={record.final_min_metric:.6g} f={record.final_f:.6g}"
    )
    return 0


def _cmd_sweep(args) -> int:
    config, spec, har = _load_config(args)
    ensure_outdir(args.out)
    problem = build_problem(spec)
    etas = har.sweep_etas or (config.eta,)
    qs = har.sweep_qs or (config.q,)
    try:
        grid = [
            OptimizerConfig(config.method, eta=e, beta=b, q=q, K=config.K)
            for e in etas
            for b in har.sweep_betas
            for q in qs
        ]
    except ValueError as exc:
        raise ConfigError(f"sweep grid: {exc}") from None
    result = sweep(grid, problem, har.seed_list(), parallelism=har.parallelism)
    rows = [
        summary_row(
            c.config, c.seed_count, c.mean_min_metric, c.std_min_metric
        )
        for c in result.cells
    ]
    write_summary_csv(args.out, rows)
    _write_snapshot(args.out, config, spec, har)
    print(f"sweep: {len(result.cells)} cells x {har.seeds} seeds")
    return 0


def _cmd_rate(args) -> int:
    config, spec, har = _load_config(args)
    ensure_outdir(args.out)
    problem = build_problem(spec)
    seeds = har.seed_list()
    records_by_K: dict[int, list[RunRecord]] = {}
    rows = []
    for K in har.budgets:
        budget_config = theorem_schedule(config.method, K)
        result = sweep([budget_config], problem, seeds, parallelism=har.parallelism)
        records_by_K[K] = result.records
        cell = result.cells[0]
        rows.append(
            summary_row(budget_config, cell.seed_count, cell.mean_min_metric, cell.std_min_metric)
        )
    fit = fit_rate(records_by_K)
    rows.append(
        summary_row(
            config,
            seed_count=len(seeds) * len(har.budgets),
            mean_min_metric=np.nan,
            std=np.nan,
            slope=fit.slope,
            stderr=fit.stderr,
            K=0,
        )
    )
    write_summary_csv(args.out, rows)
    _write_snapshot(args.out, config, spec, har)
    print(f"rate: method={config.method.value} slope={fit.slope:.4f} stderr={fit.stderr:.4f}")
    return 0


def _cmd_verify_lemmas(args) -> int:
    reports = analysis.lemma_grid_reports()
    if args.out:
        ensure_outdir(args.out)
        write_lemma_csv(args.out, reports)
    failures = [r for r in reports if not r.holds]
    print(f"verify-lemmas: {len(reports) - len(failures)}/{len(reports)} hold")
    for r in failures:
        print(f"  FAIL {r.lemma_id} {r.parameters}: lhs={r.lhs!r} > rhs={r.rhs!r}")
    return 1 if failures else 0


def _cmd_check_lmo(args) -> int:
    violations = run_lmo_checks(seed=args.seed, n_per_kind=args.n)
    print(f"check-lmo: {len(violations)} violations over {args.n} matrices per kind")
    for v in violations[:20]:
        print(f"  {v}")
    return 1 if violations else 0


def _cmd_estimate_constants(args) -> int:
    config, spec, har = _load_config(args)
    ensure_outdir(args.out)
    problem = build_problem(spec)
    rng = np.random.default_rng(har.seed0)
    consts = estimate_constants(problem, rng=rng)
    header = "layer,norm,t_i,sigma_hat,delta_hat,rho,L0_hat,L1_hat,D,L_hat"
    lines = [header]
    for i, s in enumerate(problem.shape.layers):
        lines.append(
            ",".join(
                [
                    str(i),
                    s.norm.value,
                    _fmt(s.t_i),
                    _fmt(consts.sigma_hat),
                    _fmt(consts.delta_hat[i]),
                    _fmt(consts.rho[i]),
                    _fmt(consts.L0_hat[i]),
                    _fmt(consts.L1_hat[i]),
                    _fmt(consts.D),
                    _fmt(consts.L_hat),
                ]
            )
        )
    path = os.path.join(args.out, "constants.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    _write_snapshot(args.out, config, spec, har)
    for note in consts.notes:
        print(f"note: {note}")
    print(f"estimate-constants: sigma_hat={consts.sigma_hat:.6g} -> {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gluonmvr",
        description="LMO optimizers with momentum variance reduction: runs, sweeps, and verifiers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_config=True):
        p.add_argument("--config", help="path to key=value config file", default=None)
        p.add_argument("--out", help="output directory", default="out")
        p.add_argument("--seeds", type=int, default=None, help="override seed count")
        p.add_argument(
            "--set",
            action="append",
            metavar="SECTION.KEY=VALUE",
            help="override a config value",
        )

    for name, fn in [
        ("run", _cmd_run),
        ("sweep", _cmd_sweep),
        ("rate", _cmd_rate),
        ("estimate-constants", _cmd_estimate_constants),
    ]:
        p = sub.add_parser(name)
        add_common(p)
        p.set_defaults(fn=fn)

    p = sub.add_parser("verify-lemmas")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_verify_lemmas)

    p = sub.add_parser("check-lmo")
    p.add_argument("--out", default=None)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_check_lmo)

    return parser


def subcommand_dispatch(argv: list[str]) -> int:
    """Exit 0 on success, 1 on verification failure, 2 on usage/config error."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 2
    if getattr(args, "seeds", None) is not None:
        args.set = (args.set or []) + [f"harness.seeds={args.seeds}"]
    try:
        return args.fn(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(subcommand_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
