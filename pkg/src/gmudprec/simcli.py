"""
Monte Carlo BER sweeps and the ``simcli`` command line.

Every random quantity is addressed by a counter key: channels by
``(seed, trial, user)``, data and noise by ``(seed, snr_index, trial)``.
Trials are independent work units and their results are reduced in trial
order, so the output does not depend on the number of worker processes.
"""

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from enum import Enum

import numpy as np

from .channel import STREAM_LINK, ChannelEnsembleSpec, ChannelKind, condition_stats, draw_channel_matrices, stream_rng
from .link import Constellation, Modulation, simulate_blocks
from .numkit import InvalidArgumentError, NumericalDegeneracyError
from .precoder import BeamSearch, Objective, OptimizerConfig, svd_baseline

__all__ = [
    "ConfigError",
    "PrecoderKind",
    "SimConfig",
    "BerPoint",
    "CSV_HEADER",
    "parse_config",
    "snr_grid",
    "run_sweep",
    "write_csv",
    "format_csv",
    "emit_summary",
    "config_hash",
    "main",
]

CSV_HEADER = "snr_db,ber,ser,mean_inv_sinr_pred,mean_sinr_meas,bits,trials,precoder,mode,modulation"


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


class PrecoderKind(str, Enum):
    GMUD = "gmud"
    SVD = "svd"


@dataclass(frozen=True)
class SimConfig:
    users: int = 2
    paths: int = 2
    modulation: Modulation = Modulation.QPSK
    precoder: PrecoderKind = PrecoderKind.GMUD
    mode: ChannelKind = ChannelKind.SISO_MULTIPATH
    snr_db_min: float = 0.0
    snr_db_max: float = 24.0
    snr_db_step: float = 2.0
    trials: int = 2000
    blocks_per_trial: int = 50
    seed: int = 0
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    objective: Objective = Objective.SUM_INV_SINR

    def __post_init__(self):
        if self.users < 1:
            raise ConfigError("users must be >= 1")
        if self.paths < 1:
            raise ConfigError("paths must be >= 1")
        if self.mode is ChannelKind.SISO_MULTIPATH and self.paths < self.users:
            raise ConfigError(
                f"siso_multipath needs paths >= users (M >= K), got paths={self.paths}, "
                f"users={self.users}"
            )
        if self.snr_db_min > self.snr_db_max:
            raise ConfigError("snr_db_min must not exceed snr_db_max")
        if not self.snr_db_step > 0:
            raise ConfigError("snr_db_step must be positive")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.blocks_per_trial < 1:
            raise ConfigError("blocks_per_trial must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    def channel_spec(self):
        # flat MIMO gets as many transmit and receive antennas as there are paths
        return ChannelEnsembleSpec(
            kind=self.mode,
            users=self.users,
            paths=self.paths,
            n_tx=self.paths,
            n_rx=self.paths,
            seed=self.seed,
        )


@dataclass(frozen=True)
class BerPoint:
    snr_db: float
    ber: float
    ser: float
    mean_inv_sinr_pred: float
    mean_sinr_meas: float
    bits: int
    trials: int
    bit_errors: int = 0
    precoder: str = "gmud"
    mode: str = "siso_multipath"
    modulation: str = "qpsk"


# key -> (type, field) for the flat key=value file format
_OPT_KEYS = {f.name for f in fields(OptimizerConfig)}
_INT_KEYS = {"users", "paths", "trials", "blocks_per_trial", "seed", "n_r", "n_theta", "n_power", "refine_iters"}
_FLOAT_KEYS = {"snr_db_min", "snr_db_max", "snr_db_step", "refine_shrink"}
_ENUM_KEYS = {
    "modulation": Modulation,
    "precoder": PrecoderKind,
    "mode": ChannelKind,
    "objective": Objective,
}
KNOWN_KEYS = _INT_KEYS | _FLOAT_KEYS | set(_ENUM_KEYS)


def _convert(key, raw, where):
    raw = raw.strip()
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError
            return v
    except ValueError:
        raise ConfigError(f"{where}: invalid value {raw!r} for key {key!r}") from None
    enum = _ENUM_KEYS[key]
    norm = raw.lower().replace("-", "_")
    try:
        return enum(norm)
    except ValueError:
        allowed = ", ".join(e.value for e in enum)
        raise ConfigError(
            f"{where}: invalid value {raw!r} for key {key!r}; allowed: {allowed}"
        ) from None


def _parse_lines(text, source):
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}, line {lineno}"
        if "=" not in line:
            raise ConfigError(f"{where}: expected key=value, got {line!r}")
        key, raw = line.split("=", 1)
        key = key.strip()
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{where}: unknown key {key!r}")
        values[key] = _convert(key, raw, where)
    return values


def _build(values):
    opt = {k: values.pop(k) for k in list(values) if k in _OPT_KEYS}
    try:
        optimizer = OptimizerConfig(**opt)
    except InvalidArgumentError as exc:
        raise ConfigError(str(exc)) from None
    return SimConfig(optimizer=optimizer, **values)


def parse_config(source=None, overrides=None):
    """
    Build a :class:`SimConfig` from a ``key=value`` file and overrides.

    Parameters
    ----------
    source : str or path-like, optional
        Config file path. ``#`` starts a comment; blank lines are ignored.
    overrides : dict or str, optional
        Values that win over the file. A string is parsed with the same
        ``key=value`` rules (whitespace or newlines between pairs).

    Raises
    ------
    ConfigError
        Unknown key, malformed value (the message names key and line) or a
        violated constraint.
    """
    values = {}
    if source is not None:
        try:
            with open(source, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {source}: {exc}") from None
        values.update(_parse_lines(text, str(source)))
    if isinstance(overrides, str):
        values.update(_parse_lines("\n".join(overrides.split()), "<overrides>"))
    elif overrides:
        for key, raw in overrides.items():
            if key not in KNOWN_KEYS:
                raise ConfigError(f"unknown key {key!r}")
            values[key] = _convert(key, str(raw), "<command line>")
    return _build(values)


def snr_grid(config):
    n = int(math.floor((config.snr_db_max - config.snr_db_min) / config.snr_db_step + 1e-9)) + 1
    return [config.snr_db_min + i * config.snr_db_step for i in range(n)]


def config_hash(config):
    d = asdict(config)
    blob = json.dumps(d, sort_keys=True, default=lambda o: o.value if isinstance(o, Enum) else str(o))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _run_trial(args):
    """All SNR points of one channel realization."""
    config, trial = args
    snrs = snr_grid(config)
    channels = draw_channel_matrices(config.channel_spec(), trial)
    const = Constellation.make(config.modulation)
    n = len(snrs)
    bit_err = np.zeros(n, dtype=np.int64)
    sym_err = np.zeros(n, dtype=np.int64)
    inv_pred = np.zeros(n)
    sinr_meas = np.zeros(n)
    search = BeamSearch(channels, config.optimizer) if config.precoder is PrecoderKind.GMUD else None
    for i, snr_db in enumerate(snrs):
        sigma2 = 10.0 ** (-snr_db / 10.0)
        if search is not None:
            sol = search.solve(sigma2, config.objective)
        else:
            sol = svd_baseline(channels, sigma2, config.objective)
        rng = stream_rng(config.seed, STREAM_LINK, i, trial)
        res = simulate_blocks(channels, sol.G, sigma2, const, config.blocks_per_trial, rng)
        bit_err[i] = res.bit_errors
        sym_err[i] = res.symbol_errors
        inv_pred[i] = float(np.mean(sol.predicted_inv_sinr))
        sinr_meas[i] = float(np.mean(res.measured_sinr_per_user))
    return bit_err, sym_err, inv_pred, sinr_meas


def run_sweep(config, workers=1, chunksize=None):
    """
    Run the BER sweep described by `config`.

    Parameters
    ----------
    config : SimConfig
    workers : int
        Number of worker processes; 1 runs in-process. The result is
        identical for any value.

    Returns
    -------
    list of BerPoint
        One per SNR value, ascending.
    """
    snrs = snr_grid(config)
    tasks = [(config, t) for t in range(config.trials)]
    if workers <= 1:
        results = [_run_trial(t) for t in tasks]
    else:
        chunksize = chunksize or max(1, config.trials // (4 * workers))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_trial, tasks, chunksize=chunksize))

    # reduce in trial order so float sums do not depend on scheduling
    bit_err = np.zeros(len(snrs), dtype=np.int64)
    sym_err = np.zeros(len(snrs), dtype=np.int64)
    inv_pred = np.zeros(len(snrs))
    sinr_meas = np.zeros(len(snrs))
    for be, se, ip, sm in results:
        bit_err += be
        sym_err += se
        inv_pred += ip
        sinr_meas += sm

    bps = Constellation.make(config.modulation).bits_per_symbol
    bits = config.trials * config.blocks_per_trial * config.users * bps
    symbols = config.trials * config.blocks_per_trial * config.users
    return [
        BerPoint(
            snr_db=float(s),
            ber=int(bit_err[i]) / bits,
            ser=int(sym_err[i]) / symbols,
            mean_inv_sinr_pred=float(inv_pred[i] / config.trials),
            mean_sinr_meas=float(sinr_meas[i] / config.trials),
            bits=bits,
            trials=config.trials,
            bit_errors=int(bit_err[i]),
            precoder=config.precoder.value,
            mode=config.mode.value,
            modulation=config.modulation.value,
        )
        for i, s in enumerate(snrs)
    ]


def _fmt(v):
    return format(float(v), ".17g")


def format_csv(points):
    """CSV text for `points`, sorted by SNR, floats with 17 significant digits."""
    if not points:
        raise InvalidArgumentError("no points to write")
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    w = csv.writer(buf, lineterminator="\n")
    for p in sorted(points, key=lambda p: p.snr_db):
        w.writerow([
            _fmt(p.snr_db), _fmt(p.ber), _fmt(p.ser), _fmt(p.mean_inv_sinr_pred),
            _fmt(p.mean_sinr_meas), p.bits, p.trials, p.precoder, p.mode, p.modulation,
        ])
    return buf.getvalue()


def write_csv(points, path):
    text = format_csv(points)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def emit_summary(points, config, runtime, stream=None):
    stream = stream or sys.stdout
    print(f"config {config_hash(config)}  {config.precoder.value} {config.mode.value} "
          f"{config.modulation.value}  trials={config.trials}  runtime={runtime:.2f}s", file=stream)
    for p in sorted(points, key=lambda p: p.snr_db):
        print(f"  snr={p.snr_db:6.2f} dB  ber={p.ber:.4e}  ser={p.ser:.4e}  bits={p.bits}", file=stream)
    return 0


_FLAG_KEYS = {
    "snr_min": "snr_db_min",
    "snr_max": "snr_db_max",
    "snr_step": "snr_db_step",
    "users": "users",
    "paths": "paths",
    "mod": "modulation",
    "precoder": "precoder",
    "mode": "mode",
    "trials": "trials",
    "blocks": "blocks_per_trial",
    "seed": "seed",
    "objective": "objective",
}


def _parser():
    ap = argparse.ArgumentParser(prog="simcli", description="GMUD multi-user precoding BER simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a BER sweep and write CSV")
    run.add_argument("--config", help="key=value experiment file")
    run.add_argument("--snr-min", type=float)
    run.add_argument("--snr-max", type=float)
    run.add_argument("--snr-step", type=float)
    run.add_argument("--users", type=int)
    run.add_argument("--paths", type=int)
    run.add_argument("--mod", choices=["qpsk", "qam16"])
    run.add_argument("--precoder", choices=["gmud", "svd"])
    run.add_argument("--mode", choices=["siso-multipath", "mimo-flat"])
    run.add_argument("--trials", type=int)
    run.add_argument("--blocks", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--objective", choices=["sum-inv-sinr", "max-min-sinr", "sum-sinr"])
    run.add_argument("--out", help="CSV path (default: standard output)")
    run.add_argument("--workers", type=int, default=1)

    cs = sub.add_parser("cond-stats", help="condition numbers of a channel ensemble")
    cs.add_argument("--mode", choices=["siso-multipath", "mimo-flat"], default="siso-multipath")
    cs.add_argument("--trials", type=int, default=10000)
    cs.add_argument("--seed", type=int, default=0)
    cs.add_argument("--users", type=int, default=2)
    cs.add_argument("--paths", type=int, default=2)
    return ap


def _cmd_run(args):
    overrides = {
        key: getattr(args, flag)
        for flag, key in _FLAG_KEYS.items()
        if getattr(args, flag) is not None
    }
    config = parse_config(args.config, overrides)
    t0 = time.perf_counter()
    points = run_sweep(config, workers=args.workers)
    runtime = time.perf_counter() - t0
    if args.out:
        write_csv(points, args.out)
        emit_summary(points, config, runtime)
    else:
        sys.stdout.write(format_csv(points))
        emit_summary(points, config, runtime, stream=sys.stderr)
    return 0


def _cmd_cond_stats(args):
    config = parse_config(None, {"mode": args.mode, "users": args.users, "paths": args.paths,
                                 "seed": args.seed})
    stats = condition_stats(config.channel_spec(), args.trials)
    print(f"mode={config.mode.value} trials={args.trials} seed={args.seed} "
          f"median={stats['median']:.6f} mean={stats['mean']:.6f}")
    return 0


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_cond_stats(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NumericalDegeneracyError, InvalidArgumentError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
