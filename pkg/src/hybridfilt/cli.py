"""Command-line interface: ``hybridfilt <command> [options]``.

Every command writes its results into ``--out`` (default: the current
directory) together with ``manifest.json``. Exit status is 0 on success,
1 for invalid input or configuration and 2 for numerical failures.
Diagnostics go to standard error; their level is set by ``HYBRIDFILT_LOG``
(error, warn, info or debug).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import NumericalError, ValidationError

log = logging.getLogger("hybridfilt")

_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
           "info": logging.INFO, "debug": logging.DEBUG}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _existing(*paths):
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise ValidationError(f"input file not found: {p}")


def _fmt(v):
    return f"{v:.17g}"


def _write_json(path, obj):
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")
    return path


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row) + "\n")
    return path


def _theta_list(theta):
    return [float(v) for v in np.asarray(theta).ravel()]


# ---------------------------------------------------------------- commands

def cmd_simulate(a, out):
    from .config import load_model, load_theta
    from .simulate import save_path, simulate_path
    _existing(a.model, a.theta)
    spec = load_model(a.model)
    path = simulate_path(spec, load_theta(a.theta), a.T, a.dt, a.seed, switch_seed=a.switch_seed)
    f = save_path(path, out / "path.csv")
    log.info("simulated %d grid points, %d jumps", path.times.size, len(path.jumps))
    return [f, f.with_suffix(".json")], f"{len(path.jumps)} jumps on {path.times.size} points"


def _smoother_json(results):
    return [{"tau": r.tau, "requested": r.requested, "probs": r.probs.tolist()} for r in results]


def cmd_filter(a, out):
    from .config import load_model, load_theta
    from .filtering import run_filter, run_smoother
    from .simulate import load_observed
    _existing(a.y, a.model, a.theta)
    spec = load_model(a.model)
    y = load_observed(a.y)
    theta = load_theta(a.theta)
    traj = run_filter(y, spec, theta, a.scheme)
    k = spec.dims.k
    rows = ([float(t), float(m)] + [float(p) for p in s]
            for t, m, s in zip(traj.times, traj.log_mass, traj.sigma_hat))
    files = [_write_csv(out / "filter.csv", ["t", "log_mass"] + [f"p_{i + 1}" for i in range(k)],
                        rows)]
    if a.smooth_at:
        res = run_smoother(y, spec, theta, a.smooth_at, a.scheme, traj=traj)
        files.append(_write_json(out / "smoother.json", {"smoother": _smoother_json(res)}))
    return files, f"log_mass(T) = {traj.log_mass[-1]:.10g}, clamp events {traj.clamp_events}"


def cmd_smooth(a, out):
    from .config import load_model, load_theta
    from .filtering import run_smoother
    from .simulate import load_observed
    _existing(a.y, a.model, a.theta)
    spec = load_model(a.model)
    res = run_smoother(load_observed(a.y), spec, load_theta(a.theta), a.at, a.scheme)
    f = _write_json(out / "smoother.json", {"smoother": _smoother_json(res)})
    return [f], f"{len(res)} smoothing times"


def cmd_loglik(a, out):
    from .complete import log_lik_complete
    from .config import load_model, load_theta
    from .simulate import load_path
    _existing(a.path, a.model, a.theta, a.theta0)
    spec = load_model(a.model)
    path = load_path(a.path)
    theta, theta0 = load_theta(a.theta), load_theta(a.theta0)
    ll = log_lik_complete(path, spec, theta, theta0)
    res = {"value": ll.value, "jump_part": ll.jump_part, "drift_part": ll.drift_part,
           "theta": _theta_list(theta), "theta0": _theta_list(theta0)}
    if a.partial:
        from .partial import log_lik_partial
        pl = log_lik_partial(path.observed(), spec, theta, theta0)
        res["partial"] = {"value": pl.value, "log_mass_theta": pl.log_mass_theta,
                          "log_mass_theta0": pl.log_mass_theta0}
    f = _write_json(out / "loglik.json", res)
    return [f], f"complete log-likelihood ratio {ll.value:.10g}"


def cmd_mle(a, out):
    from .config import load_model, load_theta
    from .partial import mle_partial
    from .simulate import load_observed
    _existing(a.y, a.model, a.theta_init)
    spec = load_model(a.model)
    r = mle_partial(load_observed(a.y), spec, load_theta(a.theta_init), tol=a.tol,
                    max_iter=a.max_iter, restarts=a.restarts, seed=a.seed)
    res = {"theta_hat": _theta_list(r.theta_hat), "log_mass_at_hat": r.log_mass_at_hat,
           "iterations": r.iterations, "converged": r.converged,
           "trace": [{"theta": th, "objective": f} for th, f in r.trace]}
    f = _write_json(out / "mle.json", res)
    return [f], f"theta_hat = {np.array2string(r.theta_hat, precision=6)}"


def cmd_em(a, out):
    from .config import load_model, load_theta
    from .em import em_run
    from .simulate import load_observed
    _existing(a.y, a.model, a.theta_init)
    spec = load_model(a.model)
    tr = em_run(load_observed(a.y), spec, load_theta(a.theta_init), max_iter=a.max_iter,
                tol=a.tol)

    def stats_json(s):
        return {"n_count": s.n_count.tolist(), "occupation": s.occupation.tolist(),
                "drift_lin": s.drift_lin.tolist(), "gram": s.gram.tolist(),
                "log_mass": s.log_mass, "clamp_events": s.clamp_events}

    res = {"converged": tr.converged, "stop_reason": tr.stop_reason,
           "iterates": [{"n": n, "theta": _theta_list(th), "loglik": ll, "stats": stats_json(s)}
                        for n, (th, ll, s) in enumerate(tr.iterates)]}
    if tr.rejected is not None:
        res["rejected"] = {"theta": _theta_list(tr.rejected[0]), "loglik": tr.rejected[1]}
    p = spec.dims.p
    rows = ([n] + _theta_list(th) + [float(ll)] for n, (th, ll, _) in enumerate(tr.iterates))
    files = [_write_json(out / "em.json", res),
             _write_csv(out / "em_iterations.csv",
                        ["n"] + [f"theta_{c + 1}" for c in range(p)] + ["loglik"], rows)]
    return files, f"{len(tr.iterates) - 1} iterations, stop reason {tr.stop_reason}"


def cmd_verify(a, out):
    from .verify import run_checks
    report = run_checks(a.scenario, a.seed, quick=a.quick)
    f = _write_json(out / "verify.json", report)
    return [f], f"scenario {a.scenario}: pass={report['pass']}"


COMMANDS = {"simulate": cmd_simulate, "filter": cmd_filter, "smooth": cmd_smooth,
            "loglik": cmd_loglik, "mle": cmd_mle, "em": cmd_em, "verify": cmd_verify}


def build_parser():
    p = _Parser(prog="hybridfilt", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"hybridfilt {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp):
        sp.add_argument("--out", default=".", help="output directory (created if missing)")

    s = sub.add_parser("simulate", help="simulate a hybrid path")
    s.add_argument("--model", required=True)
    s.add_argument("--theta", required=True)
    s.add_argument("--T", type=float, required=True)
    s.add_argument("--dt", type=float, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--switch-seed", type=int, default=None)
    common(s)

    s = sub.add_parser("filter", help="run the filter along an observed path")
    s.add_argument("--y", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--theta", required=True)
    s.add_argument("--smooth-at", type=_floats, default=None)
    s.add_argument("--scheme", choices=["euler", "exact"], default="euler")
    common(s)

    s = sub.add_parser("smooth", help="state probabilities at given times given the whole path")
    s.add_argument("--y", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--theta", required=True)
    s.add_argument("--at", type=_floats, required=True)
    s.add_argument("--scheme", choices=["euler", "exact"], default="euler")
    common(s)

    s = sub.add_parser("loglik", help="complete-observation log-likelihood ratio")
    s.add_argument("--path", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--theta", required=True)
    s.add_argument("--theta0", required=True)
    s.add_argument("--partial", action="store_true", help="also report the Y-only ratio")
    common(s)

    s = sub.add_parser("mle", help="maximum likelihood from the observed path")
    s.add_argument("--y", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--theta-init", required=True)
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--max-iter", type=int, default=500)
    s.add_argument("--restarts", type=int, default=3)
    s.add_argument("--seed", type=int, default=0, help="seed of the restart jitter")
    common(s)

    s = sub.add_parser("em", help="expectation-maximization from the observed path")
    s.add_argument("--y", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--theta-init", required=True)
    s.add_argument("--max-iter", type=int, default=100)
    s.add_argument("--tol", type=float, default=1e-6)
    common(s)

    from .scenarios import SCENARIOS
    s = sub.add_parser("verify", help="run the oracle cross-checks on a reference scenario")
    s.add_argument("--scenario", required=True, choices=sorted(SCENARIOS))
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--quick", action="store_true", help="coarser grids and fewer particles")
    common(s)
    return p


def _digest_files(paths):
    h = hashlib.sha256()
    for p in paths:
        h.update(Path(p).read_bytes())
    return h.hexdigest()


def _inputs(a):
    keys = ("model", "theta", "theta0", "theta_init", "y", "path")
    return [getattr(a, k) for k in keys if getattr(a, k, None) is not None]


def _versions():
    import numba
    import scipy
    return {"hybridfilt": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__}


def _manifest(a, argv, outputs, wall):
    params = {k: v for k, v in sorted(vars(a).items()) if k != "out"}
    inputs = _inputs(a)
    h = hashlib.sha256(json.dumps(params, sort_keys=True, default=str).encode())
    h.update(_digest_files(inputs).encode())
    from .kernels import BACKEND
    return {"command": a.command, "argv": list(argv), "parameters": params,
            "config_hash": h.hexdigest(), "seed": getattr(a, "seed", None),
            "inputs": {str(p): _digest_files([p]) for p in inputs},
            "outputs": {Path(p).name: _digest_files([p]) for p in outputs},
            "versions": _versions(), "backend": BACKEND, "wall_time_s": wall}


def _setup_logging():
    level = _LEVELS.get(os.environ.get("HYBRIDFILT_LOG", "warn").strip().lower(), logging.WARNING)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("hybridfilt")
    root.handlers[:] = [handler]
    root.setLevel(level)
    root.propagate = False


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    _setup_logging()
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if a.command is None:
        parser.print_usage(sys.stderr)
        return 1
    out = Path(a.out)
    t0 = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
        files, summary = COMMANDS[a.command](a, out)
        wall = time.perf_counter() - t0
        _write_json(out / "manifest.json", _manifest(a, argv, files, wall))
    except ValidationError as exc:
        log.error("%s", exc)
        return 1
    except NumericalError as exc:
        log.error("numerical failure: %s", exc)
        return 2
    print(f"hybridfilt {a.command}: {summary} ({wall:.2f} s)", file=sys.stderr)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
