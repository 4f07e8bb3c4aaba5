"""Command-line front end: ``zrplab {thermo,sample-canonical,simulate,pde,verify}``.

Experiments are described by an INI file. Every section and key is listed
in ``CONFIG_SCHEMA``; anything else is rejected. The resolved configuration
is written next to the outputs and can be fed back to reproduce them.
"""
from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import rng as rngmod
from . import verify as V
from .empirical import build_young, build_young_macro, extract_fields
from .ensembles import (InitialCondition, SupercriticalProfile, build_canonical_table, sample_canonical,
                        sample_initial)
from .lattice import Lattice
from .pde import CFLViolation, NegativeDensity, initial_grid, solve
from .sim import EventBudgetExceeded, ZeroRangeProcess
from .thermo import (CapacityError, CylinderObservable, JumpRateSpec, SeriesDivergence, ThermoProfile,
                     UnstableExtrapolation)

OUT_ENV = "ZRPLAB_OUT"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_BUDGET = 4
EXIT_ASSERT = 5


class ConfigError(ValueError):
    pass


class AssertionFailed(RuntimeError):
    pass


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s):
    return [float(x) for x in s.replace(",", " ").split()]


def _ints(s):
    return [int(x) for x in s.replace(",", " ").split()]


def _pairs(s):
    out = []
    for item in s.replace(",", " ").split():
        a, b = item.split(":")
        out.append((int(a), int(b)))
    return out


# (type, default); default None means optional with no value
CONFIG_SCHEMA = {
    "model": {"family": (str, None), "b": (float, 0.0), "table": (_floats, None), "k_max": (int, 100000)},
    "lattice": {"d": (int, 1), "N": (int, 64)},
    "initial": {"kind": (str, "product"), "rho": (str, "0.5"), "K": (int, None),
                "condensate_u": (_floats, None), "condensate_alpha": (float, 0.0)},
    "run": {"T": (float, 0.05), "replicas": (int, 1), "seed": (int, 0), "samples": (int, 5),
            "workers": (int, None), "event_budget": (int, 10 ** 9), "checkpoint": (_bool, True),
            "audit": (_bool, False)},
    "observables": {"snapshots": (_bool, True), "young_ell": (int, None), "young_eps": (float, None),
                    "young_M": (float, 10.0), "young_dlam": (float, 0.05)},
    "canonical": {"n": (int, 4), "K": (int, 8), "samples": (int, 1000)},
    "thermo": {"points": (int, 100), "phi_max": (float, None), "rho_max": (float, 5.0)},
    "pde": {"G": (int, 512), "safety": (float, 0.5), "snapshots": (int, 5)},
    "statistic": {"observable": (str, "g"), "settings": (_pairs, None), "sizes": (_ints, None),
                  "N_list": (_ints, None), "ell": (int, 2), "eps": (float, 0.0625), "M": (_floats, None),
                  "A": (float, 2.0), "rho": (float, None), "test_field": (str, "cos1"),
                  "confidence": (float, 0.95), "tolerance": (float, None), "samples": (int, 11),
                  "assert": (_bool, False)},
}


class ProfileExpr:
    """Density profile given as an arithmetic expression in ``u`` (and ``v`` in 2d)."""

    NAMES = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt, "abs": np.abs,
             "minimum": np.minimum, "maximum": np.maximum, "where": np.where, "pi": math.pi}

    def __init__(self, expr: str):
        self.expr = expr
        try:
            self._code = compile(expr, "<profile>", "eval")
        except SyntaxError as exc:
            raise ConfigError(f"bad profile expression {expr!r}: {exc}") from None
        for name in self._code.co_names:
            if name not in self.NAMES and name not in ("u", "v"):
                raise ConfigError(f"profile expression uses unknown name {name!r}")

    def __call__(self, u, v=None):
        env = dict(self.NAMES, u=np.asarray(u, dtype=np.float64), v=0.0 if v is None else np.asarray(v))
        return np.asarray(eval(self._code, {"__builtins__": {}}, env), dtype=np.float64) * np.ones_like(env["u"])

    def __getstate__(self):
        return {"expr": self.expr}

    def __setstate__(self, st):
        self.__init__(st["expr"])


class Config:
    def __init__(self, values: dict, present: set):
        self.values = values
        self.present = present

    def __getitem__(self, key):
        sec, k = key.split(".")
        return self.values[sec][k]

    def has(self, section: str) -> bool:
        return section in self.present

    @classmethod
    def load(cls, path=None, text: str = None) -> "Config":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            if path is not None:
                with open(path) as fh:
                    cp.read_file(fh)
            elif text is not None:
                cp.read_string(text)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(str(exc)) from None
        values, present = {}, set()
        for sec in cp.sections():
            if sec not in CONFIG_SCHEMA:
                raise ConfigError(f"unknown section [{sec}]")
            present.add(sec)
            for k in cp[sec]:
                if k not in CONFIG_SCHEMA[sec]:
                    raise ConfigError(f"unknown key {k!r} in [{sec}]")
        for sec, keys in CONFIG_SCHEMA.items():
            values[sec] = {}
            for k, (typ, default) in keys.items():
                if sec in present and k in cp[sec]:
                    raw = cp[sec][k]
                    try:
                        values[sec][k] = typ(raw)
                    except (ValueError, TypeError) as exc:
                        raise ConfigError(f"[{sec}] {k} = {raw!r}: {exc}") from None
                else:
                    values[sec][k] = default
        return cls(values, present)

    def dump(self) -> str:
        lines = []
        for sec, keys in CONFIG_SCHEMA.items():
            lines.append(f"[{sec}]")
            for k in keys:
                v = self.values[sec][k]
                if v is None:
                    continue
                if isinstance(v, list):
                    v = " ".join(f"{a[0]}:{a[1]}" if isinstance(a, tuple) else repr(a) for a in v)
                elif isinstance(v, bool):
                    v = "true" if v else "false"
                elif isinstance(v, float):
                    v = repr(v)
                lines.append(f"{k} = {v}")
            lines.append("")
        return "\n".join(lines)

    # -- builders --------------------------------------------------------------

    def spec(self) -> JumpRateSpec:
        if not self.has("model"):
            raise ConfigError("missing [model] section")
        fam = self["model.family"]
        if fam is None:
            raise ConfigError("[model] family is required")
        if fam == "evans":
            b = self["model.b"]
            if b < 0:
                raise ConfigError("Evans parameter b must be nonnegative")
            return JumpRateSpec.evans(b, k_max=self["model.k_max"])
        if fam == "table":
            t = self["model.table"]
            if not t:
                raise ConfigError("[model] table is required for family = table")
            return JumpRateSpec.from_table(t, self["model.k_max"])
        raise ConfigError(f"unknown model family {fam!r}")

    def lattice(self, N=None) -> Lattice:
        d = self["lattice.d"]
        if d not in (1, 2):
            raise ConfigError("lattice dimension must be 1 or 2")
        try:
            return Lattice(self["lattice.N"] if N is None else N, d)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def profile_fn(self) -> ProfileExpr:
        return ProfileExpr(self["initial.rho"])

    def initial(self, lattice: Lattice) -> InitialCondition:
        kind = self["initial.kind"]
        if kind != "condensate" and (self["initial.condensate_u"] or self["initial.condensate_alpha"]):
            raise ConfigError("condensate_u/condensate_alpha need kind = condensate")
        if kind == "product":
            return InitialCondition.product(self.profile_fn())
        if kind == "grand_canonical":
            return InitialCondition.grand_canonical(float(self["initial.rho"]))
        if kind == "canonical":
            K = self["initial.K"]
            if K is None:
                K = int(math.floor(float(self["initial.rho"]) * lattice.n_sites + 1e-9))
            return InitialCondition.canonical(K)
        if kind == "condensate":
            u = self["initial.condensate_u"] or [0.5]
            return InitialCondition.with_condensate(self.profile_fn(), u, self["initial.condensate_alpha"])
        raise ConfigError(f"unknown initial kind {kind!r}")

    def experiment(self, N=None, seed=None) -> V.Experiment:
        spec = self.spec()
        lat = self.lattice(N)
        return V.Experiment(spec, lat, self.initial(lat), self["run.T"],
                            self["run.seed"] if seed is None else seed, self["run.event_budget"])


# -- output helpers -------------------------------------------------------------------


def _out_dir(args, cfg: Config) -> Path:
    env = os.environ.get(OUT_ENV)
    out = Path(env) if env else Path(args.out or "zrplab_out")
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfg.dump())
    return out


def _json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(type(v))


def _fmt(v: float) -> str:
    return repr(float(v))


# -- subcommands ----------------------------------------------------------------------


def cmd_thermo(cfg: Config, out: Path) -> int:
    spec = cfg.spec()
    prof = ThermoProfile(spec)
    phi_c = prof.phi_c
    n = cfg["thermo.points"]
    top = cfg["thermo.phi_max"] or (0.99 * phi_c if math.isfinite(phi_c) else 10.0)
    phis = np.linspace(0.0, top, n)
    with open(out / "thermo.csv", "w") as fh:
        fh.write("phi,Z,R\n")
        for p in phis:
            fh.write(f"{_fmt(p)},{_fmt(prof.Z(p))},{_fmt(prof.R(p))}\n")
    rho_c = prof.rho_c
    with open(out / "thermo_scalars.csv", "w") as fh:
        fh.write("name,value\n")
        fh.write(f"phi_c,{'inf' if not math.isfinite(phi_c) else _fmt(phi_c)}\n")
        fh.write(f"rho_c,{'inf' if not math.isfinite(rho_c) else _fmt(rho_c)}\n")
    rhos = np.linspace(0.0, cfg["thermo.rho_max"], n)
    vals = np.atleast_1d(prof.Phi(rhos))
    with open(out / "phibar.csv", "w") as fh:
        fh.write("rho,phibar\n")
        for r, v in zip(rhos, vals):
            fh.write(f"{_fmt(r)},{_fmt(v)}\n")
    print(f"phi_c = {phi_c}, rho_c = {rho_c}")
    return EXIT_OK


def cmd_sample_canonical(cfg: Config, out: Path) -> int:
    spec = cfg.spec()
    n, K, S = cfg["canonical.n"], cfg["canonical.K"], cfg["canonical.samples"]
    table = build_canonical_table(spec, n, K)
    draws = sample_canonical(table, rngmod.stream(cfg["run.seed"], 0, rngmod.AUX), size=S)
    with open(out / "canonical.csv", "w") as fh:
        fh.write("sample,site,occupancy\n")
        for s in range(S):
            for x in range(n):
                fh.write(f"{s},{x},{int(draws[s, x])}\n")
    _json(out / "canonical.json", {"n": n, "K": K, "samples": S, "seed": cfg["run.seed"],
                                   "mean_g_exact": float(table.Z(n, K - 1) / table.Z(n, K)) if K > 0 else 0.0})
    return EXIT_OK


def _write_snapshot(fh, t, occ, lattice, spec):
    f = extract_fields(occ, lattice, spec, t)
    nd = lattice.n_sites
    for x in range(nd):
        cur = ",".join(_fmt(f.current[j][x]) for j in range(lattice.d))
        fh.write(f"{_fmt(t)},{x},{int(occ[x])},{_fmt(occ[x] / nd)},{_fmt(f.jump_rate[x])},{cur}\n")


def cmd_simulate(cfg: Config, out: Path) -> int:
    exp = cfg.experiment()
    lat, spec, T = exp.lattice, exp.spec, exp.T
    R = cfg["run.replicas"]
    ts = np.linspace(0.0, T, max(1, cfg["run.samples"])) if T > 0 else np.array([0.0])
    header = "t,u_index,occupancy,density,jump_rate," + ",".join(f"current_{j + 1}" for j in range(lat.d))
    manifest = {"seed": exp.seed, "N": lat.N, "d": lat.d, "T": T, "replicas": [], "sample_times": ts.tolist()}
    status = EXIT_OK
    prediction = None
    for r in range(R):
        occ = exp.initial(r)
        if prediction is None:
            prediction = 2 * lat.d * lat.N ** 2 * float(spec.table[occ].sum()) * T
        proc = ZeroRangeProcess(spec, lat, occ, seed=exp.seed, replica=r, record=True,
                                audit=cfg["run.audit"], event_budget=exp.event_budget)
        entry = {"replica": r, "stream": [exp.seed, r], "particles": int(occ.sum())}
        try:
            proc.run_until(T)
            entry["complete"] = True
        except EventBudgetExceeded as exc:
            entry["complete"] = False
            entry["error"] = str(exc)
            status = EXIT_BUDGET
        traj = proc.trajectory()
        entry["events"] = int(proc.event_count)
        entry["t_reached"] = proc.t
        reach = ts[ts <= traj.t_end]
        snaps = traj.snapshots(reach)
        if cfg["observables.snapshots"]:
            with open(out / f"snapshots_r{r:03d}.csv", "w") as fh:
                fh.write(header + "\n")
                for t, s in zip(reach, snaps):
                    _write_snapshot(fh, t, s, lat, spec)
        ell, eps = cfg["observables.young_ell"], cfg["observables.young_eps"]
        M, dl = cfg["observables.young_M"], cfg["observables.young_dlam"]
        if ell is not None or eps is not None:
            for i, s in enumerate(snaps):
                y = build_young(s, lat, ell, M, dl) if ell is not None else build_young_macro(s, lat, eps, M, dl)
                y.to_csv(out / f"young_r{r:03d}_s{i:03d}.csv")
        if cfg["run.checkpoint"]:
            proc.save(out / f"checkpoint_r{r:03d}.json")
        manifest["replicas"].append(entry)
        if status == EXIT_BUDGET:
            break
    counts = [e["events"] for e in manifest["replicas"]]
    manifest["event_prediction_initial"] = prediction
    manifest["mean_events"] = float(np.mean(counts)) if counts else 0.0
    manifest["partial"] = status != EXIT_OK
    _json(out / "manifest.json", manifest)
    return status


def cmd_pde(cfg: Config, out: Path) -> int:
    spec = cfg.spec()
    prof = ThermoProfile(spec)
    G, d, T = cfg["pde.G"], cfg["lattice.d"], cfg["run.T"]
    cond = None
    if cfg["initial.kind"] == "condensate":
        cond = (cfg["initial.condensate_u"] or [0.5], cfg["initial.condensate_alpha"])
    elif cfg["initial.kind"] not in ("product", "grand_canonical", "canonical"):
        raise ConfigError(f"unknown initial kind {cfg['initial.kind']!r}")
    rho0 = initial_grid(cfg.profile_fn(), G, d, cond)
    snaps = np.linspace(0.0, T, max(2, cfg["pde.snapshots"]))
    sol = solve(rho0, prof, T, G, d, safety=cfg["pde.safety"], snapshot_times=snaps)
    sol.write(out / "pde.csv", out / "pde.json")
    return EXIT_OK


def _settings(cfg: Config, default):
    return cfg["statistic.settings"] or default


def _emit(out: Path, name: str, blocks, result: dict, assert_mode: bool) -> int:
    V.write_statistic_csv(out / f"{name}.csv", blocks)
    _json(out / f"{name}.json", result)
    print(f"{name}: {result['verdict']}")
    if assert_mode and result["verdict"] == "fail":
        return EXIT_ASSERT
    return EXIT_OK


def cmd_verify(cfg: Config, out: Path, which: str, replicas=None) -> int:
    R = replicas or cfg["run.replicas"]
    workers = cfg["run.workers"]
    am = cfg["statistic.assert"]
    spec = cfg.spec()
    st = cfg.values["statistic"]
    if which == "eoe":
        rho = st["rho"] if st["rho"] is not None else float(cfg["initial.rho"])
        sizes = st["sizes"] or [50, 100, 200, 400]
        rows = V.eoe_table(spec, rho, sizes)
        blocks = [[f"eoe_deviation,n={n},0,{_fmt(dev)}"] for n, K, val, target, dev in rows]
        devs = [r[4] for r in rows]
        ok = all(a > b for a, b in zip(devs[:-1], devs[1:]))
        if st["tolerance"] is not None:
            ok = ok and devs[-1] < st["tolerance"]
        res = V.verdict("eoe", "pass" if ok else "fail", rho=rho, rows=[list(r) for r in rows])
        return _emit(out, "eoe", blocks, res, am)
    if which == "one-block":
        obs_name = st["observable"]
        ws = []
        blocks = []
        for N, ell in _settings(cfg, [(64, 2), (128, 4), (256, 8)]):
            exp = cfg.experiment(N)
            obs = _observable(obs_name, spec, exp.lattice.d)
            s = V.one_block_stat(exp, R, obs, ell, workers=workers)
            ws.append(s)
            blocks.append(V.csv_block("one_block", f"N={N};ell={ell}", s))
        if obs_name == "eta":
            ok = all(np.all(s.values == 0.0) for s in ws)
        else:
            ok = V.separated_decreasing(ws)
        res = V.verdict("one-block", "pass" if ok else "fail", observable=obs_name,
                        means=[float(s.mean) for s in ws], ses=[float(s.se) for s in ws])
        return _emit(out, "one_block", blocks, res, am)
    if which in ("continuity", "qv"):
        G = _test_field(st["test_field"], cfg["lattice.d"])
        Ns = st["N_list"] or [cfg["lattice.N"]]
        blocks, info = [], []
        ok = True
        for N in Ns:
            exp = cfg.experiment(N)
            if which == "continuity":
                ts = np.linspace(0.0, exp.T, max(2, st["samples"]))[1:]
                v1, v2 = V.continuity_residuals(exp, R, G, ts, workers=workers)
                blocks += [V.csv_block("sup_V1", f"N={N}", v1), V.csv_block("sup_V2", f"N={N}", v2)]
                info.append({"N": N, "V1_mean": float(v1.mean), "V2_mean": float(v2.mean),
                             "V1_se": float(v1.se), "V2_se": float(v2.se)})
            else:
                r = V.martingale_qv_check(exp, R, G, st["confidence"], workers=workers)
                blocks.append(V.csv_block("A_T", f"N={N}", r["A"]))
                info.append({k: r[k] for k in ("var", "var_upper", "bound", "ratio", "pass")} | {"N": N})
                ok = ok and r["pass"]
        if which == "continuity":
            status = "diagnostic"
            if len(info) >= 2:
                status = "pass" if info[1]["V2_mean"] <= 0.75 * info[0]["V2_mean"] else "fail"
            res = V.verdict("continuity", status, settings=info)
        else:
            res = V.verdict("qv", "pass" if ok else "fail", settings=info)
        return _emit(out, which, blocks, res, am)
    if which == "jump-bound":
        exp = cfg.experiment()
        r = V.jump_rate_bound(exp, R, st["eps"], workers=workers)
        ps = r["per_site"]
        blocks = [[f"block_jump_rate,x={x},mean,{_fmt(m)}" for x, m in enumerate(ps.mean)] +
                  [f"block_jump_rate,x={x},se,{_fmt(s)}" for x, s in enumerate(ps.se)]]
        res = V.verdict("jump-bound", "pass" if r["pass"] else "fail", phi_c=r["phi_c"], max_mean=r["max_mean"],
                        eps=st["eps"])
        return _emit(out, "jump_bound", blocks, res, am)
    if which == "double-block":
        exp = cfg.experiment()
        ts = np.linspace(0.0, exp.T, max(2, st["samples"]))
        blocks, info = [], []
        for M in st["M"] or [2.0, 4.0, 8.0]:
            a, b = V.double_block_stat(exp, R, st["ell"], st["eps"], M, st["A"], ts, workers=workers)
            blocks += [V.csv_block("double_block", f"M={M};ell={st['ell']};eps={st['eps']}", a),
                       V.csv_block("cutoff", f"M={M};A={st['A']}", b)]
            info.append({"M": M, "double_block": float(a.mean), "cutoff": float(b.mean)})
        return _emit(out, "double_block", blocks, V.verdict("double-block", "diagnostic", settings=info), am)
    if which == "energy":
        Ns = st["N_list"] or [cfg["lattice.N"]]
        blocks, info = [], []
        for N in Ns:
            exp = cfg.experiment(N)
            ts = np.linspace(0.0, exp.T, max(2, st["samples"]))
            k0, gs = V.energy_stat(exp, R, st["eps"], ts, workers=workers)
            blocks += [V.csv_block("K0_lower", f"N={N}", k0), V.csv_block("grad_stat", f"N={N}", gs)]
            info.append({"N": N, "K0_lower": float(k0.mean), "grad_stat": float(gs.mean)})
        return _emit(out, "energy", blocks, V.verdict("energy", "diagnostic", settings=info), am)
    if which == "hydro":
        Ns = st["N_list"] or [cfg["lattice.N"]]
        prof_fn = cfg.profile_fn()
        blocks, info, sol = [], [], None
        for N in Ns:
            exp = cfg.experiment(N)
            r = V.hydro_weak_error(exp, R, prof_fn, cfg["pde.G"], workers=workers, pde_solution=sol)
            sol = r["solution"]
            for j, name in enumerate(r["tests"]):
                blocks.append(V.csv_block(f"pairing_{name}", f"N={N}", V.ReplicaStats(r["particle"].values[:, j])))
            info.append({"N": N, "weak_error": r["weak_error"], "errors": r["errors"].tolist(),
                         "pde": r["pde"].tolist()})
        tol = st["tolerance"] if st["tolerance"] is not None else 0.05
        ok = info[-1]["weak_error"] <= tol
        if len(info) >= 2:
            ok = ok and info[-1]["weak_error"] <= info[-2]["weak_error"]
        return _emit(out, "hydro", blocks, V.verdict("hydro", "pass" if ok else "fail", tolerance=tol,
                                                       settings=info), am)
    raise ConfigError(f"unknown statistic {which!r}")


def _observable(name: str, spec: JumpRateSpec, d: int) -> CylinderObservable:
    if name == "eta":
        return CylinderObservable.occupation(d)
    if name == "g":
        return CylinderObservable.jump_rate(spec, d)
    if name.startswith("ind"):
        return CylinderObservable.indicator(int(name[3:]), d)
    raise ConfigError(f"unknown observable {name!r}")


def _test_field(name: str, d: int) -> V.DiscreteTestField:
    if name == "const":
        return V.DiscreteTestField.constant(1.0, d)
    if name[:3] in ("cos", "sin") and name[3:].isdigit():
        return V.DiscreteTestField.fourier(name[:3], int(name[3:]), d)
    raise ConfigError(f"unknown test field {name!r}")


# -- entry point ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zrplab", description="Zero-range process simulation and diagnostics")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("thermo", "sample-canonical", "simulate", "pde", "verify"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="INI experiment file")
        sp.add_argument("--seed", type=int, help="master seed (overrides [run] seed)")
        sp.add_argument("--out", help=f"output directory (${OUT_ENV} takes precedence)")
        sp.add_argument("--replicas", type=int, help="replica count (overrides [run] replicas)")
        if name == "verify":
            sp.add_argument("which", choices=["one-block", "eoe", "continuity", "qv", "jump-bound",
                                              "double-block", "energy", "hydro"])
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = Config.load(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigError("seed must be an unsigned 64-bit integer")
            cfg.values["run"]["seed"] = args.seed
        if args.replicas is not None:
            if args.replicas < 1:
                raise ConfigError("replicas must be positive")
            cfg.values["run"]["replicas"] = args.replicas
        cfg.spec()
        out = _out_dir(args, cfg)
        if args.command == "thermo":
            return cmd_thermo(cfg, out)
        if args.command == "sample-canonical":
            return cmd_sample_canonical(cfg, out)
        if args.command == "simulate":
            return cmd_simulate(cfg, out)
        if args.command == "pde":
            return cmd_pde(cfg, out)
        return cmd_verify(cfg, out, args.which)
    except (ConfigError, SupercriticalProfile, CFLViolation) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SeriesDivergence, UnstableExtrapolation) as exc:
        print(f"series divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except EventBudgetExceeded as exc:
        print(f"event budget exhausted: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (NegativeDensity, CapacityError) as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_ASSERT


if __name__ == "__main__":
    raise SystemExit(main())
