"""``snapback`` command line.

Exit codes: 0 success, 1 usage or configuration error (or a numerical
failure), 2 when a verification produced a negative finding.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import bifurcation, homoclinic, symbolic
from .errors import ConfigError, SnapbackError
from .example2d import (Example2DConfig, certify_membership_by_chain, verify_family_bifurcation,
                        verify_wandering, wu_fingerprint)
from .maps import make_builtin, make_family
from .repellor import find_periodic, is_expanding
from .report import Table, emit_report, to_jsonable

COMMANDS = {
    "repellor": ["find"],
    "homoclinic": ["search", "classify"],
    "cantor": ["build", "verify"],
    "bifurcate": ["scan", "locate", "report"],
    "example2d": ["verify"],
    "class": ["density"],
}

EXIT_OK, EXIT_ERROR, EXIT_FINDING = 0, 1, 2


@dataclass
class RunConfig:
    """Every knob of a run.  ``None`` means "use the command's default"."""

    command: str = ""
    map: Optional[str] = None
    params: list = field(default_factory=list)
    family: Optional[str] = None
    guess: Optional[list] = None
    period: int = 1
    depth: Optional[int] = None
    region: Optional[list] = None
    tol: Optional[float] = None
    bracket: Optional[list] = None
    grid: int = 21
    n_max: int = 64
    mu: Optional[float] = None
    mu_list: list = field(default_factory=lambda: [-0.05, 0.0, 0.05])
    seed: int = 7
    samples: int = 2048
    horizon: int = 50
    word: str = "01"
    eps: Optional[float] = None
    orbit: int = 0
    output: Optional[str] = None
    format: str = "json"

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError("unknown configuration keys", keys=unknown)
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from exc
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def validate(self) -> None:
        group, _, action = self.command.partition(" ")
        if self.command and action not in COMMANDS.get(group, []):
            raise ConfigError(f"unknown command {self.command!r}", command=self.command)
        if self.format not in ("json", "csv"):
            raise ConfigError("format must be json or csv", format=self.format)
        if self.bracket is not None and len(self.bracket) != 2:
            raise ConfigError("bracket needs two numbers", bracket=self.bracket)


# -- argument parsing ------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _print_error(ConfigError(message))
        raise SystemExit(EXIT_ERROR)


def _add_options(p: argparse.ArgumentParser) -> None:
    S = argparse.SUPPRESS
    p.add_argument("--config", help="JSON RunConfig file; flags override it")
    p.add_argument("--map", default=S, help="built-in map name")
    p.add_argument("--params", type=float, nargs="*", default=S, help="map parameters")
    p.add_argument("--family", default=S, help="parametric family name")
    p.add_argument("--guess", type=float, nargs="+", default=S, help="periodic point guess")
    p.add_argument("--period", type=int, default=S)
    p.add_argument("--depth", type=int, default=S)
    p.add_argument("--region", type=float, nargs="+", default=S,
                   help="box as lo1 hi1 [lo2 hi2]")
    p.add_argument("--tol", type=float, default=S)
    p.add_argument("--bracket", type=float, nargs=2, default=S)
    p.add_argument("--grid", type=int, default=S, help="number of scan points")
    p.add_argument("--n-max", dest="n_max", type=int, default=S)
    p.add_argument("--mu", type=float, default=S)
    p.add_argument("--mu-list", dest="mu_list", type=float, nargs="+", default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--samples", type=int, default=S)
    p.add_argument("--horizon", type=int, default=S)
    p.add_argument("--word", default=S, help="itinerary over {0, 1}")
    p.add_argument("--eps", type=float, default=S)
    p.add_argument("--orbit", type=int, default=S, help="index of the orbit to use")
    p.add_argument("--output", "-o", default=S, help="write report here instead of stdout")
    p.add_argument("--csv", dest="format", action="store_const", const="csv", default=S)
    p.add_argument("--verbose", "-v", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="snapback", description=__doc__.splitlines()[0])
    groups = parser.add_subparsers(dest="group", required=True, parser_class=_Parser)
    for group, actions in COMMANDS.items():
        gp = groups.add_parser(group)
        sub = gp.add_subparsers(dest="action", required=True, parser_class=_Parser)
        for action in actions:
            _add_options(sub.add_parser(action))
    return parser


def parse_config(argv) -> tuple[RunConfig, bool]:
    args = build_parser().parse_args(argv)
    ns = vars(args)
    command = f"{ns.pop('group')} {ns.pop('action')}"
    verbose = ns.pop("verbose")
    path = ns.pop("config")
    base = {}
    if path:
        try:
            with open(path) as fh:
                base = RunConfig.from_json(fh.read()).to_dict()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc.strerror}", path=path) from exc
        if base.get("command") and base["command"] != command:
            raise ConfigError("config command does not match the command line",
                              config=base["command"], argv=command)
    base.update(ns)
    base["command"] = command
    return RunConfig.from_dict(base), verbose


# -- command implementations -------------------------------------------------------------

def _map(cfg: RunConfig):
    if not cfg.map:
        raise ConfigError("--map is required for this command")
    return make_builtin(cfg.map, cfg.params)


def _family(cfg: RunConfig):
    if not cfg.family:
        raise ConfigError("--family is required for this command")
    return make_family(cfg.family)


def _repellor(cfg: RunConfig, m):
    guess = cfg.guess if cfg.guess is not None else [0.0] * m.dimension
    return find_periodic(m, guess, cfg.period)


def _region(cfg: RunConfig, m):
    if cfg.region is None:
        return None
    if len(cfg.region) != 2 * m.dimension:
        raise ConfigError("region needs two numbers per dimension", region=cfg.region)
    return np.asarray(cfg.region, dtype=float).reshape(m.dimension, 2)


def _repellor_dict(rep) -> dict:
    ok, margin = is_expanding(rep)
    return {"points": rep.points, "period": rep.period, "multipliers": list(rep.multipliers),
            "singular_values": rep.singular_values, "expanding": ok,
            "expansion_margin": margin, "basin_radius": rep.basin_radius}


def cmd_repellor_find(cfg):
    rep = _repellor(cfg, _map(cfg))
    out = _repellor_dict(rep)
    return out, not out["expanding"]


def _search(cfg):
    m = _map(cfg)
    rep = _repellor(cfg, m)
    found = homoclinic.search_homoclinic(m, rep, cfg.depth or 1, region=_region(cfg, m))
    return m, rep, found


def cmd_homoclinic_search(cfg):
    m, rep, found = _search(cfg)
    return {"repellor": _repellor_dict(rep), "depth": cfg.depth or 1,
            "orbits": [o.as_dict() for o in found],
            "uncertified": len(found.uncertified)}, False


def cmd_homoclinic_classify(cfg):
    m, rep, found = _search(cfg)
    rows = []
    for o in found:
        row = {"point": o.point, "classification": homoclinic.classify(o),
               "min_abs_det": o.min_abs_det}
        if row["classification"] == "Critical":
            pts = np.vstack([o.segment, o.tail]) if len(o.tail) else o.segment
            c = pts[int(np.argmin(o.criticality))]
            try:
                row["fold"] = homoclinic.fold_test(m, c).as_dict()
            except SnapbackError as exc:
                row["fold"] = exc.as_dict()
        rows.append(row)
    counts = {k: sum(r["classification"] == k for r in rows) for k in ("Regular", "Critical")}
    return {"depth": cfg.depth or 1, "counts": counts, "orbits": rows}, False


def _branch_system(cfg):
    m, rep, found = _search(cfg)
    regular = [o for o in found if o.classification == "Regular"]
    if not regular:
        raise SnapbackError("no Regular homoclinic orbit found to build from",
                            depth=cfg.depth or 1)
    if not 0 <= cfg.orbit < len(regular):
        raise ConfigError("orbit index out of range", orbit=cfg.orbit, available=len(regular))
    return m, symbolic.build_branch_system(m, rep, regular[cfg.orbit])


def cmd_cantor_build(cfg):
    _, system = _branch_system(cfg)
    return system.as_dict(), False


def cmd_cantor_verify(cfg):
    m, system = _branch_system(cfg)
    depth = 10 if cfg.depth is None else cfg.depth
    conj = symbolic.verify_shift_conjugacy(system, depth, cfg.tol or 1e-8)
    iso = symbolic.verify_isolation(system, min(depth, 6), seed=cfg.seed)
    cloud = symbolic.cylinder_points(system, min(depth, 8))
    cert = symbolic.expansion_certificate(m, cloud, n_max=max(1, min(depth, 8)), seed=cfg.seed)
    x = symbolic.periodic_from_word(system, cfg.word)
    k = len(cfg.word)
    gap = float(m.dist(m.iterate(x[None], system.power), x)[0])
    back = float(m.dist(m.iterate(x[None], system.power * k), x)[0])
    periodic = {"word": cfg.word, "point": x, "return_residual": back, "shift_gap": gap,
                "passed": back < 1e-9 and (k == 1 or gap > system.separation / 2)}
    report = {"system": system.as_dict(), "conjugacy": conj.as_dict(),
              "isolation": {**iso.as_dict(), "violations": len(iso.violations)},
              "expansion": cert.as_dict(), "periodic": periodic}
    return report, not (conj.passed and iso.passed and periodic["passed"])


def _bracket(cfg, fam):
    return tuple(cfg.bracket) if cfg.bracket else fam.parameter_range


def cmd_bifurcate_scan(cfg):
    fam = _family(cfg)
    lo, hi = _bracket(cfg, fam)
    grid = np.linspace(lo, hi, cfg.grid)
    track, modulus = bifurcation.track_unstable_interval(fam, grid)
    rows = []
    for mu, W in track:
        try:
            F = bifurcation.crossing_functional(fam, mu, fam.critical_point(mu))
        except (SnapbackError, TypeError):
            F = None
        rows.append([mu, W.lower, W.upper, F])
    if cfg.format == "csv":
        return Table(["mu", "w_lower", "w_upper", "functional"], rows), False
    return {"family": fam.name, "modulus": modulus,
            "rows": [dict(zip(["mu", "w_lower", "w_upper", "functional"], r)) for r in rows]}, False


def _locate(cfg, fam):
    return bifurcation.locate_mu0(fam, _bracket(cfg, fam), cfg.tol or 1e-9,
                                  cfg.depth or bifurcation.DEFAULT_DEPTH)


def cmd_bifurcate_locate(cfg):
    fam = _family(cfg)
    res = _locate(cfg, fam)
    out = res.as_dict()
    if fam.known_mu0 is not None:
        out["known_mu0"] = fam.known_mu0
        out["known_mu0_consistent"] = abs(res.mu0 - fam.known_mu0) <= max(10 * res.tol, 1e-12)
    return out, not res.monotone


def cmd_bifurcate_report(cfg):
    fam = _family(cfg)
    mu0 = cfg.mu if cfg.mu is not None else _locate(cfg, fam).mu0
    rep = bifurcation.dichotomy_report(fam, mu0, cfg.tol or 1e-9,
                                       cfg.depth or bifurcation.DEFAULT_DEPTH)
    return rep.as_dict(), rep.violation


def cmd_example2d_verify(cfg):
    ex = Example2DConfig()
    depth = 10 if cfg.depth is None else cfg.depth
    wander = verify_wandering(ex, cfg.horizon)
    family = verify_family_bifurcation(ex, cfg.mu_list)
    prints = [wu_fingerprint(ex, mu, cfg.samples, depth, cfg.seed) for mu in cfg.mu_list]
    same = len({f.hex for f in prints}) == 1
    probe = prints[0]
    chain = [certify_membership_by_chain(ex, cfg.mu_list[0], p) for p in probe.sample_points[:32]]
    chain_ok = bool(np.array_equal(chain, probe.bits[:32]))
    report = {"wandering": wander.as_dict(), "family": [c.as_dict() for c in family],
              "fingerprints": [f.as_dict() for f in prints], "fingerprints_identical": same,
              "chain_cross_check": chain_ok}
    ok = wander.passed and all(c.passed for c in family) and same and chain_ok
    return report, not ok


def cmd_class_density(cfg):
    m = _map(cfg)
    rep = _repellor(cfg, m)
    depth = cfg.depth or 12
    cloud = homoclinic.homoclinic_class_approx(m, rep, depth, region=_region(cfg, m))
    if cfg.format == "csv":
        cols = ["theta"] if m.is_circle else [f"x{i}" for i in range(m.dimension)]
        return Table(cols, cloud.tolist()), False
    if m.is_circle:
        eps = cfg.eps or 2 * np.pi / 2 ** (depth - 1)
        reference = np.linspace(0, 2 * np.pi, 8 * 2**depth, endpoint=False)[:, None]
    else:
        box = _region(cfg, m) if cfg.region else m.domain
        eps = cfg.eps or float(np.max(box[:, 1] - box[:, 0])) / 2 ** (depth - 1)
        axes = [np.linspace(lo, hi, 64 if m.dimension > 1 else 4096) for lo, hi in box]
        reference = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, m.dimension)
    dist = homoclinic.nearest_distances(cloud, reference, m)
    passed = bool(np.max(dist) <= eps)
    return {"size": len(cloud), "depth": depth, "eps": eps, "max_gap": float(np.max(dist)),
            "dense": passed}, not passed


HANDLERS = {
    "repellor find": cmd_repellor_find,
    "homoclinic search": cmd_homoclinic_search,
    "homoclinic classify": cmd_homoclinic_classify,
    "cantor build": cmd_cantor_build,
    "cantor verify": cmd_cantor_verify,
    "bifurcate scan": cmd_bifurcate_scan,
    "bifurcate locate": cmd_bifurcate_locate,
    "bifurcate report": cmd_bifurcate_report,
    "example2d verify": cmd_example2d_verify,
    "class density": cmd_class_density,
}


def _print_error(err: SnapbackError) -> None:
    sys.stderr.write(json.dumps(to_jsonable(err.as_dict()), sort_keys=True) + "\n")


def run(argv=None) -> int:
    try:
        cfg, verbose = parse_config(sys.argv[1:] if argv is None else argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_ERROR
    except SnapbackError as err:
        _print_error(err)
        return EXIT_ERROR
    logging.basicConfig(level=logging.INFO if verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        report, finding = HANDLERS[cfg.command](cfg)
        if cfg.format == "csv" and not isinstance(report, Table):
            raise ConfigError("this command has no CSV output", command=cfg.command)
        emit_report(report, cfg.format, cfg.output)
    except SnapbackError as err:
        _print_error(err)
        return EXIT_ERROR
    return EXIT_FINDING if finding else EXIT_OK


def main() -> None:
    sys.exit(run())
