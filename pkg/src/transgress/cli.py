"""Command-line scenario runner.

Examples::

    transgress --list
    transgress --manifold collared-ball --scenario rotation --report machine
    transgress --config run.ini --checks exactness,index_theorem --out report.txt

Config files use INI sections: ``[run]`` for the keys that mirror the flags,
``[manifold]`` for builder parameters and ``[scenario]`` for field parameters.
"""
from __future__ import annotations

import argparse
import configparser
import io
import sys
from dataclasses import dataclass, field

from . import zoo
from .errors import ConfigError
from .transgression import U_MIN
from .verify import CHECK_IDS, EXCISION_RADII, VerificationReport, applicable_checks, run_checks, with_fd_step

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


@dataclass
class RunConfig:
    manifold: str = "collared-ball"
    scenario: str | None = None
    manifold_params: dict[str, float] = field(default_factory=dict)
    scenario_params: dict[str, float] = field(default_factory=dict)
    checks: tuple[str, ...] | None = None
    grid: int = 128
    fd_step: float | None = None
    u_min: float = U_MIN
    radii: tuple[float, ...] = EXCISION_RADII
    samples: int | None = None
    seed: int = 0
    report: str = "human"
    out: str | None = None

    def validate(self) -> "RunConfig":
        try:
            entry = zoo.lookup(self.manifold)
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from None
        if self.scenario is not None and self.scenario not in entry.scenarios:
            raise ConfigError(f"manifold {self.manifold} has no scenario {self.scenario!r}; "
                              f"known: {', '.join(sorted(entry.scenarios))}")
        if self.checks is not None:
            unknown = [c for c in self.checks if c not in CHECK_IDS]
            if unknown:
                raise ConfigError(f"unknown check id(s): {', '.join(unknown)}; known: {', '.join(CHECK_IDS)}")
        positive = {"grid": self.grid, "fd_step": self.fd_step, "u_min": self.u_min, "samples": self.samples}
        positive.update({f"manifold.{k}": v for k, v in self.manifold_params.items()})
        positive.update({f"scenario.{k}": v for k, v in self.scenario_params.items()})
        positive.update({f"radii[{i}]": r for i, r in enumerate(self.radii)})
        for name, value in positive.items():
            if value is not None and not value > 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.report not in ("human", "machine"):
            raise ConfigError(f"report must be 'human' or 'machine', got {self.report!r}")
        if len(self.radii) != 3:
            raise ConfigError("radii needs exactly three excision radii")
        return self


# ----------------------------------------------------------------------------
# parsing


def _csv(text: str) -> tuple[str, ...]:
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _line_of(text: str, section: str, key: str) -> int | None:
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
        elif current == section and s.split("=", 1)[0].split(":", 1)[0].strip() == key:
            return i
    return None


def _convert(text: str, section: str, key: str, value: str, kind):
    try:
        return kind(value)
    except ValueError:
        line = _line_of(text, section, key)
        where = f"line {line}, " if line else ""
        raise ConfigError(f"{where}[{section}] {key}: cannot read {value!r} as {kind.__name__}") from None


_RUN_KEYS = {
    "manifold": str, "scenario": str, "checks": _csv, "grid": int, "fd_step": float, "u_min": float,
    "radii": lambda v: tuple(float(x) for x in _csv(v)), "samples": int, "seed": int, "report": str, "out": str,
}


def load_config(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse INI text into a RunConfig (unknown sections or keys are errors)."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax: {exc}") from None
    cfg = base or RunConfig()
    for section in cp.sections():
        if section not in ("run", "manifold", "scenario"):
            raise ConfigError(f"line {_line_of(text, section, '') or '?'}: unknown section [{section}]")
    if cp.has_section("run"):
        for key, value in cp.items("run"):
            if key not in _RUN_KEYS:
                raise ConfigError(f"line {_line_of(text, 'run', key)}, [run] {key}: unknown key")
            conv = _RUN_KEYS[key]
            setattr(cfg, key, _convert(text, "run", key, value, conv) if conv is not str else value)
    for section, target in (("manifold", cfg.manifold_params), ("scenario", cfg.scenario_params)):
        if cp.has_section(section):
            for key, value in cp.items(section):
                target[key] = _convert(text, section, key, value, float)
    return cfg


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="transgress", description="Verify transgression identities on collared manifolds.")
    p.add_argument("--manifold", help="zoo entry name (see --list)")
    p.add_argument("--scenario", help="vector-field scenario of the manifold")
    p.add_argument("--checks", help="comma-separated check ids (default: all applicable)")
    p.add_argument("--grid", type=int, help="boundary quadrature nodes per axis (default 128)")
    p.add_argument("--fd-step", type=float, dest="fd_step", help="finite-difference step (default 1e-4)")
    p.add_argument("--u-min", type=float, dest="u_min", help="CSTM exclusion band around the normal directions")
    p.add_argument("--samples", type=int, help="random samples per pointwise check")
    p.add_argument("--seed", type=int, help="sampling seed (default 0)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a parameter, e.g. scenario.eps=0.3 or manifold.b=0.6")
    p.add_argument("--report", choices=("human", "machine"))
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--config", help="INI file with [run], [manifold] and [scenario] sections")
    p.add_argument("--list", action="store_true", help="list the manifold zoo and exit")
    return p


def config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = load_config(fh.read(), cfg)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    for name in ("manifold", "scenario", "grid", "fd_step", "u_min", "samples", "seed", "report", "out"):
        value = getattr(args, name)
        if value is not None:
            setattr(cfg, name, value)
    if args.checks is not None:
        cfg.checks = _csv(args.checks)
    for item in args.set:
        key, sep, value = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot or section not in ("manifold", "scenario"):
            raise ConfigError(f"--set expects manifold.KEY=VALUE or scenario.KEY=VALUE, got {item!r}")
        try:
            target = cfg.manifold_params if section == "manifold" else cfg.scenario_params
            target[name] = float(value)
        except ValueError:
            raise ConfigError(f"--set {key}: cannot read {value!r} as float") from None
    return cfg.validate()


# ----------------------------------------------------------------------------
# running


def run(cfg: RunConfig) -> tuple[VerificationReport, int]:
    cfg.validate()
    entry = zoo.lookup(cfg.manifold)
    try:
        manifold = entry.manifold(**cfg.manifold_params)
        if cfg.fd_step is not None:
            manifold = with_fd_step(manifold, cfg.fd_step)
        scenario = entry.scenario(manifold, cfg.scenario, **cfg.scenario_params)
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from None
    checks = cfg.checks
    if checks is not None:
        allowed = applicable_checks(manifold.dim_n)
        bad = [c for c in checks if c not in allowed]
        if bad:
            raise ConfigError(f"check(s) {', '.join(bad)} do not apply to n = {manifold.dim_n}")
    report = run_checks(manifold, scenario, checks, cfg.grid, cfg.radii, cfg.samples, cfg.seed, cfg.u_min)
    return report, EXIT_OK if report.passed else EXIT_FAILED


def zoo_catalog(include_controls: bool = False) -> dict[str, dict[str, str]]:
    entries = dict(zoo.ZOO)
    if include_controls:
        entries.update(zoo.CONTROLS)
    out = {}
    for name, entry in entries.items():
        m = entry.manifold()
        row = {
            "dim": str(m.dim_n),
            "euler_x": str(m.euler_X),
            "euler_m": str(m.euler_M),
            "scenarios": ", ".join(entry.scenarios),
            "default_scenario": entry.default_scenario,
        }
        row.update({f"param.{k}": format(v, "g") for k, v in entry.defaults.items()})
        for sname, tmpl in entry.scenarios.items():
            row[f"scenario.{sname}"] = ", ".join(f"{k}={format(v, 'g')}" for k, v in tmpl.defaults.items())
        out[name] = row
    return out


def list_zoo(fmt: str = "human") -> str:
    cat = zoo_catalog()
    if fmt == "machine":
        cp = configparser.ConfigParser(interpolation=None)
        cp.read_dict(cat)
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()
    lines = [f"{'manifold':<22}{'n':>3}{'chi(X)':>8}{'chi(M)':>8}  scenarios"]
    for name, row in cat.items():
        scen = ", ".join(f"{s}{'*' if s == row['default_scenario'] else ''}" for s in row["scenarios"].split(", "))
        lines.append(f"{name:<22}{row['dim']:>3}{row['euler_x']:>8}{row['euler_m']:>8}  {scen}")
    lines.append("(* default scenario)")
    return "\n".join(lines) + "\n"


def parse_catalog(text: str) -> dict[str, dict[str, str]]:
    cp = configparser.ConfigParser(interpolation=None)
    cp.read_string(text)
    return {s: dict(cp.items(s)) for s in cp.sections()}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.list:
        sys.stdout.write(list_zoo(args.report or "human"))
        return EXIT_OK
    try:
        cfg = config_from_args(args)
        report, status = run(cfg)
    except ConfigError as exc:
        print(f"transgress: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    text = report.machine() if cfg.report == "machine" else report.human()
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return status


if __name__ == "__main__":
    sys.exit(main())
