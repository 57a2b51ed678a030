"""Run configuration: sectioned ``key = value`` text, parsed and fully validated.

The grammar is documented in ``docs/config-grammar.md``.  Parsing goes through
:mod:`configparser` with interpolation off, case-preserving keys and ``=`` as
the only delimiter; every structural error is re-raised as ConfigParseError
carrying the offending line.  Value checks collect every violation before
raising ConfigValidationError.
"""
import configparser
import re
from dataclasses import dataclass, field, fields as dc_fields
from typing import Optional, Tuple

from .constitutive import Disk, FluidParams, Geometry, MaterialSpec, Rect, SolidParams
from .errors import ConfigParseError, ConfigValidationError
from .fields import Grid
from .momentum import SolverConfig


@dataclass
class TimeConfig:
    dt: float = 0.02
    n_steps: int = 25
    dump_every: int = 5  # 0 disables field dumps


@dataclass
class TransportConfig:
    cfl_max: float = 5.0
    interpolation: str = "bilinear"  # or "bicubic"


@dataclass
class CouplingConfig:
    picard_iters: int = 1
    picard_tol: float = 1e-8


@dataclass
class OutputConfig:
    dir: str = "out"


def _default_grid():
    return Grid((32, 32), (0.0, 0.0), (1.0, 1.0))


def _default_material():
    return MaterialSpec(
        solid=SolidParams(model="neo_hookean", K_e=10.0, G_e=2.0, mu=1.0, lam=0.0, rho=2.0, log_term=True),
        fluid=FluidParams(K_f=1.0, kappa=3.0, mu=0.1, lam=0.0, rho=1.0),
        nu=1e-3,
        s_exp=4.0,
        eps=None,
        gravity=(0.0, -0.2),
        geometry=Geometry((0.0, 0.0), (1.0, 1.0), (Disk((0.5, 0.6), 0.15),)),
    )


@dataclass
class RunConfig:
    grid: Grid = field(default_factory=_default_grid)
    time: TimeConfig = field(default_factory=TimeConfig)
    material: MaterialSpec = field(default_factory=_default_material)
    solver: SolverConfig = field(default_factory=SolverConfig)
    transport: TransportConfig = field(default_factory=TransportConfig)
    coupling: CouplingConfig = field(default_factory=CouplingConfig)
    output: OutputConfig = field(default_factory=OutputConfig)


# ----------------------------------------------------------------- value parsing

_BOOL = {"on": True, "true": True, "yes": True, "1": True, "off": False, "false": False, "no": False, "0": False}
_PRIM = re.compile(r"^\s*(disk|rect)\s*\(([^()]*)\)\s*$")


class _Bad(Exception):
    pass


def _float(s):
    try:
        return float(s)
    except ValueError:
        raise _Bad(f"expected a number, got {s!r}") from None


def _int(s):
    try:
        return int(s)
    except ValueError:
        raise _Bad(f"expected an integer, got {s!r}") from None


def _bool(s):
    try:
        return _BOOL[s.strip().lower()]
    except KeyError:
        raise _Bad(f"expected on/off, got {s!r}") from None


def _floats(s):
    return tuple(_float(p) for p in s.split(","))


def _ints(s):
    return tuple(_int(p) for p in s.split(","))


def _solids(s):
    s = s.strip()
    if s in ("", "none"):
        return ()
    out = []
    for part in s.split(";"):
        m = _PRIM.match(part)
        if not m:
            raise _Bad(f"cannot read primitive {part.strip()!r}; expected disk(...) or rect(...)")
        nums = _floats(m.group(2))
        out.append((m.group(1), nums))
    return tuple(out)


# section -> key -> (attribute, converter)
_SCHEMA = {
    "grid": {"n": _ints, "lower": _floats, "upper": _floats},
    "time": {"dt": _float, "n_steps": _int, "dump_every": _int},
    "solid": {
        "model": str.strip, "K_e": _float, "G_e": _float, "mu": _float,
        "lam": _float, "rho": _float, "log_term": _bool,
    },
    "fluid": {"K_f": _float, "kappa": _float, "mu": _float, "lam": _float, "rho": _float},
    "material": {
        "nu": _float, "s_exp": _float,
        "eps": lambda s: None if s.strip() == "auto" else _float(s),
        "gravity": _floats,
    },
    "geometry": {"solids": _solids},
    "solver": {
        "tol_abs": _float, "tol_rel": _float, "max_iters": _int,
        "line_search": _bool, "hessian_floor": _float, "linear_solver": str.strip,
    },
    "transport": {"cfl_max": _float, "interpolation": str.strip},
    "coupling": {"picard_iters": _int, "picard_tol": _float},
    "output": {"dir": str.strip},
}


def _read(text, source):
    cp = configparser.ConfigParser(
        interpolation=None,
        delimiters=("=",),
        comment_prefixes=("#", ";"),
        inline_comment_prefixes=None,
        strict=True,
        empty_lines_in_values=False,
        default_section="\x00none",
    )
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigParseError("key outside any [section]", exc.lineno) from exc
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigParseError(f"expected 'key = value', got {line}", lineno) from exc
    except configparser.DuplicateSectionError as exc:
        raise ConfigParseError(f"duplicate section [{exc.section}]", exc.lineno) from exc
    except configparser.DuplicateOptionError as exc:
        raise ConfigParseError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.lineno) from exc
    except configparser.Error as exc:
        raise ConfigParseError(str(exc)) from exc
    return cp


def parse_config_text(text, source="<string>"):
    """Parse config text into a validated RunConfig."""
    cp = _read(text, source)
    bad = []
    raw = {}
    for sec in cp.sections():
        if sec not in _SCHEMA:
            bad.append((sec, f"unknown section [{sec}]"))
            continue
        for key, val in cp.items(sec):
            name = f"{sec}.{key}"
            conv = _SCHEMA[sec].get(key)
            if conv is None:
                bad.append((name, "unknown key"))
                continue
            try:
                raw[name] = conv(val)
            except _Bad as exc:
                bad.append((name, str(exc)))
    cfg = _assemble(raw, bad)
    if bad:
        raise ConfigValidationError(bad)
    return cfg


def parse_config(path):
    """Read and validate a config file; see :func:`parse_config_text`."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config_text(text, source=str(path))


def _pick(raw, name, default):
    return raw.get(name, default)


def _assemble(raw, bad):
    """Build a RunConfig from converted values, appending every violated constraint to ``bad``."""
    dflt = RunConfig()
    dm = dflt.material

    def check(name, ok, constraint):
        if not ok:
            bad.append((name, constraint))
        return ok

    # grid
    n = _pick(raw, "grid.n", dflt.grid.n)
    d = len(n)
    check("grid.n", d in (2, 3), "dimension (number of entries) must be 2 or 3")
    check("grid.n", all(k >= 4 for k in n), "n must be at least 4 per axis")
    lower = _pick(raw, "grid.lower", dflt.grid.lower)
    upper = _pick(raw, "grid.upper", dflt.grid.upper)
    box_ok = check("grid.lower", len(lower) == d, f"lower must have {d} entries")
    box_ok &= check("grid.upper", len(upper) == d, f"upper must have {d} entries")
    if box_ok:
        box_ok = check("grid.upper", all(u > l for l, u in zip(lower, upper)), "upper must exceed lower")
    grid = None
    if d in (2, 3) and box_ok and all(k >= 4 for k in n):
        grid = Grid(tuple(n), tuple(lower), tuple(upper))

    # time
    time = TimeConfig(
        dt=_pick(raw, "time.dt", dflt.time.dt),
        n_steps=_pick(raw, "time.n_steps", dflt.time.n_steps),
        dump_every=_pick(raw, "time.dump_every", dflt.time.dump_every),
    )
    check("time.dt", time.dt > 0, "dt must be positive")
    check("time.n_steps", time.n_steps >= 0, "n_steps must be nonnegative")
    check("time.dump_every", time.dump_every >= 0, "dump_every must be nonnegative")

    # solid
    s = {f.name: _pick(raw, f"solid.{f.name}", getattr(dm.solid, f.name)) for f in dc_fields(SolidParams)}
    check("solid.model", s["model"] in ("neo_hookean", "svk"), "model must be neo_hookean or svk")
    for key in ("K_e", "G_e", "mu", "rho"):
        check(f"solid.{key}", s[key] > 0, f"{key} must be positive")
    check("solid.lam", s["lam"] >= 0, "lam must be nonnegative")
    if s["model"] == "svk":
        check("solid.log_term", not s["log_term"], "log_term applies to neo_hookean only")
    solid = SolidParams(**s)

    # fluid
    fl = {f.name: _pick(raw, f"fluid.{f.name}", getattr(dm.fluid, f.name)) for f in dc_fields(FluidParams)}
    for key in ("K_f", "mu", "rho"):
        check(f"fluid.{key}", fl[key] > 0, f"{key} must be positive")
    check("fluid.lam", fl["lam"] >= 0, "lam must be nonnegative")
    check("fluid.kappa", fl["kappa"] > 2, "kappa must exceed 2")
    fluid = FluidParams(**fl)

    # material
    nu = _pick(raw, "material.nu", dm.nu)
    s_exp = _pick(raw, "material.s_exp", dm.s_exp)
    eps = _pick(raw, "material.eps", dm.eps)
    gravity = _pick(raw, "material.gravity", dm.gravity if d == 2 else (0.0,) * d)
    check("material.nu", nu > 0, "nu must be positive")
    check("material.s_exp", s_exp > d, "s_exp must exceed d")
    if eps is not None:
        check("material.eps", 0 < eps < 1, "eps must lie in (0, 1) or be auto")
    check("material.gravity", len(gravity) == d, f"gravity must have {d} entries")

    # geometry
    prims = []
    for kind, nums in _pick(raw, "geometry.solids", None) or ():
        if kind == "disk":
            if check("geometry.solids", len(nums) == d + 1, f"disk needs {d + 1} numbers (center, radius)"):
                check("geometry.solids", nums[-1] > 0, "disk radius must be positive")
                prims.append(Disk(tuple(nums[:d]), nums[d]))
        else:
            if check("geometry.solids", len(nums) == 2 * d, f"rect needs {2 * d} numbers (lower, upper)"):
                lo, hi = tuple(nums[:d]), tuple(nums[d:])
                check("geometry.solids", all(a < b for a, b in zip(lo, hi)), "rect upper must exceed lower")
                prims.append(Rect(lo, hi))
    if "geometry.solids" not in raw:
        prims = list(dm.geometry.solids) if d == 2 else []
    if box_ok:
        for p in prims:
            lo, hi = _extent(p)
            check(
                "geometry.solids",
                all(a >= l and b <= u for a, b, l, u in zip(lo, hi, lower, upper)),
                f"{p.describe()} must lie inside the grid box",
            )
    geometry = Geometry(tuple(lower), tuple(upper), tuple(prims))
    material = MaterialSpec(solid, fluid, nu, s_exp, eps, tuple(gravity), geometry)

    # solver
    sv = {f.name: _pick(raw, f"solver.{f.name}", getattr(dflt.solver, f.name)) for f in dc_fields(SolverConfig)}
    check("solver.tol_abs", sv["tol_abs"] > 0, "tol_abs must be positive")
    check("solver.tol_rel", sv["tol_rel"] > 0, "tol_rel must be positive")
    check("solver.max_iters", sv["max_iters"] >= 1, "max_iters must be at least 1")
    check("solver.hessian_floor", sv["hessian_floor"] >= 0, "hessian_floor must be nonnegative")
    check("solver.linear_solver", sv["linear_solver"] in ("direct", "cg"), "linear_solver must be direct or cg")
    solver = SolverConfig(**sv)

    transport = TransportConfig(
        cfl_max=_pick(raw, "transport.cfl_max", dflt.transport.cfl_max),
        interpolation=_pick(raw, "transport.interpolation", dflt.transport.interpolation),
    )
    check("transport.cfl_max", transport.cfl_max > 0, "cfl_max must be positive")
    check(
        "transport.interpolation",
        transport.interpolation in ("bilinear", "bicubic"),
        "interpolation must be bilinear or bicubic",
    )
    coupling = CouplingConfig(
        picard_iters=_pick(raw, "coupling.picard_iters", dflt.coupling.picard_iters),
        picard_tol=_pick(raw, "coupling.picard_tol", dflt.coupling.picard_tol),
    )
    check("coupling.picard_iters", coupling.picard_iters >= 1, "picard_iters must be at least 1")
    check("coupling.picard_tol", coupling.picard_tol > 0, "picard_tol must be positive")
    output = OutputConfig(dir=_pick(raw, "output.dir", dflt.output.dir))
    check("output.dir", bool(output.dir), "dir must be nonempty")

    if grid is None:
        return None
    return RunConfig(grid, time, material, solver, transport, coupling, output)


def _extent(p):
    if isinstance(p, Disk):
        return tuple(c - p.radius for c in p.center), tuple(c + p.radius for c in p.center)
    return p.lower, p.upper


# ---------------------------------------------------------------- serialization

def _r(x):
    return repr(float(x))


def _tup(xs, conv=_r):
    return ", ".join(conv(x) for x in xs)


def _onoff(b):
    return "on" if b else "off"


def format_config(cfg, annotate=True):
    """Render a RunConfig as config text that parses back to an equal RunConfig."""
    m = cfg.material
    solids = "; ".join(p.describe() for p in m.geometry.solids) or "none"

    def c(text):
        return f"# {text}" if annotate else None

    lines = [
        c("reftrack run configuration"),
        c("Grammar: [section] headers, 'key = value' lines, '#' or ';' full-line comments."),
        "",
        "[grid]",
        c("intervals per axis; the number of entries sets the dimension d (2 or 3)"),
        f"n = {_tup(cfg.grid.n, str)}",
        f"lower = {_tup(cfg.grid.lower)}",
        f"upper = {_tup(cfg.grid.upper)}",
        "",
        "[time]",
        f"dt = {_r(cfg.time.dt)}",
        f"n_steps = {cfg.time.n_steps}",
        c("write a field dump every this many steps (0 = never)"),
        f"dump_every = {cfg.time.dump_every}",
        "",
        "[solid]",
        c("neo_hookean or svk"),
        f"model = {m.solid.model}",
        f"K_e = {_r(m.solid.K_e)}",
        f"G_e = {_r(m.solid.G_e)}",
        c("viscosities of the solid phase"),
        f"mu = {_r(m.solid.mu)}",
        f"lam = {_r(m.solid.lam)}",
        c("referential mass density"),
        f"rho = {_r(m.solid.rho)}",
        c("adds -G_e/2 ln J to neo_hookean; blows up under compression, T(I) = -G_e/2 I"),
        f"log_term = {_onoff(m.solid.log_term)}",
        "",
        "[fluid]",
        c("pressure law p = K_f / J^kappa; kappa must exceed 2"),
        f"K_f = {_r(m.fluid.K_f)}",
        f"kappa = {_r(m.fluid.kappa)}",
        f"mu = {_r(m.fluid.mu)}",
        f"lam = {_r(m.fluid.lam)}",
        f"rho = {_r(m.fluid.rho)}",
        "",
        "[material]",
        c("hyperstress weight and exponent (s_exp must exceed d)"),
        f"nu = {_r(m.nu)}",
        f"s_exp = {_r(m.s_exp)}",
        c("cut-off parameter in (0, 1), or auto"),
        f"eps = {'auto' if m.eps is None else _r(m.eps)}",
        f"gravity = {_tup(m.gravity)}",
        "",
        "[geometry]",
        c("reference solid region: 'none' or primitives joined by ';'"),
        c("disk(c1, .., cd, r) and rect(lo1, .., lod, hi1, .., hid); closed sets"),
        f"solids = {solids}",
        "",
        "[solver]",
        f"tol_abs = {_r(cfg.solver.tol_abs)}",
        f"tol_rel = {_r(cfg.solver.tol_rel)}",
        f"max_iters = {cfg.solver.max_iters}",
        f"line_search = {_onoff(cfg.solver.line_search)}",
        f"hessian_floor = {_r(cfg.solver.hessian_floor)}",
        c("direct (sparse LU) or cg"),
        f"linear_solver = {cfg.solver.linear_solver}",
        "",
        "[transport]",
        f"cfl_max = {_r(cfg.transport.cfl_max)}",
        c("bilinear or bicubic"),
        f"interpolation = {cfg.transport.interpolation}",
        "",
        "[coupling]",
        c("1 = one staggered pass per step; more = Picard sweeps"),
        f"picard_iters = {cfg.coupling.picard_iters}",
        f"picard_tol = {_r(cfg.coupling.picard_tol)}",
        "",
        "[output]",
        f"dir = {cfg.output.dir}",
        "",
    ]
    return "\n".join(x for x in lines if x is not None)


def dump_defaults(annotate=True):
    return format_config(RunConfig(), annotate)


def sample_config_path():
    """Path of the shipped solid-disk-in-fluid sample config."""
    from importlib import resources

    return str(resources.files("reftrack").joinpath("data", "disk.cfg"))
