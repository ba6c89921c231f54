"""System definitions: coefficient matrix, nonlinearity, constants, registry.

A ``SystemSpec`` packages the right-hand side of

    y' = A(t) y + f(t, y(t), y(beta(t)))

together with its grid and the constants used by the inequality checkers:
mu bounds sup||A(t)||, ``lip`` is a Lipschitz constant of f in the last two
arguments, ``h0`` bounds ||f(t,0,0)|| and ``period`` is the common period
of A and f when they are periodic in t.

Evaluators broadcast: ``f(t, y, w)`` accepts ``y``/``w`` of shape (n,) or
(m, n) with scalar or (m,)-shaped t and returns the matching shape.  A(t)
takes scalar t and returns an (n, n) matrix.
"""

import math
import re
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, EvaluationError, InvalidParameterError
from .expressions import parse_expression
from .grid import ThetaGrid, make_explicit_grid, make_periodic_grid, make_uniform_grid

__all__ = [
    "SystemSpec",
    "parse_system",
    "eval_f",
    "estimate_lipschitz",
    "estimate_mu",
    "get_problem",
    "REGISTRY_NAMES",
]


@dataclass(frozen=True)
class SystemSpec:
    """Immutable system definition; evaluators are reentrant."""

    n: int
    A: object  # callable t -> (n, n)
    f: object  # callable (t, y, w) -> like y
    grid: ThetaGrid
    mu: float
    lip: float
    h0: float | None = None
    period: float | None = None
    name: str = "custom"
    domain_box: tuple[float, float] | None = None  # per-coordinate |y|,|w| bound
    mu_estimated: bool = False
    lip_estimated: bool = False
    a_constant: np.ndarray | None = None  # set when A is known constant

    def eval_A(self, t):
        return np.asarray(self.A(t), dtype=float).reshape(self.n, self.n)

    def eval_f(self, t, y, w):
        y = np.asarray(y, dtype=float)
        w = np.asarray(w, dtype=float)
        out = np.asarray(self.f(t, y, w), dtype=float)
        if out.shape != y.shape:
            out = np.broadcast_to(out, y.shape).copy()
        return out

    def with_window(self, window):
        """Same system over an enlarged working window."""
        return replace(self, grid=self.grid.extended(window))

    @property
    def estimated_constants(self):
        tags = []
        if self.mu_estimated:
            tags.append("mu")
        if self.lip_estimated:
            tags.append("lip")
        return tags


def eval_f(spec, t, y, w):
    """Value of the nonlinearity f(t, y, w)."""
    return spec.eval_f(t, y, w)


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

_SECTION_RE = re.compile(r"^\[([a-zA-Z0-9_-]+)\]\s*$")
_KEY_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*)$")

_KNOWN_KEYS = {
    "system": {"problem", "n"},  # plus A.. / f.. entries, validated separately
    "grid": {"kind", "step", "offset", "window", "knots", "pattern", "period"},
    "constants": {"mu", "lip", "h0", "period"},
    "run": {"seed", "out"},
    "tolerances": {"root_tol", "picard_tol", "steady_tol", "substeps"},
}

_ENTRY_RE = re.compile(r"^(A|f)(\d+)(\d*)$")


def _read_sections(text):
    """INI-ish reader that keeps line numbers and value columns."""
    sections = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        m = _SECTION_RE.match(line.strip())
        if m:
            current = m.group(1)
            sections.setdefault(current, [])
            continue
        if current is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        m = _KEY_RE.match(line.strip())
        if not m:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = m.group(1), m.group(2).strip()
        value_col = raw.index("=") + 2 + (len(raw.split("=", 1)[1]) - len(raw.split("=", 1)[1].lstrip()))
        sections[current].append((key, value, lineno, value_col))
    return sections


def _floats(value, lineno, what, count=None):
    try:
        vals = [float(x) for x in value.split()]
    except ValueError:
        raise ConfigError(f"line {lineno}: {what} must be numeric") from None
    if count is not None and len(vals) != count:
        raise ConfigError(f"line {lineno}: {what} needs {count} values")
    return vals


def _parse_grid(items):
    kv = {k: (v, ln) for k, v, ln, _ in items}
    for k, _, ln, _ in items:
        if k not in _KNOWN_KEYS["grid"]:
            raise ConfigError(f"line {ln}: unknown grid key {k!r}")
    kind = kv.get("kind", ("uniform", 0))[0]
    if kind == "uniform":
        step = _floats(kv["step"][0], kv["step"][1], "step", 1)[0] if "step" in kv else 1.0
        offset = _floats(kv["offset"][0], kv["offset"][1], "offset", 1)[0] if "offset" in kv else 0.0
        window = _floats(kv["window"][0], kv["window"][1], "window", 2) if "window" in kv else [0.0, 10.0]
        return make_uniform_grid(step, offset, tuple(window))
    if kind == "explicit":
        if "knots" not in kv:
            raise ConfigError("explicit grid requires a 'knots' list")
        return make_explicit_grid(_floats(kv["knots"][0], kv["knots"][1], "knots"))
    if kind == "periodic-pattern":
        if "pattern" not in kv or "period" not in kv:
            raise ConfigError("periodic-pattern grid requires 'pattern' and 'period'")
        pattern = _floats(kv["pattern"][0], kv["pattern"][1], "pattern")
        period = _floats(kv["period"][0], kv["period"][1], "period", 1)[0]
        window = _floats(kv["window"][0], kv["window"][1], "window", 2) if "window" in kv else [0.0, 10.0]
        return make_periodic_grid(pattern, period, tuple(window))
    raise ConfigError(f"unknown grid kind {kind!r}")


def _build_matrix_eval(entries, n):
    """A(t) evaluator from a dict (row, col) -> ExpressionTree."""
    const = all(not e.variables for e in entries.values())
    if const:
        mat = np.zeros((n, n))
        for (r, c), tree in entries.items():
            mat[r, c] = float(tree.eval({}))
        return (lambda t, _m=mat: _m), mat

    def A(t):
        mat = np.zeros((n, n))
        for (r, c), tree in entries.items():
            mat[r, c] = float(tree.eval({"t": t}))
        return mat

    return A, None


def _build_f_eval(trees, n):
    """f(t, y, w) evaluator from per-component ExpressionTrees."""

    def f(t, y, w):
        y = np.asarray(y, dtype=float)
        w = np.asarray(w, dtype=float)
        env = {"t": np.asarray(t, dtype=float)}
        for k in range(n):
            env[f"y{k + 1}"] = y[..., k]
            env[f"w{k + 1}"] = w[..., k]
        shape = np.broadcast(env["t"], y[..., 0]).shape
        cols = [np.broadcast_to(np.asarray(tree.eval(env), dtype=float), shape)
                for tree in trees]
        return np.stack(cols, axis=-1)

    return f


def parse_system(config_text):
    """Build a SystemSpec from structured config text.

    Sections: [system] with n and entries A<r><c>, f<k> (expressions over
    t, y1..yn, w1..wn); [grid]; [constants] with mu, lip (numeric or the
    word ``estimate``), optional h0 and period.  Unknown keys are
    rejected.  A ``problem = <registry name>`` shortcut replaces the
    inline definition.
    """
    sections = _read_sections(config_text)
    unknown = set(sections) - set(_KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown section(s): {sorted(unknown)}")
    sysitems = sections.get("system")
    if not sysitems:
        raise ConfigError("missing [system] section")
    kv = {k: (v, ln, col) for k, v, ln, col in sysitems}

    if "problem" in kv:
        extra = [k for k in kv if k != "problem"]
        if extra:
            raise ConfigError(f"registry shortcut cannot be mixed with keys {extra}")
        return get_problem(kv["problem"][0])

    if "n" not in kv:
        raise ConfigError("[system] must declare n")
    try:
        n = int(kv["n"][0])
    except ValueError:
        raise ConfigError(f"line {kv['n'][1]}: n must be an integer") from None
    if n < 1:
        raise ConfigError("n must be >= 1")

    variables = ["t"] + [f"y{k}" for k in range(1, n + 1)] + [f"w{k}" for k in range(1, n + 1)]
    a_entries = {}
    f_trees = [None] * n
    for key, value, ln, col in sysitems:
        if key in ("problem", "n"):
            continue
        m = _ENTRY_RE.match(key)
        if not m:
            raise ConfigError(f"line {ln}: unknown system key {key!r}")
        if m.group(1) == "A":
            digits = m.group(2) + m.group(3)
            if len(digits) != 2:
                raise ConfigError(f"line {ln}: matrix entries are A<row><col>, got {key!r}")
            r, c = int(digits[0]) - 1, int(digits[1]) - 1
            if not (0 <= r < n and 0 <= c < n):
                raise ConfigError(f"line {ln}: entry {key!r} out of range for n={n}")
            a_entries[(r, c)] = parse_expression(value, ["t"], ln, col)
        else:
            if m.group(3):
                raise ConfigError(f"line {ln}: nonlinearity entries are f<k>, got {key!r}")
            k = int(m.group(2)) - 1
            if not 0 <= k < n:
                raise ConfigError(f"line {ln}: entry {key!r} out of range for n={n}")
            f_trees[k] = parse_expression(value, variables, ln, col)
    missing = [f"f{k + 1}" for k in range(n) if f_trees[k] is None]
    if missing:
        raise ConfigError(f"missing nonlinearity entries: {missing}")

    grid = _parse_grid(sections.get("grid", []))
    A, a_const = _build_matrix_eval(a_entries, n)
    f = _build_f_eval(f_trees, n)

    const_items = sections.get("constants", [])
    ckv = {}
    for k, v, ln, _ in const_items:
        if k not in _KNOWN_KEYS["constants"]:
            raise ConfigError(f"line {ln}: unknown constants key {k!r}")
        ckv[k] = (v, ln)

    spec = SystemSpec(
        n=n, A=A, f=f, grid=grid, mu=0.0, lip=0.0, a_constant=a_const,
        name="config",
    )

    def _const(name, default=None):
        if name not in ckv or ckv[name][0] == "":
            return default, False
        value, ln = ckv[name]
        if value == "estimate":
            return "estimate", True
        try:
            return float(value), False
        except ValueError:
            raise ConfigError(f"line {ln}: {name} must be numeric or 'estimate'") from None

    mu, mu_est = _const("mu", 0.0)
    lip, lip_est = _const("lip", 0.0)
    h0, _ = _const("h0")
    period, _ = _const("period")
    if mu == "estimate":
        mu = estimate_mu(spec)
    if lip == "estimate":
        lip = estimate_lipschitz(spec, box=1.0, samples=200)
    return replace(
        spec, mu=float(mu), lip=float(lip), h0=h0, period=period,
        mu_estimated=mu_est, lip_estimated=lip_est,
    )


# ---------------------------------------------------------------------------
# sampled constant estimation
# ---------------------------------------------------------------------------

def estimate_mu(spec, samples=200):
    """Sampled lower bound on sup||A(t)|| over the working window."""
    lo, hi = spec.grid.window
    ts = np.linspace(lo, hi, samples)
    return float(max(np.linalg.norm(spec.eval_A(t), 2) for t in ts))


def estimate_lipschitz(spec, box, samples=200, seed=0, t_samples=7):
    """Sampled lower bound on the joint Lipschitz constant of f in (y, w).

    ``box`` is a per-coordinate half-width: arguments range over
    |y_k|, |w_k| <= box.  The sample set is deterministic given the seed
    and combines random pairs with axis-aligned probes at a dyadic ladder
    of scales, including short-separation pairs near the box boundary so
    derivative-attained suprema are approached.  Reported as a lower
    bound on the true constant.
    """
    box = float(box)
    if box <= 0:
        raise InvalidParameterError("box half-width must be positive")
    if samples < 2:
        raise InvalidParameterError("need at least two samples")
    n = spec.n
    rng = np.random.default_rng(seed)
    lo, hi = spec.grid.window
    ts = np.linspace(lo, hi, t_samples)

    pairs = []  # (y1, w1, y2, w2)
    scales = [1.0, 0.5, 0.25, 0.125]
    for s in scales:
        r = s * box
        # axis-aligned probes: vary one block, short and long separations
        for k in range(n):
            e = np.zeros(n)
            e[k] = r
            z = np.zeros(n)
            for delta in (2.0 * r, 1e-3 * r):
                d = np.zeros(n)
                d[k] = delta
                pairs.append((e, z, e - d, z))          # vary y only
                pairs.append((z, e, z, e - d))          # vary w only
                pairs.append((-e, z, -e + d, z))
                pairs.append((z, -e, z, -e + d))
        # random pairs within the scaled box
        m = max(1, samples // (4 * len(scales)))
        for _ in range(m):
            y1, w1, y2, w2 = (rng.uniform(-r, r, size=n) for _ in range(4))
            pairs.append((y1, w1, y2, w2))
            # short-separation variant near the same point
            d = rng.uniform(-1e-3 * r, 1e-3 * r, size=n)
            pairs.append((y1, w1, y1 + d, w1))

    best = 0.0
    for t in ts:
        for y1, w1, y2, w2 in pairs:
            den = np.linalg.norm(y1 - y2) + np.linalg.norm(w1 - w2)
            if den == 0:
                continue
            num = np.linalg.norm(spec.eval_f(t, y1, w1) - spec.eval_f(t, y2, w2))
            best = max(best, num / den)
    return float(best)


# ---------------------------------------------------------------------------
# built-in problem registry
# ---------------------------------------------------------------------------

REGISTRY_NAMES = (
    "paper-example-1",
    "diag-dichotomy",
    "forced-scalar",
    "periodic-coupled",
)


def _example1(window=(0.0, 10.0)):
    A = np.array([[2.0]])
    # full right-hand side is 2*y - w^2; the linear part lives in A
    def f(t, y, w):
        return -(w ** 2)
    return SystemSpec(
        n=1, A=lambda t: A, f=f, grid=make_uniform_grid(1.0, 0.0, window),
        mu=2.0, lip=5.0, h0=0.0, name="paper-example-1",
        domain_box=2.5, a_constant=A,
    )


def _diag_dichotomy(sigma0=1.0, coupling=0.0, coupling_arg="frozen",
                    step=1.0, window=(-40.0, 40.0), f=None, lip=None):
    """diag(-sigma0, sigma0) with a pluggable small nonlinearity.

    ``coupling`` builds the cross-coupling amplitude a in
    f = (a*sin(x2), a*sin(x1)) where x is the frozen argument w
    (coupling_arg="frozen") or the current state y ("state").  A fully
    custom f may be passed together with its Lipschitz constant.
    """
    sigma0 = float(sigma0)
    if sigma0 <= 0:
        raise InvalidParameterError("sigma0 must be positive")
    A = np.diag([-sigma0, sigma0])
    if f is None:
        a = float(coupling)
        if a == 0.0:
            def f(t, y, w):
                return np.zeros_like(y)
        elif coupling_arg == "frozen":
            def f(t, y, w):
                return np.stack([a * np.sin(w[..., 1]), a * np.sin(w[..., 0])], axis=-1)
        elif coupling_arg == "state":
            def f(t, y, w):
                return np.stack([a * np.sin(y[..., 1]), a * np.sin(y[..., 0])], axis=-1)
        else:
            raise InvalidParameterError("coupling_arg must be 'frozen' or 'state'")
        lip = abs(a)
    elif lip is None:
        raise InvalidParameterError("custom f requires an explicit lip")
    return SystemSpec(
        n=2, A=lambda t: A, f=f, grid=make_uniform_grid(step, 0.0, window),
        mu=sigma0, lip=float(lip), h0=0.0, name="diag-dichotomy", a_constant=A,
    )


def _forced_scalar(level=0.5, feedback=0.0, step=1.0, window=(-30.0, 30.0)):
    """u' = -u + level + feedback*u(beta(t))."""
    A = np.array([[-1.0]])
    level = float(level)
    feedback = float(feedback)

    def f(t, y, w):
        return level + feedback * w

    return SystemSpec(
        n=1, A=lambda t: A, f=f, grid=make_uniform_grid(step, 0.0, window),
        mu=1.0, lip=abs(feedback), h0=abs(level), name="forced-scalar",
        a_constant=A,
    )


def _periodic_coupled(window=(0.0, 2.0)):
    """u' = -u + sin(2*pi*t) + 0.1*u(beta(t)) on the step-0.5 grid."""
    A = np.array([[-1.0]])

    def f(t, y, w):
        drive = np.sin(2.0 * np.pi * np.asarray(t, dtype=float))
        return drive[..., None] + 0.1 * w

    return SystemSpec(
        n=1, A=lambda t: A, f=f, grid=make_uniform_grid(0.5, 0.0, window),
        mu=1.0, lip=0.1, h0=1.0, period=1.0, name="periodic-coupled",
        a_constant=A,
    )


def get_problem(name, **params):
    """Instantiate a registry problem by name."""
    builders = {
        "paper-example-1": _example1,
        "diag-dichotomy": _diag_dichotomy,
        "forced-scalar": _forced_scalar,
        "periodic-coupled": _periodic_coupled,
    }
    if name not in builders:
        raise InvalidParameterError(
            f"unknown problem {name!r}; available: {', '.join(REGISTRY_NAMES)}"
        )
    try:
        return builders[name](**params)
    except TypeError as exc:
        raise InvalidParameterError(f"bad parameters for {name}: {exc}") from None
