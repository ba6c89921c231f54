"""Forward simulation and backward continuation of EPCAG trajectories.

Within each knot interval [theta_i, theta_{i+1}) the delayed argument is
frozen at the state reached at theta_i, so the equation is an ordinary
ODE there; knots are non-smooth points and the integration mesh never
steps across one.  Backward continuation inverts the one-interval
shooting map x -> y(theta_{i+1}; theta_i, x) by damped Newton from a
multi-start lattice; preimages may fail to exist or be non-unique, and
both outcomes are reported rather than hidden.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BlowUpError,
    EpcagError,
    InvalidParameterError,
    OutOfWindowError,
)
from .integrate import rk4_final, rk4_segment
from .linear import check_backward_uniqueness

__all__ = [
    "SolutionPath",
    "PreimageSet",
    "BackwardContinuation",
    "solve_forward",
    "shooting_map",
    "back_continue_interval",
    "back_continue",
]

_KNOT_TOL = 1e-9


@dataclass
class SolutionPath:
    """Piecewise-smooth trajectory with dense sub-step storage.

    ``ts``/``ys``/``derivs`` hold the mesh times, states and stored
    right-hand-side values; ``frozen`` the delayed argument in force at
    each mesh point and ``intervals`` the knot-interval index.  The path
    is immutable once returned.
    """

    ts: np.ndarray
    ys: np.ndarray
    derivs: np.ndarray
    frozen: np.ndarray
    intervals: np.ndarray
    direction: str = "forward"
    diagnostics: dict = field(default_factory=dict)

    @property
    def t0(self):
        return float(self.ts[0])

    @property
    def t_end(self):
        return float(self.ts[-1])

    def value(self, t):
        """State at time t by cubic Hermite interpolation on the mesh."""
        ts = self.ts
        if not ts[0] <= t <= ts[-1]:
            raise OutOfWindowError(f"t={t} outside the stored path range")
        j = int(np.searchsorted(ts, t, side="right")) - 1
        j = min(max(j, 0), len(ts) - 2)
        if t == ts[j]:
            return self.ys[j].copy()
        if t == ts[j + 1]:
            return self.ys[j + 1].copy()
        h = ts[j + 1] - ts[j]
        s = (t - ts[j]) / h
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s ** 2 * (3 - 2 * s)
        h11 = s ** 2 * (s - 1)
        return (h00 * self.ys[j] + h10 * h * self.derivs[j]
                + h01 * self.ys[j + 1] + h11 * h * self.derivs[j + 1])

    def at_knots(self):
        """(times, states) restricted to grid knots stored on the mesh."""
        mask = np.zeros(len(self.ts), dtype=bool)
        mask[0] = mask[-1] = True
        change = np.flatnonzero(np.diff(self.intervals)) + 1
        mask[change] = True
        # knot points are stored twice (left/right corner copies); keep one
        ts, ys = self.ts[mask], self.ys[mask]
        keep = np.concatenate([[True], np.diff(ts) > 0])
        return ts[keep], ys[keep]


@dataclass
class PreimageSet:
    """Roots of the one-interval shooting map for a given target."""

    interval: int
    t_target: float
    x_target: np.ndarray
    preimages: list
    residuals: list
    classification: str  # "none" | "unique" | "multiple"
    search_exhausted: bool

    def __post_init__(self):
        counts = {0: "none", 1: "unique"}
        expected = counts.get(len(self.preimages), "multiple")
        if self.classification != expected:
            raise EpcagError("classification inconsistent with preimage count")


@dataclass
class BackwardContinuation:
    """Outcome of chained interval-by-interval backward continuation."""

    ok: bool
    path: SolutionPath | None
    steps: list
    flags: list
    failed_interval: int | None = None
    residual: float | None = None


def _frozen_rhs(spec, w):
    def rhs(t, y):
        return y @ spec.eval_A(t).T + spec.eval_f(t, y, w)

    return rhs


def _segment_steps(substeps, span, full_span):
    return max(2, int(math.ceil(substeps * span / full_span)))


def solve_forward(spec, t0, y0, t_end, substeps=64, w0=None, guard=1e12):
    """Integrate forward from (t0, y0) to t_end.

    At every grid knot the frozen argument updates to the current state.
    If t0 is interior to a knot interval the caller must supply the
    frozen value ``w0`` in force there; starting from a knot it is y0
    itself.
    """
    grid = spec.grid
    lo, hi = grid.window
    if not (lo <= t0 <= hi and lo <= t_end <= hi):
        raise OutOfWindowError(f"[{t0}, {t_end}] not inside window [{lo}, {hi}]")
    if t_end < t0:
        raise InvalidParameterError("t_end must be >= t0; use back_continue for t_end < t0")
    y0 = np.asarray(y0, dtype=float).reshape(spec.n)

    knot_idx = grid.nearest_knot_index(t0, _KNOT_TOL)
    if knot_idx is not None:
        t0 = grid.knot(knot_idx)
        w = y0.copy()
    elif w0 is None:
        raise InvalidParameterError(
            "t0 is interior to a knot interval: supply the frozen value w0 "
            "(or start from a grid knot)"
        )
    else:
        w = np.asarray(w0, dtype=float).reshape(spec.n)

    if t_end == t0:
        d = _frozen_rhs(spec, w)(t0, y0)
        return SolutionPath(
            ts=np.array([t0]), ys=y0[None], derivs=d[None], frozen=w[None],
            intervals=np.array([grid.interval_index(t0)]),
            diagnostics={"segments": 0},
        )

    ts_parts, ys_parts, ds_parts, w_parts, i_parts = [], [], [], [], []
    cur_t, cur_y = t0, y0
    seg_stats = []
    while cur_t < t_end:
        i = grid.interval_index(cur_t)
        a, b = grid.knot(i), grid.knot(i + 1)
        seg_end = min(b, t_end)
        ns = _segment_steps(substeps, seg_end - cur_t, b - a)
        ts, ys, ds = rk4_segment(_frozen_rhs(spec, w), cur_t, cur_y, seg_end, ns,
                                 guard=guard)
        # knots are corner points: each segment stores its own boundary copy
        # so the left and right derivative versions are both available
        ts_parts.append(ts)
        ys_parts.append(ys)
        ds_parts.append(ds)
        w_parts.append(np.broadcast_to(w, ys.shape).copy())
        i_parts.append(np.full(len(ts), i))
        seg_stats.append({
            "interval": i, "steps": ns, "h": (seg_end - cur_t) / ns,
            "max_norm": float(np.max(np.linalg.norm(ys, axis=1))),
        })
        cur_t, cur_y = seg_end, ys[-1]
        if seg_end == b and seg_end < t_end:
            w = cur_y.copy()  # frozen argument updates at the knot

    return SolutionPath(
        ts=np.concatenate(ts_parts),
        ys=np.concatenate(ys_parts),
        derivs=np.concatenate(ds_parts),
        frozen=np.concatenate(w_parts),
        intervals=np.concatenate(i_parts),
        diagnostics={"segments": len(seg_stats), "substeps": substeps,
                     "per_interval": seg_stats},
    )


def _phi_batch(spec, i, X, t_target, substeps):
    """Shooting values at t_target for a batch of interval start states.

    Row x of X is used both as the state at theta_i and as the frozen
    argument, which is exactly the map whose inversion defines backward
    continuation.  Overflowing rows come back non-finite instead of
    raising, so a wild Newton start cannot kill the whole batch.
    """
    a = spec.grid.knot(i)
    b = spec.grid.knot(i + 1)
    ns = _segment_steps(substeps, t_target - a, b - a)
    with np.errstate(over="ignore", invalid="ignore"):
        return rk4_final(_frozen_rhs(spec, X), a, X, t_target, ns, guard=None)


def shooting_map(spec, i, x0, substeps=64):
    """One-interval forward map x -> y(theta_{i+1}; theta_i, x)."""
    lo, hi = spec.grid.window
    a, b = spec.grid.knot(i), spec.grid.knot(i + 1)
    if a < lo or b > hi:
        raise OutOfWindowError(f"interval [{a}, {b}] not inside window")
    x0 = np.asarray(x0, dtype=float).reshape(spec.n)
    rhs = _frozen_rhs(spec, x0)
    return rk4_final(rhs, a, x0, b, max(2, substeps), guard=1e12)


def _newton_roots(phi, x_target, starts, tol_abs, max_iter, max_halvings,
                  fd_scale=1e-6):
    """Batched damped Newton; returns converged roots (may contain duplicates)."""
    n = starts.shape[1]
    X = starts.astype(float).copy()
    alive = np.ones(len(X), dtype=bool)
    roots = []

    def residual(Z):
        r = phi(Z) - x_target
        rn = np.linalg.norm(r, axis=1)
        rn[~np.isfinite(rn)] = np.inf
        return r, rn

    r, rn = residual(X)
    for _ in range(max_iter):
        act = np.flatnonzero(alive & (rn > tol_abs) & np.isfinite(rn))
        if len(act) == 0:
            break
        Xa = X[act]
        J = np.empty((len(act), n, n))
        for k in range(n):
            h = fd_scale * (1.0 + np.abs(Xa[:, k]))
            e = np.zeros_like(Xa)
            e[:, k] = h
            J[:, :, k] = (phi(Xa + e) - phi(Xa - e)) / (2.0 * h[:, None])
        bad = ~np.isfinite(J).all(axis=(1, 2))
        try:
            delta = np.linalg.solve(
                np.where(bad[:, None, None], np.eye(n), J), -r[act][..., None]
            )[..., 0]
        except np.linalg.LinAlgError:
            delta = np.stack([
                np.zeros(n) if bad[q] else np.linalg.lstsq(J[q], -r[act][q],
                                                           rcond=None)[0]
                for q in range(len(act))
            ])
        delta[bad] = 0.0
        alive_idx = act[~bad]
        alive[act[bad]] = False
        if len(alive_idx) == 0:
            continue
        step = delta[~bad]
        lam = np.ones(len(alive_idx))
        accepted = np.zeros(len(alive_idx), dtype=bool)
        X_try = X[alive_idx] + step
        for _half in range(max_halvings + 1):
            pending = np.flatnonzero(~accepted)
            if len(pending) == 0:
                break
            rows = alive_idx[pending]
            r_new, rn_new = residual(X_try[pending])
            better = rn_new < rn[rows] * (1.0 - 1e-4)
            ok = better | (rn_new <= tol_abs)
            sel = pending[ok]
            X[alive_idx[sel]] = X_try[sel]
            r[alive_idx[sel]] = r_new[ok]
            rn[alive_idx[sel]] = rn_new[ok]
            accepted[sel] = True
            rest = pending[~ok]
            lam[rest] *= 0.5
            X_try[rest] = X[alive_idx[rest]] + lam[rest, None] * step[rest]
        alive[alive_idx[~accepted]] = False  # stalled: no descent possible

    for q in np.flatnonzero(rn <= tol_abs):
        roots.append((X[q], float(rn[q])))
    return roots


def _polish_root(phi, x_target, x, rq, steps=10, fd_scale=1e-6):
    """Plain Newton refinement; sharpens simple roots to machine level and
    crawls double roots as close as the residual floor allows."""
    n = len(x)
    for _ in range(steps):
        J = np.empty((n, n))
        for k in range(n):
            h = fd_scale * (1.0 + abs(x[k]))
            e = np.zeros(n)
            e[k] = h
            J[:, k] = (phi((x + e)[None])[0] - phi((x - e)[None])[0]) / (2 * h)
        try:
            d = np.linalg.solve(J, -(phi(x[None])[0] - x_target))
        except np.linalg.LinAlgError:
            break
        x_new = x + d
        r_new = float(np.linalg.norm(phi(x_new[None])[0] - x_target))
        if not np.isfinite(r_new) or r_new >= rq:
            break
        x, rq = x_new, r_new
    return x, rq


def back_continue_interval(spec, i, t_target, x_target, substeps=64,
                           root_tol=1e-9, n_starts=17, max_iter=50,
                           cluster_scale=1e-5, max_halvings=8):
    """All preimages at theta_i of (t_target, x_target) in its interval.

    Finds every x with ||phi(x) - x_target|| below the root tolerance,
    where phi integrates the frozen-argument equation from (theta_i, x)
    to t_target.  Newton runs from a lattice of ``n_starts`` points per
    coordinate spanning [-R, R], R = max(10, 10*||x_target||).  Distinct
    roots are separated by the clustering radius; an empty result is
    reported as classification "none" with the search budget flagged as
    exhausted (absence of roots is not proved).
    """
    grid = spec.grid
    a, b = grid.knot(i), grid.knot(i + 1)
    if not (a < t_target <= b):
        raise InvalidParameterError(
            f"t_target={t_target} not in (theta_{i}, theta_{i + 1}] = ({a}, {b}]"
        )
    x_target = np.asarray(x_target, dtype=float).reshape(spec.n)
    R = max(10.0, 10.0 * float(np.linalg.norm(x_target)))
    axes = [np.linspace(-R, R, n_starts)] * spec.n
    mesh = np.meshgrid(*axes, indexing="ij")
    starts = np.stack([m.ravel() for m in mesh], axis=1)
    tol_abs = root_tol * (1.0 + float(np.linalg.norm(x_target)))

    phi = lambda X: _phi_batch(spec, i, X, t_target, substeps)
    found = _newton_roots(phi, x_target, starts, tol_abs, max_iter, max_halvings)

    def dedupe(items):
        # smallest-norm first, greedy by the clustering radius
        items = sorted(items, key=lambda xr: (np.linalg.norm(xr[0]), tuple(xr[0])))
        kept = []
        for x, rq in items:
            radius = cluster_scale * (1.0 + np.linalg.norm(x))
            if all(np.linalg.norm(x - p) > radius for p, _ in kept):
                kept.append((x, rq))
        return kept

    polished = [_polish_root(phi, x_target, x, rq) for x, rq in dedupe(found)]
    kept = dedupe(polished)
    preimages = [x for x, _ in kept]
    residuals = [rq for _, rq in kept]
    classification = {0: "none", 1: "unique"}.get(len(preimages), "multiple")
    return PreimageSet(
        interval=i, t_target=float(t_target), x_target=x_target,
        preimages=preimages, residuals=residuals,
        classification=classification,
        search_exhausted=(len(preimages) == 0),
    )


def back_continue(spec, t0, x0, t_target, substeps=64, root_tol=1e-9,
                  n_starts=17):
    """Chain interval preimages from (t0, x0) down past t_target.

    When the backward-uniqueness inequality holds for the system's
    declared constants, every step is asserted unique; otherwise the
    smallest-norm preimage is taken and the choice is flagged.  Returns
    the reconstructed path anchored at the last knot reached, or a
    failure report naming the interval where continuation died.
    """
    grid = spec.grid
    if not t_target < t0:
        raise InvalidParameterError("t_target must be < t0")
    lo, hi = grid.window
    if not (lo <= t_target and t0 <= hi):
        raise OutOfWindowError("continuation range leaves the working window")
    x0 = np.asarray(x0, dtype=float).reshape(spec.n)

    bw = check_backward_uniqueness(spec.mu, spec.lip, grid.gap_bound)
    flags = []
    steps = []
    cur_t, cur_x = float(t0), x0
    while cur_t > t_target:
        knot_idx = grid.nearest_knot_index(cur_t, _KNOT_TOL)
        if knot_idx is not None:
            i = knot_idx - 1
            cur_t = grid.knot(knot_idx)
        else:
            i = grid.interval_index(cur_t)
        ps = back_continue_interval(
            spec, i, cur_t, cur_x, substeps=substeps, root_tol=root_tol,
            n_starts=n_starts,
        )
        steps.append(ps)
        if ps.classification == "none":
            return BackwardContinuation(
                ok=False, path=None, steps=steps, flags=flags, failed_interval=i,
            )
        if ps.classification == "multiple":
            if bw.holds:
                raise EpcagError(
                    f"multiple preimages at interval {i} although the "
                    "backward-uniqueness inequality holds; root clustering "
                    "is suspect"
                )
            flags.append(f"non-unique branch chosen at interval {i}")
        cur_x = ps.preimages[0]
        cur_t = grid.knot(i)

    path = solve_forward(spec, cur_t, cur_x, t0, substeps=substeps)
    residual = float(np.linalg.norm(path.value(t0) - x0))
    path.direction = "backward-reconstructed"
    path.diagnostics["anchor_residual"] = residual
    return BackwardContinuation(
        ok=True, path=path, steps=steps, flags=flags, residual=residual,
    )
