"""Mesh and quadrature machinery for the integral-equation iterations.

The integral operators are evaluated by composite Simpson panels laid on
a mesh whose panel boundaries coincide with grid knots, so the jump of
the frozen argument never falls inside a panel.  Instead of forming the
ill-conditioned products Prop(t, t0) directly, values are accumulated
panel by panel,

    u(t_{j+1}) = Prop(t_{j+1}, t_j) u(t_j) + integral over the panel,

which keeps every factor bounded in the contracting direction.  Each
knot interval carries an even number of equal sub-steps; odd mesh points
are filled with the half-panel Newton-Cotes rule

    int_{x0}^{x1} p = h*(5 f0 + 8 f1 - f2)/12

for the quadratic through three consecutive points (and its mirror),
matching Simpson's fourth-order accuracy.

The integrand g(s, z(s), z(beta(s))) is two-valued at knots: the closing
point of an interval must use the left limit (frozen at that interval's
own start) while the same mesh point opens the next interval with the
frozen value updated.  Callers therefore pass per-point values ``gvals``
(right-continuous) plus per-interval closing values ``g_close``; using
the right-continuous value on both sides would degrade the scheme to
first order.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .integrate import propagator

__all__ = ["QuadMesh", "build_mesh", "block_propagators", "accumulate_forward",
           "accumulate_backward"]


@dataclass
class QuadMesh:
    """Quadrature mesh aligned with grid knots.

    ``ts`` are the mesh times; ``beta_idx[j]`` is the mesh index holding
    beta(ts[j]) (right-continuous; always present because the mesh starts
    at a knot); ``blocks`` lists (start_index, n_substeps, h) per knot
    interval with n_substeps even.
    """

    ts: np.ndarray
    beta_idx: np.ndarray
    blocks: list
    knot_idx: np.ndarray  # mesh indices that are grid knots

    @property
    def size(self):
        return len(self.ts)

    @property
    def block_starts(self):
        return np.array([b[0] for b in self.blocks], dtype=int)

    @property
    def block_ends(self):
        return np.array([b[0] + b[1] for b in self.blocks], dtype=int)

    def index_of(self, t, tol=1e-9):
        j = int(np.argmin(np.abs(self.ts - t)))
        if abs(self.ts[j] - t) > tol * (1.0 + abs(t)):
            raise InvalidParameterError(f"t={t} is not a mesh point")
        return j


def build_mesh(grid, lo, hi, substeps=64):
    """Mesh over [lo, hi] where lo must be a grid knot.

    hi may fall inside a knot interval; the partial interval gets its own
    even sub-step count at comparable resolution.
    """
    substeps = int(substeps)
    if substeps % 2:
        substeps += 1
    if grid.nearest_knot_index(lo) is None:
        raise InvalidParameterError(f"mesh start {lo} must be a grid knot")
    ts_parts = []
    blocks = []
    knot_pos = [0]
    cur = lo
    pos = 0
    while cur < hi - 1e-12 * (1.0 + abs(hi)):
        i = grid.interval_index(cur)
        knot_end = grid.knot(i + 1)
        b = min(knot_end, hi)
        span = b - cur
        ns = max(2, int(np.ceil(substeps * span / (knot_end - grid.knot(i)))))
        if ns % 2:
            ns += 1
        h = span / ns
        seg = cur + h * np.arange(1, ns + 1)
        seg[-1] = b
        ts_parts.append(seg)
        blocks.append((pos, ns, h))
        pos += ns
        if b == knot_end:
            knot_pos.append(pos)
        cur = b
    if not ts_parts:
        raise InvalidParameterError("empty mesh: hi must exceed lo")
    ts = np.concatenate([[lo]] + ts_parts)
    beta_idx = np.empty(len(ts), dtype=int)
    for start, ns, _h in blocks:
        beta_idx[start] = start
        beta_idx[start + 1:start + ns + 1] = start
    for p in knot_pos:
        beta_idx[p] = p
    return QuadMesh(ts=ts, beta_idx=beta_idx, blocks=blocks,
                    knot_idx=np.array(knot_pos, dtype=int))


def block_propagators(block_eval, mesh, dim, micro_steps=2, constant=None):
    """Per-sub-step forward and backward propagators of one block.

    Returns arrays F, B of shape (n_sub, dim, dim) with
    F[j] = Prop(t_{j+1}, t_j) and B[j] = Prop(t_j, t_{j+1}).  For a
    constant block the values only depend on the step size and are
    computed once per distinct h.
    """
    ts = mesh.ts
    nsub = len(ts) - 1
    F = np.empty((nsub, dim, dim))
    B = np.empty((nsub, dim, dim))
    if dim == 0:
        return F, B
    if constant is not None:
        cache = {}
        for j in range(nsub):
            h = ts[j + 1] - ts[j]
            key = round(h, 15)
            if key not in cache:
                cache[key] = (
                    propagator(block_eval, ts[j], ts[j + 1], n_steps=micro_steps),
                    propagator(block_eval, ts[j + 1], ts[j], n_steps=micro_steps),
                )
            F[j], B[j] = cache[key]
    else:
        for j in range(nsub):
            F[j] = propagator(block_eval, ts[j], ts[j + 1], n_steps=micro_steps)
            B[j] = propagator(block_eval, ts[j + 1], ts[j], n_steps=micro_steps)
    return F, B


def accumulate_forward(F, B, gvals, mesh, init, g_close=None):
    """Values of u(t) = Prop(t, t0) init + int_{t0}^t Prop(t, s) g(s) ds.

    ``gvals`` holds g at every mesh point with shape (M, d) or (M, d, r);
    the result matches.  ``g_close[b]`` is the left-limit integrand value
    at the closing point of interval block b (defaults to the pointwise
    value).  Forward panel recursion; all factors stay bounded in the
    contracting direction.
    """
    M = mesh.size
    out = np.empty((M,) + np.shape(init))
    out[0] = init
    if np.shape(init)[0] == 0:
        return out
    for bi, (start, ns, h) in enumerate(mesh.blocks):
        end = start + ns
        for q in range(start, end, 2):
            E0, E1 = F[q], F[q + 1]
            g0, g1 = gvals[q], gvals[q + 1]
            if q + 2 == end and g_close is not None:
                g2 = g_close[bi]
            else:
                g2 = gvals[q + 2]
            # half panel [t_q, t_{q+1}]
            psi0 = E0 @ g0
            int_half = (h / 12.0) * (5.0 * psi0 + 8.0 * g1 - B[q + 1] @ g2)
            out[q + 1] = E0 @ out[q] + int_half
            # full panel [t_q, t_{q+2}] by Simpson
            int_full = (h / 3.0) * (E1 @ psi0 + 4.0 * (E1 @ g1) + g2)
            out[q + 2] = E1 @ (E0 @ out[q]) + int_full
    return out


def accumulate_backward(F, B, gvals, mesh, init, g_close=None):
    """Values of v(t) = Prop(t, T) init - int_t^T Prop(t, s) g(s) ds.

    Backward panel recursion from the mesh top; Prop(t_j, t_{j+1}) is the
    backward sub-step propagator B[j], bounded for the expanding block.
    """
    M = mesh.size
    out = np.empty((M,) + np.shape(init))
    out[M - 1] = init
    if np.shape(init)[0] == 0:
        return out
    for bi, (start, ns, h) in enumerate(reversed(mesh.blocks)):
        end = start + ns
        gc = None if g_close is None else g_close[len(mesh.blocks) - 1 - bi]
        for q in range(end - 2, start - 1, -2):
            D0, D1 = B[q], B[q + 1]
            g0, g1 = gvals[q], gvals[q + 1]
            g2 = gc if (q + 2 == end and gc is not None) else gvals[q + 2]
            # half panel [t_{q+1}, t_{q+2}] seen from t_{q+1}
            f2 = D1 @ g2
            int_half = (h / 12.0) * (-(F[q] @ g0) + 8.0 * g1 + 5.0 * f2)
            out[q + 1] = D1 @ out[q + 2] - int_half
            # full panel [t_q, t_{q+2}] by Simpson seen from t_q
            int_full = (h / 3.0) * (g0 + 4.0 * (D0 @ g1) + D0 @ f2)
            out[q] = D0 @ (D1 @ out[q + 2]) - int_full
    return out
