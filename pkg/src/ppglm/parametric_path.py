"""Piecewise-linear Lasso homotopy along a one-dimensional response path.

Responses are parameterized as ``z0(tau) = q + tau * dir`` where ``dir`` is
the scaled contrast direction, so the contrast value of ``z0(tau)`` is
exactly ``tau``. On each segment of the path the active set and signs are
constant and the active coefficients are affine in ``tau``; breakpoints occur
where an active coefficient crosses zero or an inactive correlation reaches
the penalty boundary. Selection events (the set of ``tau`` where the Lasso
selects a given model, with or without matching signs, and the set where a
train/validation search picks a given penalty) then come out as unions of
disjoint intervals.

Everything runs in covariance form: only ``U0' U0``, ``U0' q`` and
``U0' dir`` enter the walk, so segment enumeration is independent of the
sample size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    PathCyclingError,
    RankDeficiencyError,
    SelectionInconsistencyError,
)
from .glm_core import LinearizedData
from .intervals import MERGE_TOL, IntervalUnion, intersect
from .lasso import ZERO_TOL, solve_lasso_cov

__all__ = [
    "TauParameterization",
    "PathSegment",
    "TauPath",
    "parameterize",
    "lasso_path_in_tau",
    "enumerate_path",
    "selection_event",
    "sign_event",
    "model_event",
    "sign_event_interval",
    "lambda_selection_event",
    "select_lambda",
    "intersect",
]

TIE_TOL = 1e-9          # breakpoints closer than this are processed as a tie
ADVANCE_TOL = 1e-9      # events must advance tau by at least this much
MAX_SEGMENTS = 20_000
WINDOW_SIGMAS = 30.0    # half-width of the base enumeration window
MAX_DOUBLINGS = 3


@dataclass(frozen=True)
class TauParameterization:
    """Decomposition ``z0 = q + tau_obs * dir`` with ``c @ q = 0``."""

    q: np.ndarray
    dir: np.ndarray
    c: np.ndarray
    tau_obs: float


@dataclass(frozen=True)
class PathSegment:
    """One maximal interval with constant active set and signs.

    ``coef_intercept + tau * coef_slope`` gives the active coefficients for
    ``tau`` inside ``(lo, hi)``.
    """

    lo: float
    hi: float
    active: tuple
    signs: tuple
    coef_intercept: np.ndarray
    coef_slope: np.ndarray


@dataclass(frozen=True)
class TauPath:
    """A full tiling of an enumeration window, plus walk metadata."""

    par: TauParameterization
    lam: float
    segments: list
    terminal_left: bool     # no event exists left of the window
    terminal_right: bool    # no event exists right of the window
    window: tuple
    diagnostics: tuple


def parameterize(lin: LinearizedData, c: np.ndarray) -> TauParameterization:
    """Split ``z0`` into the contrast coordinate and its orthogonal rest."""
    c = np.asarray(c, dtype=float)
    nc2 = float(c @ c)
    if nc2 <= 0.0:
        raise ValueError("contrast vector must be nonzero")
    tau_obs = float(c @ lin.z0)
    direction = c / nc2
    q = lin.z0 - direction * tau_obs
    return TauParameterization(q=q, dir=direction, c=c, tau_obs=tau_obs)


# ---------------------------------------------------------------------------
# the homotopy walk
# ---------------------------------------------------------------------------

class _Homotopy:
    """Covariance-form state for walking one penalty level."""

    def __init__(self, G, gq, gd, n, lam, qsq, qd, dsq):
        self.G = G
        self.gq = gq
        self.gd = gd
        self.n = n
        self.lam = lam
        self.thr = 0.5 * lam  # KKT correlation threshold of the L1 objective
        self.qsq = qsq
        self.qd = qd
        self.dsq = dsq
        self.p = G.shape[0]

    @staticmethod
    def build(U0, q, direction, n, lam):
        G = U0.T @ U0
        return _Homotopy(
            G=G,
            gq=U0.T @ q,
            gd=U0.T @ direction,
            n=n,
            lam=lam,
            qsq=float(q @ q),
            qd=float(q @ direction),
            dsq=float(direction @ direction),
        )

    def solve_at(self, tau):
        c0 = self.gq + tau * self.gd
        zsq = self.qsq + 2.0 * tau * self.qd + tau * tau * self.dsq
        t, _, _ = solve_lasso_cov(self.G, c0, max(zsq, 0.0), self.n, self.lam)
        t[np.abs(t) < ZERO_TOL] = 0.0
        return t

    def state_at(self, tau):
        t = self.solve_at(tau)
        active = tuple(int(j) for j in np.flatnonzero(t))
        signs = tuple(int(np.sign(t[j])) for j in active)
        return active, signs

    def affine(self, active, signs):
        """Intercept/slope of the active coefficients on a segment."""
        if not active:
            return np.zeros(0), np.zeros(0)
        A = list(active)
        K = self.G[np.ix_(A, A)]
        rhs = np.column_stack([
            self.gq[A] - self.thr * np.asarray(signs, dtype=float),
            self.gd[A],
        ])
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            raise RankDeficiencyError("active Gram block is singular") from None
        return sol[:, 0], sol[:, 1]

    def inactive_affine(self, active, a, b):
        """Intercept/slope of the correlations of inactive coordinates."""
        mask = np.ones(self.p, dtype=bool)
        if active:
            mask[list(active)] = False
        idx = np.flatnonzero(mask)
        if active:
            GA = self.G[np.ix_(idx, list(active))]
            e = self.gq[idx] - GA @ a
            f = self.gd[idx] - GA @ b
        else:
            e = self.gq[idx].copy()
            f = self.gd[idx].copy()
        return idx, e, f

    def _valid_right(self, tau, active, signs, a, b, idx, e, f):
        """KKT consistency on an immediate right-neighborhood of ``tau``."""
        thr = self.thr
        tol_b = 1e-9 * (1.0 + float(np.max(np.abs(a))) if a.size else 1.0)
        if active:
            v = a + tau * b
            sv = np.asarray(signs, dtype=float)
            x = sv * v
            if np.any(x < -tol_b):
                return False
            grazing = x < tol_b
            if np.any(grazing & (sv * b <= 0.0)):
                return False
        tol_r = 1e-8 * max(thr, 1.0)
        r = e + tau * f
        absr = np.abs(r)
        if np.any(absr > thr + tol_r):
            return False
        at_edge = absr > thr - tol_r
        if np.any(at_edge & (np.sign(r) * f > tol_r)):
            return False
        return True

    def next_event(self, tau, active, a, b, idx, e, f, direction=1):
        """Earliest breakpoint strictly beyond ``tau`` in ``direction``.

        Returns ``(tau_star, events)`` where events is a list of
        ('drop', j) / ('add', j, sign) candidates within the tie tolerance,
        or ``(None, [])`` when the path has no further event that way.
        """
        thr = self.thr
        cands = []
        if active:
            bz = np.asarray(b)
            az = np.asarray(a)
            nz = bz != 0.0
            with np.errstate(divide="ignore", invalid="ignore"):
                tz = -az / bz
            for pos in np.flatnonzero(nz):
                t_star = tz[pos]
                if direction * (t_star - tau) > ADVANCE_TOL:
                    cands.append((t_star, ("drop", active[pos])))
        if idx.size:
            with np.errstate(divide="ignore", invalid="ignore"):
                t_pos = (thr - e) / f
                t_neg = (-thr - e) / f
            for pos in np.flatnonzero(f != 0.0):
                j = int(idx[pos])
                for t_star, sgn in ((t_pos[pos], 1), (t_neg[pos], -1)):
                    if np.isfinite(t_star) and direction * (t_star - tau) > ADVANCE_TOL:
                        cands.append((t_star, ("add", j, sgn)))
        if not cands:
            return None, []
        if direction > 0:
            t_star = min(c[0] for c in cands)
        else:
            t_star = max(c[0] for c in cands)
        tied = [c[1] for c in cands if abs(c[0] - t_star) <= TIE_TOL]
        return t_star, tied


def _apply_event(active, signs, event):
    kind = event[0]
    if kind == "drop":
        j = event[1]
        pos = active.index(j)
        active = active[:pos] + active[pos + 1:]
        signs = signs[:pos] + signs[pos + 1:]
        return active, signs
    _, j, sgn = event
    merged = sorted(active + (j,))
    pos = merged.index(j)
    smap = dict(zip(active, signs))
    smap[j] = sgn
    return tuple(merged), tuple(smap[k] for k in merged)


def _walk(h: _Homotopy, tau_min: float, tau_max: float):
    """Tile [tau_min, tau_max] left to right with path segments."""
    diagnostics = []
    active, signs = h.state_at(tau_min)
    # leftward scan at the initial state fixes the terminal-left flag
    a, b = h.affine(active, signs)
    idx, e, f = h.inactive_affine(active, a, b)
    t_left, _ = h.next_event(tau_min, active, a, b, idx, e, f, direction=-1)
    terminal_left = t_left is None

    segments = []
    tau = tau_min
    terminal_right = False
    refreshed_at = None
    refresh_count = 0
    last_state = None
    while len(segments) < MAX_SEGMENTS:
        try:
            a, b = h.affine(active, signs)
            idx, e, f = h.inactive_affine(active, a, b)
            ok = h._valid_right(tau, active, signs, a, b, idx, e, f)
        except RankDeficiencyError:
            ok = False
        if not ok:
            if refreshed_at is not None and abs(tau - refreshed_at) <= ADVANCE_TOL:
                refresh_count += 1
                if refresh_count > 2 and (active, signs) == last_state:
                    raise PathCyclingError(
                        f"path walk stalled at tau = {tau:.6g} with state {active}"
                    )
            else:
                refresh_count = 1
            refreshed_at = tau
            last_state = (active, signs)
            probe = tau + max(ADVANCE_TOL * 10.0, abs(tau) * 1e-12)
            active, signs = h.state_at(min(probe, tau_max))
            a, b = h.affine(active, signs)
            idx, e, f = h.inactive_affine(active, a, b)
        t_star, events = h.next_event(tau, active, a, b, idx, e, f, direction=1)
        if t_star is None or t_star >= tau_max:
            segments.append(PathSegment(tau, tau_max, active, signs, a, b))
            terminal_right = t_star is None
            break
        segments.append(PathSegment(tau, t_star, active, signs, a, b))
        if len(events) > 1:
            diagnostics.append(
                f"breakpoint tie at tau = {t_star:.9g} ({len(events)} events)"
            )
            events.sort(key=lambda ev: ev[1])
        active, signs = _apply_event(active, signs, events[0])
        tau = t_star
    else:
        raise PathCyclingError(
            f"segment budget exhausted after {MAX_SEGMENTS} segments"
        )
    return segments, terminal_left, terminal_right, diagnostics


def lasso_path_in_tau(par: TauParameterization, U0: np.ndarray, lam: float,
                      window: tuple) -> list:
    """Exact tiling of ``window`` by path segments for one penalty level.

    Raises if the window does not contain the observed contrast value.
    """
    tau_min, tau_max = window
    if not tau_min <= par.tau_obs <= tau_max:
        raise ValueError("window must contain the observed contrast value")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    h = _Homotopy.build(U0, par.q, par.dir, U0.shape[0], lam)
    segments, _, _, _ = _walk(h, tau_min, tau_max)
    return segments


def enumerate_path(lin: LinearizedData, c: np.ndarray, lam: float,
                   target_model=None,
                   window_sigmas: float = WINDOW_SIGMAS,
                   max_doublings: int = MAX_DOUBLINGS) -> TauPath:
    """Walk the path on an adaptive window around the observed statistic.

    The base window is ``tau_obs +/- window_sigmas * sigma_c`` with
    ``sigma_c`` the pre-truncation standard deviation of the contrast. While
    an endpoint segment still carries ``target_model`` and further events
    exist beyond the window, the window doubles (up to ``max_doublings``);
    mass beyond the base window is far below representable probability, so
    a capped window never affects downstream CDF values.
    """
    par = parameterize(lin, c)
    if target_model is None:
        target = None
    else:
        target = frozenset(int(j) for j in target_model)
    sigma = math.sqrt(lin.noise_scale) * float(np.linalg.norm(c))
    h = _Homotopy.build(lin.U0, par.q, par.dir, lin.U0.shape[0], lam)
    half = window_sigmas * sigma
    diagnostics = []
    for _ in range(max_doublings + 1):
        window = (par.tau_obs - half, par.tau_obs + half)
        segments, term_l, term_r, diag = _walk(h, window[0], window[1])
        if target is None:
            break
        left_open = (not term_l) and frozenset(segments[0].active) == target
        right_open = (not term_r) and frozenset(segments[-1].active) == target
        if not (left_open or right_open):
            break
        half *= 2.0
    else:
        diagnostics.append(
            "window doubling cap reached; support truncated at the window edge"
        )
    diagnostics.extend(diag)
    return TauPath(
        par=par,
        lam=lam,
        segments=segments,
        terminal_left=term_l,
        terminal_right=term_r,
        window=window,
        diagnostics=tuple(diagnostics),
    )


# ---------------------------------------------------------------------------
# events
# ---------------------------------------------------------------------------

def selection_event(segments, M, merge_tol: float = MERGE_TOL) -> IntervalUnion:
    """Union of segment intervals whose active set equals ``M`` (signs
    ignored). May be empty."""
    target = frozenset(int(j) for j in M)
    return IntervalUnion.from_pairs(
        ((s.lo, s.hi) for s in segments if frozenset(s.active) == target),
        merge_tol=merge_tol,
    )


def _sign_key(M, signs):
    pairs = sorted(zip((int(j) for j in M), (int(s) for s in signs)))
    return tuple(j for j, _ in pairs), tuple(s for _, s in pairs)


def sign_event(segments, M, signs, merge_tol: float = MERGE_TOL) -> IntervalUnion:
    """As :func:`selection_event`, additionally requiring matching signs."""
    key, skey = _sign_key(M, signs)
    return IntervalUnion.from_pairs(
        (
            (s.lo, s.hi)
            for s in segments
            if s.active == key and s.signs == skey
        ),
        merge_tol=merge_tol,
    )


def _extend_unbounded(path: TauPath, union: IntervalUnion, matches_left,
                      matches_right) -> IntervalUnion:
    """Open the outermost intervals to infinity when the walk proved no
    further event exists beyond the window."""
    if union.is_empty:
        return union
    pairs = list(union)
    lo_w, hi_w = path.window
    if path.terminal_left and matches_left and abs(pairs[0][0] - lo_w) <= MERGE_TOL:
        pairs[0] = (-math.inf, pairs[0][1])
    if path.terminal_right and matches_right and abs(pairs[-1][1] - hi_w) <= MERGE_TOL:
        pairs[-1] = (pairs[-1][0], math.inf)
    return IntervalUnion(tuple(pairs))


def model_event(path: TauPath, M) -> IntervalUnion:
    """Selection event for model ``M`` on the enumerated window, with the
    outermost intervals opened to infinity when provably event-free."""
    target = frozenset(int(j) for j in M)
    union = selection_event(path.segments, M)
    return _extend_unbounded(
        path,
        union,
        frozenset(path.segments[0].active) == target,
        frozenset(path.segments[-1].active) == target,
    )


def sign_event_interval(path: TauPath, M, signs):
    """Sign-conditioned truncation interval containing the observed value.

    Returns ``((lo, hi), diagnostics)``. When the sign event is a union of
    several intervals, only the one containing the observed statistic is
    used and a diagnostic records the fact.
    """
    union = sign_event(path.segments, M, signs)
    diagnostics = []
    key, skey = _sign_key(M, signs)
    first = path.segments[0]
    last = path.segments[-1]
    union = _extend_unbounded(
        path,
        union,
        first.active == key and first.signs == skey,
        last.active == key and last.signs == skey,
    )
    iv = union.enclosing(path.par.tau_obs, tol=MERGE_TOL)
    if iv is None:
        raise SelectionInconsistencyError(
            "observed statistic not inside its own sign event"
        )
    if len(union) > 1:
        diagnostics.append(
            f"sign event has {len(union)} components; using the one "
            "containing the observed statistic"
        )
    return iv, diagnostics


# ---------------------------------------------------------------------------
# penalty selection event
# ---------------------------------------------------------------------------

def _val_error_pieces(h: _Homotopy, U_val, q_val, d_val, window):
    """Piecewise quadratic validation error of one penalty's train path."""
    segments, _, _, _ = _walk(h, window[0], window[1])
    pieces = []
    for seg in segments:
        if seg.active:
            V = U_val[:, list(seg.active)]
            e0 = q_val - V @ seg.coef_intercept
            e1 = d_val - V @ seg.coef_slope
        else:
            e0, e1 = q_val, d_val
        pieces.append(
            (seg.lo, seg.hi, float(e0 @ e0), 2.0 * float(e0 @ e1), float(e1 @ e1))
        )
    return pieces


def _quad_roots_in(c0, c1, c2, lo, hi):
    """Real roots of c2 x^2 + c1 x + c0 inside (lo, hi)."""
    roots = []
    if abs(c2) < 1e-300:
        if c1 != 0.0:
            roots.append(-c0 / c1)
    else:
        disc = c1 * c1 - 4.0 * c2 * c0
        if disc > 0.0:
            sq = math.sqrt(disc)
            q = -0.5 * (c1 + math.copysign(sq, c1))
            roots.append(q / c2)
            if q != 0.0:
                roots.append(c0 / q)
            else:
                roots.append(0.0)
    return sorted(r for r in roots if lo < r < hi)


def select_lambda(lin: LinearizedData, split, lambdas):
    """Pick the penalty minimizing validation error on a fixed split.

    Ties go to the candidate earliest in ``lambdas`` (argmin convention).
    Returns ``(lambda_star, index, errors)``.
    """
    train, val = (np.asarray(split[0], dtype=int), np.asarray(split[1], dtype=int))
    U_tr, z_tr = lin.U0[train], lin.z0[train]
    U_val, z_val = lin.U0[val], lin.z0[val]
    n_tr = len(train)
    G = U_tr.T @ U_tr
    c0 = U_tr.T @ z_tr
    zsq = float(z_tr @ z_tr)
    errors = []
    for lam in lambdas:
        t, _, _ = solve_lasso_cov(G, c0, zsq, n_tr, lam)
        t[np.abs(t) < ZERO_TOL] = 0.0
        resid = z_val - U_val @ t
        errors.append(float(resid @ resid))
    idx = int(np.argmin(errors))
    return float(lambdas[idx]), idx, errors


def lambda_selection_event(lin: LinearizedData, c, split, lambdas,
                           lambda_star: float, window,
                           merge_tol: float = MERGE_TOL) -> IntervalUnion:
    """Set of ``tau`` where the train/validation search picks ``lambda_star``.

    For each candidate penalty the train-path coefficients are piecewise
    affine in ``tau``, so each validation error is piecewise quadratic; on
    the common refinement of all the pieces the winner set is delimited by
    pairwise quadratic crossings. Ties on a whole cell resolve toward the
    candidate earliest in ``lambdas``, matching :func:`select_lambda`.
    """
    lambdas = [float(l) for l in lambdas]
    star_idx = None
    for i, lam in enumerate(lambdas):
        if math.isclose(lam, float(lambda_star), rel_tol=1e-12, abs_tol=0.0):
            star_idx = i
            break
    if star_idx is None:
        raise ValueError("lambda_star must be one of the candidates")
    par = parameterize(lin, c)
    tau_min, tau_max = window
    if not tau_min <= par.tau_obs <= tau_max:
        raise ValueError("window must contain the observed contrast value")
    if len(lambdas) == 1:
        return IntervalUnion(((tau_min, tau_max),))

    train, val = (np.asarray(split[0], dtype=int), np.asarray(split[1], dtype=int))
    U_tr = lin.U0[train]
    U_val = lin.U0[val]
    q_val, d_val = par.q[val], par.dir[val]
    n_tr = len(train)

    per_lam = []
    cuts = {tau_min, tau_max}
    for lam in lambdas:
        h = _Homotopy.build(U_tr, par.q[train], par.dir[train], n_tr, lam)
        pieces = _val_error_pieces(h, U_val, q_val, d_val, window)
        per_lam.append(pieces)
        cuts.update(piece[0] for piece in pieces)
    grid = sorted(cuts)

    # map every refinement cell to the covering quadratic of each penalty
    starts = [np.array([piece[0] for piece in pieces]) for pieces in per_lam]
    coefs = [np.array([[piece[2], piece[3], piece[4]] for piece in pieces])
             for pieces in per_lam]
    wins = []
    L = len(lambdas)
    for lo, hi in zip(grid[:-1], grid[1:]):
        if hi - lo <= 0.0:
            continue
        mid_cell = 0.5 * (lo + hi)
        Q = np.empty((L, 3))
        for k in range(L):
            pos = int(np.searchsorted(starts[k], mid_cell, side="right")) - 1
            Q[k] = coefs[k][max(pos, 0)]
        pts = [lo, hi]
        qs = Q[star_idx]
        for k in range(L):
            if k == star_idx:
                continue
            pts.extend(
                _quad_roots_in(
                    qs[0] - Q[k, 0], qs[1] - Q[k, 1], qs[2] - Q[k, 2], lo, hi
                )
            )
        pts = sorted(set(pts))
        mids = np.array([0.5 * (x0 + x1) for x0, x1 in zip(pts[:-1], pts[1:])])
        vals = Q[:, 0][:, None] + Q[:, 1][:, None] * mids + Q[:, 2][:, None] * mids**2
        winner = np.argmin(vals, axis=0)  # first index wins exact ties
        for (x0, x1), w in zip(zip(pts[:-1], pts[1:]), winner):
            if w == star_idx and x1 > x0:
                wins.append((x0, x1))
    return IntervalUnion.from_pairs(wins, merge_tol=merge_tol)
