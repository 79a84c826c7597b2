"""Particle posterior over fleet placements with a Metropolis-Hastings kernel.

The posterior is a fixed-size set of equally-weighted particles, each a full
fleet placement. Conditioning on an observation re-runs a fixed number of MH
sweeps per particle against the full history; the proposal re-places one
uniformly chosen ship uniformly over its legal positions holding the others
fixed, which is symmetric, so acceptance is the bare likelihood ratio.

The same module houses an exhaustive-enumeration oracle for boards small
enough to enumerate; every approximation claim in the test suite is checked
against it.
"""

from __future__ import annotations

import hashlib
from functools import lru_cache

import numpy as np

from .world import (
    BoardConfig,
    Cell,
    Observation,
    Placement,
    Question,
    QuestionAnswer,
    ShipPlacement,
    ShotReturn,
    answer_question,
    place_fleet,
    ship_positions,
)


class TooLargeToEnumerate(Exception):
    """The joint placement space exceeds the enumeration budget."""


class DegeneratePosterior(Exception):
    """Every placement is inconsistent with the history (possible only at eps=0)."""


# ---------------------------------------------------------------------------
# entropy helpers


def bernoulli_entropy(p: float) -> float:
    """Entropy of a Bernoulli(p) in nats, with 0 log 0 = 0."""
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return float(-p * np.log(p) - (1.0 - p) * np.log(1.0 - p))


def entropy_of_marginals(marginals: np.ndarray) -> float:
    """Sum of per-cell Bernoulli entropies (nats); the collapse metric's base."""
    p = np.clip(np.asarray(marginals, dtype=np.float64), 0.0, 1.0)
    inner = (p > 0.0) & (p < 1.0)
    if not inner.any():
        return 0.0
    q = p[inner]
    return float(np.sum(-q * np.log(q) - (1.0 - q) * np.log(1.0 - q)))


# ---------------------------------------------------------------------------
# likelihood


def likelihood(placement: Placement, history: list[Observation], epsilon: float) -> float:
    """Probability of the observed history under a placement.

    Shot returns contribute (1 - eps) when the observed value matches the
    truth and eps otherwise; question answers are truthful, contributing an
    exact consistency indicator.
    """
    occ = placement.occupied
    prob = 1.0
    for obs in history:
        if isinstance(obs, ShotReturn):
            truth = obs.cell in occ
            prob *= (1.0 - epsilon) if obs.observed_hit == truth else epsilon
        else:
            if answer_question(placement, obs.question) != obs.value:
                return 0.0
    return prob


# ---------------------------------------------------------------------------
# per-board position tables


class _BoardTables:
    """Per-ship position lists and occupancy matrices for one board config."""

    def __init__(self, config: BoardConfig) -> None:
        self.config = config
        self.positions: list[list[ShipPlacement]] = []
        self.occ: list[np.ndarray] = []  # (P_s, C) bool
        self.index: list[dict[ShipPlacement, int]] = []
        for length in config.fleet:
            table = ship_positions(config, length)
            mat = np.zeros((len(table), config.cell_count), dtype=bool)
            for i, pos in enumerate(table):
                for cell in pos.cells():
                    mat[i, config.cell_index(cell)] = True
            self.positions.append(table)
            self.occ.append(mat)
            self.index.append({pos: i for i, pos in enumerate(table)})
        self.occ_u8 = [m.astype(np.uint8) for m in self.occ]
        self.occ_f = [m.astype(np.float64) for m in self.occ]


@lru_cache(maxsize=32)
def _tables(config: BoardConfig) -> _BoardTables:
    return _BoardTables(config)


# ---------------------------------------------------------------------------
# scalar MH step (reference kernel; the Posterior runs the same rule vectorized)


def mh_step(
    config: BoardConfig,
    placement: Placement,
    history: list[Observation],
    epsilon: float,
    rng: np.random.Generator,
) -> Placement:
    """One Metropolis-Hastings step on a single placement.

    A ship with no alternative legal position proposes itself; a current
    state with zero likelihood accepts unconditionally so dead particles
    are repaired instead of stuck.
    """
    tables = _tables(config)
    ship_i = int(rng.integers(0, len(config.fleet)))
    others = frozenset(
        c
        for j, s in enumerate(placement.ships)
        if j != ship_i
        for c in s.cells()
    )
    legal = [
        pos
        for pos in tables.positions[ship_i]
        if not (others & frozenset(pos.cells()))
    ]
    proposal_pos = legal[int(rng.integers(0, len(legal)))]
    ships = list(placement.ships)
    ships[ship_i] = proposal_pos
    proposal = Placement(tuple(ships))
    l_cur = likelihood(placement, history, epsilon)
    l_prop = likelihood(proposal, history, epsilon)
    u = float(rng.random())
    if l_cur == 0.0 or u * l_cur < l_prop:
        return proposal
    return placement


# ---------------------------------------------------------------------------
# particle posterior


class Posterior:
    """Equal-weight particle approximation of the placement posterior.

    Particles are stored as per-ship position indices; per-particle occupancy
    bitmaps, mismatch counts, and question-consistency flags are maintained
    alongside so a sweep is a handful of matrix operations rather than a
    Python loop over particles.
    """

    def __init__(
        self,
        config: BoardConfig,
        epsilon: float,
        rng: np.random.Generator,
        ship_pos: np.ndarray,
    ) -> None:
        self.config = config
        self.epsilon = float(epsilon)
        self.rng = rng
        self.tables = _tables(config)
        self.ship_pos = ship_pos  # (N, S) int32
        self.history: list[Observation] = []
        self._shot_idx = np.zeros(0, dtype=np.int64)
        self._shot_val = np.zeros(0, dtype=bool)
        self._q_masks = np.zeros((0, config.cell_count), dtype=np.uint8)
        self._q_vals: list[int | bool] = []
        self._q_kinds: list[str] = []
        self.occ = self._occupancy(ship_pos)
        self._occ_f = self.occ.astype(np.float64)
        self.marginals = self.occ.mean(axis=0)
        self._final_marginals = self.marginals.copy()
        self._collapse_cursor = 0
        self._readout_cache: dict[int, tuple[np.ndarray, ...]] = {}

    # -- construction

    @classmethod
    def initialize(
        cls,
        config: BoardConfig,
        n_particles: int = 500,
        rng: np.random.Generator | None = None,
        epsilon: float | None = None,
        prior_sweeps: int = 8,
    ) -> "Posterior":
        """Draw the prior particle set from uniform legal placements.

        A few prior sweeps decorrelate the rejection-sampled draws; the
        reported marginals then come from the same analytic readout as
        post-update marginals.
        """
        rng = rng if rng is not None else np.random.default_rng()
        eps = config.noise_epsilon if epsilon is None else epsilon
        tables = _tables(config)
        ship_pos = np.zeros((n_particles, len(config.fleet)), dtype=np.int32)
        for n in range(n_particles):
            placement = place_fleet(config, rng)
            for s, pos in enumerate(placement.ships):
                ship_pos[n, s] = tables.index[s][pos]
        post = cls(config, eps, rng, ship_pos)
        if prior_sweeps > 0:
            post._run_sweeps(prior_sweeps)
        post._occ_f = post.occ.astype(np.float64)
        post._final_marginals = post.occ.mean(axis=0)
        readout = post._readout(exclude_last=False)
        if readout is not None:
            post.marginals = readout
        else:
            post.marginals = post._final_marginals.copy()
        return post

    @classmethod
    def from_placements(
        cls,
        config: BoardConfig,
        placements: list[Placement],
        epsilon: float | None = None,
        rng: np.random.Generator | None = None,
    ) -> "Posterior":
        """Build a posterior whose particle set is exactly `placements`.

        Intended for constructed scenarios (previews over a known two-point
        posterior, demos); duplicates are allowed and weight the placement
        accordingly.
        """
        rng = rng if rng is not None else np.random.default_rng()
        eps = config.noise_epsilon if epsilon is None else epsilon
        tables = _tables(config)
        ship_pos = np.zeros((len(placements), len(config.fleet)), dtype=np.int32)
        for n, placement in enumerate(placements):
            for s, pos in enumerate(placement.ships):
                ship_pos[n, s] = tables.index[s][pos]
        return cls(config, eps, rng, ship_pos)

    def _occupancy(self, ship_pos: np.ndarray) -> np.ndarray:
        occ = np.zeros((ship_pos.shape[0], self.config.cell_count), dtype=bool)
        for s in range(ship_pos.shape[1]):
            occ |= self.tables.occ[s][ship_pos[:, s]]
        return occ

    @property
    def n_particles(self) -> int:
        return self.ship_pos.shape[0]

    def placements(self) -> list[Placement]:
        out = []
        for n in range(self.n_particles):
            ships = tuple(
                self.tables.positions[s][self.ship_pos[n, s]]
                for s in range(len(self.config.fleet))
            )
            out.append(Placement(ships))
        return out

    def digest(self) -> str:
        """Stable fingerprint of the particle set (for traces and tests)."""
        return hashlib.sha1(self.ship_pos.tobytes()).hexdigest()[:12]

    def entropy(self) -> float:
        return entropy_of_marginals(self.marginals)

    def marginal(self, cell: Cell) -> float:
        return float(self.marginals[self.config.cell_index(cell)])

    # -- conditioning

    def update(self, obs: Observation, sweeps: int = 20) -> "Posterior":
        """Condition on one observation.

        Marginals are read out analytically against the pre-update particle
        set. The set itself is then reweighted by the newest observation,
        resampled where the weights call for it, and diversified by MH
        sweeps against the full history, so it keeps tracking the posterior
        instead of lagging behind sharp likelihood shifts.
        """
        self.history.append(obs)
        if isinstance(obs, ShotReturn):
            self._shot_idx = np.append(
                self._shot_idx, self.config.cell_index(obs.cell)
            )
            self._shot_val = np.append(self._shot_val, obs.observed_hit)
        else:
            mask = np.zeros(self.config.cell_count, dtype=np.uint8)
            for cell in obs.question.cells():
                mask[self.config.cell_index(cell)] = 1
            self._q_masks = np.vstack([self._q_masks, mask[None, :]])
            self._q_vals.append(obs.value)
            self._q_kinds.append(obs.question.kind)
        marginals = self._readout(exclude_last=True)
        if not self._collapsed_resample():
            # Nothing is consistent with the newest observation under any
            # completion of the collapse ship: walk the whole ensemble
            # until somebody finds a consistent state, or give up.
            mism, q_ok = self._run_sweeps(sweeps)
            self._repair_dead(mism, q_ok)
        else:
            self._run_sweeps(sweeps)
        self._occ_f = self.occ.astype(np.float64)
        self._final_marginals = self.occ.mean(axis=0)
        self._readout_cache = {}
        if marginals is None:
            marginals = self._readout(exclude_last=False)
        self.marginals = (
            marginals if marginals is not None else self._final_marginals.copy()
        )
        return self

    def _collapsed_resample(self) -> bool:
        """Refresh the particle set against the newest observation.

        One ship (rotating per update) is integrated out: particles are
        resampled by how much conditional mass their remaining ships keep
        under the newest observation, and the integrated ship is then
        redrawn exactly from its conditional. Compared with resampling on
        whole-particle weights this keeps many more distinct ancestries
        alive through hard prunes. Returns False when no particle supports
        any completion, which callers must repair by other means.
        """
        n, n_ships = self.ship_pos.shape
        s = self._collapse_cursor
        self._collapse_cursor = (self._collapse_cursor + 1) % n_ships
        cached = self._readout_cache.get(s)
        if cached is None:
            return False
        w_new, z_new, z_old, others = cached
        weights = np.divide(
            z_new, z_old, out=np.zeros_like(z_new), where=z_old > 0.0
        )
        total = float(weights.sum())
        if total <= 0.0:
            return False
        cum = np.cumsum(weights / total)
        cum[-1] = 1.0
        points = (float(self.rng.random()) + np.arange(n)) / n
        idx = np.searchsorted(cum, points)
        w_sel = w_new[idx]
        z_sel = z_new[idx]
        targets = self.rng.random(n) * z_sel
        draw = (np.cumsum(w_sel, axis=1) > targets[:, None]).argmax(axis=1)
        self.ship_pos = self.ship_pos[idx]
        self.ship_pos[:, s] = draw
        self.occ = others[idx] | self.tables.occ[s][draw]
        return True

    def _mismatches(self, occ: np.ndarray) -> np.ndarray:
        if self._shot_idx.size == 0:
            return np.zeros(occ.shape[0], dtype=np.int64)
        return (occ[:, self._shot_idx] != self._shot_val).sum(axis=1)

    def _questions_ok(self, occ: np.ndarray) -> np.ndarray:
        ok = np.ones(occ.shape[0], dtype=bool)
        if self._q_masks.shape[0] == 0:
            return ok
        counts = occ.astype(np.uint8) @ self._q_masks.T
        for j, (val, kind) in enumerate(zip(self._q_vals, self._q_kinds)):
            if kind == "count":
                ok &= counts[:, j] == val
            else:
                ok &= (counts[:, j] > 0) == bool(val)
        return ok

    def _rel_likelihood(self, mism: np.ndarray, q_ok: np.ndarray) -> np.ndarray:
        # relative likelihood: (eps / (1-eps))^mismatches, zeroed when a
        # truthful answer is violated; at eps=0 any mismatch is fatal
        if self.epsilon == 0.0:
            return (q_ok & (mism == 0)).astype(np.float64)
        w = self.epsilon / (1.0 - self.epsilon)
        return np.where(q_ok, np.power(w, mism.astype(np.float64)), 0.0)

    def _run_sweeps(
        self,
        sweeps: int,
        mism: np.ndarray | None = None,
        q_ok: np.ndarray | None = None,
    ) -> tuple[np.ndarray, np.ndarray]:
        n, n_ships = self.ship_pos.shape
        if mism is None:
            mism = self._mismatches(self.occ)
        if q_ok is None:
            q_ok = self._questions_ok(self.occ)
        for _ in range(sweeps):
            ships = self.rng.integers(0, n_ships, size=n)
            pick = self.rng.random(n)
            acc_u = self.rng.random(n)
            for s in range(n_ships):
                rows = np.nonzero(ships == s)[0]
                if rows.size == 0:
                    continue
                pos_occ = self.tables.occ[s]
                pos_occ_u8 = self.tables.occ_u8[s]
                cur = self.ship_pos[rows, s]
                others = self.occ[rows] & ~pos_occ[cur]
                overlap = others.astype(np.uint8) @ pos_occ_u8.T
                legal = overlap == 0
                cnt = legal.sum(axis=1)
                target = np.floor(pick[rows] * cnt).astype(np.int64)
                cumsum = np.cumsum(legal, axis=1)
                prop = (cumsum > target[:, None]).argmax(axis=1)
                new_occ = others | pos_occ[prop]
                new_mism = self._mismatches(new_occ)
                new_ok = self._questions_ok(new_occ)
                l_cur = self._rel_likelihood(mism[rows], q_ok[rows])
                l_prop = self._rel_likelihood(new_mism, new_ok)
                accept = (l_cur == 0.0) | (acc_u[rows] * l_cur < l_prop)
                upd = rows[accept]
                self.ship_pos[upd, s] = prop[accept]
                self.occ[upd] = new_occ[accept]
                mism[upd] = new_mism[accept]
                q_ok[upd] = new_ok[accept]
        return mism, q_ok

    # -- marginal readout

    def _position_weights(
        self,
        s: int,
        others_u8: np.ndarray,
        legal: np.ndarray,
        shot_idx: np.ndarray,
        shot_val: np.ndarray,
        n_questions: int,
        baseline: np.ndarray | None,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Relative likelihood of every position of ship `s` given the rest.

        Returns (weights, mismatch counts), one row per particle and one
        column per candidate position. The mismatch count of the merged
        board (others | position) against each recorded shot decomposes
        into inner products, so the whole table comes out of a few small
        matrix multiplications. `baseline` shifts the exponent so paired
        calls stay on a common scale.
        """
        pos_occ_u8 = self.tables.occ_u8[s]
        mism_all = np.zeros(
            (others_u8.shape[0], pos_occ_u8.shape[0]), dtype=np.int64
        )
        if shot_idx.size:
            idx1 = shot_idx[shot_val]
            idx0 = shot_idx[~shot_val]
            if idx1.size:
                a1 = others_u8[:, idx1]
                b1 = pos_occ_u8[:, idx1]
                mism_all += (
                    idx1.size
                    - a1.sum(axis=1, dtype=np.int64)[:, None]
                    - b1.sum(axis=1, dtype=np.int64)[None, :]
                    + a1.astype(np.int64) @ b1.T.astype(np.int64)
                )
            if idx0.size:
                a0 = others_u8[:, idx0]
                b0 = pos_occ_u8[:, idx0]
                mism_all += (
                    a0.sum(axis=1, dtype=np.int64)[:, None]
                    + b0.sum(axis=1, dtype=np.int64)[None, :]
                    - a0.astype(np.int64) @ b0.T.astype(np.int64)
                )
        if self.epsilon == 0.0:
            w = (legal & (mism_all == 0)).astype(np.float64)
        else:
            r = self.epsilon / (1.0 - self.epsilon)
            shifted = mism_all if baseline is None else mism_all - baseline
            w = np.where(legal, np.power(r, shifted.astype(np.float64)), 0.0)
        for j in range(n_questions):
            mask = self._q_masks[j]
            counts = (
                (others_u8 @ mask).astype(np.int64)[:, None]
                + (pos_occ_u8 @ mask).astype(np.int64)[None, :]
                - (others_u8 * mask[None, :]).astype(np.int64)
                @ pos_occ_u8.T.astype(np.int64)
            )
            if self._q_kinds[j] == "count":
                w *= counts == self._q_vals[j]
            else:
                w *= (counts > 0) == bool(self._q_vals[j])
        return w, mism_all

    def _readout(self, exclude_last: bool) -> np.ndarray | None:
        """Estimate cell marginals from the particle set analytically.

        For each ship in turn the estimator integrates that ship out: every
        particle contributes the exact conditional occupancy of the ship
        given the other ships, weighted by how much of the particle's
        conditional mass survives the newest observation (the ratio of
        conditional normalizers with and without it). This keeps the
        estimate sharp through hard prunes (dead particles still contribute
        whichever ships remain explainable) and through likelihood shifts
        that the fixed sweep schedule has not fully propagated yet. The
        per-ship estimates, each unbiased when the pre-sweep particles
        represent the previous posterior, are averaged. Returns None when
        no particle supports any readout, which is the degenerate case.
        """
        n, n_ships = self.ship_pos.shape
        shot_idx, shot_val = self._shot_idx, self._shot_val
        n_q = self._q_masks.shape[0]
        if exclude_last:
            last = self.history[-1]
            if isinstance(last, ShotReturn):
                old_shots = (shot_idx[:-1], shot_val[:-1])
                old_n_q = n_q
            else:
                old_shots = (shot_idx, shot_val)
                old_n_q = n_q - 1
        self._readout_cache = {}
        estimates = []
        for s in range(n_ships):
            pos_occ = self.tables.occ[s]
            cur = self.ship_pos[:, s]
            others = self.occ & ~pos_occ[cur]
            others_u8 = others.astype(np.uint8)
            overlap = others_u8 @ self.tables.occ_u8[s].T
            legal = overlap == 0
            if exclude_last:
                w_old, mism_old = self._position_weights(
                    s, others_u8, legal, *old_shots, old_n_q, baseline=None
                )
                baseline = None
                if self.epsilon > 0.0:
                    # rescale both weight tables by a common per-particle
                    # factor so the normalizer ratio is computed on well
                    # conditioned numbers
                    baseline = mism_old.min(axis=1, keepdims=True)
                    r = self.epsilon / (1.0 - self.epsilon)
                    w_old = w_old * np.power(r, -baseline.astype(np.float64))
                w_new, _ = self._position_weights(
                    s, others_u8, legal, shot_idx, shot_val, n_q, baseline
                )
            else:
                w_new, _ = self._position_weights(
                    s, others_u8, legal, shot_idx, shot_val, n_q, None
                )
                w_old = w_new
            z_new = w_new.sum(axis=1)
            z_old = w_old.sum(axis=1)
            if exclude_last:
                self._readout_cache[s] = (w_new, z_new, z_old, others)
            usable = z_new > 0.0
            if not usable.any():
                continue
            ratio = np.zeros(n)
            ratio[usable] = z_new[usable] / z_old[usable]
            cover = np.zeros_like(others, dtype=np.float64)
            cover[usable] = (
                w_new[usable] @ self.tables.occ_f[s]
            ) / z_new[usable][:, None]
            others_f = others.astype(np.float64)
            slices = others_f + (1.0 - others_f) * cover
            total = float(ratio.sum())
            if total <= 0.0:
                continue
            estimates.append((ratio @ slices) / total)
        if not estimates:
            return None
        return np.clip(np.mean(estimates, axis=0), 0.0, 1.0)

    def _repair_dead(
        self, mism: np.ndarray, q_ok: np.ndarray, max_extra_sweeps: int = 200
    ) -> None:
        """Ensure no zero-likelihood particle survives an update.

        Zero-weight particles (inconsistent with a truthful answer, or with
        any observation at eps=0) carry no posterior mass but would pollute
        the equal-weight marginals. Extra MH sweeps repair them in almost
        every case; any stragglers are replaced by copies of live particles,
        which is exact for zero-weight members.
        """
        for _ in range(max_extra_sweeps):
            if (self._rel_likelihood(mism, q_ok) > 0.0).all():
                return
            mism, q_ok = self._run_sweeps(1, mism, q_ok)
        dead = np.nonzero(self._rel_likelihood(mism, q_ok) == 0.0)[0]
        if dead.size == 0:
            return
        live = np.nonzero(self._rel_likelihood(mism, q_ok) > 0.0)[0]
        if live.size == 0:
            if self._anneal_to_consistency():
                rel = self._rel_likelihood(
                    self._mismatches(self.occ), self._questions_ok(self.occ)
                )
                live = np.nonzero(rel > 0.0)[0]
                dead = np.nonzero(rel == 0.0)[0]
                if dead.size:
                    source = live[self.rng.integers(0, live.size, size=dead.size)]
                    self.ship_pos[dead] = self.ship_pos[source]
                    self.occ[dead] = self.occ[source]
                self._run_sweeps(4)
                return
            if self._refill_consistent():
                return
            raise DegeneratePosterior(
                "no particle is consistent with the observation history"
            )
        source = live[self.rng.integers(0, live.size, size=dead.size)]
        self.ship_pos[dead] = self.ship_pos[source]
        self.occ[dead] = self.occ[source]

    def _question_distance(self, occ: np.ndarray) -> np.ndarray:
        """Total integer distance from satisfying every answered question."""
        dist = np.zeros(occ.shape[0], dtype=np.int64)
        if self._q_masks.shape[0] == 0:
            return dist
        counts = occ.astype(np.uint8) @ self._q_masks.T
        for j, (val, kind) in enumerate(zip(self._q_vals, self._q_kinds)):
            if kind == "count":
                dist += np.abs(counts[:, j].astype(np.int64) - int(val))
            else:
                dist += ((counts[:, j] > 0) != bool(val)).astype(np.int64)
        return dist

    def _constraint_energy(self, occ: np.ndarray) -> np.ndarray:
        # hard-constraint violation count; exactly 0 iff relative likelihood
        # is positive (shots only bind at eps = 0, answers always do)
        energy = self._question_distance(occ)
        if self.epsilon == 0.0:
            energy = energy + self._mismatches(occ)
        return energy

    def _anneal_to_consistency(self, max_sweeps: int = 300) -> bool:
        """Walk a fully dead ensemble downhill until a particle is live.

        MH at zero likelihood accepts every move, which is an undirected
        random walk; a joint answer constraint (an exact region count) can
        need coordinated moves such a walk rarely finds. This repair
        accepts only moves that do not increase the number of violated
        hard constraints, so chains settle into the feasible set instead
        of drifting past it.
        """
        n, n_ships = self.ship_pos.shape
        energy = self._constraint_energy(self.occ)
        for _ in range(max_sweeps):
            if (energy == 0).any():
                return True
            ships = self.rng.integers(0, n_ships, size=n)
            pick = self.rng.random(n)
            for s in range(n_ships):
                rows = np.nonzero(ships == s)[0]
                if rows.size == 0:
                    continue
                pos_occ = self.tables.occ[s]
                cur = self.ship_pos[rows, s]
                others = self.occ[rows] & ~pos_occ[cur]
                overlap = others.astype(np.uint8) @ self.tables.occ_u8[s].T
                legal = overlap == 0
                cnt = legal.sum(axis=1)
                target = np.floor(pick[rows] * cnt).astype(np.int64)
                cumsum = np.cumsum(legal, axis=1)
                prop = (cumsum > target[:, None]).argmax(axis=1)
                new_occ = others | pos_occ[prop]
                new_energy = self._constraint_energy(new_occ)
                accept = new_energy <= energy[rows]
                upd = rows[accept]
                self.ship_pos[upd, s] = prop[accept]
                self.occ[upd] = new_occ[accept]
                energy[upd] = new_energy[accept]
        return bool((energy == 0).any())

    def _refill_consistent(self, mix_sweeps: int = 8) -> bool:
        """Rebuild a fully dead particle set from found-consistent placements.

        A dozen exact region counts can pin the feasible set to a handful
        of placements no random walk finds; a pruned backtracking search
        over the per-ship position tables finds them whenever they exist.
        The refill is an importance sample of the posterior whose soft-shot
        weights the mixing sweeps restore; the alternative is giving up.
        """
        solutions = self._search_consistent(self.n_particles)
        if not solutions:
            return False
        pool = np.stack(solutions)
        n = self.n_particles
        self.ship_pos = pool[self.rng.integers(0, pool.shape[0], size=n)].astype(
            np.int32
        )
        self.occ = self._occupancy(self.ship_pos)
        self._run_sweeps(mix_sweeps)
        return True

    def _search_consistent(
        self, want: int, node_budget: int = 300_000
    ) -> list[np.ndarray]:
        """Up to `want` placements satisfying every hard constraint.

        Depth-first over per-ship positions in randomized order, pruning on
        disjointness, per-question count ranges (reachable-count bounds),
        and, at eps = 0, observed shot returns.  Complete up to the node
        budget: an empty result with budget left really means infeasible.
        """
        n_ships = len(self.config.fleet)
        n_q = self._q_masks.shape[0]
        lo = np.zeros(n_q, dtype=np.int64)
        hi = np.zeros(n_q, dtype=np.int64)
        for j, (val, kind) in enumerate(zip(self._q_vals, self._q_kinds)):
            if kind == "count":
                lo[j] = hi[j] = int(val)
            elif bool(val):
                lo[j], hi[j] = 1, 1 << 30
            else:
                lo[j] = hi[j] = 0

        if self.epsilon == 0.0 and self._shot_idx.size:
            miss_idx = self._shot_idx[~self._shot_val]
            hit_idx = self._shot_idx[self._shot_val]
        else:
            miss_idx = np.zeros(0, dtype=np.int64)
            hit_idx = np.zeros(0, dtype=np.int64)

        masks_t = self._q_masks.astype(np.int64).T
        positions: list[np.ndarray] = []
        overlaps: list[np.ndarray] = []
        bit_rows: list[list[int]] = []
        ship_union: list[int] = []
        for s in range(n_ships):
            occ = self.tables.occ[s]
            ok = np.ones(occ.shape[0], dtype=bool)
            if miss_idx.size:
                ok &= ~occ[:, miss_idx].any(axis=1)
            allowed = np.nonzero(ok)[0]
            if allowed.size == 0:
                return []
            order = self.rng.permutation(allowed)
            positions.append(order)
            overlaps.append(self.tables.occ_u8[s][order].astype(np.int64) @ masks_t)
            rows = []
            union = 0
            for p in order:
                bits = 0
                for idx in np.nonzero(occ[p])[0]:
                    bits |= 1 << int(idx)
                rows.append(bits)
                union |= bits
            bit_rows.append(rows)
            ship_union.append(union)

        suffix_max = [np.zeros(n_q, dtype=np.int64) for _ in range(n_ships + 1)]
        for s in range(n_ships - 1, -1, -1):
            suffix_max[s] = suffix_max[s + 1] + overlaps[s].max(axis=0)
        cover_suffix = [0] * (n_ships + 1)
        for s in range(n_ships - 1, -1, -1):
            cover_suffix[s] = cover_suffix[s + 1] | ship_union[s]

        hits_bits = 0
        for idx in hit_idx:
            hits_bits |= 1 << int(idx)

        solutions: list[np.ndarray] = []
        current = np.zeros(n_ships, dtype=np.int64)
        budget = node_budget

        def dfs(s: int, used: int, counts: np.ndarray, hits_left: int) -> None:
            nonlocal budget
            if len(solutions) >= want or budget <= 0:
                return
            if s == n_ships:
                if hits_left == 0:
                    solutions.append(current.copy())
                return
            if hits_left & ~cover_suffix[s]:
                return
            over = overlaps[s]
            rows = bit_rows[s]
            for i, p in enumerate(positions[s]):
                budget -= 1
                if budget <= 0 or len(solutions) >= want:
                    return
                bits = rows[i]
                if used & bits:
                    continue
                new_counts = counts + over[i]
                if np.any(new_counts > hi):
                    continue
                if np.any(new_counts + suffix_max[s + 1] < lo):
                    continue
                current[s] = p
                dfs(s + 1, used | bits, new_counts, hits_left & ~bits)

        dfs(0, 0, np.zeros(n_q, dtype=np.int64), hits_bits)
        return solutions

    # -- posterior-predictive previews (pure; never consume randomness)

    def _distinct_groups(self) -> np.ndarray:
        """Map each particle to the index of its distinct placement."""
        _, inverse = np.unique(self.ship_pos, axis=0, return_inverse=True)
        return inverse

    def _group_entropy(self, inverse: np.ndarray, weights: np.ndarray) -> float:
        """Shannon entropy of the placement distribution under `weights`.

        Duplicated particles pool their weight, so this measures uncertainty
        over distinct placements, not over particle indices: a posterior
        concentrated on one placement scores exactly 0 however many copies
        carry it.
        """
        mass = np.bincount(inverse, weights=weights)
        total = float(mass.sum())
        if total <= 0.0:
            return 0.0
        p = mass[mass > 0.0] / total
        return float(-(p * np.log(p)).sum())

    def preview_shot(self, cell: Cell) -> tuple[float, float]:
        """Expected one-step collapse of placement entropy from shooting `cell`.

        Returns (expected_collapse, observed_hit_probability). Computed by
        exact posterior-predictive reweighting of the current particle set;
        the live particles are never touched. The collapse equals the mutual
        information between the placement and the noisy return, so it is
        nonnegative for every noise level.
        """
        truth = self._occ_f[:, self.config.cell_index(cell)]
        p_hit = truth * (1.0 - self.epsilon) + (1.0 - truth) * self.epsilon
        prob_hit = float(p_hit.mean())
        inverse = self._distinct_groups()
        h_now = self._group_entropy(inverse, np.ones_like(p_hit))
        expected = 0.0
        if prob_hit > 0.0:
            expected += prob_hit * self._group_entropy(inverse, p_hit)
        if prob_hit < 1.0:
            expected += (1.0 - prob_hit) * self._group_entropy(inverse, 1.0 - p_hit)
        return h_now - expected, prob_hit

    def preview_question(self, q: Question) -> float:
        """Expected one-step collapse of placement entropy from asking `q`.

        The outcome space is the set of answer values realized by the current
        particles; answers are truthful so each outcome's weight is its
        particle frequency. A question answered identically under every
        particle scores exactly 0.
        """
        mask = np.zeros(self.config.cell_count, dtype=np.float64)
        for cell in q.cells():
            mask[self.config.cell_index(cell)] = 1.0
        counts = self._occ_f @ mask
        if q.kind == "any":
            counts = (counts > 0).astype(np.float64)
        inverse = self._distinct_groups()
        h_now = self._group_entropy(inverse, np.ones_like(counts))
        expected = 0.0
        n = counts.shape[0]
        for value in np.unique(counts):
            sel = counts == value
            p = float(sel.sum()) / n
            expected += p * self._group_entropy(inverse, sel.astype(np.float64))
        return h_now - expected


# ---------------------------------------------------------------------------
# exact enumeration oracle


def exact_posterior(
    config: BoardConfig,
    history: list[Observation],
    epsilon: float,
    max_placements: int = 1_000_000,
) -> np.ndarray:
    """Cell marginals by exhaustive enumeration, for small boards.

    Raises TooLargeToEnumerate when the product of per-ship position counts
    exceeds the budget, and DegeneratePosterior when no placement is
    consistent with the history.
    """
    from .world import _enumerate_fleets

    tables = [ship_positions(config, length) for length in config.fleet]
    estimate = 1
    for t in tables:
        estimate *= max(len(t), 1)
    if estimate > max_placements:
        raise TooLargeToEnumerate(f"{estimate} candidate placements")
    fleets = _enumerate_fleets(config, tables)
    if not fleets:
        raise DegeneratePosterior("no legal placements at all")
    occ = np.zeros((len(fleets), config.cell_count), dtype=np.float64)
    for i, ships in enumerate(fleets):
        for s in ships:
            for cell in s.cells():
                occ[i, config.cell_index(cell)] = 1.0

    shot_idx = [config.cell_index(o.cell) for o in history if isinstance(o, ShotReturn)]
    shot_val = [o.observed_hit for o in history if isinstance(o, ShotReturn)]
    weights = np.ones(len(fleets), dtype=np.float64)
    if shot_idx:
        truth = occ[:, shot_idx].astype(bool)
        mism = (truth != np.asarray(shot_val, dtype=bool)).sum(axis=1)
        match = len(shot_idx) - mism
        weights = ((1.0 - epsilon) ** match) * (epsilon ** mism)
    for o in history:
        if isinstance(o, QuestionAnswer):
            mask = np.zeros(config.cell_count, dtype=np.float64)
            for cell in o.question.cells():
                mask[config.cell_index(cell)] = 1.0
            counts = occ @ mask
            if o.question.kind == "count":
                weights = weights * (counts == o.value)
            else:
                weights = weights * ((counts > 0) == bool(o.value))
    total = weights.sum()
    if total == 0.0:
        raise DegeneratePosterior("history is inconsistent with every placement")
    return (weights @ occ) / total
