"""Posterior tests, anchored on an exact enumeration oracle for small boards."""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from shiplab.world import BoardConfig, Question, QuestionAnswer, ShotReturn, place_fleet
from shiplab.belief import (
    DegeneratePosterior,
    Posterior,
    TooLargeToEnumerate,
    bernoulli_entropy,
    entropy_of_marginals,
    exact_posterior,
    likelihood,
    mh_step,
)


def rng(seed: int = 0) -> np.random.Generator:
    return np.random.default_rng(seed)


TINY = BoardConfig(width=5, height=1, fleet=(2,), shot_budget=5, question_budget=5,
                   noise_epsilon=0.1)
SMALL = BoardConfig(width=4, height=4, fleet=(3, 2), shot_budget=16, question_budget=8,
                    noise_epsilon=0.1)


# ---------------------------------------------------------------------------
# exact enumeration oracle


def test_exact_posterior_tiny_board_by_hand():
    # A length-2 ship on a 1x5 strip has 4 positions; cell coverage counts
    # are 1,2,2,2,1 out of 4.
    marg = exact_posterior(TINY, [], 0.0)
    assert marg.shape == (5,)
    assert np.allclose(marg, [0.25, 0.5, 0.5, 0.5, 0.25])


def test_exact_posterior_conditions_on_noiseless_miss():
    # A miss at cell 0 removes the leftmost position; coverage becomes
    # 0,1,2,2,1 out of 3 placements.
    obs = [ShotReturn(cell=(0, 0), observed_hit=False)]
    marg = exact_posterior(TINY, obs, 0.0)
    assert np.allclose(marg, [0.0, 1 / 3, 2 / 3, 2 / 3, 1 / 3])


def test_exact_posterior_noisy_shot_reweights():
    # With noise, a miss at cell 0 keeps all 4 placements but down-weights
    # the one covering cell 0 by eps/(1-eps).
    eps = 0.1
    obs = [ShotReturn(cell=(0, 0), observed_hit=False)]
    marg = exact_posterior(TINY, obs, eps)
    w = [eps, 0.9, 0.9, 0.9]  # placement at col 0 covers the miss cell
    total = sum(w)
    expect0 = w[0] / total
    assert marg[0] == pytest.approx(expect0)
    assert marg[2] == pytest.approx((w[1] + w[2]) / total)


def test_exact_posterior_question_answer_prunes():
    # count = 0 in the first two cells forces the ship into cols 2..4.
    q = Question(top=0, left=0, height=1, width=2, kind="count")
    obs = [QuestionAnswer(question=q, value=0)]
    marg = exact_posterior(TINY, obs, 0.1)
    assert np.allclose(marg, [0.0, 0.0, 0.5, 1.0, 0.5])


def test_exact_posterior_sums_to_fleet_size():
    marg = exact_posterior(SMALL, [], 0.0)
    assert marg.sum() == pytest.approx(5.0)  # 3 + 2 ship cells in expectation


def test_exact_posterior_degenerate_history_raises():
    q = Question(top=0, left=0, height=1, width=5, kind="count")
    obs = [QuestionAnswer(question=q, value=0)]  # the whole strip holds 2 cells
    with pytest.raises(DegeneratePosterior):
        exact_posterior(TINY, obs, 0.0)


def test_exact_posterior_refuses_large_boards():
    with pytest.raises(TooLargeToEnumerate):
        exact_posterior(BoardConfig(), [], 0.1)


# ---------------------------------------------------------------------------
# likelihood


def test_likelihood_empty_history_is_one():
    p = place_fleet(SMALL, rng(0))
    assert likelihood(p, [], 0.1) == 1.0


def test_likelihood_formula_arithmetic():
    # 3 consistent shot returns and 1 inconsistent: 0.9^3 * 0.1
    p = place_fleet(SMALL, rng(1))
    occ = p.occupied
    cells = sorted((r, c) for r in range(4) for c in range(4))
    history = []
    consistent = 0
    for cell in cells:
        truth = cell in occ
        if consistent < 3:
            history.append(ShotReturn(cell=cell, observed_hit=truth))
            consistent += 1
        else:
            history.append(ShotReturn(cell=cell, observed_hit=not truth))
            break
    assert likelihood(p, history, 0.1) == pytest.approx(0.9 ** 3 * 0.1)


def test_likelihood_inconsistent_answer_is_zero():
    p = place_fleet(SMALL, rng(2))
    q = Question(top=0, left=0, height=4, width=4, kind="count")
    wrong = QuestionAnswer(question=q, value=1)  # true count is 5
    assert likelihood(p, [wrong], 0.1) == 0.0


# ---------------------------------------------------------------------------
# Metropolis-Hastings kernel


def test_mh_step_recovers_from_inconsistent_state():
    # eps = 0 and an observed hit the current placement misses: any accepted
    # proposal must be strictly better, and the dead state is always left
    # when a consistent proposal appears.
    g = rng(3)
    p = place_fleet(TINY, g)
    # craft an observation inconsistent with p: a hit on a cell p misses
    water = next(c for c in [(0, i) for i in range(5)] if c not in p.occupied)
    history = [ShotReturn(cell=water, observed_hit=True)]
    moved = False
    current = p
    for _ in range(50):
        current = mh_step(TINY, current, history, 0.0, g)
        if likelihood(current, history, 0.0) > 0:
            moved = True
            break
    assert moved


def test_mh_step_self_proposal_accepted():
    cfg = BoardConfig(width=5, height=1, fleet=(5,), shot_budget=5, question_budget=0)
    p = place_fleet(cfg, rng(4))
    stepped = mh_step(cfg, p, [], 0.0, rng(5))
    assert stepped == p  # only one legal position exists


def test_mh_detailed_balance_on_tiny_board():
    # Long-run visit frequencies over the 4 legal placements match the
    # uniform prior within 2% after 1e5 steps.
    g = rng(6)
    current = place_fleet(TINY, g)
    counts: dict[int, int] = {}
    steps = 100_000
    for _ in range(steps):
        current = mh_step(TINY, current, [], 0.1, g)
        col = current.ships[0].col
        counts[col] = counts.get(col, 0) + 1
    freqs = [counts.get(c, 0) / steps for c in range(4)]
    for f in freqs:
        assert abs(f - 0.25) <= 0.02


# ---------------------------------------------------------------------------
# particle posterior against the oracle


def random_history(config: BoardConfig, epsilon: float, g: np.random.Generator,
                   length: int):
    """A plausible observation history sampled from a hidden placement."""
    from shiplab.world import answer_question, resolve_shot

    hidden = place_fleet(config, g)
    cells = [(r, c) for r in range(config.height) for c in range(config.width)]
    obs = []
    fired: set = set()
    for _ in range(length):
        if g.random() < 0.3:
            top = int(g.integers(0, config.height))
            left = int(g.integers(0, config.width))
            h = int(g.integers(1, config.height - top + 1))
            w = int(g.integers(1, config.width - left + 1))
            q = Question(top=top, left=left, height=h, width=w, kind="count")
            obs.append(QuestionAnswer(question=q, value=answer_question(hidden, q)))
        else:
            open_cells = [c for c in cells if c not in fired]
            cell = open_cells[int(g.integers(0, len(open_cells)))]
            fired.add(cell)
            obs.append(resolve_shot(hidden, cell, epsilon, g))
    return obs


def test_posterior_matches_oracle_on_small_board():
    # The headline equivalence check: 20 random histories, both noise
    # settings, L-inf <= 0.05 against exhaustive enumeration.
    start = time.monotonic()
    worst = 0.0
    for epsilon in (0.0, 0.1):
        for i in range(10):
            g = rng(1000 + i)
            history = random_history(SMALL, epsilon, g, length=int(g.integers(0, 7)))
            cfg = SMALL if epsilon else BoardConfig(
                width=4, height=4, fleet=(3, 2), shot_budget=16,
                question_budget=8, noise_epsilon=0.0)
            post = Posterior.initialize(cfg, n_particles=500, rng=rng(2000 + i))
            for obs in history:
                post.update(obs, sweeps=20)
            exact = exact_posterior(cfg, history, epsilon)
            gap = float(np.max(np.abs(post.marginals - exact)))
            worst = max(worst, gap)
            assert gap <= 0.05, f"eps={epsilon} history {i}: L-inf {gap:.4f}"
    assert time.monotonic() - start < 30.0
    assert worst > 0.0  # the approximation is genuinely approximate


def test_posterior_zero_noise_miss_zeroes_the_cell():
    cfg = BoardConfig(width=4, height=4, fleet=(3, 2), shot_budget=16,
                      question_budget=8, noise_epsilon=0.0)
    post = Posterior.initialize(cfg, n_particles=500, rng=rng(42))
    post.update(ShotReturn(cell=(1, 1), observed_hit=False), sweeps=20)
    assert post.marginals[cfg.cell_index((1, 1))] == 0.0


def test_posterior_marginal_sum_tracks_fleet_size():
    post = Posterior.initialize(SMALL, n_particles=500, rng=rng(7))
    assert abs(float(post.marginals.sum()) - 5.0) <= 0.5


def test_posterior_determinism():
    cfg = SMALL
    a = Posterior.initialize(cfg, n_particles=200, rng=rng(11))
    b = Posterior.initialize(cfg, n_particles=200, rng=rng(11))
    obs = ShotReturn(cell=(2, 2), observed_hit=True)
    a.update(obs, sweeps=10)
    b.update(obs, sweeps=10)
    assert np.array_equal(a.ship_pos, b.ship_pos)
    assert a.digest() == b.digest()


def test_posterior_consistency_pruning_at_zero_noise():
    cfg = BoardConfig(width=4, height=4, fleet=(3, 2), shot_budget=16,
                      question_budget=8, noise_epsilon=0.0)
    g = rng(13)
    history = random_history(cfg, 0.0, g, length=4)
    post = Posterior.initialize(cfg, n_particles=300, rng=rng(14))
    for obs in history:
        post.update(obs, sweeps=20)
    for placement in post.placements():
        assert likelihood(placement, history, 0.0) > 0.0


# ---------------------------------------------------------------------------
# entropy


def test_bernoulli_entropy_endpoints():
    assert bernoulli_entropy(0.0) == 0.0
    assert bernoulli_entropy(1.0) == 0.0
    assert bernoulli_entropy(0.5) == pytest.approx(math.log(2), abs=1e-12)


def test_entropy_of_marginals_single_uncertain_cell():
    marg = np.zeros(16)
    marg[3] = 1.0
    marg[7] = 0.5
    assert entropy_of_marginals(marg) == pytest.approx(math.log(2), abs=1e-12)


def test_entropy_zero_for_determined_posterior():
    marg = np.array([0.0, 1.0, 1.0, 0.0])
    assert entropy_of_marginals(marg) == 0.0
