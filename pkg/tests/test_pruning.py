import numpy as np
import pytest

from cismr.errors import ValidationError
from cismr.pruning import DEFAULT_THRESHOLDS, clr_method_name, prune, prune_indices, variant_instrument_set
from cismr.summary_data import SummaryDataset

from conftest import random_corr


def oracle_prune(rho, strength, thr):
    """Independent greedy pruning: walk variants by decreasing |t| (ties by index)."""
    order = sorted(range(len(strength)), key=lambda j: (-abs(strength[j]), j))
    kept = []
    for j in order:
        if all(rho[j, i] ** 2 <= thr + 1e-12 for i in kept):
            kept.append(j)
    return tuple(kept)


def test_identity_keeps_all():
    assert sorted(prune_indices(np.eye(6), np.arange(6) + 1.0, 0.01)) == list(range(6))


def test_perfectly_correlated_pair():
    rho = np.ones((2, 2))
    assert prune_indices(rho, [1.0, -3.0], 0.8) == (1,)


def test_matches_oracle(rng):
    for _ in range(20):
        rho = random_corr(rng, 10, extra=-7)  # strongly correlated: rank 3 + diagonal fix
        strength = rng.standard_normal(10)
        for thr in (0.4,) + DEFAULT_THRESHOLDS:
            assert prune_indices(rho, strength, thr) == oracle_prune(rho, strength, thr)


def _strength_order(strength):
    return sorted(range(len(strength)), key=lambda j: (-abs(strength[j]), j))


def test_higher_threshold_dominates_in_strength_order(rng):
    # along the strength ranking, the first variant on which two thresholds
    # disagree is kept by the looser one
    for _ in range(20):
        rho = random_corr(rng, 40, extra=-30)
        strength = rng.standard_normal(40)
        order = _strength_order(strength)
        sets = [set(prune_indices(rho, strength, t)) for t in DEFAULT_THRESHOLDS]
        for lo, hi in zip(sets, sets[1:]):
            diff = [j for j in order if (j in lo) != (j in hi)]
            if diff:
                assert diff[0] in hi
            assert order[0] in lo and order[0] in hi


def test_nested_on_block_ld():
    # independent blocks, equicorrelated within: pruning is nested in the threshold
    blocks = [0.95, 0.7, 0.5, 0.3, 0.05]
    p = 4 * len(blocks)
    rho = np.eye(p)
    for b, c in enumerate(blocks):
        sl = slice(4 * b, 4 * b + 4)
        rho[sl, sl] = c
    np.fill_diagonal(rho, 1.0)
    strength = np.linspace(3, 1, p)
    sets = [set(prune_indices(rho, strength, t)) for t in DEFAULT_THRESHOLDS]
    for lo, hi in zip(sets, sets[1:]):
        assert lo <= hi
    assert [len(s) for s in sets] == [8, 11, 14, 17, 17]


def test_greedy_not_nested_in_general():
    # A strongest; r2(A,B)=0.3; C and D each r2 0.9 with B only
    r = np.sqrt([0.3, 0.9])
    rho = np.eye(4)
    rho[0, 1] = rho[1, 0] = r[0]
    rho[1, 2] = rho[2, 1] = rho[1, 3] = rho[3, 1] = r[1]
    strength = [4.0, 3.0, 2.0, 1.0]
    assert prune_indices(rho, strength, 0.2) == (0, 2, 3)
    assert prune_indices(rho, strength, 0.4) == (0, 1)


def test_deterministic(rng):
    rho = random_corr(rng, 15)
    s = rng.standard_normal(15)
    assert prune_indices(rho, s, 0.2) == prune_indices(rho.copy(), s.copy(), 0.2)


def test_selection_matrix():
    from cismr.pruning import PruneResult

    w = variant_instrument_set(PruneResult((0, 2), 0.2, np.zeros(3)), 3).w
    np.testing.assert_array_equal(w, [[1, 0], [0, 0], [0, 1]])
    w = variant_instrument_set(PruneResult((0, 1, 2), 0.2, np.zeros(3)), 3).w
    np.testing.assert_array_equal(w, np.eye(3))


def test_prune_on_dataset_and_names():
    rho = np.array([[1, 0.95, 0.0], [0.95, 1, 0.1], [0.0, 0.1, 1]])
    ds = SummaryDataset(("a", "b", "c"), [1.0, 2.0, 0.5], [1, 1, 1], [0, 0, 0], [1, 1, 1], rho)
    pr = prune(ds, 0.6)
    assert pr.kept == (1, 2)
    assert pr.method_name == "CLR-60"
    assert [clr_method_name(t) for t in DEFAULT_THRESHOLDS] == ["CLR-01", "CLR-20", "CLR-40", "CLR-60", "CLR-80"]
    with pytest.raises(ValidationError):
        prune(ds, 0.0)
