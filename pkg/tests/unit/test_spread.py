"""Tests for hc_influence.spread.py."""

import itertools

import numpy as np
import pytest

from hc_influence.exceptions import (
    EmptyInteriorError,
    InvalidNetworkParameter,
    InvalidSeedSet,
    MaskedEntryError,
    SingularSystemError,
    UnknownMethodError,
    UnsupportedBackendError,
)
from hc_influence.graph import Network, augment_with_bias, build_transition_system
from hc_influence.spread import (
    AUTO,
    DENSE,
    NEUMANN,
    Backend,
    ClosedFormSpread,
    absorption_from_fundamental,
    compute_fundamental_dense,
    compute_fundamental_neumann,
    influence_spread,
    identity_residual,
    marginal_gains,
    resolve_backend,
    single_seed_absorption,
    steady_state,
    update_fundamental_rank1,
)

TWO_NODE_F = np.array([[1.0, 0.9], [0.9, 1.0]]) / 0.19


def test_compute_fundamental_dense_two_node(two_node_augmented):
    """F = (I - R)^-1 with its diagonal and column sums."""
    fundamental = compute_fundamental_dense(build_transition_system(two_node_augmented))

    np.testing.assert_allclose(fundamental.dense(), TWO_NODE_F)
    np.testing.assert_allclose(fundamental.diagonal, [5.263158, 5.263158], rtol=1e-6)
    np.testing.assert_allclose(fundamental.column_sums, [10.0, 10.0])
    np.testing.assert_array_equal(fundamental.interior, [0, 1])
    assert fundamental.entry(0, 1) == pytest.approx(4.736842, rel=1e-6)
    assert fundamental.backend.kind == DENSE


def test_fundamental_identity_residual(random_augmented):
    """An exact inverse satisfies F = I + F R."""
    system = build_transition_system(random_augmented, [2])
    fundamental = compute_fundamental_dense(system)

    assert identity_residual(fundamental, system) < 1e-10


def test_compute_fundamental_neumann_two_node(two_node_augmented):
    """With T = 2 the series is I + R + R^2."""
    system = build_transition_system(two_node_augmented)

    fundamental = compute_fundamental_neumann(system, 2)

    np.testing.assert_allclose(fundamental.diagonal, [1.81, 1.81])
    np.testing.assert_allclose(fundamental.column_sums, [2.71, 2.71])
    assert fundamental.backend == Backend.neumann(2)


def test_compute_fundamental_neumann_zero_truncation(random_augmented):
    """With T = 0 the series is the identity."""
    system = build_transition_system(random_augmented)

    fundamental = compute_fundamental_neumann(system, 0)

    np.testing.assert_allclose(fundamental.diagonal, 1.0)
    np.testing.assert_allclose(fundamental.column_sums, 1.0)


def test_compute_fundamental_neumann_converges(random_augmented):
    """A long truncation approaches the exact fundamental matrix."""
    system = build_transition_system(random_augmented, [0])
    exact = compute_fundamental_dense(system)

    approximate = compute_fundamental_neumann(system, 400)

    np.testing.assert_allclose(approximate.diagonal, exact.diagonal, rtol=1e-8)
    np.testing.assert_allclose(approximate.column_sums, exact.column_sums, rtol=1e-8)
    for node in system.interior:
        np.testing.assert_allclose(
            approximate.column(node), exact.column(node), rtol=1e-8
        )


def test_compute_fundamental_neumann_sampled(medium_augmented):
    """Sampled diagonals are at least one and close to the exact diagonal."""
    system = build_transition_system(medium_augmented)
    exact = compute_fundamental_neumann(system, 6)

    sampled = compute_fundamental_neumann(system, 6, samples=2000, rng_seed=4)

    assert np.all(sampled.diagonal >= 1.0)
    np.testing.assert_allclose(sampled.diagonal, exact.diagonal, atol=0.15)
    np.testing.assert_array_equal(sampled.column_sums, exact.column_sums)


def test_compute_fundamental_dense_empty_interior(two_node_augmented):
    """With every original node seeded there is nothing to invert."""
    system = build_transition_system(two_node_augmented, [0, 1])

    with pytest.raises(EmptyInteriorError):
        compute_fundamental_dense(system)


def test_compute_fundamental_dense_trapped_node():
    """A cycle with no bias and no seed cannot reach the boundary."""
    network = Network.from_edges(3, [(0, 1, 1.0), (1, 0, 1.0), (2, 0, 1.0)], beta=0.0)
    system = build_transition_system(augment_with_bias(network), [2])

    with pytest.raises(SingularSystemError) as error:
        compute_fundamental_dense(system)

    assert error.value.trapped_node == 0


def test_update_fundamental_rank1_matches_recompute(random_augmented):
    """Removing a node by a rank-1 update equals recomputing with it seeded."""
    fundamental = compute_fundamental_dense(build_transition_system(random_augmented))

    updated = update_fundamental_rank1(fundamental, 3)
    updated = update_fundamental_rank1(updated, 6)
    expected = compute_fundamental_dense(
        build_transition_system(random_augmented, [3, 6])
    )

    np.testing.assert_array_equal(updated.interior, expected.interior)
    np.testing.assert_allclose(updated.dense(), expected.dense(), atol=1e-10)
    np.testing.assert_allclose(
        updated.normalized_column_sums(),
        expected.column_sums / expected.diagonal,
        atol=1e-10,
    )
    assert updated.seed_context.members == (3, 6)


@pytest.mark.parametrize('chain_seed', [1, 2, 3])
def test_update_fundamental_rank1_chain(medium_augmented, chain_seed):
    """Five successive updates track a fresh inverse after every step."""
    chain = [
        int(node)
        for node in np.random.default_rng(chain_seed).choice(40, 5, replace=False)
    ]
    fundamental = compute_fundamental_dense(build_transition_system(medium_augmented))

    for length, node in enumerate(chain, start=1):
        fundamental = update_fundamental_rank1(fundamental, node)
        expected = compute_fundamental_dense(
            build_transition_system(medium_augmented, chain[:length])
        )

        np.testing.assert_array_equal(fundamental.interior, expected.interior)
        np.testing.assert_allclose(
            fundamental.dense(), expected.dense(), rtol=0, atol=1e-9
        )


def test_update_fundamental_rank1_masks_seed(two_node_augmented):
    """The new seed is masked and the input is untouched unless in place."""
    fundamental = compute_fundamental_dense(build_transition_system(two_node_augmented))

    updated = update_fundamental_rank1(fundamental, 0)

    np.testing.assert_allclose(updated.dense(), [[1.0]], atol=1e-12)
    np.testing.assert_allclose(fundamental.dense(), TWO_NODE_F)
    with pytest.raises(MaskedEntryError):
        updated.entry(0, 1)


def test_update_fundamental_rank1_neumann_unsupported(two_node_augmented):
    """Rank-1 updates need the dense values."""
    fundamental = compute_fundamental_neumann(
        build_transition_system(two_node_augmented), 3
    )

    with pytest.raises(UnsupportedBackendError):
        update_fundamental_rank1(fundamental, 0)

    with pytest.raises(UnsupportedBackendError):
        fundamental.dense()


def test_absorption_from_fundamental(random_augmented):
    """Absorption probabilities are nonnegative and every row sums to one."""
    system = build_transition_system(random_augmented, [1, 5])
    fundamental = compute_fundamental_dense(system)

    absorption = absorption_from_fundamental(fundamental, system)

    assert absorption.Q.shape == (system.n_interior, 3)
    assert np.all(absorption.Q >= -1e-12)
    np.testing.assert_allclose(absorption.Q.sum(axis=1), 1.0)


def test_single_seed_absorption(random_augmented):
    """F[:, s] / F[s, s] is the absorption into s once s becomes a seed."""
    fundamental = compute_fundamental_dense(build_transition_system(random_augmented))
    system = build_transition_system(random_augmented, [4])
    expected = absorption_from_fundamental(
        compute_fundamental_dense(system), system
    ).column(4)

    absorbed = single_seed_absorption(fundamental, 4)

    np.testing.assert_allclose(absorbed[fundamental.interior != 4], expected)
    assert absorbed[4] == pytest.approx(1.0)


def test_steady_state_two_node(two_node_augmented):
    """The non-seed node adopts with probability 0.9."""
    system = build_transition_system(two_node_augmented, [0])

    state = steady_state(system)

    np.testing.assert_allclose(state.v, [1.0, 0.9, 0.0])
    assert state.sigma == pytest.approx(1.9)


def test_steady_state_with_bias(two_node_network):
    """With b = 1 and no seeds every node converges to one."""
    system = build_transition_system(augment_with_bias(two_node_network, 1.0))

    state = steady_state(system, 1.0)

    np.testing.assert_allclose(state.v, 1.0)
    assert state.sigma == pytest.approx(2.0)


def test_steady_state_from_fundamental(random_augmented):
    """Steady states read from F equal those from a sparse solve."""
    system = build_transition_system(random_augmented, [0, 7])
    fundamental = compute_fundamental_dense(system)

    from_solve = steady_state(system, 0.4)
    from_fundamental = steady_state(system, 0.4, fundamental=fundamental)

    np.testing.assert_allclose(from_fundamental.v, from_solve.v)


@pytest.mark.parametrize('b', [0.0, 0.4])
def test_steady_state_is_harmonic(medium_augmented, b):
    """Every interior value equals the weighted average of its neighbours."""
    system = build_transition_system(medium_augmented, [0, 7, 21])

    state = steady_state(system, b)

    residual = system.P @ state.v - state.v
    assert np.max(np.abs(residual[system.interior])) < 1e-9


def test_steady_state_invalid_b(two_node_augmented):
    """The bias value must be a probability."""
    with pytest.raises(InvalidNetworkParameter):
        steady_state(build_transition_system(two_node_augmented), 2.0)


def test_influence_spread_two_node(two_node_augmented):
    """One seed reaches the other node with probability 0.9."""
    assert influence_spread(two_node_augmented, [0]) == pytest.approx(1.9)
    assert influence_spread(two_node_augmented, [0, 1]) == pytest.approx(2.0)


def test_influence_spread_star(star_augmented):
    """The hub reaches each leaf with probability 0.9; a leaf reaches nobody."""
    assert influence_spread(star_augmented, [0]) == pytest.approx(3.7)
    assert influence_spread(star_augmented, [1]) == pytest.approx(1.0)


def test_influence_spread_empty_seeds(two_node_augmented, two_node_network):
    """Empty seed sets are rejected when b = 0 and reach b-mass otherwise."""
    with pytest.raises(InvalidSeedSet):
        influence_spread(two_node_augmented, [])

    with_bias = augment_with_bias(two_node_network, 0.5)
    assert influence_spread(with_bias, []) == pytest.approx(1.0)


def test_influence_spread_backends_agree(random_augmented):
    """Neumann with a long truncation agrees with the dense backend."""
    dense = influence_spread(random_augmented, [2, 5], Backend.dense())
    neumann = influence_spread(random_augmented, [2, 5], Backend.neumann(400))

    assert neumann == pytest.approx(dense, rel=1e-8)


def test_influence_spread_monotone(random_augmented):
    """Adding a seed never lowers the spread."""
    previous = 0.0
    seeds = []
    for node in [6, 1, 3, 0]:
        seeds.append(node)
        sigma = influence_spread(random_augmented, seeds)
        assert sigma >= previous - 1e-12
        previous = sigma


def test_closed_form_spread_matches_influence_spread(random_augmented):
    """The single-factorization evaluator agrees with a fresh solve."""
    oracle = ClosedFormSpread(random_augmented)

    for subset in itertools.combinations(range(random_augmented.n_raw), 2):
        assert oracle.sigma(subset) == pytest.approx(
            influence_spread(random_augmented, subset), rel=1e-9
        )
    assert oracle.evaluations == 28


def test_closed_form_spread_batch(random_augmented):
    """Batched evaluation matches one-at-a-time evaluation."""
    oracle = ClosedFormSpread(random_augmented)
    subsets = np.array(list(itertools.combinations(range(8), 3)))

    batched = oracle.sigma_batch(subsets)

    np.testing.assert_allclose(batched, [oracle.sigma(subset) for subset in subsets])


def test_closed_form_spread_steady_state(random_augmented):
    """Adoption probabilities match the harmonic steady state."""
    oracle = ClosedFormSpread(random_augmented)
    expected = steady_state(build_transition_system(random_augmented, [3, 4])).v

    np.testing.assert_allclose(oracle.steady_state_values([3, 4]), expected[:8])


def test_closed_form_spread_requires_zero_bias(two_node_network):
    """The empty-set factorization only describes b = 0."""
    with pytest.raises(InvalidNetworkParameter):
        ClosedFormSpread(augment_with_bias(two_node_network, 0.2))


def test_marginal_gains_match_differences(random_augmented):
    """Closed-form gains equal differences of exact spreads."""
    seeds = [1, 4]
    sigma = influence_spread(random_augmented, seeds)

    gains = marginal_gains(random_augmented, seeds)

    for node in range(random_augmented.n_raw):
        if node in seeds:
            assert gains[node] == 0.0
        else:
            expected = influence_spread(random_augmented, seeds + [node]) - sigma
            assert gains[node] == pytest.approx(expected, abs=1e-9)


def test_marginal_gains_with_bias(random_network):
    """Gains with b > 0 also equal differences of steady-state sums."""
    augmented = augment_with_bias(random_network, 0.3)
    sigma = influence_spread(augmented, [2])

    gains = marginal_gains(augmented, [2])

    for node in (0, 5, 7):
        expected = influence_spread(augmented, [2, node]) - sigma
        assert gains[node] == pytest.approx(expected, abs=1e-9)


def test_marginal_gains_diminish(random_augmented):
    """Gains at a superset never exceed gains at a subset."""
    small = marginal_gains(random_augmented, [0])
    large = marginal_gains(random_augmented, [0, 3, 6])

    for node in (1, 2, 4, 5, 7):
        assert large[node] <= small[node] + 1e-9


def test_backend_parse():
    """Backends parse from their short names."""
    assert Backend.parse('auto') == AUTO
    assert Backend.parse('dense') == Backend.dense()
    assert Backend.parse('neumann:3') == Backend(NEUMANN, 3)
    assert Backend.parse('neumann') == Backend(NEUMANN, None)
    assert str(Backend.neumann(5)) == 'neumann:5'
    assert str(Backend.dense()) == 'dense'

    with pytest.raises(UnknownMethodError):
        Backend.parse('cholesky')

    with pytest.raises(InvalidNetworkParameter):
        Backend.neumann(-1)


def test_resolve_backend(two_node_augmented, cycle_network):
    """Auto picks dense for small graphs and Neumann above the threshold."""
    assert resolve_backend('auto', two_node_augmented) == Backend.dense()
    assert resolve_backend(
        'auto', two_node_augmented, dense_threshold=1, truncation=4
    ) == Backend.neumann(4)

    resolved = resolve_backend('neumann', augment_with_bias(cycle_network))
    assert resolved == Backend.neumann(2)
