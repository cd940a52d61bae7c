import numpy as np
import pytest

import manetopt as mo


def interior_point(topo, noise, rng, margin=1e-3):
    """Random feasible point away from every branch switch."""
    for _ in range(200):
        ch = mo.sample_channel(topo, 1.0, rng)
        p = mo.random_init(topo, rng)
        if mo.tie_margin(ch, p, noise) > margin:
            return ch, p
    raise RuntimeError("could not find an interior point")


def rel_err(analytic, fd):
    denom = np.maximum(np.maximum(np.abs(fd), np.abs(analytic)), 1e-6)
    return np.max(np.abs(analytic - fd) / denom)


def test_first_hop_self_derivative_closed_form():
    # Make the first hop binding by giving hop 2 a strong channel; then
    # d rate / d phi = (2 |h|^2 phi) / (ln 2 (|h|^2 phi^2 + sigma^2)).
    topo = mo.Topology((1, 1))
    ch = mo.ChannelRealization(
        first_hop=np.array([1.0 + 0j]), later_hops=(np.array([[10.0 + 0j]]),)
    )
    noise = mo.NoiseProfile((1.0, 1.0))
    p = np.ones((2, 1))
    g = mo.objective_gradient(ch, p, noise)
    assert g.active_hop == 1
    assert g.values[-1, 0] == pytest.approx(1.0 / np.log(2.0), rel=1e-12)
    # the relay's own coefficients are not part of the binding constraint
    assert g.values[0, 0] == 0.0


def test_gradient_support_is_binding_block():
    topo = mo.Topology((2, 3, 3))
    noise = mo.NoiseProfile((1.0, 1.0, 1.0))
    rng = np.random.default_rng(2)
    for _ in range(20):
        ch = mo.sample_channel(topo, 1.0, rng)
        p = mo.random_init(topo, rng)
        g = mo.objective_gradient(ch, p, noise)
        mask = np.zeros_like(g.values, dtype=bool)
        if g.active_hop == 1:
            mask[-1, :] = True
        else:
            mask[topo.block_rows(g.active_hop - 1), :] = True
        assert np.all(g.values[~mask] == 0.0)


def test_self_partial_positive_when_first_hop_binds():
    topo = mo.Topology((2, 2))
    noise = mo.NoiseProfile((1.0, 1.0))
    rng = np.random.default_rng(3)
    seen = 0
    while seen < 10:
        ch, p = interior_point(topo, noise, rng)
        g = mo.objective_gradient(ch, p, noise)
        if g.active_hop != 1:
            continue
        seen += 1
        assert g.values[-1, g.active_message] > 0.0


@pytest.mark.parametrize("sizes", [(2, 2), (3, 3)])
def test_gradient_matches_finite_differences(sizes):
    topo = mo.Topology(sizes)
    noise = mo.NoiseProfile((1.0, 1.0))
    rng = np.random.default_rng(17)
    worst = 0.0
    for _ in range(30):
        ch, p = interior_point(topo, noise, rng)
        analytic = mo.objective_gradient(ch, p, noise).values
        fd = mo.finite_difference_gradient(ch, p, noise, 1e-6)
        worst = max(worst, rel_err(analytic, fd))
    assert worst <= 1e-4


def test_gradient_matches_finite_differences_three_hops():
    # Guards the mapping from reception hops to transmit-layer blocks.
    topo = mo.Topology((2, 2, 2))
    noise = mo.NoiseProfile((1.0, 1.0, 1.0))
    rng = np.random.default_rng(23)
    for _ in range(10):
        ch, p = interior_point(topo, noise, rng)
        analytic = mo.objective_gradient(ch, p, noise).values
        fd = mo.finite_difference_gradient(ch, p, noise, 1e-6)
        assert rel_err(analytic, fd) <= 1e-4


def test_finite_difference_convergence_order():
    # Central differences: halving the step shrinks the error about 4x.
    topo = mo.Topology((2, 2))
    noise = mo.NoiseProfile((1.0, 1.0))
    rng = np.random.default_rng(29)
    ch, p = interior_point(topo, noise, rng, margin=5e-3)
    analytic = mo.objective_gradient(ch, p, noise).values
    errs = []
    for step in (2e-3, 1e-3, 5e-4):
        fd = mo.finite_difference_gradient(ch, p, noise, step)
        errs.append(np.max(np.abs(fd - analytic)))
    assert errs[0] > errs[1] > errs[2]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.5)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.5)


def test_oracle_differs_at_deliberate_tie():
    # Near a rate tie the subgradient of the selected branch need not match
    # central differences (the stencil straddles the argmin switch); such
    # points must be excluded by callers.
    ch = mo.ChannelRealization(
        first_hop=np.array([1.0 + 0j, 1.0 + 0j]),
        later_hops=(np.array([[10.0 + 0j, 10.0 + 0j], [10.0 + 0j, 10.0 + 0j]]),),
    )
    noise = mo.NoiseProfile((1.0, 1.0))
    p = mo.project(np.array([[1.0, 1.0], [1.0, 1.0], [1.0 + 1e-8, 1.0]]))
    assert mo.tie_margin(ch, p, noise) < 1e-3
    analytic = mo.objective_gradient(ch, p, noise).values
    fd = mo.finite_difference_gradient(ch, p, noise, 1e-6)
    assert not np.allclose(analytic, fd, atol=1e-6)


def test_batched_gradient_matches_scalar():
    topo = mo.Topology((2, 2))
    noise = mo.NoiseProfile((1.0, 1.0))
    rng = np.random.default_rng(31)
    ch = mo.sample_channel(topo, 1.0, rng)
    stack = np.stack([mo.random_init(topo, i) for i in range(5)])
    batched = mo.objective_gradient(ch, stack, noise)
    for i in range(5):
        single = mo.objective_gradient(ch, stack[i], noise)
        assert np.array_equal(batched.values[i], single.values)
        assert batched.active_message[i] == single.active_message


def test_batched_channel_single_matrix():
    # One allocation evaluated across a stack of channel realizations.
    topo = mo.Topology((2, 2))
    noise = mo.NoiseProfile((1.0, 1.0))
    singles = [mo.sample_channel(topo, 1.0, np.random.default_rng(i)) for i in range(4)]
    batched = mo.ChannelRealization(
        first_hop=np.stack([c.first_hop for c in singles]),
        later_hops=(np.stack([c.later_hops[0] for c in singles]),),
    )
    p = mo.random_init(topo, 9)
    values, idx = mo.min_rate(batched, p, noise)
    grads = mo.objective_gradient(batched, p, noise)
    for i, ch in enumerate(singles):
        v, j = mo.min_rate(ch, p, noise)
        assert values[i] == v and idx[i] == j
        assert np.array_equal(grads.values[i], mo.objective_gradient(ch, p, noise).values)


def test_fd_rejects_bad_inputs():
    topo = mo.Topology((2, 2))
    ch = mo.sample_channel(topo, 1.0, np.random.default_rng(0))
    noise = mo.NoiseProfile((1.0, 1.0))
    with pytest.raises(ValueError):
        mo.finite_difference_gradient(ch, mo.uniform_init(topo), noise, 0.0)
