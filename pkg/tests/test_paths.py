import itertools
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gridsync.channels import DensitySpec, OrthGaussian, TruthMode, U1Multiplicative, Z2Flip, generate_instance
from gridsync.grid import build_grid
from gridsync.groups import Variant, as_matrix, compose, invert, GroupElement
from gridsync.paths import (
    EstimatorParams,
    Frame,
    HierarchicalSplit,
    UniformMonotone,
    eit_diagnostic,
    estimate_axis,
    estimate_diagonal,
    estimate_pair,
    lambda_sensitivity,
    make_path,
    path_product,
    predicted_second_moment,
    reflect_complete,
    reflect_labels,
    sample_diagonal_labels,
    sample_increasing_path,
    sample_labels,
    shared_edges,
)

MEASURES = [UniformMonotone(), HierarchicalSplit(0.3)]


def truth_difference(inst, x, y):
    g = inst.graph
    v = inst.variant
    a = GroupElement(v, inst.truth[g.vertex_index(x)] if v is not Variant.Z2 else int(inst.truth[g.vertex_index(x)]))
    b = GroupElement(v, inst.truth[g.vertex_index(y)] if v is not Variant.Z2 else int(inst.truth[g.vertex_index(y)]))
    return compose(invert(a), b)


def noiseless(kind, g, seed=0):
    ch = {"z2": Z2Flip(0.0), "u1": U1Multiplicative(DensitySpec("wrapped_gaussian", 1e-12)), "orth": OrthGaussian(3, 0.0)}[kind]
    return generate_instance(g, ch, TruthMode.HAAR, seed=seed)


# -- sampling ------------------------------------------------------------------

@pytest.mark.parametrize("measure", MEASURES + [HierarchicalSplit(0.0)], ids=["uniform", "hier", "hier0"])
def test_frequencies_111(measure):
    rng = np.random.default_rng(0)
    lab = sample_labels(measure, (1, 1, 1), 10**5, rng)
    freq = Counter(map(tuple, lab))
    assert len(freq) == 6
    if not isinstance(measure, HierarchicalSplit) or measure.spread == 0:
        assert all(abs(c / 1e5 - 1 / 6) < 0.01 for c in freq.values())


def test_frequencies_210_and_straight():
    rng = np.random.default_rng(1)
    lab = sample_labels(UniformMonotone(), (2, 1, 0), 10**5, rng)
    freq = Counter(map(tuple, lab))
    assert len(freq) == 3 and all(abs(c / 1e5 - 1 / 3) < 0.01 for c in freq.values())
    lab = sample_labels(UniformMonotone(), (5, 0, 0), 100, rng)
    assert np.all(lab == 0)


@given(st.lists(st.integers(0, 4), min_size=1, max_size=4), st.integers(0, 2**31), st.sampled_from(MEASURES))
def test_samples_are_increasing_paths_to_target(target, seed, measure):
    rng = np.random.default_rng(seed)
    lab = sample_labels(measure, target, 8, rng)
    for row in lab:
        assert np.array_equal(np.bincount(row, minlength=len(target)), target)
    g = build_grid(len(target), [max(t + 1, 2) for t in target])
    if g.dims >= 1 and sum(target):
        p = sample_increasing_path(measure, target, rng, g)
        assert len(p) == sum(target)
        assert np.array_equal(p.end, target) and np.all(p.forward)
        # consecutive edges share endpoints
        assert np.array_equal(g.edge_head[p.edges[:-1]], g.edge_tail[p.edges[1:]])


def test_reflect_examples():
    p = reflect_complete(sample_increasing_path(UniformMonotone(), (1, 1, 1), np.random.default_rng(0)), 2)
    assert len(p.labels) == 6 and np.array_equal(p.end, (2, 2, 2))
    prefix = make_path(build_grid(3, 3), [0, 0, 1])
    g = build_grid(3, 3)
    full = reflect_complete(prefix, 2, g)
    assert len(full) == 6 and np.array_equal(full.end, (2, 2, 2)) and np.all(full.forward)
    assert np.array_equal(np.bincount(full.labels, minlength=3), (2, 2, 2))
    with pytest.raises(ValueError):
        reflect_complete(make_path(g, [0, 1]), 2)
    with pytest.raises(ValueError):
        reflect_labels(np.zeros((1, 3), dtype=int), 3)


@given(st.integers(1, 6), st.integers(0, 2**31))
def test_reflection_properties(half, seed):
    n = 2 * half
    rng = np.random.default_rng(seed)
    full = sample_labels(UniformMonotone(), (n, n, n), 50, rng)
    pre = full[:, : 3 * n // 2]
    out = reflect_labels(pre, n)
    assert out.shape == (50, 3 * n)
    assert np.array_equal(out[:, : 3 * n // 2], pre)
    for row, p in zip(out, pre):
        assert np.array_equal(np.bincount(row, minlength=3), (n, n, n))
        if np.array_equal(np.bincount(p, minlength=3), (half,) * 3):
            assert np.array_equal(row[3 * n // 2 :], p[::-1])  # exact point reflection at the center


# -- products and estimators ---------------------------------------------------

@pytest.mark.parametrize("kind", ["z2", "u1", "orth"])
def test_noiseless_path_product(kind):
    g = build_grid(3, 5)
    inst = noiseless(kind, g, seed=3)
    rng = np.random.default_rng(0)
    for target in [(4, 2, 1), (0, 3, 0), (1, 1, 4)]:
        p = sample_increasing_path(HierarchicalSplit(), target, rng, g)
        got = path_product(inst, p)
        ref = truth_difference(inst, (0, 0, 0), target)
        assert np.allclose(as_matrix(got), as_matrix(ref), atol=1e-8)
    # a path with backward steps (negative frame signs) inverts observations
    f = Frame(origin=(4, 4, 4), signs=(-1, -1, -1))
    p = make_path(g, [0, 1, 2, 2, 1], f)
    ref = truth_difference(inst, (4, 4, 4), p.end)
    assert np.allclose(as_matrix(path_product(inst, p)), as_matrix(ref), atol=1e-8)
    empty = make_path(g, [])
    assert np.allclose(as_matrix(path_product(inst, empty)), np.eye(as_matrix(ref).shape[0]))


def test_path_leaving_grid():
    g = build_grid(3, 3)
    with pytest.raises(ValueError, match="leaves the grid"):
        make_path(g, [0, 0, 0])


@pytest.mark.parametrize("kind", ["z2", "u1", "orth"])
def test_noiseless_estimators_exact(kind):
    g = build_grid(3, 11)
    inst = noiseless(kind, g, seed=5)
    rng = np.random.default_rng(1)
    rep = estimate_diagonal(inst, 4, n_paths=7, lam=1.0, rng=rng)
    assert rep.misalignment < 1e-12 and rep.success
    rep = estimate_diagonal(inst, 4, n_paths=1, lam=1.0, rng=rng)
    assert rep.misalignment < 1e-12
    for n in (1, 2, 3, 4, 5, 8, 10):
        rep = estimate_axis(inst, 1, n, EstimatorParams(5, HierarchicalSplit(), 1.0), rng=rng)
        assert rep.success and rep.product_bound_ok and rep.misalignment < 1e-10
    rep = estimate_pair(inst, (1, 2, 3), (9, 0, 7), EstimatorParams(3, UniformMonotone(), 1.0), rng=rng)
    assert rep.success and rep.misalignment < 1e-10
    ref = truth_difference(inst, (1, 2, 3), (9, 0, 7))
    assert np.allclose(as_matrix(rep.estimate), as_matrix(ref), atol=1e-8)
    rep = estimate_pair(inst, (2, 2, 2), (2, 2, 2), EstimatorParams(3, UniformMonotone(), 1.0), rng=rng)
    assert rep.misalignment < 1e-20 and rep.success  # round-off of theta theta^T only
    assert np.allclose(as_matrix(rep.estimate), np.eye(as_matrix(rep.estimate).shape[0]))


def test_torus_axis_estimate():
    g = build_grid(3, 8, "torus")
    inst = noiseless("z2", g)
    rep = estimate_axis(inst, 0, 6, EstimatorParams(4, UniformMonotone(), 1.0), origin=(5, 6, 7), rng=np.random.default_rng(0))
    assert rep.success


def test_estimator_errors():
    inst2 = noiseless("z2", build_grid(2, 8))
    with pytest.raises(ValueError, match="d >= 3"):
        estimate_diagonal(inst2, 2, lam=1.0)
    inst = noiseless("z2", build_grid(3, 5))
    with pytest.raises(ValueError, match="too small"):
        estimate_diagonal(inst, 6, lam=1.0)
    with pytest.raises(ValueError):
        estimate_diagonal(inst, 2, lam=0.0)
    with pytest.raises(ValueError):
        estimate_diagonal(inst, 3, lam=1.0)
    with pytest.raises(ValueError):
        EstimatorParams(n_paths=0)


def test_product_inequality_under_noise():
    g = build_grid(3, 13)
    inst = generate_instance(g, OrthGaussian(2, 0.4), seed=2)
    for s in range(10):
        rep = estimate_pair(inst, (0, 1, 2), (11, 9, 12), EstimatorParams(8), rng=np.random.default_rng(s))
        assert rep.product_bound_ok


def test_unbiased_single_path_z2():
    """E[theta_0 T theta_u] = 1 for a single path (n = 2, lambda = 0.8)."""
    g = build_grid(3, 3)
    vals = []
    for s in range(6000):
        inst = generate_instance(g, Z2Flip(0.1), seed=s)
        rep = estimate_diagonal(inst, 2, n_paths=1, rng=np.random.default_rng(s))
        vals.append(float(inst.truth[0] * rep.raw * inst.truth[-1]))
    vals = np.array(vals)
    assert abs(vals.mean() - 1) < 3 * vals.std() / np.sqrt(vals.size)


def test_unbiased_u1_and_orth():
    g = build_grid(3, 3)
    for ch in (U1Multiplicative(DensitySpec("von_mises", 4.0)), OrthGaussian(2, 0.3)):
        vals = []
        for s in range(1500):
            inst = generate_instance(g, ch, seed=s)
            rep = estimate_diagonal(inst, 2, n_paths=2, rng=np.random.default_rng(s))
            a, b = inst.truth[0], inst.truth[-1]
            if inst.variant is Variant.U1:
                z = np.exp(1j * a) * rep.raw * np.exp(-1j * b)
                vals.append([z.real, z.imag])
            else:
                vals.append((a @ rep.raw @ b.T).ravel())
        vals = np.array(vals)
        ref = np.array([1.0, 0.0]) if vals.shape[1] == 2 else np.eye(2).ravel()
        se = vals.std(axis=0) / np.sqrt(len(vals))
        assert np.all(np.abs(vals.mean(axis=0) - ref) < 3.5 * se + 1e-12)


# -- intersections ---------------------------------------------------------------

def brute_shared(l1, l2):
    def edge_set(lab):
        pos = np.zeros(3, dtype=int)
        out = set()
        for a in lab:
            out.add((tuple(pos), int(a)))
            pos[a] += 1
        return out

    return len(edge_set(l1) & edge_set(l2))


@given(st.integers(0, 2**31), st.integers(1, 5))
def test_shared_edges_matches_sets(seed, half):
    rng = np.random.default_rng(seed)
    l1 = sample_diagonal_labels(UniformMonotone(), 2 * half, 20, rng)
    l2 = sample_diagonal_labels(HierarchicalSplit(), 2 * half, 20, rng)
    got = shared_edges(l1, l2)
    assert list(got) == [brute_shared(a, b) for a, b in zip(l1, l2)]


def test_eit_n2_identical_paths():
    """P(X >= 6) = P(identical) = sum_paths P(path)^2 for n = 2."""
    # exact law of the reflected path: prefix = first 3 steps of a uniform interleaving of (0,0,1,1,2,2)
    base = (0, 0, 1, 1, 2, 2)
    perms = set(itertools.permutations(base))
    law = Counter()
    for p in perms:
        full = tuple(reflect_labels(np.array([p[:3]]), 2)[0])
        law[full] += 1 / len(perms)
    p_identical = sum(v * v for v in law.values())
    rep = eit_diagnostic(UniformMonotone(), 2, 20000, np.random.default_rng(0))
    emp = rep.tail[6]
    se = np.sqrt(p_identical * (1 - p_identical) / 20000)
    assert emp > 0 and abs(emp - p_identical) < 3 * se
    assert rep.counts.max() == 6


def test_eit_straight_line():
    rep = eit_diagnostic(UniformMonotone(), 4, 1000, np.random.default_rng(0), target=(7, 0, 0))
    assert np.all(rep.counts == 7)
    with pytest.raises(ValueError):
        eit_diagnostic(UniformMonotone(), 4, 999, np.random.default_rng(0))


def test_eit_fit_and_moment():
    rep = eit_diagnostic(HierarchicalSplit(), 8, 5000, np.random.default_rng(1))
    assert 0 < rep.beta_hat < 1
    m, se = rep.moment(1.0)
    assert m == 1.0 and se == 0.0
    # predicted second moment reduces to lambda^{-6n} with one path
    assert predicted_second_moment(rep, 0.9, 8, 1) == pytest.approx(0.9 ** (-48))


def test_lambda_sensitivity_consistent():
    g = build_grid(3, 9)
    inst = generate_instance(g, Z2Flip(0.05), seed=0)
    rows = lambda_sensitivity(inst, 4, [0.9, 1.0], n_paths=16, seed=3)
    base = estimate_diagonal(inst, 4, 16, lam=0.9, rng=np.random.default_rng(3))
    assert rows[0]["misalignment"] == pytest.approx(base.misalignment)
