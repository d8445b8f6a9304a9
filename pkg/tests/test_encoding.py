import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ritescene.encoding import (
    Dictionary,
    SparseCode,
    encode_batch,
    encode_image,
    encode_images,
    initial_atoms,
    learn_dictionary,
    objective,
    pool_codes,
    sparse_encode,
)


def orthonormal(dim, m, seed):
    q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((dim, dim)))
    return q[:m]


def closed_form(x, atoms, lam):
    z = atoms @ x
    return np.sign(z) * np.maximum(np.abs(z) - lam / 2, 0.0)


def test_identity_basis_reproduces_input():
    x = np.random.default_rng(0).uniform(-1, 1, 128)
    code = sparse_encode(x, Dictionary(np.eye(128), lam=0.0))
    assert np.array_equal(code.coefficients, x)


def test_large_penalty_gives_zero():
    rng = np.random.default_rng(1)
    atoms = rng.standard_normal((20, 16))
    atoms /= np.linalg.norm(atoms, axis=1, keepdims=True)
    x = rng.standard_normal(16)
    lam = 2 * np.max(np.abs(atoms @ x))
    assert not encode_batch(x, atoms, lam).any()


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.integers(1, 32), st.floats(0.0, 2.0))
def test_orthonormal_closed_form(seed, m, lam):
    atoms = orthonormal(32, m, seed)
    x = np.random.default_rng(seed + 1).standard_normal(32)
    assert np.max(np.abs(encode_batch(x, atoms, lam)[0] - closed_form(x, atoms, lam))) < 1e-8


@pytest.mark.parametrize("seed", range(4))
def test_two_dimensional_grid_oracle(seed):
    rng = np.random.default_rng(seed)
    atoms = rng.standard_normal((2, 2))
    atoms /= np.linalg.norm(atoms, axis=1, keepdims=True)
    x = rng.uniform(-0.8, 0.8, 2)
    lam = rng.uniform(0.05, 0.5)
    grid = np.round(np.arange(-2000, 2001) * 1e-3, 12)
    a1, a2 = np.meshgrid(grid, grid, indexing="ij")
    r0 = x[0] - a1 * atoms[0, 0] - a2 * atoms[1, 0]
    r1 = x[1] - a1 * atoms[0, 1] - a2 * atoms[1, 1]
    best = float(np.min(r0 * r0 + r1 * r1 + lam * (np.abs(a1) + np.abs(a2))))
    code = encode_batch(x, atoms, lam)
    assert np.all(np.abs(code) <= 2)
    assert abs(objective(x[None], atoms, code, lam) - best) < 1e-4


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.integers(2, 40), st.floats(0.0, 1.0))
def test_objective_not_above_zero_code(seed, m, lam):
    rng = np.random.default_rng(seed)
    atoms = rng.standard_normal((m, 12))
    atoms /= np.linalg.norm(atoms, axis=1, keepdims=True)
    x = rng.standard_normal((3, 12))
    code = encode_batch(x, atoms, lam)
    for i in range(3):
        assert objective(x[i:i + 1], atoms, code[i:i + 1], lam) <= float(x[i] @ x[i]) + 1e-12


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_sparsity_monotone_in_lambda(seed, l1, l2):
    # holds for orthonormal atoms; on general dictionaries lasso paths can drop variables
    atoms = orthonormal(24, 24, seed)
    x = np.random.default_rng(seed).standard_normal(24)
    lo, hi = sorted((l1, l2))
    zeros = [int(np.sum(encode_batch(x, atoms, lam)[0] == 0)) for lam in (lo, hi)]
    assert zeros[1] >= zeros[0]


def test_rows_independent_of_batch():
    rng = np.random.default_rng(3)
    atoms = rng.standard_normal((40, 16))
    atoms /= np.linalg.norm(atoms, axis=1, keepdims=True)
    X = rng.standard_normal((9, 16))
    together = encode_batch(X, atoms, 0.2)
    alone = np.vstack([encode_batch(X[i], atoms, 0.2) for i in range(9)])
    assert np.allclose(together, alone, rtol=0, atol=1e-10)


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        encode_batch(np.array([np.nan, 0.0]), np.eye(2), 0.1)


# -- dictionary learning --

def test_planted_basis_recovered():
    rng = np.random.default_rng(7)
    basis = orthonormal(16, 8, 7)
    coeffs = rng.uniform(0.5, 1.5, (400, 8)) * rng.choice([-1, 1], (400, 8)) * (rng.uniform(0, 1, (400, 8)) < 0.3)
    coeffs[np.arange(400), rng.integers(0, 8, 400)] = 1.0
    X = coeffs @ basis
    d = learn_dictionary(X, 8, lam=1e-4, iterations=30, seed=0)
    codes = encode_batch(X, d.atoms, d.lam)
    err = np.mean(np.sum((X - codes @ d.atoms) ** 2, axis=1))
    assert err < 1e-3


def test_zero_iterations_is_initialisation():
    X = np.random.default_rng(2).standard_normal((50, 8))
    d = learn_dictionary(X, 10, iterations=0, seed=4)
    assert np.array_equal(d.atoms, initial_atoms(X, 10, 4))
    assert d.objective_trace == ()


@pytest.mark.parametrize("seed", range(3))
def test_trace_non_increasing_and_unit_atoms(seed):
    X = np.abs(np.random.default_rng(seed).standard_normal((120, 16)))
    d = learn_dictionary(X, 24, lam=0.15, iterations=8, seed=seed)
    assert len(d.objective_trace) == 8
    assert all(b <= a + 1e-9 for a, b in zip(d.objective_trace, d.objective_trace[1:]))
    assert np.allclose(np.linalg.norm(d.atoms, axis=1), 1.0)


def test_learning_deterministic():
    X = np.random.default_rng(9).standard_normal((60, 8))
    a, b = learn_dictionary(X, 12, iterations=3, seed=1), learn_dictionary(X, 12, iterations=3, seed=1)
    assert np.array_equal(a.atoms, b.atoms) and a.objective_trace == b.objective_trace


def test_too_few_descriptors():
    with pytest.raises(ValueError):
        learn_dictionary(np.zeros((5, 8)), 10)


def test_dictionary_round_trip():
    X = np.random.default_rng(1).standard_normal((40, 8))
    d = learn_dictionary(X, 6, iterations=2, seed=3)
    back = Dictionary.from_dict(d.to_dict())
    assert np.array_equal(back.atoms, d.atoms)
    assert (back.lam, back.seed, back.iterations, back.objective_trace) == \
           (d.lam, d.seed, d.iterations, d.objective_trace)


# -- pooling --

def test_pool_single_code():
    a = np.array([0.5, -1.0, 0.0])
    assert np.array_equal(pool_codes([SparseCode(a)]).values, np.abs(a))


def test_pool_two_codes():
    codes = [SparseCode(np.array([1.0, 0.0])), SparseCode(np.array([0.0, -2.0]))]
    assert pool_codes(codes).values.tolist() == [1.0, 2.0]


def test_pool_empty():
    f = pool_codes([], n_atoms=5)
    assert f.values.tolist() == [0.0] * 5 and f.n_descriptors == 0


def test_pool_mixed_dimensions():
    with pytest.raises(ValueError):
        pool_codes([SparseCode(np.zeros(2)), SparseCode(np.zeros(3))])


@settings(max_examples=25)
@given(st.integers(0, 1000), st.integers(1, 8))
def test_pool_order_invariant(seed, n):
    codes = np.random.default_rng(seed).standard_normal((n, 6))
    perm = np.random.default_rng(seed + 1).permutation(n)
    assert np.array_equal(pool_codes(codes).values, pool_codes(codes[perm]).values)


def test_batched_images_equal_separate():
    rng = np.random.default_rng(5)
    X = np.abs(rng.standard_normal((80, 16)))
    d = learn_dictionary(X, 20, iterations=2, seed=0)
    sets = [X[:30], X[30:31], np.zeros((0, 16)), X[31:]]
    batched = encode_images(sets, d)
    for s, f in zip(sets, batched):
        assert np.allclose(f.values, encode_image(s, d).values, rtol=0, atol=1e-10)
