import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from stainedit.editing import (
    EditParams,
    EigenBasis,
    StaleBasisError,
    basis_projector,
    compose_weights,
    edited_generate,
    extract_basis,
    weight_fingerprint,
)
from stainedit.networks import Generator, NetConfig


def random_w(c, seed):
    return np.random.default_rng(seed).standard_normal((c, c))


class TestExtractBasis:
    def test_identity_matrix_properties(self):
        basis = extract_basis(np.eye(16))
        assert len(basis) == 16
        assert not basis.truncated
        np.testing.assert_allclose(basis.significances, np.ones(16), atol=1e-9)
        gram = basis.vectors @ basis.vectors.T
        np.testing.assert_allclose(gram, np.eye(16), atol=1e-6)
        # every unit vector is an eigenvector of I^T I
        for eta, sig in zip(basis.vectors, basis.significances):
            np.testing.assert_allclose(eta, sig**2 * eta, atol=1e-6)

    def test_diagonal_matrix_gives_axis_vectors(self):
        w = np.diag([4.0, 3.0, 2.0, 1.0] + [0.5] * 12)
        basis = extract_basis(w)
        assert basis.significances[0] == pytest.approx(4.0)
        assert basis.significances[1] == pytest.approx(3.0)
        np.testing.assert_allclose(basis.vectors[0], np.eye(16)[0], atol=1e-9)
        np.testing.assert_allclose(basis.vectors[1], np.eye(16)[1], atol=1e-9)

    def test_matches_independent_eigensolver(self):
        # oracle: dense symmetric eigendecomposition of W^T W
        w = random_w(32, seed=1)
        basis = extract_basis(w)
        evals, evecs = np.linalg.eigh(w.T @ w)
        order = np.argsort(evals)[::-1]
        for i in range(16):
            expected_sig = np.sqrt(evals[order[i]])
            assert basis.significances[i] == pytest.approx(expected_sig, rel=1e-8)
            oracle_vec = evecs[:, order[i]]
            dot = abs(float(oracle_vec @ basis.vectors[i]))
            assert dot == pytest.approx(1.0, abs=1e-8)

    def test_gram_reconstruction(self):
        w = random_w(32, seed=2)
        _, sigma, vt = np.linalg.svd(w)
        rebuilt = vt.T @ np.diag(sigma**2) @ vt
        np.testing.assert_allclose(rebuilt, w.T @ w, atol=1e-5)

    def test_invariants(self):
        for seed in range(5):
            basis = extract_basis(random_w(24, seed))
            norms = np.linalg.norm(basis.vectors, axis=1)
            np.testing.assert_allclose(norms, 1.0, atol=1e-6)
            gram = np.abs(basis.vectors @ basis.vectors.T - np.eye(len(basis)))
            assert gram.max() <= 1e-5
            assert (np.diff(basis.significances) <= 1e-12).all()
            assert (basis.significances >= 0).all()

    def test_deterministic_including_sign(self):
        w = random_w(20, seed=3)
        b1, b2 = extract_basis(w), extract_basis(w)
        assert b1.fingerprint == b2.fingerprint
        np.testing.assert_array_equal(b1.vectors, b2.vectors)
        for row in b1.vectors:
            nz = row[np.nonzero(row)[0][0]]
            assert nz > 0

    def test_small_matrix_truncates_with_flag(self):
        basis = extract_basis(random_w(8, seed=4))
        assert len(basis) == 8
        assert basis.truncated

    def test_nonfinite_rejected(self):
        w = random_w(16, seed=5)
        w[3, 3] = np.nan
        with pytest.raises(ValueError):
            extract_basis(w)

    def test_nonsquare_rejected(self):
        with pytest.raises(ValueError):
            extract_basis(np.zeros((4, 5)))

    def test_accepts_torch_weights(self):
        w = torch.randn(18, 18, generator=torch.Generator().manual_seed(6))
        basis = extract_basis(w)
        assert basis.fingerprint == weight_fingerprint(w)


class TestComposeWeights:
    def test_zero_multiplier_is_bitwise_identity(self):
        w = random_w(16, seed=7)
        basis = extract_basis(w)
        out = compose_weights(w, basis, EditParams(1, 16, 0.0))
        assert out.tobytes() == w.tobytes()
        assert out is not w  # pure function; no aliasing

    def test_single_axis_rank_one_update(self):
        w = np.eye(4)
        basis = EigenBasis(np.eye(4), np.ones(4), weight_fingerprint(w), truncated=True)
        out = compose_weights(w, basis, EditParams(1, 1, 2.0))
        expected = np.eye(4)
        expected[0, 0] = 3.0
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_full_basis_adds_scaled_identity(self):
        w = random_w(8, seed=8)
        basis = extract_basis(w)
        for m in (0.5, -2.0, 7.0):
            out = compose_weights(w, basis, EditParams(1, 8, m))
            np.testing.assert_allclose(out - w, m * np.eye(8), atol=1e-5)

    def test_linearity_in_multiplier(self):
        w = random_w(16, seed=9)
        basis = extract_basis(w)
        for m1, m2 in ((0.5, 1.0), (-2.0, 3.0), (1e-3, 4.0)):
            w1 = compose_weights(w, basis, EditParams(2, 7, m1))
            w2 = compose_weights(w, basis, EditParams(2, 7, m2))
            w12 = compose_weights(w, basis, EditParams(2, 7, m1 + m2))
            np.testing.assert_allclose(w1 + w2 - 2 * w, w12 - w, atol=1e-7)

    @settings(deadline=None, max_examples=20)
    @given(st.integers(0, 2**31 - 1), st.floats(-10, 10))
    def test_projector_symmetric_idempotent(self, seed, _m):
        basis = extract_basis(random_w(20, seed))
        rng = np.random.default_rng(seed)
        j = int(rng.integers(1, 17))
        k = int(rng.integers(j, 17))
        p = basis_projector(basis, j, k)
        np.testing.assert_allclose(p, p.T, atol=1e-12)
        np.testing.assert_allclose(p @ p, p, atol=1e-5)

    def test_stale_basis_rejected(self):
        w = random_w(16, seed=10)
        basis = extract_basis(w)
        other = w + 1e-9
        with pytest.raises(StaleBasisError):
            compose_weights(other, basis, EditParams(1, 4, 1.0))

    def test_range_validation(self):
        w = random_w(16, seed=11)
        basis = extract_basis(w)
        for j, k, m in ((0, 4, 1.0), (3, 2, 1.0), (1, 17, 1.0), (1, 4, float("inf"))):
            with pytest.raises(ValueError):
                compose_weights(w, basis, EditParams(j, k, m))

    def test_torch_round_trip_dtype(self):
        w = torch.randn(16, 16, generator=torch.Generator().manual_seed(12))
        basis = extract_basis(w)
        out = compose_weights(w, basis, EditParams(1, 3, 0.5))
        assert isinstance(out, torch.Tensor)
        assert out.dtype == w.dtype
        zero = compose_weights(w, basis, EditParams(1, 3, 0.0))
        assert torch.equal(zero, w)


EDIT_CFG = NetConfig(base_channels=8, n_down=2, n_res=1, image_px=32, d_base_channels=8)


@pytest.fixture(scope="module")
def gen():
    torch.manual_seed(13)
    g = Generator(EDIT_CFG, "he2p63")
    g.eval()
    return g


@pytest.fixture(scope="module")
def image():
    return torch.rand(1, 3, 32, 32, generator=torch.Generator().manual_seed(14))


class TestEditedGenerate:
    def test_zero_multiplier_byte_identical(self, gen, image):
        basis = extract_basis(gen.mixer.weight)
        edited = edited_generate(gen, image, EditParams(1, 16, 0.0), basis)
        with torch.no_grad():
            plain = gen(image)
        assert edited.numpy().tobytes() == plain.numpy().tobytes()

    def test_bottleneck_delta_is_projected_input(self, gen, image):
        basis = extract_basis(gen.mixer.weight)
        m = 1.5
        params = EditParams(2, 9, m)
        w_star = compose_weights(gen.mixer.weight, basis, params)
        with torch.no_grad():
            f_pre = gen.encode(image)
            delta = gen.mixer(f_pre, w_override=w_star) - gen.mixer(f_pre)
        proj = torch.from_numpy(basis_projector(basis, 2, 9)).float()
        expected = m * torch.einsum("ij,bjhw->bihw", proj, f_pre)
        assert torch.allclose(delta, expected, atol=1e-5)

    def test_multiplier_doubling_doubles_delta(self, gen, image):
        basis = extract_basis(gen.mixer.weight)
        with torch.no_grad():
            f_pre = gen.encode(image)
            w1 = compose_weights(gen.mixer.weight, basis, EditParams(1, 4, 1.25))
            w2 = compose_weights(gen.mixer.weight, basis, EditParams(1, 4, 2.5))
            d1 = gen.mixer(f_pre, w_override=w1) - gen.mixer(f_pre)
            d2 = gen.mixer(f_pre, w_override=w2) - gen.mixer(f_pre)
        assert torch.allclose(d2, 2.0 * d1, atol=1e-5)

    def test_doubling_exact_on_dyadic_construction(self):
        # With integer-valued weight, basis and features, float32 conv
        # arithmetic is exact, so doubling m doubles the delta bitwise.
        c = 4
        w = torch.diag(torch.tensor([4.0, 3.0, 2.0, 1.0]))
        basis = EigenBasis(np.eye(c), np.array([4.0, 3.0, 2.0, 1.0]), weight_fingerprint(w), truncated=True)
        mixer_in = torch.arange(c * 4, dtype=torch.float32).reshape(1, c, 2, 2)
        torch.manual_seed(15)
        gen = Generator(NetConfig(base_channels=1, n_down=2, n_res=1, image_px=8, d_base_channels=4), "he2p63")
        mixer = gen.mixer
        assert c == gen.cfg.latent_channels
        with torch.no_grad():
            mixer.weight.copy_(w)
            mixer.bias.zero_()
            d1 = mixer(mixer_in, w_override=compose_weights(w, basis, EditParams(1, 2, 2.0))) - mixer(mixer_in)
            d2 = mixer(mixer_in, w_override=compose_weights(w, basis, EditParams(1, 2, 4.0))) - mixer(mixer_in)
        assert torch.equal(d2, 2.0 * d1)

    def test_model_weights_untouched_by_edits(self, gen, image):
        basis = extract_basis(gen.mixer.weight)
        before = {k: v.clone() for k, v in gen.state_dict().items()}
        with torch.no_grad():
            baseline = gen(image)
        for m in (0.0, 1.0, -5.0, 10.0):
            edited_generate(gen, image, EditParams(1, 8, m), basis)
        for key, value in gen.state_dict().items():
            assert torch.equal(value, before[key]), key
        with torch.no_grad():
            after = gen(image)
        assert after.numpy().tobytes() == baseline.numpy().tobytes()

    def test_stale_basis_rejected_via_generator(self, gen, image):
        basis = extract_basis(gen.mixer.weight)
        stale = EigenBasis(basis.vectors, basis.significances, "deadbeef")
        with pytest.raises(StaleBasisError):
            edited_generate(gen, image, EditParams(1, 4, 1.0), stale)

    def test_large_edit_changes_output(self, gen, image):
        basis = extract_basis(gen.mixer.weight)
        edited = edited_generate(gen, image, EditParams(1, 16, 8.0), basis)
        with torch.no_grad():
            plain = gen(image)
        assert not torch.equal(edited, plain)
