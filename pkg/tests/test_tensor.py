import numpy as np
import pytest

from tenreg.errors import InvalidAxes, ShapeMismatch
from tenreg.tensor import (
    ProjectorTriple,
    as_tensor,
    dematricize,
    inner,
    matricize,
    outer3,
    read_tns,
    tucker_project,
    write_tns,
)

rng = np.random.default_rng(42)


def naive_partial_inner(a, b):
    """Triple-loop oracle for the prefix contraction."""
    m = a.ndim
    out = np.zeros(b.shape[m:])
    for idx in np.ndindex(a.shape):
        out += a[idx] * b[idx]
    return out


class TestAsTensor:
    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            as_tensor([1.0, np.nan])

    def test_rejects_inf(self):
        with pytest.raises(ValueError):
            as_tensor([np.inf])

    def test_rejects_bad_shape(self):
        with pytest.raises(ShapeMismatch):
            as_tensor([1.0, 2.0, 3.0], shape=(2, 2))

    def test_read_only(self):
        t = as_tensor([[1.0, 2.0], [3.0, 4.0]])
        with pytest.raises(ValueError):
            t[0, 0] = 5.0


class TestInner:
    def test_zero_tensors(self):
        assert inner(np.zeros((2, 3)), np.zeros((2, 3))) == 0.0

    def test_indicator_selects_fiber(self):
        a = np.zeros((2, 2))
        a[0, 0] = 1.0
        b = np.arange(1.0, 9.0).reshape(2, 2, 2)
        np.testing.assert_allclose(inner(a, b), [b[0, 0, 0], b[0, 0, 1]])

    def test_matches_triple_loop(self):
        a = rng.standard_normal((2, 3))
        b = rng.standard_normal((2, 3, 4))
        np.testing.assert_allclose(inner(a, b), naive_partial_inner(a, b), atol=1e-12)

    def test_scalar_case(self):
        a = rng.standard_normal((3, 2))
        b = rng.standard_normal((3, 2))
        assert inner(a, b) == pytest.approx(float((a * b).sum()))

    def test_prefix_violation(self):
        with pytest.raises(ShapeMismatch):
            inner(rng.standard_normal((3, 2)), rng.standard_normal((2, 3, 4)))
        with pytest.raises(ShapeMismatch):
            inner(rng.standard_normal((2, 3, 4)), rng.standard_normal((2, 3)))

    def test_linearity(self):
        a = rng.standard_normal((2, 3, 4))
        b = rng.standard_normal((2, 3, 4))
        c = rng.standard_normal((2, 3, 4))
        lhs = inner(2.5 * a - 1.5 * b, c)
        rhs = 2.5 * inner(a, c) - 1.5 * inner(b, c)
        assert lhs == pytest.approx(rhs, rel=1e-12)


class TestMatricize:
    def test_mode1_enumeration(self):
        a = np.arange(1.0, 9.0).reshape(2, 2, 2)
        m1 = matricize(a, [0])
        # index-arithmetic oracle over all 8 entries
        expected = np.zeros((2, 4))
        for j1 in range(2):
            for j2 in range(2):
                for j3 in range(2):
                    expected[j1, j2 * 2 + j3] = a[j1, j2, j3]
        np.testing.assert_array_equal(m1, expected)

    def test_round_trip(self):
        a = rng.standard_normal((3, 4, 5))
        for modes in ([0], [1], [2], [0, 2], [2, 0], [1, 2]):
            m = matricize(a, modes)
            np.testing.assert_array_equal(dematricize(m, a.shape, modes), a)

    def test_frobenius_preserved(self):
        a = rng.standard_normal((3, 4, 5))
        for k in range(3):
            assert np.linalg.norm(matricize(a, [k])) == pytest.approx(
                np.linalg.norm(a)
            )

    def test_tucker_rank(self):
        r = 2
        factors = [np.linalg.qr(rng.standard_normal((d, r)))[0] for d in (5, 6, 7)]
        core = rng.standard_normal((r, r, r))
        a = np.einsum("abc,ia,jb,kc->ijk", core, *factors)
        for k in range(3):
            assert np.linalg.matrix_rank(matricize(a, [k]), tol=1e-10) == r

    def test_invalid_axes(self):
        a = rng.standard_normal((2, 3, 4))
        with pytest.raises(InvalidAxes):
            matricize(a, [])
        with pytest.raises(InvalidAxes):
            matricize(a, [0, 0])
        with pytest.raises(InvalidAxes):
            matricize(a, [3])
        with pytest.raises(InvalidAxes):
            matricize(a, [0, 1, 2])


class TestOuter3:
    def test_indicator(self):
        e1 = np.array([1.0, 0.0])
        t = outer3(e1, e1, e1)
        expected = np.zeros((2, 2, 2))
        expected[0, 0, 0] = 1.0
        np.testing.assert_array_equal(t, expected)

    def test_norm_multiplicativity(self):
        u, v, w = (rng.standard_normal(d) for d in (3, 4, 5))
        assert np.linalg.norm(outer3(u, v, w)) == pytest.approx(
            np.linalg.norm(u) * np.linalg.norm(v) * np.linalg.norm(w)
        )

    def test_inner_against_triple_loop(self):
        u, v, w = (rng.standard_normal(d) for d in (2, 3, 2))
        g = rng.standard_normal((2, 3, 2))
        total = 0.0
        for i in range(2):
            for j in range(3):
                for k in range(2):
                    total += u[i] * v[j] * w[k] * g[i, j, k]
        assert inner(outer3(u, v, w), g) == pytest.approx(total)


class TestTuckerProject:
    def _triple(self, dims=(4, 5, 6), ranks=(2, 2, 3)):
        return ProjectorTriple.random(dims, ranks, rng)

    def test_identity_projectors(self):
        dims = (3, 4, 5)
        triple = ProjectorTriple([np.eye(d) for d in dims])
        a = rng.standard_normal(dims)
        np.testing.assert_allclose(tucker_project(a, triple, "full"), a)

    def test_zero_projectors_q(self):
        dims = (3, 4, 5)
        triple = ProjectorTriple([np.zeros((d, 0)) for d in dims])
        a = rng.standard_normal(dims)
        np.testing.assert_allclose(tucker_project(a, triple, "q"), np.zeros(dims))

    def test_q_plus_qperp_is_identity(self):
        triple = self._triple()
        a = rng.standard_normal((4, 5, 6))
        # the eight sign-pattern terms partition the identity
        total = tucker_project(a, triple, "q") + tucker_project(a, triple, "qperp")
        np.testing.assert_allclose(total, a, atol=1e-12)

    def test_full_idempotent(self):
        triple = self._triple()
        a = rng.standard_normal((4, 5, 6))
        once = tucker_project(a, triple, "full")
        twice = tucker_project(once, triple, "full")
        np.testing.assert_allclose(once, twice, atol=1e-12)

    def test_q_qperp_orthogonal(self):
        triple = self._triple()
        a = rng.standard_normal((4, 5, 6))
        qa = tucker_project(a, triple, "q")
        qp = tucker_project(a, triple, "qperp")
        assert abs((qa * qp).sum()) < 1e-10

    def test_rank_one_eight_term_expansion(self):
        # compare against brute-force expansion over all sign patterns
        dims = (4, 5, 6)
        triple = ProjectorTriple.random(dims, (1, 1, 1), rng)
        u = triple.factors[0][:, 0]
        v = rng.standard_normal(5)
        w = rng.standard_normal(6)
        a = outer3(u, v, w)
        terms = []
        for mask in [(i, j, k) for i in (0, 1) for j in (0, 1) for k in (0, 1)]:
            terms.append((mask, triple.apply_pattern(a, mask)))
        q_manual = sum(t for m, t in terms if sum(m) <= 1)
        np.testing.assert_allclose(tucker_project(a, triple, "q"), q_manual, atol=1e-12)
        total = sum(t for _, t in terms)
        np.testing.assert_allclose(total, a, atol=1e-12)

    def test_shape_mismatch(self):
        triple = self._triple()
        with pytest.raises(ShapeMismatch):
            tucker_project(rng.standard_normal((3, 3, 3)), triple, "full")


class TestFrobeniusIdentity:
    def test_inner_self_is_squared_norm(self):
        a = rng.standard_normal((3, 4, 2))
        assert inner(a, a) == pytest.approx(np.linalg.norm(a) ** 2)


class TestTnsFormat:
    def test_round_trip(self, tmp_path):
        a = rng.standard_normal((3, 4, 5))
        path = tmp_path / "t.tns"
        write_tns(path, a)
        np.testing.assert_array_equal(read_tns(path), a)

    def test_layout_is_last_index_fastest(self, tmp_path):
        a = np.arange(8.0).reshape(2, 2, 2)
        path = tmp_path / "t.tns"
        write_tns(path, a)
        raw = path.read_bytes()
        header = 4 + 4 + 3 * 8
        payload = np.frombuffer(raw[header:], dtype="<f8")
        np.testing.assert_array_equal(payload, np.arange(8.0))

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.tns"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(ValueError, match="magic"):
            read_tns(path)

    def test_truncated_payload(self, tmp_path):
        a = rng.standard_normal((2, 2))
        path = tmp_path / "t.tns"
        write_tns(path, a)
        data = path.read_bytes()
        path.write_bytes(data[:-8])
        with pytest.raises(ValueError, match="payload"):
            read_tns(path)
