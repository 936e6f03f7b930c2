import io

import numpy as np
import pytest

from vrgrad import data, problems
from vrgrad.errors import MalformedLine, NotStronglyConvex, ZeroRow

CRAFTED = """\
1 1:0.5 3:2
-1 2:1.25 4:-3
2.5 1:1 2:2 3:3 4:4
0 4:7e-05
-3 1:-1 3:0.125
"""


def test_parse_single_line():
    d = data.parse_libsvm("1 1:0.5 3:2\n")
    assert d.n == 1 and d.labels[0] == 1.0 and d.n_features == 3
    assert list(d.indices[0]) == [1, 3] and list(d.values[0]) == [0.5, 2.0]


def test_parse_comments_blank_lines_whitespace():
    d = data.parse_libsvm("# header\n1 2:1   # trailing\n\n-1 1:3 \t \n")
    assert d.n == 2 and d.n_features == 2
    assert list(d.indices[1]) == [1]


def test_label_only_row_rejected_later():
    d = data.parse_libsvm("-1\n1 1:2\n")
    assert d.indices[0].size == 0
    with pytest.raises(ZeroRow):
        data.least_squares_from_dataset(d)


@pytest.mark.parametrize(
    "text, line",
    [("1 1:0.5\nx 1:2\n", 2), ("1 1:a\n", 1), ("1 3:1 2:1\n", 1), ("1 2:1 2:1\n", 1), ("1 0:1\n", 1), ("1 12\n", 1)],
)
def test_malformed_lines(text, line):
    with pytest.raises(MalformedLine) as info:
        data.parse_libsvm(text)
    assert info.value.line_no == line


def test_round_trip_byte_equivalent():
    d = data.parse_libsvm(CRAFTED)
    text = data.serialize_libsvm(d)
    assert text == CRAFTED
    assert data.parse_libsvm(io.StringIO(text)) == d


def test_csv_export():
    d = data.parse_libsvm("1 1:0.5 3:2\n-1\n")
    assert data.to_csv(d) == "label,idx:val;idx:val\n1,1:0.5;3:2\n-1,\n"


def test_drop_zero_columns():
    d = data.parse_libsvm("1 1:1 3:2\n2 1:3 3:0\n3 3:1\n")
    out, dropped = data.drop_zero_columns(d)
    assert dropped == [2] and out.n_features == 2
    assert [list(r) for r in out.indices] == [[1, 2], [1], [2]]
    assert list(out.columns) == [1, 3]
    same, none = data.drop_zero_columns(data.parse_libsvm(CRAFTED))
    assert none == [] and list(same.columns) == [1, 2, 3, 4]


def test_drop_restores_strong_convexity():
    d = data.parse_libsvm("1 1:1 3:2\n2 1:3\n-1 3:1 4:0\n0.5 1:1 3:1\n", n_features=4)
    with pytest.raises(NotStronglyConvex):
        data.least_squares_from_dataset(d)
    out, dropped = data.drop_zero_columns(d)
    assert dropped == [2, 4]
    prob = data.least_squares_from_dataset(out)
    dense = out.to_csr().toarray()
    assert prob.mu == pytest.approx(2 / out.n * np.linalg.eigvalsh(dense.T @ dense).min(), rel=1e-10)
    assert prob.mu > 0


def test_generate_1d():
    a = data.generate_1d_least_squares(100, 5)
    b = data.generate_1d_least_squares(100, 5)
    assert np.array_equal(a.A, b.A) and np.array_equal(a.b, b.b)
    assert abs(a.full_gradient(a.x_star)[0]) <= 1e-12
    assert a.lipschitz.mean() / a.mu == pytest.approx(1.0, rel=1e-13)
    big = data.generate_1d_least_squares(100_000, 1)
    col = big.A[:, 0]
    assert abs(col.mean()) <= 3 / np.sqrt(1e5)
    assert abs(col.var() - 1) <= 3 * np.sqrt(2 / 1e5)


def test_synthetic_lipschitz():
    L, mu = data.synthetic_lipschitz(1000, 10, seed=3)
    assert np.all((L > 0) & (L < 2))
    assert L.mean() / mu == pytest.approx(10)


def test_sparsity_extremes(rng):
    A = rng.standard_normal((10, 5))
    b = rng.standard_normal(10)
    huge = problems.LeastSquaresProblem(A, b, 1e6)
    assert data.sparsity(problems.proximal_gradient(huge, tol=1e-10)) == 1.0
    assert data.sparsity(np.linalg.lstsq(A, b, rcond=None)[0]) == 0.0


def test_tune_l1_small(rng):
    A = rng.standard_normal((10, 5))
    b = rng.standard_normal(10)
    xi = data.tune_l1_for_sparsity(A, b)
    x = problems.proximal_gradient(problems.LeastSquaresProblem(A, b, xi), tol=1e-10)
    assert 0.15 <= data.sparsity(x) <= 0.20 + 1 / 5


def test_tune_l1_50x10(rng):
    A = rng.standard_normal((50, 10))
    b = A @ rng.standard_normal(10) + 0.1 * rng.standard_normal(50)
    xi = data.tune_l1_for_sparsity(A, b)
    x = problems.proximal_gradient(problems.LeastSquaresProblem(A, b, xi), tol=1e-10)
    assert 0.15 <= data.sparsity(x) <= 0.20 + 1 / 10
