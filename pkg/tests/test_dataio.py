import numpy as np
import pytest

from spdsgd import manifold
from spdsgd.dataio import (
    DataError,
    FormatError,
    GridSpec,
    covariance_descriptors,
    default_regularization,
    generate_synthetic,
    pixel_features,
    read_matrix_set,
    read_pgm,
    write_matrix_set,
    write_pgm,
)
from spdsgd.objective import Dataset
from spdsgd.rsgd import reference_centroid

from conftest import random_spd


class TestGenerateSynthetic:
    def test_tiny_spread_stays_at_center(self, rng):
        center = random_spd(rng, 4)
        data = generate_synthetic(rng, 20, 4, center, 1e-12)
        for a in data.points:
            assert np.linalg.norm(a - center) <= 1e-8

    def test_deterministic_per_seed(self):
        c = np.eye(3)
        d1 = generate_synthetic(np.random.default_rng(5), 10, 3, c, 0.5)
        d2 = generate_synthetic(np.random.default_rng(5), 10, 3, c, 0.5)
        np.testing.assert_array_equal(d1.points, d2.points)

    def test_centroid_recovers_center(self):
        # Law of large numbers: the solved centroid approaches the sampling
        # center; at N=256 it should sit well within half the spread.
        center = np.eye(5)
        spread = 0.5
        dists = []
        for seed in range(5):
            data = generate_synthetic(np.random.default_rng(seed), 256, 5, center, spread)
            star = reference_centroid(data, 1e-8)
            dists.append(manifold.distance(star, center))
        assert np.mean(dists) < spread / 2

    def test_validation(self, rng):
        with pytest.raises(ValueError):
            generate_synthetic(rng, 0, 3, np.eye(3), 0.5)
        with pytest.raises(ValueError):
            generate_synthetic(rng, 4, 3, np.eye(3), 0.0)
        with pytest.raises(ValueError):
            generate_synthetic(rng, 4, 2, np.eye(3), 0.5)


class TestPgm:
    def test_reads_known_bytes(self, tmp_path):
        path = tmp_path / "t.pgm"
        path.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64]))
        img = read_pgm(path)
        np.testing.assert_array_equal(img, [[0, 255], [128, 64]])

    def test_comments_in_header(self, tmp_path):
        path = tmp_path / "t.pgm"
        path.write_bytes(b"P5\n# a comment\n2 1\n# another\n255\n" + bytes([7, 9]))
        np.testing.assert_array_equal(read_pgm(path), [[7, 9]])

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "t.pgm"
        path.write_bytes(b"P2\n2 2\n255\n" + bytes(4))
        with pytest.raises(FormatError, match="magic"):
            read_pgm(path)

    def test_wrong_maxval(self, tmp_path):
        path = tmp_path / "t.pgm"
        path.write_bytes(b"P5\n2 2\n65535\n" + bytes(8))
        with pytest.raises(FormatError, match="maxval"):
            read_pgm(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "t.pgm"
        path.write_bytes(b"P5\n2 2\n255\n" + bytes([1, 2, 3]))
        with pytest.raises(FormatError, match="expected 4 bytes, found 3"):
            read_pgm(path)

    def test_roundtrip(self, tmp_path, rng):
        img = rng.integers(0, 256, size=(6, 8)).astype(np.uint8)
        path = tmp_path / "rt.pgm"
        write_pgm(path, img)
        np.testing.assert_array_equal(read_pgm(path), img)


class TestDescriptors:
    def test_constant_image_gives_ridge_only(self):
        img = np.full((8, 8), 130.0)
        data = covariance_descriptors(img, 4, regularization=1e-6)
        for a in data.points:
            np.testing.assert_array_equal(a, 1e-6 * np.eye(5))

    def test_cell_count(self, rng):
        img = rng.integers(0, 256, size=(12, 20)).astype(float)
        data = covariance_descriptors(img, 4, regularization=1e-6)
        assert data.n == (12 // 4) * (20 // 4)

    def test_linear_ramp_interior_cell(self):
        # I(u, v) = u: away from borders, |dI/du| = 1 and all second
        # derivatives vanish, so only the intensity feature varies.
        u = np.arange(12, dtype=float)
        img = np.tile(u[:, None], (1, 12))
        reg = 1e-9
        data = covariance_descriptors(img, 4, regularization=reg)
        interior = data.points[4]  # second row of cells, away from u borders
        expected = np.zeros((5, 5))
        expected[0, 0] = np.var([0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3], ddof=1)
        np.testing.assert_allclose(interior, expected + reg * np.eye(5), atol=1e-15)

    def test_hand_computed_cell_covariance(self, rng):
        img = rng.integers(0, 256, size=(8, 8)).astype(float)
        g = 4
        data = covariance_descriptors(img, g, regularization=0.0)
        feats = pixel_features(img)
        cell = feats[0:g, 4:8].reshape(-1, 5)  # cell (0, 1) in row-major order
        manual = np.zeros((5, 5))
        mean = cell.mean(axis=0)
        for row in cell:
            manual += np.outer(row - mean, row - mean)
        manual /= g * g - 1
        np.testing.assert_allclose(data.points[1], manual, rtol=1e-12, atol=1e-12)

    def test_zero_variance_cell_without_ridge(self):
        img = np.full((4, 4), 9.0)
        with pytest.raises(DataError, match="cell 0"):
            covariance_descriptors(img, 4, regularization=0.0)

    def test_grid_must_divide(self):
        with pytest.raises(ValueError, match="does not divide"):
            GridSpec(width=10, height=8, cell=4)

    def test_translation_consistency(self, rng):
        # A texture with the cell period is invariant under a one-cell
        # shift; interior cells of a two-cell-periodic texture permute.
        g = 4
        tile = rng.integers(0, 256, size=(g, g)).astype(float)
        img = np.tile(tile, (6, 6))
        shifted = np.roll(img, g, axis=1)
        a = covariance_descriptors(img, g, regularization=1e-8)
        b = covariance_descriptors(shifted, g, regularization=1e-8)
        np.testing.assert_allclose(
            np.sort(a.points.reshape(a.n, -1), axis=0),
            np.sort(b.points.reshape(b.n, -1), axis=0),
            atol=1e-10,
        )

        tile2 = rng.integers(0, 256, size=(2 * g, 2 * g)).astype(float)
        img2 = np.tile(tile2, (4, 4))
        shifted2 = np.roll(img2, g, axis=1)
        a2 = covariance_descriptors(img2, g, regularization=1e-8)
        b2 = covariance_descriptors(shifted2, g, regularization=1e-8)
        ncols = img2.shape[1] // g
        keep = [
            i for i in range(a2.n) if i % ncols not in (0, ncols - 1)
        ]  # drop cells touching the shifted border
        np.testing.assert_allclose(
            np.sort(a2.points[keep].reshape(len(keep), -1), axis=0),
            np.sort(b2.points[keep].reshape(len(keep), -1), axis=0),
            atol=1e-10,
        )

    def test_default_regularization_positive(self, rng):
        img = rng.integers(0, 256, size=(8, 8)).astype(float)
        assert default_regularization(img) > 0
        assert default_regularization(np.zeros((8, 8))) == 1e-6

    def test_outputs_are_spd(self, rng):
        img = rng.integers(0, 256, size=(16, 16)).astype(float)
        data = covariance_descriptors(img, 4)
        assert np.all(np.linalg.eigvalsh(data.points)[:, 0] > 0)


class TestMatrixSetFile:
    def test_roundtrip_bitwise(self, tmp_path, rng):
        data = Dataset(np.stack([random_spd(rng, 3) for _ in range(3)]))
        path = tmp_path / "set.msf"
        write_matrix_set(path, data)
        back = read_matrix_set(path)
        np.testing.assert_array_equal(back.points, data.points)

    def test_comments_ignored(self, tmp_path):
        path = tmp_path / "c.msf"
        path.write_text("# header comment\n2 1\n# matrix follows\n2 0\n0 3\n")
        data = read_matrix_set(path)
        np.testing.assert_array_equal(data.points[0], np.diag([2.0, 3.0]))

    def test_non_symmetric_matrix_rejected(self, tmp_path):
        path = tmp_path / "bad.msf"
        path.write_text("2 2\n1 0\n0 1\n1 0.5\n0 1\n")
        with pytest.raises(DataError) as err:
            read_matrix_set(path)
        assert err.value.index == 1

    def test_non_spd_matrix_rejected(self, tmp_path):
        path = tmp_path / "bad.msf"
        path.write_text("2 1\n1 0\n0 -1\n")
        with pytest.raises(DataError, match="positive definite"):
            read_matrix_set(path)

    def test_header_count_mismatch(self, tmp_path):
        path = tmp_path / "short.msf"
        path.write_text("2 2\n1 0\n0 1\n")
        with pytest.raises(FormatError, match="promises 2 matrices"):
            read_matrix_set(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "h.msf"
        path.write_text("two matrices\n")
        with pytest.raises(FormatError):
            read_matrix_set(path)

    def test_row_width_checked(self, tmp_path):
        path = tmp_path / "w.msf"
        path.write_text("2 1\n1 0 0\n0 1\n")
        with pytest.raises(FormatError, match="entries"):
            read_matrix_set(path)
