import math

import numpy as np
import pytest

from clocklat import (
    ClockSpec,
    CapExceededError,
    enumerate_partitions,
    equivalent_representation_check,
    lattice_size,
    moments,
    partition_count,
    smith_form,
    smith_vector,
    smith_vectors,
    unit_cell_volume,
)
from clocklat.lattice import _int_det

from conftest import random_full_rank_int_matrix


def det_int(rows):
    return _int_det([list(r) for r in rows])


class TestEnumeration:
    def test_empty_partition(self):
        parts = enumerate_partitions(0, 3)
        assert parts.shape == (1, 2)
        assert (parts == 0).all()

    def test_unary_lattice(self):
        parts = enumerate_partitions(2, 2)
        assert sorted(int(p[0]) for p in parts) == [0, 1, 2]

    def test_count_matches_binomial(self):
        parts = enumerate_partitions(2, 3)
        assert len(parts) == 6 == partition_count(2, 3)
        # direct oracle: brute force over the cube
        brute = [(a, b) for a in range(3) for b in range(3) if a + b <= 2]
        assert sorted(map(tuple, parts.tolist())) == sorted(brute)

    def test_cap_rejected(self):
        with pytest.raises(CapExceededError):
            enumerate_partitions(10**6, 4, cap=1000)


class TestSmithForm:
    def test_row_vector_23(self):
        sf = smith_form([[2, 3]])
        assert sf.A == (1,)
        assert sf.unit_cell_volume == 1
        assert sf.reconstruct() == ((2, 3),)
        assert abs(det_int(sf.S)) == 1

    def test_row_vector_24(self):
        sf = smith_form([[2, 4]])
        assert sf.A == (2,)
        assert sf.unit_cell_volume == 2

    def test_identity(self):
        sf = smith_form([[1, 0], [0, 1]])
        assert sf.A == (1, 1)
        assert sf.unit_cell_volume == 1

    def test_rank_deficient_names_rows(self):
        with pytest.raises(ValueError, match="dependent rows: \\[1\\]"):
            smith_form([[1, 2, 3], [2, 4, 6]])

    def test_random_reconstruction_suite(self):
        rng = np.random.default_rng(20240817)
        for _ in range(200):
            K = random_full_rank_int_matrix(rng)
            sf = smith_form(K.tolist())
            assert sf.reconstruct() == tuple(tuple(int(v) for v in row) for row in K)
            assert abs(det_int(sf.T)) == 1
            assert abs(det_int(sf.S)) == 1
            for i in range(len(sf.A) - 1):
                assert sf.A[i + 1] % sf.A[i] == 0
            assert all(a > 0 for a in sf.A)
            assert sf.unit_cell_volume == unit_cell_volume(K.tolist())

    def test_unimodular_s_has_unit_row_and_column_gcds(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            K = random_full_rank_int_matrix(rng)
            S = smith_form(K.tolist()).S
            for row in S:
                assert math.gcd(*row) == 1
            for col in zip(*S):
                assert math.gcd(*col) == 1


class TestUnitCellVolume:
    def test_diagonal(self):
        assert unit_cell_volume([[2, 0], [0, 3]]) == 6

    def test_coprime_row(self):
        assert unit_cell_volume([[1, 2]]) == 1

    def test_scalar(self):
        assert unit_cell_volume([[5]]) == 5

    def test_matches_smith_diagonal(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            K = random_full_rank_int_matrix(rng)
            assert unit_cell_volume(K.tolist()) == smith_form(K.tolist()).unit_cell_volume


class TestSmithVectors:
    def test_origin(self):
        sf = smith_form([[1, 0], [0, 1]])
        assert smith_vector(sf, [0, 0]) == (0, 0)

    def test_matrix_multiply_values(self):
        spec = ClockSpec(units=[1.0], K=[[2, 3]], probs=[0.2, 0.4, 0.4])
        sf = spec.smith()
        s10 = smith_vector(sf, [1, 0])
        s01 = smith_vector(sf, [0, 1])
        assert s10 != s01
        # the energy read through the transformed units must match K directly
        assert spec.energy_of(s10) == pytest.approx(2.0, abs=1e-12)
        assert spec.energy_of(s01) == pytest.approx(3.0, abs=1e-12)

    def test_injectivity_iff_equal_energy(self):
        spec = ClockSpec(units=[1.0], K=[[2, 4]], probs=[0.3, 0.3, 0.4])
        parts = enumerate_partitions(5, 3)
        svecs = smith_vectors(spec.smith(), parts)
        K = spec.K_array
        for i in range(len(parts)):
            for j in range(len(parts)):
                same_s = (svecs[i] == svecs[j]).all()
                same_e = (K @ parts[i] == K @ parts[j]).all()
                assert same_s == same_e


class TestLatticeSize:
    def test_binary_spectrum(self, binary_clock):
        assert lattice_size(binary_clock, 7) == 8

    def test_ladder(self, ladder_clock):
        assert lattice_size(ladder_clock, 4) == 9

    def test_injective_map_counts_partitions(self, incommensurable_clock):
        assert lattice_size(incommensurable_clock, 3) == 10 == partition_count(3, 3)


class TestMoments:
    def test_binomial(self, binary_clock):
        mom = moments(binary_clock, 12)
        assert mom.mean == pytest.approx([6.0])
        assert mom.cov == pytest.approx([[3.0]])

    def test_multinomial_identity_map(self, incommensurable_clock):
        n = 9
        mom = moments(incommensurable_clock, n)
        assert mom.cov == pytest.approx(n * np.array([[2 / 9, -1 / 9], [-1 / 9, 2 / 9]]))

    def test_cov_scales_linearly(self, ladder_clock):
        c1 = moments(ladder_clock, 10).cov
        c2 = moments(ladder_clock, 30).cov
        assert c2 == pytest.approx(3 * c1)

    def test_invalid_probs_rejected(self):
        with pytest.raises(ValueError):
            ClockSpec(units=[1.0], K=[[1]], probs=[1.0, 0.0])

    def test_determinant_identity(self, ladder_clock, incommensurable_clock):
        for spec in (ladder_clock, incommensurable_clock):
            for n in (3, 17):
                mom = moments(spec, n)
                lhs = mom.unit_cell / math.sqrt(np.linalg.det(mom.tilde_cov))
                rhs = 1.0 / math.sqrt(np.linalg.det(mom.cov))
                assert lhs == pytest.approx(rhs, rel=1e-12)


class TestBoundaryDefects:
    def test_defect_band_width_constant(self):
        # reachable energies of K=(2,3) miss only a band near the boundary
        # whose width does not grow with the copy number
        spec = ClockSpec(units=[1.0], K=[[2, 3]], probs=[0.2, 0.4, 0.4])
        widths = []
        for n in (6, 12, 24):
            parts = enumerate_partitions(n, 3)
            svals = np.unique(smith_vectors(spec.smith(), parts)[:, 0])
            full = np.arange(svals.min(), svals.max() + 1)
            missing = np.setdiff1d(full, svals)
            if len(missing) == 0:
                widths.append(0)
            else:
                dist_to_edge = np.minimum(missing - full[0], full[-1] - missing)
                widths.append(int(dist_to_edge.max()))
        assert widths[0] == widths[1] == widths[2]


class TestEquivalence:
    def test_rescaled_units(self):
        a = ClockSpec(units=[1.0], K=[[2, 3]], probs=[0.2, 0.3, 0.5])
        b = ClockSpec(units=[0.5], K=[[4, 6]], probs=[0.2, 0.3, 0.5])
        assert equivalent_representation_check(a, b).equivalent

    def test_reflexive(self, ladder_clock):
        assert equivalent_representation_check(ladder_clock, ladder_clock).equivalent

    def test_different_spectra_flagged(self):
        a = ClockSpec(units=[1.0], K=[[1, 2]], probs=[0.2, 0.3, 0.5])
        b = ClockSpec(units=[1.0], K=[[1, 3]], probs=[0.2, 0.3, 0.5])
        report = equivalent_representation_check(a, b)
        assert not report.equivalent
        assert report.diagnostics
