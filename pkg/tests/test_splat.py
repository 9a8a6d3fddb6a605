import numpy as np
import pytest

from splatmem.core import GaussianPrimitive, kernel
from splatmem.errors import InvalidInputError
from splatmem.grid import LABEL_MODE, PROB_MODE, VoxelGrid
from splatmem.splat import (
    RenderOptions,
    argmax_labels,
    as_arrays,
    build_index,
    render,
    splat_opacity,
    splat_semantics,
)

RNG = np.random.default_rng(11)
C = 12


def softmax(x):
    e = np.exp(x - np.max(x))
    return e / e.sum()


def make_grid(dims=(8, 8, 8), voxel_size=0.1, origin=(0, 0, 0)):
    return VoxelGrid.empty_prob(origin, voxel_size, dims, C)


def random_primitives(n, lo=0.0, hi=0.8, scale_range=(0.03, 0.12), seed=None):
    rng = np.random.default_rng(seed) if seed is not None else RNG
    prims = []
    for _ in range(n):
        q = rng.normal(size=4)
        prims.append(
            GaussianPrimitive(
                rng.uniform(lo, hi, size=3),
                rng.uniform(*scale_range, size=3),
                q / np.linalg.norm(q),
                rng.uniform(0.1, 1.0),
                rng.normal(size=C - 1),
            )
        )
    return prims


def dense_render_oracle(grid, prims):
    """Brute force: every primitive against every voxel center via the
    scalar core ops. Returns channel array shaped like a render result."""
    nx, ny, nz = grid.dims
    out = np.zeros((nx, ny, nz, C))
    sm = [softmax(g.logits) for g in prims]
    dens_norm = [(2 * np.pi) ** 1.5 * np.prod(g.scale) for g in prims]
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                x = grid.origin + (np.array([i, j, k]) + 0.5) * grid.voxel_size
                keep = 1.0
                dsum = 0.0
                snum = np.zeros(C - 1)
                for g, smx, dn in zip(prims, sm, dens_norm):
                    kv = kernel(x, g)
                    keep *= 1.0 - g.opacity * kv
                    p = kv / dn
                    dsum += p
                    snum += p * smx
                alpha = 1.0 - keep
                e = snum / dsum if dsum > 0 else np.full(C - 1, 1.0 / (C - 1))
                out[i, j, k, : C - 1] = alpha * e
                out[i, j, k, C - 1] = 1.0 - alpha
    return out


class TestSpatialIndex:
    def test_single_primitive_query_at_mean(self):
        prims = random_primitives(1)
        idx = build_index(prims, cell_size=0.4)
        assert list(idx.query(prims[0].mean)) == [0]

    def test_separated_primitives_disjoint(self):
        a = GaussianPrimitive((0, 0, 0), (0.05, 0.05, 0.05), (1, 0, 0, 0), 1.0,
                              np.zeros(C - 1))
        b = GaussianPrimitive((5, 5, 5), (0.05, 0.05, 0.05), (1, 0, 0, 0), 1.0,
                              np.zeros(C - 1))
        idx = build_index([a, b], cell_size=0.2)
        assert 1 not in idx.query(a.mean)
        assert 0 not in idx.query(b.mean)

    def test_superset_of_support_membership(self):
        # oracle: direct Mahalanobis support test per point
        prims = random_primitives(100, seed=3)
        arrs = as_arrays(prims)
        idx = build_index(prims, cell_size=0.25)
        pts = np.random.default_rng(4).uniform(-0.2, 1.0, size=(1000, 3))
        for x in pts:
            got = set(idx.query(x))
            d = x - arrs.means
            m2 = np.einsum("ni,nij,nj->n", d, arrs.inv_cov, d)
            inside = set(np.nonzero(m2 <= 3.0**2)[0])
            assert inside <= got

    def test_no_duplicate_ids_per_bucket(self):
        prims = random_primitives(50, seed=5)
        idx = build_index(prims, cell_size=0.3)
        for ids in idx.buckets.values():
            assert len(ids) == len(set(ids.tolist()))

    def test_empty_input(self):
        idx = build_index([], cell_size=0.5)
        assert len(idx.query((0, 0, 0))) == 0

    def test_unbounded_returns_all(self):
        prims = random_primitives(7)
        idx = build_index(prims, cell_size=0.5, truncation_radius_sigmas=np.inf)
        assert list(idx.query((100, 100, 100))) == list(range(7))

    def test_bad_cell_size(self):
        with pytest.raises(InvalidInputError):
            build_index([], cell_size=0.0)


class TestSplatOpacity:
    def test_unit_opacity_at_center(self):
        grid = make_grid()
        center = grid.origin + (np.array([3, 3, 3]) + 0.5) * grid.voxel_size
        g = GaussianPrimitive(center, (0.05, 0.05, 0.05), (1, 0, 0, 0), 1.0,
                              np.zeros(C - 1))
        alpha = splat_opacity(grid, [g])
        assert alpha[3, 3, 3] == pytest.approx(1.0)

    def test_empty_product_is_zero(self):
        grid = make_grid()
        alpha = splat_opacity(grid, [])
        assert np.all(alpha == 0.0)

    def test_two_half_opacity_primitives(self):
        grid = make_grid()
        center = grid.origin + (np.array([4, 4, 4]) + 0.5) * grid.voxel_size
        g = GaussianPrimitive(center, (0.05, 0.05, 0.05), (1, 0, 0, 0), 0.5,
                              np.zeros(C - 1))
        alpha = splat_opacity(grid, [g, g])
        assert alpha[4, 4, 4] == pytest.approx(0.75, abs=1e-12)

    def test_monotone_in_primitives(self):
        grid = make_grid()
        prims = random_primitives(12, seed=9)
        a1 = splat_opacity(grid, prims[:6])
        a2 = splat_opacity(grid, prims)
        assert np.all(a2 >= a1 - 1e-12)


class TestSplatSemantics:
    def test_single_primitive_softmax_everywhere(self):
        grid = make_grid()
        g = random_primitives(1, seed=2)[0]
        field, undef = splat_semantics(grid, [g])
        expect = softmax(g.logits)
        defined = ~undef
        assert np.allclose(field[defined], expect, atol=1e-9)

    def test_equal_density_pair_averages(self):
        grid = make_grid(dims=(4, 4, 4))
        x = grid.origin + (np.array([2, 2, 2]) + 0.5) * grid.voxel_size
        off = np.array([0.07, 0.0, 0.0])
        la, lb = RNG.normal(size=C - 1), RNG.normal(size=C - 1)
        a = GaussianPrimitive(x - off, (0.05,) * 3, (1, 0, 0, 0), 1.0, la)
        b = GaussianPrimitive(x + off, (0.05,) * 3, (1, 0, 0, 0), 1.0, lb)
        field, _ = splat_semantics(grid, [a, b])
        expect = 0.5 * (softmax(la) + softmax(lb))
        assert np.allclose(field[2, 2, 2], expect, atol=1e-9)

    def test_rows_sum_to_one(self):
        grid = make_grid()
        field, _ = splat_semantics(grid, random_primitives(20, seed=13))
        assert np.allclose(field.sum(axis=-1), 1.0, atol=1e-6)

    def test_zero_density_voxels_uniform_and_flagged(self):
        grid = make_grid(dims=(10, 10, 10))
        g = GaussianPrimitive((0.05, 0.05, 0.05), (0.01,) * 3, (1, 0, 0, 0), 1.0,
                              RNG.normal(size=C - 1))
        field, undef = splat_semantics(grid, [g])
        assert undef.any()
        assert np.allclose(field[undef], 1.0 / (C - 1))


class TestRenderOracle:
    def test_dense_oracle_match_with_truncation_disabled(self):
        grid = make_grid(dims=(6, 6, 6), voxel_size=0.12)
        prims = random_primitives(20, seed=21)
        out = render(grid, prims,
                     RenderOptions(truncation_radius_sigmas=np.inf))
        oracle = dense_render_oracle(grid, prims)
        assert np.max(np.abs(out.values - oracle)) <= 1e-9

    def test_truncated_within_tolerance_of_dense(self):
        grid = make_grid(dims=(8, 8, 8), voxel_size=0.1)
        prims = random_primitives(30, seed=22)
        out = render(grid, prims, RenderOptions(truncation_radius_sigmas=3.0))
        oracle = dense_render_oracle(grid, prims)
        assert np.max(np.abs(out.values - oracle)) <= 1e-2

    def test_empty_scene(self):
        grid = make_grid(dims=(3, 3, 3))
        out = render(grid, [])
        assert np.allclose(out.values[..., -1], 1.0)
        assert np.allclose(out.values[..., :-1], 0.0)

    def test_channel_sums_one(self):
        grid = make_grid()
        out = render(grid, random_primitives(40, seed=23))
        out.check_normalized(1e-6)

    def test_permutation_invariance(self):
        grid = make_grid(dims=(6, 6, 6))
        prims = random_primitives(15, seed=24)
        a = render(grid, prims)
        perm = list(reversed(prims))
        b = render(grid, perm)
        assert np.max(np.abs(a.values - b.values)) <= 1e-12

    def test_confidence_channel_matches_dense_oracle(self):
        grid = make_grid(dims=(5, 5, 5), voxel_size=0.15)
        prims = random_primitives(10, seed=25)
        confs = np.random.default_rng(26).uniform(0, 1, size=10)
        out = render(grid, prims,
                     RenderOptions(confidence_weighted=True, confidences=confs,
                                   truncation_radius_sigmas=np.inf))
        arrs = as_arrays(prims)
        # dense confidence oracle
        expect = np.zeros(grid.dims)
        for i in range(5):
            for j in range(5):
                for k in range(5):
                    x = grid.origin + (np.array([i, j, k]) + 0.5) * grid.voxel_size
                    num = den = 0.0
                    for gi, g in enumerate(prims):
                        p = kernel(x, g) / arrs.pdf_norm[gi]
                        num += p * confs[gi]
                        den += p
                    expect[i, j, k] = num / den if den > 0 else 0.0
        assert out.confidence is not None
        assert np.max(np.abs(out.confidence - expect)) <= 1e-9

    def test_render_with_prebuilt_index_matches_options(self):
        grid = make_grid()
        prims = random_primitives(25, seed=27)
        idx = build_index(prims, cell_size=grid.voxel_size * 4)
        a = render(grid, prims, index=idx)
        b = render(grid, prims, RenderOptions(cell_size=grid.voxel_size * 4))
        assert np.array_equal(a.values, b.values)


class TestArgmaxLabels:
    def make_prob_grid(self, channels):
        vals = np.array(channels, dtype=float).reshape(1, 1, len(channels), C)
        return VoxelGrid((0, 0, 0), 0.1, (1, 1, len(channels)), vals, PROB_MODE, C)

    def test_empty_voxel(self):
        row = np.zeros(C)
        row[-1] = 1.0
        g = self.make_prob_grid([row])
        labels = argmax_labels(g)
        assert labels.values[0, 0, 0] == C - 1

    def test_occupied_class(self):
        row = np.zeros(C)
        row[0], row[1], row[-1] = 0.6, 0.1, 0.3
        g = self.make_prob_grid([row])
        assert argmax_labels(g).values[0, 0, 0] == 0

    def test_tie_breaks_to_lower_class(self):
        row = np.zeros(C)
        row[2], row[5] = 0.5, 0.5
        g = self.make_prob_grid([row])
        assert argmax_labels(g).values[0, 0, 0] == 2

    def test_occupied_beats_empty_on_tie(self):
        row = np.zeros(C)
        row[3], row[-1] = 0.5, 0.5
        g = self.make_prob_grid([row])
        assert argmax_labels(g).values[0, 0, 0] == 3

    def test_rejects_label_grid(self):
        g = VoxelGrid.empty_labels((0, 0, 0), 0.1, (2, 2, 2), C)
        with pytest.raises(InvalidInputError):
            argmax_labels(g)
