import numpy as np
import pytest

from savid import oracles
from savid.numerics import LinearMap
from savid.pointcloud import (
    CONV_STAGE_DIMS,
    PointCloud,
    VoxelGrid,
    bev_rasterize,
    conv_feature_chain,
    fps_sample,
    make_conv_stack,
    sparse_conv_downsample,
    voxelize_mean,
)

rng = np.random.default_rng(1)


def random_cloud(n, scale=8.0, seed=0):
    r = np.random.default_rng(seed)
    xyz = r.uniform(-scale, scale, size=(n, 3))
    refl = r.uniform(0.0, 1.0, size=(n, 1))
    return PointCloud(np.hstack([xyz, refl]))


class TestPointCloud:
    def test_empty_cloud(self):
        cloud = PointCloud(np.empty((0, 4)))
        assert len(cloud) == 0

    def test_bad_shape_rejected(self):
        with pytest.raises(ValueError):
            PointCloud(np.zeros((5, 3)))

    def test_nonfinite_rejected(self):
        pts = np.zeros((2, 4))
        pts[0, 0] = np.nan
        with pytest.raises(ValueError):
            PointCloud(pts)

    def test_reflectance_range_enforced(self):
        pts = np.zeros((1, 4))
        pts[0, 3] = 1.5
        with pytest.raises(ValueError):
            PointCloud(pts)


class TestVoxelizeMean:
    def test_single_point_single_cell(self):
        cloud = PointCloud(np.array([[0.5, 0.5, 0.5, 0.2]]))
        grid, dropped = voxelize_mean(cloud, (0, 0, 0), (1, 1, 1), (2, 2, 2))
        assert dropped == 0
        assert set(grid.cells) == {(0, 0, 0)}
        feat, cnt = grid.cells[(0, 0, 0)]
        assert cnt == 1
        np.testing.assert_allclose(feat, [0.5, 0.5, 0.5, 0.2])

    def test_mean_pooling(self):
        cloud = PointCloud(np.array([[0.2, 0.2, 0.2, 0.0], [0.8, 0.8, 0.8, 1.0]]))
        grid, _ = voxelize_mean(cloud, (0, 0, 0), (1, 1, 1), (1, 1, 1))
        feat, cnt = grid.cells[(0, 0, 0)]
        assert cnt == 2
        np.testing.assert_allclose(feat, [0.5, 0.5, 0.5, 0.5])

    def test_out_of_bounds_dropped(self):
        cloud = PointCloud(np.array([[5.0, 0.0, 0.0, 0.1], [-1.0, 0.0, 0.0, 0.1]]))
        grid, dropped = voxelize_mean(cloud, (0, 0, 0), (1, 1, 1), (2, 2, 2))
        assert dropped == 2
        assert not grid.cells

    def test_matches_hash_average_oracle(self):
        cloud = random_cloud(1000, seed=3)
        grid, dropped = voxelize_mean(cloud, (-8, -8, -8), (2, 2, 2), (8, 8, 8))
        ref_cells, ref_dropped = oracles.voxelize_reference(
            cloud, (-8, -8, -8), (2, 2, 2), (8, 8, 8)
        )
        assert dropped == ref_dropped
        assert set(grid.cells) == set(ref_cells)
        for key, (feat, cnt) in grid.cells.items():
            ref_feat, ref_cnt = ref_cells[key]
            assert cnt == ref_cnt
            np.testing.assert_allclose(feat, ref_feat, atol=1e-12)

    def test_bad_voxel_size_rejected(self):
        with pytest.raises(ValueError):
            voxelize_mean(random_cloud(4), (0, 0, 0), (0, 1, 1), (2, 2, 2))


class TestFps:
    def test_matches_greedy_oracle(self):
        cloud = random_cloud(200, seed=4)
        got = fps_sample(cloud, 16)
        assert got == oracles.fps_reference(cloud.xyz, 16, 0)

    def test_no_duplicates(self):
        cloud = random_cloud(300, seed=5)
        idx = fps_sample(cloud, 64)
        assert len(idx) == len(set(idx)) == 64

    def test_k_clamped_to_n(self):
        cloud = random_cloud(10, seed=6)
        assert len(fps_sample(cloud, 50)) == 10

    def test_min_distance_monotone_in_k(self):
        cloud = random_cloud(120, seed=7)
        xyz = cloud.xyz

        def min_pair_dist(idx):
            sub = xyz[idx]
            d = np.linalg.norm(sub[:, None] - sub[None, :], axis=-1)
            return d[~np.eye(len(idx), dtype=bool)].min()

        dists = [min_pair_dist(fps_sample(cloud, k)) for k in (8, 16, 32, 64)]
        assert all(a >= b - 1e-12 for a, b in zip(dists, dists[1:]))

    def test_empty_cloud(self):
        assert fps_sample(PointCloud(np.empty((0, 4))), 5) == []

    def test_bad_start_rejected(self):
        with pytest.raises(ValueError):
            fps_sample(random_cloud(5), 3, start_index=9)


class TestSparseConv:
    def grid_with(self, cells, dims=(5, 5, 3), c=4):
        grid = VoxelGrid(np.zeros(3), np.ones(3), dims)
        r = np.random.default_rng(8)
        for key in cells:
            grid.cells[key] = (r.normal(size=c), 1)
        return grid

    def test_matches_dense_oracle_stride1(self):
        r = np.random.default_rng(9)
        cells = [
            (int(r.integers(0, 5)), int(r.integers(0, 5)), int(r.integers(0, 3)))
            for _ in range(12)
        ]
        grid = self.grid_with(set(cells))
        kernel = r.normal(size=(3, 3, 3, 4, 6))
        out = sparse_conv_downsample(grid, kernel, stride=1)
        ref = oracles.dense_conv_reference(grid, kernel, 1)
        assert set(out.cells) == set(ref)
        for key, (feat, _) in out.cells.items():
            np.testing.assert_allclose(feat, ref[key], atol=1e-10)

    def test_matches_dense_oracle_stride2(self):
        r = np.random.default_rng(10)
        cells = [
            (int(r.integers(0, 5)), int(r.integers(0, 5)), int(r.integers(0, 3)))
            for _ in range(10)
        ]
        grid = self.grid_with(set(cells))
        kernel = r.normal(size=(3, 3, 3, 4, 5))
        out = sparse_conv_downsample(grid, kernel, stride=2)
        ref = oracles.dense_conv_reference(grid, kernel, 2)
        assert set(out.cells) == set(ref)
        for key, (feat, _) in out.cells.items():
            np.testing.assert_allclose(feat, ref[key], atol=1e-10)

    def test_stride2_halves_dims_ceil(self):
        grid = self.grid_with([(0, 0, 0)], dims=(5, 4, 3))
        out = sparse_conv_downsample(grid, np.zeros((3, 3, 3, 4, 2)), stride=2)
        assert out.dims == (3, 2, 2)

    def test_relu_nonnegative(self):
        grid = self.grid_with([(2, 2, 1), (1, 2, 1)])
        out = sparse_conv_downsample(grid, np.random.default_rng(11).normal(size=(3, 3, 3, 4, 4)))
        for feat, _ in out.cells.values():
            assert np.all(feat >= 0.0)

    def test_empty_grid_stays_empty(self):
        grid = VoxelGrid(np.zeros(3), np.ones(3), (4, 4, 4))
        out = sparse_conv_downsample(grid, np.zeros((3, 3, 3, 4, 4)))
        assert not out.cells

    def test_bad_stride_rejected(self):
        with pytest.raises(ValueError):
            sparse_conv_downsample(self.grid_with([(0, 0, 0)]), np.zeros((3, 3, 3, 4, 4)), stride=3)

    def test_channel_mismatch_rejected(self):
        with pytest.raises(ValueError):
            sparse_conv_downsample(self.grid_with([(0, 0, 0)]), np.zeros((3, 3, 3, 5, 4)))


class TestConvChain:
    def test_stage_dims(self):
        assert CONV_STAGE_DIMS == (16, 32, 64, 64)

    def test_chain_output_dims_and_channels(self):
        grid, _ = voxelize_mean(random_cloud(500, seed=12), (-8, -8, -8), (1, 1, 1), (16, 16, 8))
        out = conv_feature_chain(grid, make_conv_stack(seed=0))
        assert out.dims == (2, 2, 1)
        assert out.feature_dim == 64


class TestBevRasterize:
    def test_empty_grid_zero_raster(self):
        grid = VoxelGrid(np.zeros(3), np.ones(3), (4, 4, 2))
        out = bev_rasterize(grid, (8, 8), LinearMap.seeded(4, 6, seed=0))
        assert out.shape == (8, 8, 6)
        np.testing.assert_array_equal(out, 0.0)

    def test_max_count_column_wins(self):
        grid = VoxelGrid(np.zeros(3), np.ones(3), (2, 2, 2))
        grid.cells[(0, 0, 0)] = (np.array([1.0, 0.0]), 1)
        grid.cells[(0, 0, 1)] = (np.array([2.0, 0.0]), 5)
        out = bev_rasterize(grid, (2, 2), LinearMap(np.eye(2)))
        np.testing.assert_allclose(out[0, 0], [2.0, 0.0])
