#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace pointcal {

using Vec3 = std::array<double, 3>;

struct PointCloud {
    std::vector<Vec3> points;

    int size() const { return static_cast<int>(points.size()); }
};

// Plain value matrix for non-differentiable feature plumbing (oracles,
// grouping). The autodiff path uses Tensor instead.
struct FeatureMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;  // row-major

    double at(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }
};

// Neighborhoods of a set of centroids. neighbor_ids is rows x k row-major;
// padded slots replicate the row's first real neighbor and are flagged in
// pad_mask.
struct NeighborhoodIndex {
    std::vector<int> centroid_ids;
    int k = 0;
    std::vector<int> neighbor_ids;
    std::vector<std::uint8_t> pad_mask;

    int rows() const { return static_cast<int>(centroid_ids.size()); }
    int neighbor(int row, int slot) const {
        return neighbor_ids[static_cast<size_t>(row) * k + slot];
    }
    bool padded(int row, int slot) const {
        return pad_mask[static_cast<size_t>(row) * k + slot] != 0;
    }
};

// Grouped per-neighborhood input block: m x k x width, where each slot holds
// (neighbor - centroid) coordinates optionally followed by the neighbor's
// feature row.
struct GroupedFeatures {
    int m = 0;
    int k = 0;
    int width = 0;
    std::vector<double> data;

    double at(int row, int slot, int j) const {
        return data[(static_cast<size_t>(row) * k + slot) * width + j];
    }
};

// Center on the centroid and scale so the farthest point sits on the unit
// sphere. Degenerate clouds (all points identical) are rejected.
PointCloud normalize_unit_sphere(const PointCloud& cloud);

// Greedy max-min selection starting from seed_index; ties broken by lowest
// index. Returns m distinct indices in selection order.
std::vector<int> farthest_point_sampling(const PointCloud& cloud, int m, int seed_index = 0);

// Up to k neighbors within radius per centroid, lowest indices first. A
// centroid with no qualifying point keeps itself as its only neighbor.
NeighborhoodIndex ball_query(const PointCloud& cloud, std::span<const int> centroids,
                             double radius, int k);

// k nearest neighbors per centroid, distance ties broken by lower index.
NeighborhoodIndex knn(const PointCloud& cloud, std::span<const int> centroids, int k);

// Assemble the m x k x (3+C) grouped block; features may be null (first
// layer works on raw relative coordinates, width 3).
GroupedFeatures group_features(const PointCloud& cloud, const FeatureMatrix* features,
                               const NeighborhoodIndex& idx);

// Text format: one "x y z" line per point. Lines with any other field count
// are rejected.
PointCloud read_cloud(const std::filesystem::path& path);
void write_cloud(const std::filesystem::path& path, const PointCloud& cloud);

double squared_distance(const Vec3& a, const Vec3& b);

}  // namespace pointcal
