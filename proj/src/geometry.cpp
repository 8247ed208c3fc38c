#include "pointcal/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "pointcal/errors.hpp"

namespace pointcal {

double squared_distance(const Vec3& a, const Vec3& b) {
    const double dx = a[0] - b[0];
    const double dy = a[1] - b[1];
    const double dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
}

PointCloud normalize_unit_sphere(const PointCloud& cloud) {
    const int n = cloud.size();
    if (n < 1) throw ValidationError("normalize_unit_sphere: empty cloud");
    Vec3 mean{0.0, 0.0, 0.0};
    for (const auto& p : cloud.points) {
        mean[0] += p[0];
        mean[1] += p[1];
        mean[2] += p[2];
    }
    mean[0] /= n;
    mean[1] /= n;
    mean[2] /= n;
    double max_sq = 0.0;
    for (const auto& p : cloud.points) {
        max_sq = std::max(max_sq, squared_distance(p, mean));
    }
    if (max_sq == 0.0) {
        throw ValidationError("normalize_unit_sphere: degenerate cloud, all points equal");
    }
    const double scale = 1.0 / std::sqrt(max_sq);
    PointCloud out;
    out.points.reserve(n);
    for (const auto& p : cloud.points) {
        out.points.push_back(
            {(p[0] - mean[0]) * scale, (p[1] - mean[1]) * scale, (p[2] - mean[2]) * scale});
    }
    return out;
}

std::vector<int> farthest_point_sampling(const PointCloud& cloud, int m, int seed_index) {
    const int n = cloud.size();
    if (m < 1 || m > n) {
        throw ValidationError("farthest_point_sampling: requested " + std::to_string(m) +
                              " centroids from " + std::to_string(n) + " points");
    }
    if (seed_index < 0 || seed_index >= n) {
        throw ValidationError("farthest_point_sampling: seed index out of range");
    }
    std::vector<int> selected;
    selected.reserve(m);
    selected.push_back(seed_index);
    std::vector<double> min_sq(n, std::numeric_limits<double>::infinity());
    min_sq[seed_index] = -1.0;  // selected indices can never win the argmax again
    for (int step = 1; step < m; ++step) {
        const Vec3& last = cloud.points[selected.back()];
        int best = -1;
        double best_sq = -1.0;
        for (int i = 0; i < n; ++i) {
            min_sq[i] = std::min(min_sq[i], squared_distance(cloud.points[i], last));
            // Strict > keeps the lowest qualifying index on ties.
            if (min_sq[i] > best_sq) {
                best_sq = min_sq[i];
                best = i;
            }
        }
        selected.push_back(best);
        min_sq[best] = -1.0;  // never reselected: max-min over distance 0 loses to any
    }
    return selected;
}

NeighborhoodIndex ball_query(const PointCloud& cloud, std::span<const int> centroids,
                             double radius, int k) {
    if (centroids.empty()) throw ValidationError("ball_query: empty centroid list");
    if (radius <= 0.0) throw ValidationError("ball_query: radius must be positive");
    if (k < 1) throw ValidationError("ball_query: k must be at least 1");
    const int n = cloud.size();
    const double r_sq = radius * radius;
    NeighborhoodIndex out;
    out.centroid_ids.assign(centroids.begin(), centroids.end());
    out.k = k;
    out.neighbor_ids.resize(centroids.size() * static_cast<size_t>(k));
    out.pad_mask.assign(centroids.size() * static_cast<size_t>(k), 0);
    for (size_t row = 0; row < centroids.size(); ++row) {
        const int c = centroids[row];
        if (c < 0 || c >= n) throw ValidationError("ball_query: centroid index out of range");
        int* slots = &out.neighbor_ids[row * k];
        int found = 0;
        for (int i = 0; i < n && found < k; ++i) {
            if (squared_distance(cloud.points[i], cloud.points[c]) <= r_sq) {
                slots[found++] = i;
            }
        }
        if (found == 0) {
            slots[0] = c;
            found = 1;
        }
        for (int s = found; s < k; ++s) {
            slots[s] = slots[0];
            out.pad_mask[row * k + s] = 1;
        }
    }
    return out;
}

NeighborhoodIndex knn(const PointCloud& cloud, std::span<const int> centroids, int k) {
    const int n = cloud.size();
    if (centroids.empty()) throw ValidationError("knn: empty centroid list");
    if (k < 1 || k > n) {
        throw ValidationError("knn: requested " + std::to_string(k) + " neighbors from " +
                              std::to_string(n) + " points");
    }
    NeighborhoodIndex out;
    out.centroid_ids.assign(centroids.begin(), centroids.end());
    out.k = k;
    out.neighbor_ids.resize(centroids.size() * static_cast<size_t>(k));
    out.pad_mask.assign(centroids.size() * static_cast<size_t>(k), 0);
    std::vector<std::pair<double, int>> order(n);
    for (size_t row = 0; row < centroids.size(); ++row) {
        const int c = centroids[row];
        if (c < 0 || c >= n) throw ValidationError("knn: centroid index out of range");
        for (int i = 0; i < n; ++i) {
            order[i] = {squared_distance(cloud.points[i], cloud.points[c]), i};
        }
        std::partial_sort(order.begin(), order.begin() + k, order.end());
        for (int s = 0; s < k; ++s) out.neighbor_ids[row * k + s] = order[s].second;
    }
    return out;
}

GroupedFeatures group_features(const PointCloud& cloud, const FeatureMatrix* features,
                               const NeighborhoodIndex& idx) {
    const int n = cloud.size();
    const int c = features ? features->cols : 0;
    if (features && features->rows != n) {
        throw ValidationError("group_features: feature rows do not match cloud size");
    }
    GroupedFeatures out;
    out.m = idx.rows();
    out.k = idx.k;
    out.width = 3 + c;
    out.data.resize(static_cast<size_t>(out.m) * out.k * out.width);
    for (int row = 0; row < out.m; ++row) {
        const int ci = idx.centroid_ids[row];
        if (ci < 0 || ci >= n) throw ValidationError("group_features: centroid out of range");
        const Vec3& center = cloud.points[ci];
        for (int s = 0; s < out.k; ++s) {
            const int ni = idx.neighbor(row, s);
            if (ni < 0 || ni >= n) {
                throw ValidationError("group_features: neighbor index out of range");
            }
            double* dst = &out.data[(static_cast<size_t>(row) * out.k + s) * out.width];
            const Vec3& p = cloud.points[ni];
            dst[0] = p[0] - center[0];
            dst[1] = p[1] - center[1];
            dst[2] = p[2] - center[2];
            for (int j = 0; j < c; ++j) dst[3 + j] = features->at(ni, j);
        }
    }
    return out;
}

PointCloud read_cloud(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open cloud file " + path.string());
    PointCloud cloud;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream fields(line);
        Vec3 p;
        std::string extra;
        if (!(fields >> p[0] >> p[1] >> p[2]) || (fields >> extra)) {
            throw IoError(path.string() + ":" + std::to_string(lineno) +
                          ": expected exactly 3 fields");
        }
        cloud.points.push_back(p);
    }
    return cloud;
}

void write_cloud(const std::filesystem::path& path, const PointCloud& cloud) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write cloud file " + path.string());
    char buf[96];
    for (const auto& p : cloud.points) {
        std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", p[0], p[1], p[2]);
        out << buf;
    }
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace pointcal
