#ifndef SOFTPATCH_TESTS_ORACLES_HPP
#define SOFTPATCH_TESTS_ORACLES_HPP

// Slow, direct reference implementations used to check the library.

#include <softpatch/softpatch.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace oracle {

using Points = std::vector<std::vector<double>>;

inline double dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    return std::sqrt(s);
}

/// LOF with tie-inclusive k-neighborhoods, straight from the definitions.
inline std::vector<double> lof(const Points& pts, std::size_t k) {
    const std::size_t n = pts.size();
    std::vector<std::vector<double>> d(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) d[i][j] = dist(pts[i], pts[j]);

    std::vector<double> kdist(n);
    std::vector<std::vector<std::size_t>> hood(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> others;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) others.push_back(d[i][j]);
        std::sort(others.begin(), others.end());
        kdist[i] = others[k - 1];
        for (std::size_t j = 0; j < n; ++j)
            if (j != i && d[i][j] <= kdist[i]) hood[i].push_back(j);
    }
    std::vector<double> lrd(n);
    for (std::size_t i = 0; i < n; ++i) {
        double reach = 0.0;
        for (auto j : hood[i]) reach += std::max(kdist[j], d[i][j]);
        lrd[i] = double(hood[i].size()) / reach;
    }
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (auto j : hood[i]) s += lrd[j];
        out[i] = s / double(hood[i].size()) / lrd[i];
    }
    return out;
}

/// Gauss-Jordan inverse with partial pivoting.
inline std::vector<std::vector<double>> inverse(std::vector<std::vector<double>> a) {
    const std::size_t n = a.size();
    std::vector<std::vector<double>> inv(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1.0;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        std::swap(a[col], a[piv]);
        std::swap(inv[col], inv[piv]);
        const double p = a[col][col];
        for (std::size_t c = 0; c < n; ++c) {
            a[col][c] /= p;
            inv[col][c] /= p;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = a[r][col];
            for (std::size_t c = 0; c < n; ++c) {
                a[r][c] -= f * a[col][c];
                inv[r][c] -= f * inv[col][c];
            }
        }
    }
    return inv;
}

/// Mahalanobis distance of each point to the set mean, covariance (1/(N-1)) sum dd^T + eps I.
inline std::vector<double> mahalanobis(const Points& pts, double eps) {
    const std::size_t n = pts.size();
    const std::size_t c = pts[0].size();
    std::vector<double> mu(c, 0.0);
    for (const auto& p : pts)
        for (std::size_t i = 0; i < c; ++i) mu[i] += p[i] / double(n);
    std::vector<std::vector<double>> cov(c, std::vector<double>(c, 0.0));
    for (const auto& p : pts)
        for (std::size_t i = 0; i < c; ++i)
            for (std::size_t j = 0; j < c; ++j) cov[i][j] += (p[i] - mu[i]) * (p[j] - mu[j]) / double(n - 1);
    for (std::size_t i = 0; i < c; ++i) cov[i][i] += eps;
    const auto inv = inverse(cov);
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < c; ++i)
            for (std::size_t j = 0; j < c; ++j) s += (pts[k][i] - mu[i]) * inv[i][j] * (pts[k][j] - mu[j]);
        out[k] = std::sqrt(s);
    }
    return out;
}

/// AUROC as the fraction of (positive, negative) pairs ordered correctly, ties counting half.
inline double auroc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
    double num = 0.0;
    double pairs = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!labels[i]) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j]) continue;
            pairs += 1.0;
            if (scores[i] > scores[j]) num += 1.0;
            else if (scores[i] == scores[j]) num += 0.5;
        }
    }
    return num / pairs;
}

/// Flat indices removed by a full sort on (score desc, index asc).
inline std::vector<std::size_t> removed_by_sort(const std::vector<double>& scores, double tau) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
    });
    const auto n = static_cast<std::size_t>(std::floor(tau * double(scores.size()) + 1e-9));
    idx.resize(n);
    return idx;
}

inline Points random_points(std::mt19937_64& gen, std::size_t n, std::size_t dim) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Points pts(n, std::vector<double>(dim));
    for (auto& p : pts)
        for (auto& v : p) v = nd(gen);
    return pts;
}

/// Single-position tensor (N, 1, 1, dim) holding the points as floats.
inline softpatch::FeatureTensor as_tensor(const Points& pts) {
    std::vector<float> data;
    for (const auto& p : pts)
        for (double v : p) data.push_back(static_cast<float>(v));
    return softpatch::FeatureTensor({pts.size(), 1, 1, pts[0].size()}, std::move(data));
}

/// The float-rounded points, so oracle and library see identical inputs.
inline Points rounded(const Points& pts) {
    Points out = pts;
    for (auto& p : out)
        for (auto& v : p) v = static_cast<float>(v);
    return out;
}

inline softpatch::FeatureTensor random_tensor(std::mt19937_64& gen, softpatch::TensorShape shape) {
    std::normal_distribution<float> nd(0.0f, 1.0f);
    std::vector<float> data(shape.size());
    for (auto& v : data) v = nd(gen);
    return softpatch::FeatureTensor(shape, std::move(data));
}

inline double max_relative_error(const std::vector<double>& got, const std::vector<double>& want) {
    double worst = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        worst = std::max(worst, std::abs(got[i] - want[i]) / std::max(std::abs(want[i]), 1e-300));
    }
    return worst;
}

}

#endif
