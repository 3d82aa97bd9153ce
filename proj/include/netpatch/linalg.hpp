#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "netpatch/errors.hpp"

namespace netpatch {

using Vec = std::vector<double>;

/// Dense row-major matrix. Small networks only; no view/expression machinery.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
    Mat(std::size_t r, std::size_t c, std::vector<double> values)
        : rows(r), cols(c), data(std::move(values)) {
        if (data.size() != rows * cols)
            throw InputError("Mat: value count does not match rows*cols");
    }

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    static Mat identity(std::size_t n) {
        Mat m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    bool operator==(const Mat& other) const = default;
};

inline Vec matvec(const Mat& m, const Vec& v) {
    if (v.size() != m.cols) throw InputError("matvec: dimension mismatch");
    Vec out(m.rows, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
        double acc = 0.0;
        const double* row = m.data.data() + r * m.cols;
        for (std::size_t c = 0; c < m.cols; ++c) acc += row[c] * v[c];
        out[r] = acc;
    }
    return out;
}

inline Mat matmul(const Mat& a, const Mat& b) {
    if (a.cols != b.rows) throw InputError("matmul: dimension mismatch");
    Mat out(a.rows, b.cols);
    for (std::size_t r = 0; r < a.rows; ++r)
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double av = a(r, k);
            if (av == 0.0) continue;
            for (std::size_t c = 0; c < b.cols; ++c) out(r, c) += av * b(k, c);
        }
    return out;
}

inline Vec add(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw InputError("add: dimension mismatch");
    Vec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

inline Vec sub(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw InputError("sub: dimension mismatch");
    Vec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

inline Vec scale(const Vec& a, double s) {
    Vec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
    return out;
}

inline double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw InputError("dot: dimension mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double norm_l1(const Vec& v) {
    double acc = 0.0;
    for (double x : v) acc += std::abs(x);
    return acc;
}

inline double norm_linf(const Vec& v) {
    double acc = 0.0;
    for (double x : v) acc = std::max(acc, std::abs(x));
    return acc;
}

inline double max_abs_diff(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw InputError("max_abs_diff: dimension mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc = std::max(acc, std::abs(a[i] - b[i]));
    return acc;
}

inline bool all_finite(const Vec& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

inline bool all_finite(const Mat& m) { return all_finite(m.data); }

} // namespace netpatch
