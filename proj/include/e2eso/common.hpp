// Shared numeric primitives and error types used across the library.
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace e2eso {

using Vec = std::vector<double>;

/// Configuration rejected before any computation ran (bad flags, bad JSON,
/// inconsistent model parameters).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Arguments violate an operation's domain (shape mismatch, out-of-range
/// level, infeasible action).
struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// File could not be read or written.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// File exists but its content does not match the expected format.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// An API usage contract was broken (e.g. a backward pass with a stale tape).
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

/// Training aborted because the loss or gradient left the finite range.
struct DivergenceError : std::runtime_error {
    std::size_t iteration;
    DivergenceError(const std::string& what, std::size_t iter)
        : std::runtime_error(what), iteration(iter) {}
};

/// Dense row-major matrix. Small convenience type; the library never needs
/// general linear algebra beyond matrix-vector products.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::size_t size() const { return data.size(); }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i)
            m(i, i) = 1.0;
        return m;
    }
};

/// y = A x
inline void matvec(const Matrix& a, std::span<const double> x, Vec& y) {
    y.assign(a.rows, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        double acc = 0.0;
        const double* row = a.data.data() + i * a.cols;
        for (std::size_t j = 0; j < a.cols; ++j)
            acc += row[j] * x[j];
        y[i] = acc;
    }
}

/// y = A^T x
inline void matvec_transpose(const Matrix& a, std::span<const double> x, Vec& y) {
    y.assign(a.cols, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* row = a.data.data() + i * a.cols;
        const double xi = x[i];
        for (std::size_t j = 0; j < a.cols; ++j)
            y[j] += row[j] * xi;
    }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        acc += a[i] * b[i];
    return acc;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double sum(std::span<const double> a) {
    double acc = 0.0;
    for (double v : a)
        acc += v;
    return acc;
}

inline double mean(std::span<const double> a) {
    return a.empty() ? 0.0 : sum(a) / static_cast<double>(a.size());
}

/// Sample standard deviation (denominator n-1, or 0 for n < 2).
inline double stddev(std::span<const double> a) {
    if (a.size() < 2)
        return 0.0;
    const double m = mean(a);
    double acc = 0.0;
    for (double v : a)
        acc += (v - m) * (v - m);
    return std::sqrt(acc / static_cast<double>(a.size() - 1));
}

inline bool all_finite(std::span<const double> a) {
    for (double v : a)
        if (!std::isfinite(v))
            return false;
    return true;
}

}  // namespace e2eso
