#pragma once

// Shared helpers for the unit suites: temp dirs, random tensors, and the
// independent numeric oracles the tape ops get checked against.

#include <unistd.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "conceptdrive/rng.hpp"
#include "conceptdrive/tensor.hpp"

namespace testsupport {

namespace fs = std::filesystem;

/// Unique scratch directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::uint64_t counter = 0;
        path_ = fs::temp_directory_path() /
                ("conceptdrive-" + tag + "-" + std::to_string(::getpid()) + "-" +
                 std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    fs::path path_;
};

inline conceptdrive::Tensor random_tensor(std::size_t rows, std::size_t cols,
                                          conceptdrive::SplitMix64& rng,
                                          double scale = 1.0) {
    conceptdrive::Tensor t(rows, cols, 0.0);
    for (double& x : t.storage()) x = scale * rng.next_normal();
    return t;
}

inline double max_abs_diff(const conceptdrive::Tensor& a, const conceptdrive::Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

/// erf by Maclaurin series — an implementation independent of std::erf, used
/// to cross-check the GELU forward. Converges quickly for |x| <= 4.
inline double erf_series(double x) {
    const double two_over_sqrt_pi = 1.1283791670955126;
    double term = x;  // x^(2n+1) * (-1)^n / n!
    double sum = 0.0;
    for (int n = 0; n < 64; ++n) {
        sum += term / (2 * n + 1);
        term *= -x * x / (n + 1);
        if (std::abs(term) < 1e-18) break;
    }
    return two_over_sqrt_pi * sum;
}

/// GELU oracle built on the series erf.
inline double gelu_oracle(double x) { return 0.5 * x * (1.0 + erf_series(x / std::sqrt(2.0))); }

/// Pearson correlation.
inline double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
    const auto n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace testsupport
