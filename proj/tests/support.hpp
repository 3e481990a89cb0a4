#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "imagefolder/error.hpp"
#include "imagefolder/grid.hpp"
#include "imagefolder/rng.hpp"

namespace imagefolder::testing {

inline Grid random_grid(Rng& rng, int h, int w, int c, double sd = 1.0) {
    Grid g(h, w, c);
    for (double& v : g.data) v = rng.normal(0.0, sd);
    return g;
}

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double sd = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal(0.0, sd);
    return v;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// Central differences of f() with respect to every entry of x (x is
/// perturbed in place and restored).
inline std::vector<double> numeric_gradient(std::span<double> x, const std::function<double()>& f, double h = 1e-5) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f();
        x[i] = keep - h;
        const double down = f();
        x[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

/// ||a - b|| / max(||a||, ||b||), with 0 when both vanish.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double scale = std::sqrt(std::max(na, nb));
    return scale < 1e-12 ? std::sqrt(diff) : std::sqrt(diff) / scale;
}

/// ErrorCode thrown by f, or nullopt if it returns normally.
template <class F>
std::optional<ErrorCode> thrown_code(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return std::nullopt;
}

}  // namespace imagefolder::testing

#define EXPECT_ERROR_CODE(code, stmt) \
    EXPECT_EQ(::imagefolder::testing::thrown_code([&] { stmt; }), std::optional<::imagefolder::ErrorCode>(code))
