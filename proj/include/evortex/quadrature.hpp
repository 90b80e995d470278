#pragma once
/// \file quadrature.hpp
/// \brief Globally adaptive Gauss-Kronrod (10/21) integration over a list of
/// breakpoints, for scalar, complex and fixed-size vector integrands, plus
/// Gauss-Legendre node generation.
///
/// Cell processing is deterministic: the interval with the largest error
/// estimate is bisected, ties broken by creation order.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <queue>
#include <span>
#include <stdexcept>
#include <vector>

namespace evortex::quad {

inline double magnitude(double v) { return std::abs(v); }
inline double magnitude(const std::complex<double>& v) { return std::abs(v); }
template <class T, std::size_t N>
double magnitude(const std::array<T, N>& v)
{
    double m = 0.0;
    for (const auto& x : v) m = std::max(m, magnitude(x));
    return m;
}

template <class T, std::size_t N>
std::array<T, N> operator+(const std::array<T, N>& a, const std::array<T, N>& b)
{
    std::array<T, N> r;
    for (std::size_t i = 0; i < N; ++i) r[i] = a[i] + b[i];
    return r;
}
template <class T, std::size_t N>
std::array<T, N> operator-(const std::array<T, N>& a, const std::array<T, N>& b)
{
    std::array<T, N> r;
    for (std::size_t i = 0; i < N; ++i) r[i] = a[i] - b[i];
    return r;
}
template <class T, std::size_t N>
std::array<T, N> operator*(double s, const std::array<T, N>& a)
{
    std::array<T, N> r;
    for (std::size_t i = 0; i < N; ++i) r[i] = s * a[i];
    return r;
}

template <class T, std::size_t N>
std::array<T, N> operator*(const std::complex<double>& s, const std::array<T, N>& a)
{
    std::array<T, N> r;
    for (std::size_t i = 0; i < N; ++i) r[i] = s * a[i];
    return r;
}

/// Value carrying an attached non-negative error density, so that errors of
/// inner integrals can be integrated alongside their values.
template <class T>
struct Tagged {
    T value{};
    double err = 0.0;
};
template <class T>
Tagged<T> operator+(const Tagged<T>& a, const Tagged<T>& b) { return {a.value + b.value, a.err + b.err}; }
template <class T>
Tagged<T> operator-(const Tagged<T>& a, const Tagged<T>& b) { return {a.value - b.value, a.err - b.err}; }
template <class T>
Tagged<T> operator*(double s, const Tagged<T>& a) { return {s * a.value, s * a.err}; }
template <class T>
double magnitude(const Tagged<T>& t) { return magnitude(t.value); }

struct Tolerance {
    double abs = 1e-14;
    double rel = 1e-8;
    std::size_t max_intervals = 4000;
};

template <class T>
struct Result {
    T value{};
    double abs_err = 0.0;
    std::size_t evals = 0;
    bool converged = true;
};

namespace detail {

// QUADPACK qk21 abscissae and weights.
inline constexpr std::array<double, 11> xgk = {
    0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
    0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
    0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
    0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
    0.294392862701460198131126603103866, 0.148874338981631210884826001129720,
    0.000000000000000000000000000000000};
inline constexpr std::array<double, 11> wgk = {
    0.011694638867371874278064396062192, 0.032558162307964727478818972459390,
    0.054755896574351996031381300244580, 0.075039674810919952767043140916190,
    0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
    0.123491976262065851077208977074430, 0.134709217311473325928054001771707,
    0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
    0.149445554002916905664936468389821};
inline constexpr std::array<double, 5> wg = {
    0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
    0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
    0.295524224714752870173892994651338};

template <class T>
struct Cell {
    double a, b;
    T value;
    double err;
    std::size_t order;
};

template <class T, class F>
Cell<T> gk21(F& f, double a, double b, std::size_t order)
{
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    const T fc = f(c);
    T kron = wgk[10] * fc;
    T gauss{};
    bool gauss_init = false;
    for (int j = 0; j < 10; ++j) {
        const double dx = h * xgk[j];
        const T s = f(c - dx) + f(c + dx);
        kron = kron + wgk[j] * s;
        if (j % 2 == 1) {
            gauss = gauss_init ? gauss + wg[j / 2] * s : wg[j / 2] * s;
            gauss_init = true;
        }
    }
    const T kv = h * kron;
    const T gv = h * gauss;
    return {a, b, kv, magnitude(kv - gv), order};
}

} // namespace detail

/// Integrate f over [breaks.front(), breaks.back()] with the interior breaks
/// as initial subdivision points.
template <class T, class F>
Result<T> integrate(F&& f, std::span<const double> breaks, const Tolerance& tol)
{
    if (breaks.size() < 2) throw std::invalid_argument("integrate: need at least two breakpoints");
    using Cell = detail::Cell<T>;
    auto worse = [](const Cell& x, const Cell& y) {
        if (x.err != y.err) return x.err < y.err;
        return x.order > y.order;
    };
    std::priority_queue<Cell, std::vector<Cell>, decltype(worse)> heap(worse);
    std::size_t order = 0;
    Result<T> res;
    T total{};
    double total_err = 0.0;
    bool first = true;
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        if (!(breaks[i + 1] > breaks[i])) continue;
        Cell c = detail::gk21<T>(f, breaks[i], breaks[i + 1], order++);
        res.evals += 21;
        total = first ? c.value : total + c.value;
        first = false;
        total_err += c.err;
        heap.push(c);
    }
    if (first) return res;
    std::size_t intervals = heap.size();
    while (total_err > std::max(tol.abs, tol.rel * magnitude(total))) {
        if (intervals >= tol.max_intervals) {
            res.converged = false;
            break;
        }
        Cell worst = heap.top();
        heap.pop();
        const double mid = 0.5 * (worst.a + worst.b);
        if (!(mid > worst.a && mid < worst.b)) {
            // Cannot subdivide further in double precision.
            heap.push(worst);
            res.converged = false;
            break;
        }
        Cell left = detail::gk21<T>(f, worst.a, mid, order++);
        Cell right = detail::gk21<T>(f, mid, worst.b, order++);
        res.evals += 42;
        total = total + (left.value + right.value) - worst.value;
        total_err += left.err + right.err - worst.err;
        heap.push(left);
        heap.push(right);
        ++intervals;
    }
    // Re-sum to avoid drift from incremental updates.
    T sum{};
    double err = 0.0;
    bool init = false;
    std::vector<Cell> cells;
    cells.reserve(heap.size());
    while (!heap.empty()) {
        cells.push_back(heap.top());
        heap.pop();
    }
    std::sort(cells.begin(), cells.end(), [](const Cell& x, const Cell& y) { return x.a < y.a; });
    for (const auto& c : cells) {
        sum = init ? sum + c.value : c.value;
        init = true;
        err += c.err;
    }
    res.value = sum;
    res.abs_err = err;
    return res;
}

template <class T, class F>
Result<T> integrate(F&& f, double a, double b, const Tolerance& tol)
{
    const std::array<double, 2> br{a, b};
    return integrate<T>(std::forward<F>(f), std::span<const double>(br), tol);
}

struct GaussRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// n-point Gauss-Legendre rule on [a, b] (Newton iteration on P_n).
inline GaussRule gauss_legendre(int n, double a = -1.0, double b = 1.0)
{
    if (n < 1) throw std::invalid_argument("gauss_legendre: n must be >= 1");
    GaussRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 1.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0;
            double p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            if (n == 1) p0 = 1.0;
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        {
            double p0 = 1.0;
            double p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            if (n == 1) p0 = 1.0;
            dp = n * (x * p1 - p0) / (x * x - 1.0);
        }
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.nodes[i] = c - h * x;
        rule.nodes[n - 1 - i] = c + h * x;
        rule.weights[i] = h * w;
        rule.weights[n - 1 - i] = h * w;
    }
    return rule;
}

/// Composite Gauss-Legendre rule on consecutive panels given by breaks.
inline GaussRule composite_gauss(std::span<const double> breaks, int points_per_panel)
{
    GaussRule out;
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        if (!(breaks[i + 1] > breaks[i])) continue;
        const auto r = gauss_legendre(points_per_panel, breaks[i], breaks[i + 1]);
        out.nodes.insert(out.nodes.end(), r.nodes.begin(), r.nodes.end());
        out.weights.insert(out.weights.end(), r.weights.begin(), r.weights.end());
    }
    return out;
}

} // namespace evortex::quad

namespace evortex {
using quad::operator+;
using quad::operator-;
using quad::operator*;
} // namespace evortex
