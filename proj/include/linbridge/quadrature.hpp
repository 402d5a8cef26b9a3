#pragma once

#include "linbridge/errors.hpp"

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>

#include <cmath>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace linbridge {

struct QuadOptions {
  double rel_tol = 1e-12;
  double abs_tol = 1e-15;
  int max_depth = 30;
};

namespace detail {

template <class R>
double value_norm(const R& v) {
  if constexpr (std::is_arithmetic_v<R>) {
    return std::abs(v);
  } else {
    return v.norm();
  }
}

template <class R>
bool value_finite(const R& v) {
  if constexpr (std::is_arithmetic_v<R>) {
    return std::isfinite(v);
  } else {
    return v.allFinite();
  }
}

// 15-point Gauss-Legendre on [a, b].
template <class F>
auto gl_panel(F& f, double a, double b) {
  using Rule = boost::math::quadrature::gauss<double, 15>;
  const auto& x = Rule::abscissa();
  const auto& w = Rule::weights();
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (a + b);
  // abscissa()[0] is the centre node for odd rules
  std::decay_t<decltype(f(a))> sum = (w[0] * half) * f(mid);
  for (std::size_t i = 1; i < x.size(); ++i) {
    const double dx = half * x[i];
    sum += (w[i] * half) * (f(mid - dx) + f(mid + dx));
  }
  return sum;
}

template <class F, class R>
R adapt(F& f, double a, double b, const R& whole, double scale, double total_width,
        const QuadOptions& opt, int depth) {
  const double m = 0.5 * (a + b);
  R left = gl_panel(f, a, m);
  R right = gl_panel(f, m, b);
  R both = left + right;
  const double err = value_norm(R(both - whole));
  const double width_share = std::abs(b - a) / total_width;
  const double tol =
      std::max(opt.rel_tol * std::max(value_norm(both), scale * width_share), opt.abs_tol * width_share);
  if (err <= tol) return both;
  if (depth >= opt.max_depth || !value_finite(both))
    throw QuadError("adaptive quadrature failed to converge on [" + std::to_string(a) + ", " +
                    std::to_string(b) + "]");
  return R(adapt(f, a, m, left, scale, total_width, opt, depth + 1) +
           adapt(f, m, b, right, scale, total_width, opt, depth + 1));
}

}  // namespace detail

/// Adaptive panel Gauss-Legendre integration of a scalar- or matrix-valued
/// integrand over [a, b]. A panel is accepted once the one-panel and the
/// bisected two-panel estimates agree to the requested relative tolerance.
/// b < a integrates with the usual sign convention.
template <class F>
auto integrate(F&& f, double a, double b, const QuadOptions& opt = {}) {
  using R = std::decay_t<decltype(f(a))>;
  using Value = std::conditional_t<std::is_arithmetic_v<R>, double, Eigen::MatrixXd>;
  auto g = [&f](double x) -> Value { return Value(f(x)); };
  if (a == b) {
    Value z = g(a);
    if constexpr (std::is_arithmetic_v<Value>) {
      return 0.0;
    } else {
      z.setZero();
      return z;
    }
  }
  const Value whole = detail::gl_panel(g, a, b);
  const double scale = detail::value_norm(whole);
  return detail::adapt(g, a, b, whole, scale, std::abs(b - a), opt, 0);
}

/// As integrate, but splits [a, b] at every break point strictly inside it
/// (e.g. the knots of piecewise-linear coefficients).
template <class F>
auto integrate(F&& f, double a, double b, const std::vector<double>& breaks, const QuadOptions& opt = {}) {
  const double lo = std::min(a, b), hi = std::max(a, b);
  std::vector<double> cuts{lo};
  for (double x : breaks)
    if (x > lo && x < hi) cuts.push_back(x);
  cuts.push_back(hi);
  auto sum = integrate(f, cuts[0], cuts[1], opt);
  for (std::size_t i = 2; i < cuts.size(); ++i) sum += integrate(f, cuts[i - 1], cuts[i], opt);
  if (b < a) sum = -sum;
  return sum;
}

}  // namespace linbridge
