#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace linbridge {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class CoeffKind { constant, polynomial, table };

std::string_view to_string(CoeffKind kind);

/// A deterministic matrix-valued function of time on [0, inf).
///
/// Three families are supported:
///   - constant:   A(t) = A
///   - polynomial: A(t) = sum_k A_k t^k
///   - table:      piecewise-linear through (knot_i, A_i), held constant
///                 before the first and after the last knot.
///
/// Instances are immutable once built.
class CoefficientFn {
 public:
  static CoefficientFn constant(Matrix value);
  static CoefficientFn polynomial(std::vector<Matrix> coeffs);
  static CoefficientFn table(std::vector<double> knots, std::vector<Matrix> values);
  static CoefficientFn zero(Eigen::Index rows, Eigen::Index cols);

  [[nodiscard]] Matrix operator()(double t) const;
  /// Evaluates into a preallocated matrix of the right shape.
  void eval_into(double t, Matrix& out) const;

  [[nodiscard]] CoeffKind kind() const noexcept { return kind_; }
  [[nodiscard]] Eigen::Index rows() const noexcept { return rows_; }
  [[nodiscard]] Eigen::Index cols() const noexcept { return cols_; }

  /// Constant and polynomial coefficients expose their monomial coefficients
  /// (a constant is a degree-0 polynomial). Empty for tables.
  [[nodiscard]] const std::vector<Matrix>& coeffs() const noexcept { return mats_; }
  [[nodiscard]] const std::vector<double>& knots() const noexcept { return knots_; }
  /// Knot values for tables.
  [[nodiscard]] const std::vector<Matrix>& values() const noexcept { return mats_; }

  [[nodiscard]] bool is_smooth() const noexcept { return kind_ != CoeffKind::table; }
  [[nodiscard]] bool is_identically_zero() const;

  friend bool operator==(const CoefficientFn& a, const CoefficientFn& b);

 private:
  CoefficientFn(CoeffKind kind, Eigen::Index rows, Eigen::Index cols, std::vector<double> knots,
                std::vector<Matrix> mats);

  CoeffKind kind_;
  Eigen::Index rows_;
  Eigen::Index cols_;
  std::vector<double> knots_;
  std::vector<Matrix> mats_;
};

/// dZ = (Q(t) Z + r(t)) dt + S(t) dB with Z in R^d and B a p-dimensional
/// standard Wiener process.
class LinearModel {
 public:
  LinearModel(CoefficientFn Q, CoefficientFn r, CoefficientFn S);

  [[nodiscard]] Eigen::Index dim() const noexcept { return Q_.rows(); }
  [[nodiscard]] Eigen::Index noise_dim() const noexcept { return S_.cols(); }

  [[nodiscard]] const CoefficientFn& Q() const noexcept { return Q_; }
  [[nodiscard]] const CoefficientFn& r() const noexcept { return r_; }
  [[nodiscard]] const CoefficientFn& S() const noexcept { return S_; }

  friend bool operator==(const LinearModel&, const LinearModel&) = default;

 private:
  CoefficientFn Q_;
  CoefficientFn r_;
  CoefficientFn S_;
};

/// Sorted, de-duplicated table knots of Q, r and S: the points where the
/// coefficients may fail to be smooth.
std::vector<double> breakpoints(const LinearModel& model);

/// Convenience constructors for the models used throughout the tests and docs.
LinearModel make_scalar_model(double q, double r, double sigma);
LinearModel make_constant_model(Matrix Q, Vector r, Matrix S);

/// Parses the JSON model-file format described in README.md.
/// Throws SchemaError or KnotError.
LinearModel parse_model(std::string_view text);
LinearModel load_model(const std::filesystem::path& path);

/// Canonical JSON text. parse_model(serialize_model(m)) == m and
/// serialize_model is a fixed point of parse/serialize.
std::string serialize_model(const LinearModel& model);

/// 64-bit FNV-1a of the canonical serialization, as 16 hex digits.
std::string model_hash(const LinearModel& model);

}  // namespace linbridge
