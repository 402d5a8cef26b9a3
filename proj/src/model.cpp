#include "linbridge/model.hpp"

#include "linbridge/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <sstream>
#include <utility>

namespace linbridge {

using json = nlohmann::json;

std::string_view to_string(CoeffKind kind) {
  switch (kind) {
    case CoeffKind::constant: return "constant";
    case CoeffKind::polynomial: return "polynomial";
    case CoeffKind::table: return "table";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// CoefficientFn

CoefficientFn::CoefficientFn(CoeffKind kind, Eigen::Index rows, Eigen::Index cols,
                             std::vector<double> knots, std::vector<Matrix> mats)
    : kind_(kind), rows_(rows), cols_(cols), knots_(std::move(knots)), mats_(std::move(mats)) {}

CoefficientFn CoefficientFn::constant(Matrix value) {
  if (value.size() == 0) throw SchemaError("constant coefficient must be a non-empty matrix");
  const auto rows = value.rows();
  const auto cols = value.cols();
  return CoefficientFn(CoeffKind::constant, rows, cols, {}, {std::move(value)});
}

CoefficientFn CoefficientFn::polynomial(std::vector<Matrix> coeffs) {
  if (coeffs.empty()) throw SchemaError("polynomial coefficient needs at least one matrix");
  const auto rows = coeffs.front().rows();
  const auto cols = coeffs.front().cols();
  if (rows == 0 || cols == 0) throw SchemaError("polynomial coefficient matrices must be non-empty");
  for (const auto& c : coeffs) {
    if (c.rows() != rows || c.cols() != cols)
      throw SchemaError("polynomial coefficient matrices have inconsistent shapes");
  }
  return CoefficientFn(CoeffKind::polynomial, rows, cols, {}, std::move(coeffs));
}

CoefficientFn CoefficientFn::table(std::vector<double> knots, std::vector<Matrix> values) {
  if (knots.size() < 2) throw KnotError("table coefficient needs at least two knots");
  if (knots.size() != values.size())
    throw SchemaError("table coefficient: number of knots and values differ");
  for (std::size_t i = 1; i < knots.size(); ++i) {
    if (!(knots[i] > knots[i - 1])) throw KnotError("table knots must be strictly increasing");
  }
  if (knots.front() < 0.0) throw KnotError("table knots must be non-negative");
  const auto rows = values.front().rows();
  const auto cols = values.front().cols();
  if (rows == 0 || cols == 0) throw SchemaError("table coefficient matrices must be non-empty");
  for (const auto& v : values) {
    if (v.rows() != rows || v.cols() != cols)
      throw SchemaError("table coefficient matrices have inconsistent shapes");
  }
  return CoefficientFn(CoeffKind::table, rows, cols, std::move(knots), std::move(values));
}

CoefficientFn CoefficientFn::zero(Eigen::Index rows, Eigen::Index cols) {
  return constant(Matrix::Zero(rows, cols));
}

void CoefficientFn::eval_into(double t, Matrix& out) const {
  out.resize(rows_, cols_);
  switch (kind_) {
    case CoeffKind::constant:
      out = mats_.front();
      return;
    case CoeffKind::polynomial: {
      // Horner
      out = mats_.back();
      for (auto k = static_cast<std::ptrdiff_t>(mats_.size()) - 2; k >= 0; --k) {
        out *= t;
        out += mats_[static_cast<std::size_t>(k)];
      }
      return;
    }
    case CoeffKind::table: {
      if (t <= knots_.front()) {
        out = mats_.front();
        return;
      }
      if (t >= knots_.back()) {
        out = mats_.back();
        return;
      }
      const auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
      const auto hi = static_cast<std::size_t>(std::distance(knots_.begin(), it));
      const auto lo = hi - 1;
      if (t == knots_[lo]) {
        out = mats_[lo];
        return;
      }
      const double w = (t - knots_[lo]) / (knots_[hi] - knots_[lo]);
      out = (1.0 - w) * mats_[lo] + w * mats_[hi];
      return;
    }
  }
}

Matrix CoefficientFn::operator()(double t) const {
  Matrix out(rows_, cols_);
  eval_into(t, out);
  return out;
}

bool CoefficientFn::is_identically_zero() const {
  return std::all_of(mats_.begin(), mats_.end(), [](const Matrix& m) { return m.isZero(0.0); });
}

bool operator==(const CoefficientFn& a, const CoefficientFn& b) {
  if (a.kind_ != b.kind_ || a.rows_ != b.rows_ || a.cols_ != b.cols_) return false;
  if (a.knots_ != b.knots_) return false;
  if (a.mats_.size() != b.mats_.size()) return false;
  for (std::size_t i = 0; i < a.mats_.size(); ++i) {
    if (!(a.mats_[i].array() == b.mats_[i].array()).all()) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// LinearModel

LinearModel::LinearModel(CoefficientFn Q, CoefficientFn r, CoefficientFn S)
    : Q_(std::move(Q)), r_(std::move(r)), S_(std::move(S)) {
  const auto d = Q_.rows();
  if (Q_.cols() != d) throw SchemaError("Q must be square (d x d)");
  if (r_.rows() != d || r_.cols() != 1) throw SchemaError("r must be d x 1");
  if (S_.rows() != d) throw SchemaError("S must have d rows");
}

std::vector<double> breakpoints(const LinearModel& model) {
  std::vector<double> out;
  for (const CoefficientFn* f : {&model.Q(), &model.r(), &model.S()})
    out.insert(out.end(), f->knots().begin(), f->knots().end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

LinearModel make_scalar_model(double q, double r, double sigma) {
  return LinearModel(CoefficientFn::constant(Matrix::Constant(1, 1, q)),
                     CoefficientFn::constant(Matrix::Constant(1, 1, r)),
                     CoefficientFn::constant(Matrix::Constant(1, 1, sigma)));
}

LinearModel make_constant_model(Matrix Q, Vector r, Matrix S) {
  return LinearModel(CoefficientFn::constant(std::move(Q)), CoefficientFn::constant(Matrix(r)),
                     CoefficientFn::constant(std::move(S)));
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

double to_double(const json& v, const std::string& where) {
  if (!v.is_number()) throw SchemaError(where + ": expected a number");
  return v.get<double>();
}

Matrix parse_matrix(const json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) throw SchemaError(where + ": expected a non-empty list of rows");
  const auto rows = static_cast<Eigen::Index>(v.size());
  Eigen::Index cols = -1;
  Matrix m;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto& row = v[static_cast<std::size_t>(i)];
    if (!row.is_array() || row.empty())
      throw SchemaError(where + ": each row must be a non-empty list of numbers");
    if (cols < 0) {
      cols = static_cast<Eigen::Index>(row.size());
      m.resize(rows, cols);
    } else if (static_cast<Eigen::Index>(row.size()) != cols) {
      throw SchemaError(where + ": ragged matrix rows");
    }
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = to_double(row[static_cast<std::size_t>(j)], where);
  }
  return m;
}

void reject_unknown_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                         const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw SchemaError(where + ": unknown field '" + key + "'");
  }
}

const json& require(const json& obj, const char* key, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(where + ": missing field '" + key + "'");
  return *it;
}

CoefficientFn parse_block(const json& block, const std::string& name, Eigen::Index rows,
                          Eigen::Index cols) {
  if (!block.is_object()) throw SchemaError(name + ": expected an object");
  const auto& kind_v = require(block, "kind", name);
  if (!kind_v.is_string()) throw SchemaError(name + ": 'kind' must be a string");
  const auto kind = kind_v.get<std::string>();

  auto check_shape = [&](const Matrix& m, const std::string& where) {
    if (m.rows() != rows || m.cols() != cols) {
      std::ostringstream os;
      os << where << ": shape " << m.rows() << "x" << m.cols() << " does not match expected " << rows
         << "x" << cols;
      throw SchemaError(os.str());
    }
  };

  if (kind == "constant") {
    reject_unknown_keys(block, {"kind", "rows"}, name);
    Matrix m = parse_matrix(require(block, "rows", name), name + ".rows");
    check_shape(m, name);
    return CoefficientFn::constant(std::move(m));
  }
  if (kind == "polynomial") {
    reject_unknown_keys(block, {"kind", "coeffs"}, name);
    const auto& cs = require(block, "coeffs", name);
    if (!cs.is_array() || cs.empty()) throw SchemaError(name + ".coeffs: expected a non-empty list");
    std::vector<Matrix> mats;
    for (std::size_t k = 0; k < cs.size(); ++k) {
      const auto where = name + ".coeffs[" + std::to_string(k) + "]";
      mats.push_back(parse_matrix(cs[k], where));
      check_shape(mats.back(), where);
    }
    return CoefficientFn::polynomial(std::move(mats));
  }
  if (kind == "table") {
    reject_unknown_keys(block, {"kind", "knots", "values"}, name);
    const auto& ks = require(block, "knots", name);
    const auto& vs = require(block, "values", name);
    if (!ks.is_array()) throw SchemaError(name + ".knots: expected a list");
    if (!vs.is_array()) throw SchemaError(name + ".values: expected a list");
    std::vector<double> knots;
    for (const auto& k : ks) knots.push_back(to_double(k, name + ".knots"));
    std::vector<Matrix> mats;
    for (std::size_t k = 0; k < vs.size(); ++k) {
      const auto where = name + ".values[" + std::to_string(k) + "]";
      mats.push_back(parse_matrix(vs[k], where));
      check_shape(mats.back(), where);
    }
    return CoefficientFn::table(std::move(knots), std::move(mats));
  }
  throw SchemaError(name + ": unknown kind '" + kind + "'");
}

Eigen::Index parse_dim(const json& doc, const char* key) {
  const auto& v = require(doc, key, "model");
  if (!v.is_number_integer()) throw SchemaError(std::string("model.") + key + ": expected an integer");
  const auto n = v.get<long long>();
  if (n < 1) throw SchemaError(std::string("model.") + key + ": must be >= 1");
  return static_cast<Eigen::Index>(n);
}

// Shortest round-trip decimal representation.
std::string fmt_double(double x) { return json(x).dump(); }

void write_matrix(std::ostream& os, const Matrix& m) {
  os << '[';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (i) os << ", ";
    os << '[';
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) os << ", ";
      os << fmt_double(m(i, j));
    }
    os << ']';
  }
  os << ']';
}

void write_block(std::ostream& os, const CoefficientFn& f) {
  os << "{\"kind\": \"" << to_string(f.kind()) << "\", ";
  switch (f.kind()) {
    case CoeffKind::constant:
      os << "\"rows\": ";
      write_matrix(os, f.coeffs().front());
      break;
    case CoeffKind::polynomial:
      os << "\"coeffs\": [";
      for (std::size_t k = 0; k < f.coeffs().size(); ++k) {
        if (k) os << ", ";
        write_matrix(os, f.coeffs()[k]);
      }
      os << ']';
      break;
    case CoeffKind::table:
      os << "\"knots\": [";
      for (std::size_t k = 0; k < f.knots().size(); ++k) {
        if (k) os << ", ";
        os << fmt_double(f.knots()[k]);
      }
      os << "], \"values\": [";
      for (std::size_t k = 0; k < f.values().size(); ++k) {
        if (k) os << ", ";
        write_matrix(os, f.values()[k]);
      }
      os << ']';
      break;
  }
  os << '}';
}

}  // namespace

LinearModel parse_model(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("model: invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw SchemaError("model: top level must be an object");
  reject_unknown_keys(doc, {"dim", "noise_dim", "Q", "r", "S"}, "model");
  const auto d = parse_dim(doc, "dim");
  const auto p = parse_dim(doc, "noise_dim");
  auto Q = parse_block(require(doc, "Q", "model"), "Q", d, d);
  auto S = parse_block(require(doc, "S", "model"), "S", d, p);
  auto r = doc.contains("r") ? parse_block(doc["r"], "r", d, 1) : CoefficientFn::zero(d, 1);
  return LinearModel(std::move(Q), std::move(r), std::move(S));
}

LinearModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open model file '" + path.string() + "'");
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_model(text);
}

std::string serialize_model(const LinearModel& model) {
  std::ostringstream os;
  os << "{\n";
  os << "  \"dim\": " << model.dim() << ",\n";
  os << "  \"noise_dim\": " << model.noise_dim() << ",\n";
  os << "  \"Q\": ";
  write_block(os, model.Q());
  os << ",\n  \"r\": ";
  write_block(os, model.r());
  os << ",\n  \"S\": ";
  write_block(os, model.S());
  os << "\n}\n";
  return os.str();
}

std::string model_hash(const LinearModel& model) {
  const auto text = serialize_model(model);
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = hex[h & 0xF];
    h >>= 4;
  }
  return out;
}

}  // namespace linbridge
