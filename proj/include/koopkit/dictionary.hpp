#pragma once

// Observable dictionaries for EDMD. Thin-plate RBFs centered on k-means
// centers of the data, optional coordinate functions, optional constant;
// plus a graded monomial basis for polynomial-exact experiments.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "koopkit/errors.hpp"
#include "koopkit/ioformats.hpp"
#include "koopkit/numerics.hpp"
#include "koopkit/parallel.hpp"
#include "koopkit/types.hpp"

namespace koopkit::dictionary {

inline constexpr double kDefaultDelta = 1e-3;

/// r^2 ln(r + delta) with r = |center - y|.
inline double thin_plate_eval(const StateVector& center, double delta, const StateVector& y) {
  if (!(delta > 0.0)) throw InvalidInput("thin_plate_eval: delta must be positive");
  if (center.size() != y.size()) throw InvalidInput("thin_plate_eval: dimension mismatch");
  const double r2 = (center - y).squaredNorm();
  return r2 * std::log(std::sqrt(r2) + delta);
}

enum class Kind { ThinPlate, Monomial };

inline std::string kind_name(Kind k) { return k == Kind::ThinPlate ? "thin-plate" : "monomial"; }

inline Kind parse_kind(const std::string& s) {
  if (s == "thin-plate") return Kind::ThinPlate;
  if (s == "monomial") return Kind::Monomial;
  throw ConfigError("unknown dictionary type '" + s + "'");
}

// Exponent vectors of all monomials in `dim` variables up to total degree
// `degree`, graded: constant first, then degree 1, and so on.
inline std::vector<std::vector<int>> graded_exponents(int dim, int degree) {
  std::vector<std::vector<int>> out;
  std::vector<int> e(static_cast<std::size_t>(dim), 0);
  for (int total = 0; total <= degree; ++total) {
    // enumerate compositions of `total` into `dim` parts, first variable highest
    std::function<void(int, int)> rec = [&](int var, int left) {
      if (var == dim - 1) {
        e[static_cast<std::size_t>(var)] = left;
        out.push_back(e);
        return;
      }
      for (int k = left; k >= 0; --k) {
        e[static_cast<std::size_t>(var)] = k;
        rec(var + 1, left - k);
      }
    };
    rec(0, total);
  }
  return out;
}

class Dictionary {
 public:
  static Dictionary thin_plate(PointSet centers, double delta, bool include_coords, bool include_const,
                               Eigen::Index dim = -1) {
    if (!(delta > 0.0)) throw InvalidInput("dictionary: delta must be positive");
    numerics::require_finite(centers, "dictionary centers");
    Dictionary d;
    d.kind_ = Kind::ThinPlate;
    d.dim_ = centers.rows() > 0 ? centers.cols() : dim;
    if (d.dim_ < 1) throw InvalidInput("dictionary: state dimension unknown");
    if (centers.rows() > 0 && dim >= 0 && dim != centers.cols())
      throw InvalidInput("dictionary: centers do not have the state dimension");
    d.centers_ = std::move(centers);
    if (d.centers_.rows() == 0) d.centers_.resize(0, d.dim_);
    d.delta_ = delta;
    d.include_coords_ = include_coords;
    d.include_const_ = include_const;
    return d;
  }

  static Dictionary monomial(Eigen::Index dim, int degree) {
    if (dim < 1) throw InvalidInput("monomial dictionary: dim must be positive");
    if (degree < 0) throw InvalidInput("monomial dictionary: degree must be nonnegative");
    Dictionary d;
    d.kind_ = Kind::Monomial;
    d.dim_ = dim;
    d.degree_ = degree;
    d.centers_.resize(0, dim);
    d.exponents_ = graded_exponents(static_cast<int>(dim), degree);
    return d;
  }

  Kind kind() const { return kind_; }
  Eigen::Index dim() const { return dim_; }
  Eigen::Index n_rbf() const { return centers_.rows(); }
  const PointSet& centers() const { return centers_; }
  double delta() const { return delta_; }
  bool include_coords() const { return include_coords_; }
  bool include_const() const { return include_const_; }
  int degree() const { return degree_; }
  const std::vector<std::vector<int>>& exponents() const { return exponents_; }
  std::uint64_t seed() const { return seed_; }
  void set_seed(std::uint64_t s) { seed_ = s; }

  Eigen::Index size() const {
    if (kind_ == Kind::Monomial) return static_cast<Eigen::Index>(exponents_.size());
    return n_rbf() + (include_coords_ ? dim_ : 0) + (include_const_ ? 1 : 0);
  }

  // Column of coordinate function x_j, or -1 when the dictionary has none.
  Eigen::Index coordinate_index(Eigen::Index j) const {
    if (kind_ == Kind::Monomial) {
      for (std::size_t k = 0; k < exponents_.size(); ++k) {
        bool match = true;
        for (Eigen::Index v = 0; v < dim_; ++v)
          if (exponents_[k][static_cast<std::size_t>(v)] != (v == j ? 1 : 0)) match = false;
        if (match) return static_cast<Eigen::Index>(k);
      }
      return -1;
    }
    return include_coords_ ? n_rbf() + j : -1;
  }

  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    if (kind_ == Kind::Monomial) {
      for (const auto& e : exponents_) {
        std::string s;
        for (std::size_t v = 0; v < e.size(); ++v) {
          if (e[v] == 0) continue;
          if (!s.empty()) s += '*';
          s += "x" + std::to_string(v + 1);
          if (e[v] > 1) s += '^' + std::to_string(e[v]);
        }
        out.push_back(s.empty() ? "1" : s);
      }
      return out;
    }
    for (Eigen::Index k = 0; k < n_rbf(); ++k) out.push_back("rbf" + std::to_string(k + 1));
    if (include_coords_)
      for (Eigen::Index j = 0; j < dim_; ++j) out.push_back("x" + std::to_string(j + 1));
    if (include_const_) out.push_back("1");
    return out;
  }

  // Writes the observable values at x into out (length size()).
  void evaluate_into(const double* x, double* out) const {
    if (kind_ == Kind::Monomial) {
      for (std::size_t k = 0; k < exponents_.size(); ++k) {
        double v = 1.0;
        for (Eigen::Index j = 0; j < dim_; ++j) {
          const int p = exponents_[k][static_cast<std::size_t>(j)];
          for (int q = 0; q < p; ++q) v *= x[j];
        }
        out[k] = v;
      }
      return;
    }
    Eigen::Index col = 0;
    for (Eigen::Index k = 0; k < centers_.rows(); ++k) {
      double r2 = 0.0;
      for (Eigen::Index j = 0; j < dim_; ++j) {
        const double diff = centers_(k, j) - x[j];
        r2 += diff * diff;
      }
      out[col++] = r2 * std::log(std::sqrt(r2) + delta_);
    }
    if (include_coords_)
      for (Eigen::Index j = 0; j < dim_; ++j) out[col++] = x[j];
    if (include_const_) out[col++] = 1.0;
  }

  Eigen::VectorXd evaluate(const StateVector& x) const {
    if (x.size() != dim_) throw InvalidInput("dictionary: point dimension mismatch");
    Eigen::VectorXd out(size());
    evaluate_into(x.data(), out.data());
    return out;
  }

  io::Json to_json() const {
    io::Json j;
    j["type"] = kind_name(kind_);
    j["dim"] = dim_;
    if (kind_ == Kind::Monomial) {
      j["degree"] = degree_;
    } else {
      j["n_rbf"] = n_rbf();
      j["delta"] = delta_;
      j["seed"] = seed_;
      j["include_coords"] = include_coords_;
      j["include_const"] = include_const_;
    }
    return j;
  }

 private:
  Kind kind_ = Kind::ThinPlate;
  Eigen::Index dim_ = 0;
  PointSet centers_;
  double delta_ = kDefaultDelta;
  bool include_coords_ = false;
  bool include_const_ = false;
  int degree_ = 0;
  std::vector<std::vector<int>> exponents_;
  std::uint64_t seed_ = 0;
};

/// Matrix with entry (i, j) = observable_j(points.row(i)).
inline RealMatrix evaluate_matrix(const Dictionary& d, const PointSet& points) {
  if (points.cols() != d.dim()) throw InvalidInput("evaluate_matrix: point dimension mismatch");
  // Row-major so each worker fills contiguous memory.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(points.rows(), d.size());
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> pts = points;
  parallel_for(static_cast<std::size_t>(points.rows()), [&](std::size_t i) {
    d.evaluate_into(pts.row(static_cast<Eigen::Index>(i)).data(), out.row(static_cast<Eigen::Index>(i)).data());
  });
  return out;
}

struct DictionaryConfig {
  std::string type = "thin-plate";
  int n_rbf = 100;
  double delta = kDefaultDelta;
  std::uint64_t seed = 0;
  bool include_coords = true;
  bool include_const = true;
  int degree = 3;  // monomial only

  io::Json to_json() const {
    io::Json j;
    j["type"] = type;
    if (type == "monomial") {
      j["degree"] = degree;
    } else {
      j["n_rbf"] = n_rbf;
      j["delta"] = delta;
      j["seed"] = seed;
      j["include_coords"] = include_coords;
      j["include_const"] = include_const;
    }
    return j;
  }

  static DictionaryConfig from_json(const io::Json& j) {
    if (!j.is_object()) throw ConfigError("dictionary: expected an object");
    static const std::set<std::string> known{"type", "n_rbf", "delta", "seed", "include_coords",
                                             "include_const", "degree"};
    for (auto it = j.begin(); it != j.end(); ++it)
      if (!known.count(it.key())) throw ConfigError("dictionary: unknown key '" + it.key() + "'");
    DictionaryConfig c;
    try {
      if (j.contains("type")) c.type = j.at("type").get<std::string>();
      parse_kind(c.type);
      if (j.contains("n_rbf")) c.n_rbf = j.at("n_rbf").get<int>();
      if (j.contains("delta")) c.delta = j.at("delta").get<double>();
      if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
      if (j.contains("include_coords")) c.include_coords = j.at("include_coords").get<bool>();
      if (j.contains("include_const")) c.include_const = j.at("include_const").get<bool>();
      if (j.contains("degree")) c.degree = j.at("degree").get<int>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("dictionary: ") + e.what());
    }
    if (c.n_rbf < 0) throw ConfigError("dictionary: n_rbf must be nonnegative");
    if (!(c.delta > 0.0)) throw ConfigError("dictionary: delta must be positive");
    if (c.degree < 0) throw ConfigError("dictionary: degree must be nonnegative");
    return c;
  }
};

/// RBF dictionary whose centers are the k-means centers of `data`.
inline Dictionary build_dictionary(const PointSet& data, int n_rbf, double delta, std::uint64_t seed,
                                   bool include_coords, bool include_const) {
  if (data.rows() == 0) throw InvalidInput("build_dictionary: no data");
  PointSet centers(0, data.cols());
  if (n_rbf > 0) centers = numerics::kmeans(data, n_rbf, seed).centers;
  Dictionary d = Dictionary::thin_plate(std::move(centers), delta, include_coords, include_const, data.cols());
  d.set_seed(seed);
  return d;
}

inline Dictionary build_dictionary(const PointSet& data, const DictionaryConfig& cfg) {
  if (parse_kind(cfg.type) == Kind::Monomial) return Dictionary::monomial(data.cols(), cfg.degree);
  return build_dictionary(data, cfg.n_rbf, cfg.delta, cfg.seed, cfg.include_coords, cfg.include_const);
}

inline std::vector<std::string> coordinate_header(const std::string& prefix, Eigen::Index dim) {
  std::vector<std::string> h;
  for (Eigen::Index j = 0; j < dim; ++j) h.push_back(prefix + std::to_string(j + 1));
  return h;
}

inline void save_dictionary(const Dictionary& d, const std::filesystem::path& json_path,
                            const std::filesystem::path& centers_path) {
  io::write_json(json_path, d.to_json());
  io::write_csv(centers_path, coordinate_header("c_", d.dim()), RealMatrix(d.centers()));
}

inline Dictionary load_dictionary(const std::filesystem::path& json_path,
                                  const std::filesystem::path& centers_path) {
  const io::Json j = io::read_json(json_path);
  try {
    const Kind kind = parse_kind(j.at("type").get<std::string>());
    const auto dim = j.at("dim").get<Eigen::Index>();
    if (kind == Kind::Monomial) return Dictionary::monomial(dim, j.at("degree").get<int>());
    const auto table = io::read_csv(centers_path);
    PointSet centers = table.as_matrix();
    if (centers.rows() > 0 && centers.cols() != dim) throw IoError("centers.csv: dimension mismatch");
    if (static_cast<Eigen::Index>(table.rows.size()) != j.at("n_rbf").get<Eigen::Index>())
      throw IoError("centers.csv: center count mismatch");
    Dictionary d = Dictionary::thin_plate(std::move(centers), j.at("delta").get<double>(),
                                          j.at("include_coords").get<bool>(),
                                          j.at("include_const").get<bool>(), dim);
    d.set_seed(j.at("seed").get<std::uint64_t>());
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(json_path.string() + ": " + e.what());
  }
}

}  // namespace koopkit::dictionary
