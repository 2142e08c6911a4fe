#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/beta.hpp>

#include "lingua_spoof/csv.hpp"
#include "lingua_spoof/error.hpp"

namespace lingua_spoof {

struct DesignMatrix {
  Eigen::MatrixXd x;  // n x p, no intercept column
  std::vector<std::string> names;
  Eigen::VectorXd y;  // 0/1

  std::size_t rows() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(x.cols()); }
};

inline void validate(const DesignMatrix& m) {
  if (static_cast<std::size_t>(m.x.cols()) != m.names.size()) {
    fail(ErrorCode::DimensionMismatch, "column names do not match the matrix");
  }
  if (m.y.size() != 0 && m.y.size() != m.x.rows()) fail(ErrorCode::LengthMismatch, "y length");
  if (!m.x.allFinite() || !m.y.allFinite()) fail(ErrorCode::NonFinite, "design matrix");
  for (Eigen::Index i = 0; i < m.y.size(); ++i) {
    if (m.y[i] != 0.0 && m.y[i] != 1.0) fail(ErrorCode::InvalidArgument, "y must be 0 or 1");
  }
}

inline DesignMatrix drop_column(const DesignMatrix& m, std::size_t j) {
  DesignMatrix out;
  out.y = m.y;
  out.x.resize(m.x.rows(), m.x.cols() - 1);
  for (Eigen::Index c = 0, k = 0; c < m.x.cols(); ++c) {
    if (static_cast<std::size_t>(c) == j) continue;
    out.x.col(k++) = m.x.col(c);
    out.names.push_back(m.names[static_cast<std::size_t>(c)]);
  }
  return out;
}

struct Standardized {
  DesignMatrix matrix;
  std::vector<double> means;
  std::vector<double> stds;
};

// Zero mean, unit population standard deviation per column.
inline Standardized standardize(const DesignMatrix& m) {
  validate(m);
  Standardized out{m, {}, {}};
  const double n = static_cast<double>(m.x.rows());
  for (Eigen::Index j = 0; j < m.x.cols(); ++j) {
    const double mean = m.x.col(j).mean();
    const double var = (m.x.col(j).array() - mean).square().sum() / n;
    const double sd = std::sqrt(var);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
      fail(ErrorCode::ConstantColumn, m.names[static_cast<std::size_t>(j)]);
    }
    out.matrix.x.col(j) = (m.x.col(j).array() - mean) / sd;
    out.means.push_back(mean);
    out.stds.push_back(sd);
  }
  return out;
}

// VIF_j = 1 / (1 - R^2_j) from regressing column j on the others plus an
// intercept. Exact collinearity reports +inf.
inline std::vector<double> vif(const DesignMatrix& m) {
  validate(m);
  const Eigen::Index n = m.x.rows(), p = m.x.cols();
  if (n <= p) fail(ErrorCode::InvalidArgument, "vif needs more rows than columns");
  std::vector<double> out(static_cast<std::size_t>(p), 1.0);
  if (p == 1) return out;
  for (Eigen::Index j = 0; j < p; ++j) {
    Eigen::MatrixXd a(n, p);
    a.col(0).setOnes();
    for (Eigen::Index c = 0, k = 1; c < p; ++c) {
      if (c != j) a.col(k++) = m.x.col(c);
    }
    const Eigen::VectorXd target = m.x.col(j);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    const Eigen::VectorXd beta = qr.solve(target);
    const double ssr = (target - a * beta).squaredNorm();
    const double sst = (target.array() - target.mean()).square().sum();
    const double r2 = sst > 0.0 ? 1.0 - ssr / sst : 1.0;
    out[static_cast<std::size_t>(j)] =
        r2 >= 1.0 - 1e-12 ? std::numeric_limits<double>::infinity() : 1.0 / (1.0 - r2);
  }
  return out;
}

inline double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

struct CoefficientRow {
  std::string name;
  double coef = 0.0;
  double std_err = 0.0;
  double z = 0.0;
  double p = 1.0;
};

struct RegressionSummary {
  std::vector<CoefficientRow> rows;  // "const" first
  bool converged = false;
  bool quasi_separation = false;
  std::size_t iterations = 0;
  double log_likelihood = 0.0;
  std::vector<std::string> dropped_for_vif;
  std::vector<std::string> dropped_constant;

  Eigen::VectorXd coefficients() const {
    Eigen::VectorXd b(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) b[static_cast<Eigen::Index>(k)] = rows[k].coef;
    return b;
  }
};

inline double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd a(x.rows(), x.cols() + 1);
  a.col(0).setOnes();
  a.rightCols(x.cols()) = x;
  return a;
}

inline Eigen::VectorXd predict_probabilities(const Eigen::MatrixXd& x, const Eigen::VectorXd& beta) {
  Eigen::VectorXd eta = with_intercept(x) * beta;
  return eta.unaryExpr([](double z) { return logistic(z); });
}

// Newton-Raphson (IRLS) on the logistic log-likelihood with an intercept.
// Standard errors come from the inverse observed information.
inline RegressionSummary logistic_fit(const DesignMatrix& m, std::size_t max_iter = 100,
                                      double tol = 1e-8) {
  validate(m);
  const Eigen::MatrixXd a = with_intercept(m.x);
  const Eigen::Index n = a.rows(), k = a.cols();
  if (m.y.size() != n) fail(ErrorCode::LengthMismatch, "y length");
  if (n <= k - 1) fail(ErrorCode::InvalidArgument, "logistic fit needs n > p");
  {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    if (qr.rank() < k) fail(ErrorCode::SingularDesign, "design matrix is rank deficient");
  }

  RegressionSummary s;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  Eigen::MatrixXd info(k, k);
  for (std::size_t it = 1; it <= max_iter; ++it) {
    s.iterations = it;
    const Eigen::VectorXd mu = predict_probabilities(m.x, beta);
    const Eigen::VectorXd w = (mu.array() * (1.0 - mu.array())).matrix();
    info = a.transpose() * w.asDiagonal() * a;
    const Eigen::VectorXd grad = a.transpose() * (m.y - mu);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success) break;
    const Eigen::VectorXd step = ldlt.solve(grad);
    if (!step.allFinite()) break;
    beta += step;
    if (step.lpNorm<Eigen::Infinity>() <= tol) {
      s.converged = true;
      break;
    }
  }

  const Eigen::VectorXd mu = predict_probabilities(m.x, beta);
  const Eigen::VectorXd w = (mu.array() * (1.0 - mu.array())).matrix();
  info = a.transpose() * w.asDiagonal() * a;
  s.log_likelihood = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = std::clamp(mu[i], 1e-300, 1.0 - 1e-16);
    s.log_likelihood += m.y[i] * std::log(p) + (1.0 - m.y[i]) * std::log1p(-p);
  }
  Eigen::MatrixXd cov = info.completeOrthogonalDecomposition().pseudoInverse();
  for (Eigen::Index j = 0; j < k; ++j) {
    CoefficientRow r;
    r.name = j == 0 ? "const" : m.names[static_cast<std::size_t>(j - 1)];
    r.coef = beta[j];
    r.std_err = std::sqrt(std::max(cov(j, j), 0.0));
    r.z = r.std_err > 0.0 ? r.coef / r.std_err : 0.0;
    r.p = r.std_err > 0.0 ? normal_two_sided_p(r.z) : 1.0;
    s.rows.push_back(std::move(r));
  }
  if (!s.converged && beta.lpNorm<Eigen::Infinity>() > 30.0) s.quasi_separation = true;
  return s;
}

struct TTestResult {
  double delta = 0.0;
  double t = 0.0;
  double df = 0.0;
  double p_one_sided = 0.5;  // P(T_df > t)
};

// Upper tail of Student's t through the regularized incomplete beta.
inline double student_t_upper(double t, double df) {
  if (!(df > 0.0)) fail(ErrorCode::InvalidArgument, "df must be positive");
  if (t == 0.0) return 0.5;
  const double tail = 0.5 * boost::math::ibeta(df / 2.0, 0.5, df / (df + t * t));
  return t > 0.0 ? tail : 1.0 - tail;
}

inline double sample_mean(std::span<const double> a) {
  return std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
}

inline double sample_variance(std::span<const double> a) {
  // a rounded mean would leave a constant sample with a tiny positive variance
  if (std::adjacent_find(a.begin(), a.end(), std::not_equal_to<>()) == a.end()) return 0.0;
  const double m = sample_mean(a);
  double s = 0.0;
  for (double v : a) s += (v - m) * (v - m);
  return s / static_cast<double>(a.size() - 1);
}

inline TTestResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) fail(ErrorCode::DegenerateSample, "each sample needs two values");
  const double va = sample_variance(a), vb = sample_variance(b);
  if (!(va > 0.0) || !(vb > 0.0)) fail(ErrorCode::DegenerateSample, "zero-variance sample");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double sa = va / na, sb = vb / nb;
  TTestResult r;
  r.delta = sample_mean(a) - sample_mean(b);
  r.t = r.delta / std::sqrt(sa + sb);
  r.df = (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
  r.p_one_sided = student_t_upper(r.t, r.df);
  return r;
}

inline double f1_score(double precision, double recall) {
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct ClassificationReport {
  ClassMetrics bonafide;
  ClassMetrics spoof;
};

// Labels: 1 = bona-fide, 0 = spoof. Empty denominators give 0.
inline ClassificationReport classification_report(std::span<const int> y_true, std::span<const int> y_pred) {
  if (y_true.size() != y_pred.size()) fail(ErrorCode::LengthMismatch, "label vectors differ in length");
  auto metrics = [&](int cls) {
    std::size_t tp = 0, fp = 0, fn = 0, support = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
      if ((y_true[i] != 0 && y_true[i] != 1) || (y_pred[i] != 0 && y_pred[i] != 1)) {
        fail(ErrorCode::InvalidArgument, "labels must be 0 or 1");
      }
      if (y_true[i] == cls) ++support;
      if (y_pred[i] == cls && y_true[i] == cls) ++tp;
      if (y_pred[i] == cls && y_true[i] != cls) ++fp;
      if (y_pred[i] != cls && y_true[i] == cls) ++fn;
    }
    ClassMetrics m;
    m.support = support;
    m.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    m.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    m.f1 = f1_score(m.precision, m.recall);
    return m;
  };
  return {metrics(1), metrics(0)};
}

inline std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

inline void write_summary_markdown(const RegressionSummary& s, std::ostream& os) {
  os << "| Feature | coef | std err | z | P>\\|z\\| |\n";
  os << "|---|---:|---:|---:|---:|\n";
  for (const auto& r : s.rows) {
    os << "| " << r.name << " | " << fixed(r.coef, 4) << " | " << fixed(r.std_err, 4) << " | "
       << fixed(r.z, 3) << " | " << fixed(r.p, 3) << " |\n";
  }
}

inline void write_summary_csv(const RegressionSummary& s, std::ostream& os) {
  os << "feature,coef,std_err,z,p\n";
  os << std::setprecision(17);
  for (const auto& r : s.rows) {
    os << csv_cell(r.name) << ',' << r.coef << ',' << r.std_err << ',' << r.z << ',' << r.p << '\n';
  }
}

struct FittedAnalysis {
  RegressionSummary summary;
  std::vector<std::pair<std::string, double>> final_vif;
  std::vector<double> means;  // of the kept columns, for scoring raw rows
  std::vector<double> stds;
};

// Drop constant columns, standardize, then drop the max-VIF column while any
// VIF exceeds the cutoff, and fit.
inline FittedAnalysis vif_screened_fit(const DesignMatrix& input, double vif_cutoff = 10.0) {
  validate(input);
  DesignMatrix m = input;
  std::vector<std::string> constant;
  for (std::size_t j = m.cols(); j-- > 0;) {
    const auto col = m.x.col(static_cast<Eigen::Index>(j));
    const double mean = col.mean();
    const double sd = std::sqrt((col.array() - mean).square().mean());
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
      constant.insert(constant.begin(), m.names[j]);
      m = drop_column(m, j);
    }
  }
  if (m.cols() == 0) fail(ErrorCode::ConstantColumn, "every feature column is constant");
  auto st = standardize(m);
  std::vector<std::string> dropped;
  while (st.matrix.cols() > 1) {
    auto v = vif(st.matrix);
    auto it = std::max_element(v.begin(), v.end());
    if (*it <= vif_cutoff) break;
    const auto j = static_cast<std::size_t>(it - v.begin());
    dropped.push_back(st.matrix.names[j]);
    st.matrix = drop_column(st.matrix, j);
    st.means.erase(st.means.begin() + static_cast<std::ptrdiff_t>(j));
    st.stds.erase(st.stds.begin() + static_cast<std::ptrdiff_t>(j));
  }
  FittedAnalysis out;
  out.summary = logistic_fit(st.matrix);
  out.summary.dropped_for_vif = dropped;
  out.summary.dropped_constant = constant;
  auto v = vif(st.matrix);
  for (std::size_t j = 0; j < v.size(); ++j) out.final_vif.emplace_back(st.matrix.names[j], v[j]);
  out.means = st.means;
  out.stds = st.stds;
  return out;
}

}  // namespace lingua_spoof
