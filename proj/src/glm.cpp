#include "tmeta/glm.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tmeta {

void check_spec(const ModelSpec& spec) {
  for (std::size_t i = 0; i < spec.terms.size(); ++i) {
    const Term& t = spec.terms[i];
    if (t.degree != 1 && t.degree != 2)
      throw ConfigError("glm", "term degree must be 1 or 2");
    for (std::size_t j = i + 1; j < spec.terms.size(); ++j)
      if (spec.terms[j] == t) throw ConfigError("glm", "duplicate model term");
    if (t.degree == 2) {
      bool has_linear = false;
      for (const Term& other : spec.terms)
        if (other.covariate == t.covariate && other.degree == 1) has_linear = true;
      if (!has_linear)
        throw ConfigError("glm", "degree-2 term requires the degree-1 term for covariate " +
                                     std::to_string(t.covariate));
    }
  }
}

Eigen::VectorXd build_design(const ModelSpec& spec,
                             std::span<const std::optional<double>> covariates) {
  Eigen::VectorXd features(static_cast<Eigen::Index>(spec.n_features()));
  features[0] = 1.0;
  for (std::size_t t = 0; t < spec.terms.size(); ++t) {
    const Term& term = spec.terms[t];
    if (term.covariate < 0 || static_cast<std::size_t>(term.covariate) >= covariates.size())
      throw DataError("glm", "model term references covariate index " +
                                 std::to_string(term.covariate) + " outside the dataset");
    const auto& v = covariates[static_cast<std::size_t>(term.covariate)];
    if (!v.has_value())
      throw DataError("glm", "model term references covariate " + std::to_string(term.covariate) +
                                 ", which is absent for this record");
    features[static_cast<Eigen::Index>(t + 1)] = term.degree == 1 ? *v : (*v) * (*v);
  }
  return features;
}

std::string term_label(const Term& term, const std::vector<std::string>* names) {
  std::string base = names != nullptr && term.covariate >= 0 &&
                             static_cast<std::size_t>(term.covariate) < names->size()
                         ? (*names)[static_cast<std::size_t>(term.covariate)]
                         : "x" + std::to_string(term.covariate);
  return term.degree == 2 ? base + "^2" : base;
}

double FittedGlm::predict(const Eigen::VectorXd& features) const {
  return tmeta::predict(*this, features);
}

double FittedGlm::predict_record(std::span<const std::optional<double>> covariates) const {
  return tmeta::predict(*this, build_design(spec, covariates));
}

double predict(const FittedGlm& fit, const Eigen::VectorXd& features) {
  if (features.size() != fit.coefficients.size())
    throw NumericError("glm", "feature length " + std::to_string(features.size()) +
                                  " does not match coefficient length " +
                                  std::to_string(fit.coefficients.size()));
  double eta = fit.coefficients.dot(features);
  return fit.spec.family == Family::binomial_logit ? expit(eta) : eta;
}

namespace {

std::string column_name(Eigen::Index j, const std::vector<std::string>* labels) {
  if (j == 0) return "intercept";
  if (labels != nullptr && static_cast<std::size_t>(j - 1) < labels->size())
    return (*labels)[static_cast<std::size_t>(j - 1)];
  return "column " + std::to_string(j);
}

// Rank check on the weighted design; names the redundant columns.
void require_full_rank(const Eigen::MatrixXd& X, const Eigen::VectorXd& w,
                       const std::vector<std::string>* labels) {
  Eigen::MatrixXd Xw = w.array().sqrt().matrix().asDiagonal() * X;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xw);
  qr.setThreshold(1e-10);
  if (qr.rank() < X.cols()) {
    std::ostringstream msg;
    msg << "rank-deficient design (rank " << qr.rank() << " of " << X.cols()
        << "); collinear columns:";
    auto perm = qr.colsPermutation().indices();
    for (Eigen::Index j = qr.rank(); j < X.cols(); ++j)
      msg << " " << column_name(perm[j], labels);
    throw NumericError("glm", msg.str());
  }
}

double binomial_loglik(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                       const Eigen::VectorXd& w) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    ll += w[i] * (y[i] * std::log(mu[i]) + (1.0 - y[i]) * std::log(1.0 - mu[i]));
  return ll;
}

FittedGlm fit_gaussian(const ModelSpec& spec, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& w, const std::vector<std::string>* labels) {
  require_full_rank(X, w, labels);
  Eigen::VectorXd sqrt_w = w.array().sqrt();
  Eigen::MatrixXd Xw = sqrt_w.asDiagonal() * X;
  Eigen::VectorXd yw = sqrt_w.asDiagonal() * y;
  FittedGlm fit;
  fit.spec = spec;
  fit.coefficients = Xw.colPivHouseholderQr().solve(yw);
  fit.converged = true;
  fit.iterations = 1;
  Eigen::VectorXd score = X.transpose() * (w.asDiagonal() * (y - X * fit.coefficients));
  fit.max_abs_score = score.cwiseAbs().maxCoeff();
  double rss = (w.array() * (y - X * fit.coefficients).array().square()).sum();
  fit.loglik_trace.push_back(-0.5 * rss);
  return fit;
}

FittedGlm fit_binomial(const ModelSpec& spec, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& w, const std::vector<std::string>* labels,
                       const GlmOptions& opt) {
  for (Eigen::Index i = 0; i < y.size(); ++i)
    if (y[i] != 0.0 && y[i] != 1.0)
      throw DataError("glm", "binomial responses must be 0 or 1");
  require_full_rank(X, w, labels);

  const Eigen::Index p = X.cols();
  const double prob_floor = 1e-12;

  FittedGlm fit;
  fit.spec = spec;
  fit.coefficients = Eigen::VectorXd::Zero(p);

  Eigen::VectorXd damping_mask = Eigen::VectorXd::Ones(p);
  damping_mask[0] = 0.0;  // intercept undamped
  double ridge = opt.ridge;

  auto mean_response = [&](const Eigen::VectorXd& beta, bool* clamped) {
    Eigen::VectorXd mu = (X * beta).unaryExpr([](double t) { return expit(t); });
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
      if (mu[i] < prob_floor) {
        mu[i] = prob_floor;
        if (clamped) *clamped = true;
      } else if (mu[i] > 1.0 - prob_floor) {
        mu[i] = 1.0 - prob_floor;
        if (clamped) *clamped = true;
      }
    }
    return mu;
  };

  bool clamped = false;
  Eigen::VectorXd mu = mean_response(fit.coefficients, &clamped);
  double ll = binomial_loglik(y, mu, w);
  fit.loglik_trace.push_back(ll);

  for (int iter = 1; iter <= opt.max_iterations; ++iter) {
    fit.iterations = iter;
    Eigen::VectorXd score = X.transpose() * (w.array() * (y - mu).array()).matrix();
    fit.max_abs_score = score.cwiseAbs().maxCoeff();
    if (fit.max_abs_score <= opt.score_tol) {
      fit.converged = true;
      break;
    }
    if (clamped && ridge < opt.ridge_escalated) {
      ridge = opt.ridge_escalated;
      fit.ridge_escalated = true;
    }
    Eigen::VectorXd irls_w = w.array() * mu.array() * (1.0 - mu.array());
    Eigen::MatrixXd info = X.transpose() * irls_w.asDiagonal() * X;
    info += ridge * damping_mask.asDiagonal();
    Eigen::VectorXd step = info.ldlt().solve(score);

    // Step-halving keeps the log-likelihood non-decreasing.
    double scale = 1.0;
    Eigen::VectorXd beta_next;
    Eigen::VectorXd mu_next;
    double ll_next = 0.0;
    for (int h = 0; h <= opt.max_halvings; ++h) {
      beta_next = fit.coefficients + scale * step;
      bool clamp_next = false;
      mu_next = mean_response(beta_next, &clamp_next);
      ll_next = binomial_loglik(y, mu_next, w);
      if (ll_next >= ll || h == opt.max_halvings) {
        clamped = clamp_next;
        break;
      }
      scale *= 0.5;
    }
    fit.coefficients = beta_next;
    mu = mu_next;
    ll = ll_next;
    fit.loglik_trace.push_back(ll);
  }

  if (!fit.converged) {
    Eigen::VectorXd score = X.transpose() * (w.array() * (y - mu).array()).matrix();
    fit.max_abs_score = score.cwiseAbs().maxCoeff();
    fit.converged = fit.max_abs_score <= opt.score_tol;
  }
  return fit;
}

}  // namespace

FittedGlm fit_glm(const ModelSpec& spec, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                  const Eigen::VectorXd& weights, const std::vector<std::string>* column_labels,
                  const GlmOptions& options) {
  check_spec(spec);
  if (X.rows() != y.size() || X.rows() != weights.size())
    throw DataError("glm", "design, response, and weight sizes disagree");
  if (X.cols() != static_cast<Eigen::Index>(spec.n_features()))
    throw DataError("glm", "design has " + std::to_string(X.cols()) + " columns but spec expects " +
                               std::to_string(spec.n_features()));
  double wsum = 0.0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    if (weights[i] < 0.0) throw DataError("glm", "negative observation weight");
    wsum += weights[i];
  }
  if (!(wsum > 0.0)) throw DataError("glm", "need at least one row with positive weight");

  // Mean-one normalization: rescaling all weights cannot change the fit.
  Eigen::VectorXd w = weights * (static_cast<double>(weights.size()) / wsum);

  return spec.family == Family::gaussian_identity
             ? fit_gaussian(spec, X, y, w, column_labels)
             : fit_binomial(spec, X, y, w, column_labels, options);
}

}  // namespace tmeta
