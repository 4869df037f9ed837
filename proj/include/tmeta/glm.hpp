#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tmeta/common.hpp"

namespace tmeta {

enum class Family { gaussian_identity, binomial_logit };

struct Term {
  int covariate = 0;
  int degree = 1;  // 1 or 2

  bool operator==(const Term&) const = default;
};

// Intercept is always included and is not listed among the terms.
struct ModelSpec {
  Family family = Family::gaussian_identity;
  std::vector<Term> terms;

  std::size_t n_features() const { return terms.size() + 1; }
};

// Throws ConfigError on duplicate terms or a degree-2 term without its
// degree-1 companion.
void check_spec(const ModelSpec& spec);

// [1, x_{i1}, ..., x_{ip}, x_{j1}^2, ...] in spec term order. Referencing an
// absent covariate is an error identifying the covariate.
Eigen::VectorXd build_design(const ModelSpec& spec,
                             std::span<const std::optional<double>> covariates);

std::string term_label(const Term& term, const std::vector<std::string>* names);

struct FittedGlm {
  ModelSpec spec;
  Eigen::VectorXd coefficients;  // intercept first
  bool converged = false;
  int iterations = 0;
  double max_abs_score = 0.0;  // max |score| component at the final iterate
  bool ridge_escalated = false;
  std::vector<double> loglik_trace;  // per accepted IRLS iterate

  double predict(const Eigen::VectorXd& features) const;
  double predict_record(std::span<const std::optional<double>> covariates) const;
};

struct GlmOptions {
  double score_tol = 1e-8;
  int max_iterations = 100;
  int max_halvings = 20;
  double ridge = 1e-8;            // damping on non-intercept normal equations
  double ridge_escalated = 1e-4;  // used after fitted probabilities clamp
};

// Weighted maximum likelihood. Gaussian-identity solves the weighted normal
// equations exactly in one step; binomial-logit runs damped IRLS with
// step-halving until the raw score satisfies max_abs_score <= score_tol.
// Observation weights are normalized to mean one internally, which makes the
// fit exactly invariant to rescaling all weights.
FittedGlm fit_glm(const ModelSpec& spec, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                  const Eigen::VectorXd& weights,
                  const std::vector<std::string>* column_labels = nullptr,
                  const GlmOptions& options = {});

double predict(const FittedGlm& fit, const Eigen::VectorXd& features);

}  // namespace tmeta
