#pragma once

#include <string>
#include <vector>

#include "emonet/centrality.hpp"
#include "emonet/common.hpp"
#include "emonet/experiment.hpp"

namespace emonet::stats {

enum class Correlation { kIndependence, kExchangeable, kAr1 };
Correlation correlation_from_string(const std::string& s);

struct GeeCluster {
  Vector response;  // chronological order within the cluster
  Matrix covariates;  // n_obs x w_cov
};

struct GeeProblem {
  std::vector<GeeCluster> clusters;
  Correlation correlation = Correlation::kAr1;
  int max_iter = 100;
  double tol = 1e-10;
};

struct GeeFit {
  Vector beta;
  Vector robust_se;  // sandwich estimator
  Vector p_values;   // two-sided normal approximation
  double alpha_hat = 0.0;
  double dispersion = 1.0;
  bool converged = false;
  int iterations = 0;
};

// Identity-link marginal model with a working correlation re-estimated from
// Pearson residuals each round. Under independence this is exactly OLS on
// the pooled data.
GeeFit gee_fit(const GeeProblem& problem);

struct ClusterAssignment {
  std::vector<int> labels;
  int n_clusters = 0;
  std::vector<double> merge_heights;  // Ward distances, in merge order
};

// Ward agglomeration; when n_clusters is 0 the count is chosen by cutting
// the dendrogram at 70% of the tallest merge height.
ClusterAssignment ward_cluster(const Matrix& traits, int n_clusters = 0);

struct AnovaResult {
  double f_statistic;
  double p_value;
  int df_between;
  int df_within;
};

AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups);

// Regularized incomplete beta, exposed for the F and normal tails.
double incomplete_beta(double a, double b, double x);
double normal_sf(double z);  // upper tail of the standard normal

struct PairwiseResult {
  std::string model_a;
  std::string model_b;
  double mean_diff;
  double p_value;
};

// Two-sided permutation test on difference of means for every model pair;
// seed-deterministic.
std::vector<PairwiseResult> pairwise_permutation_test(
    const std::vector<std::pair<std::string, std::vector<double>>>& trial_scores,
    int n_permutations = 10000, unsigned seed = 1);

struct OutcomeRow {
  std::string covariate;
  double coefficient;
  double p_value;
};

struct OutcomeTable {
  std::string response;  // "rmse", "mean_score", "sd_score"
  std::vector<OutcomeRow> rows;
  std::vector<std::string> dropped_covariates;  // constant columns
  double alpha_hat;
  bool converged;
};

struct UserScoreStats {
  std::string user;
  double mean;
  double sd;
};

// GEE of {eigenvector, small-degree (D<4), large-degree (D>=4), closeness,
// pagerank} against per-(user, topology) RMSE and per-user score mean/sd,
// clustered by the given assignment over users.
std::vector<OutcomeTable> centrality_outcome_table(
    const CentralityTable& centrality,
    const std::vector<experiment::UserTopologyRmse>& rmse,
    const std::vector<UserScoreStats>& score_stats,
    const std::vector<int>& user_cluster);

}  // namespace emonet::stats
