#pragma once

#include <string>
#include <vector>

#include "emonet/features.hpp"
#include "emonet/graph.hpp"
#include "emonet/ingest.hpp"

namespace emonet::synth {

struct SynthConfig {
  int n_users = 30;
  int n_days = 90;
  double mean_degree = 1.2;  // study cohorts averaged 1.2 neighbors
  double sd_degree = 2.2;
  double contagion = 0.6;        // beta_c in [0,1]
  double autoregression = 0.3;   // rho in [0,1)
  double stress_mean = 54.0;
  double stress_sd = 26.0;
  double happiness_mean = 61.8;
  double happiness_sd = 23.8;
  int n_informative_features = 6;
  int n_noise_features = 6;
  double feature_noise_sd = 0.6;
  double missing_rate = 0.02;  // random cells blanked to exercise imputation
  unsigned seed = 1;
};

struct SynthData {
  SocialGraph graph;  // undirected ground-truth adjacency
  FeaturePanel panel;
  Matrix latent_stress;     // users x days ground-truth latent state
  Matrix latent_happiness;
  Matrix traits;            // users x 6: five personality scores + gender
  std::vector<CallRecord> calls;
  std::vector<SmsRecord> sms;
};

// Seed-deterministic dataset with a configuration-model graph, an
// AR(1)-plus-neighbor-mean latent emotion process, labels affine-mapped to
// the target moments, and features that are noisy functions of the latent
// state. Call/SMS logs are emitted so the real parsers reconstruct the graph.
SynthData generate(const SynthConfig& config);

}  // namespace emonet::synth
