#include "emonet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>

namespace emonet::synth {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Matrix sample_graph(const SynthConfig& cfg, std::mt19937& rng) {
  const int n = cfg.n_users;
  if (cfg.mean_degree >= n - 1) {
    throw Error("synth: mean degree unreachable for this user count");
  }
  std::normal_distribution<double> deg_dist(cfg.mean_degree, cfg.sd_degree);
  std::vector<int> degree(n);
  int total = 0;
  for (int i = 0; i < n; ++i) {
    double d = std::round(deg_dist(rng));
    degree[i] = static_cast<int>(std::clamp(d, 0.0, static_cast<double>(n - 1)));
    total += degree[i];
  }
  if (total % 2 == 1) {
    // Stub count must be even; bump the first node with headroom.
    for (int i = 0; i < n; ++i) {
      if (degree[i] < n - 1) {
        degree[i] += 1;
        break;
      }
    }
  }
  std::vector<int> stubs;
  for (int i = 0; i < n; ++i) stubs.insert(stubs.end(), degree[i], i);
  std::shuffle(stubs.begin(), stubs.end(), rng);

  Matrix a = Matrix::Zero(n, n);
  std::vector<int> leftover;
  for (std::size_t s = 0; s + 1 < stubs.size(); s += 2) {
    int i = stubs[s], j = stubs[s + 1];
    if (i == j || a(i, j) > 0.0) {
      leftover.push_back(i);
      leftover.push_back(j);
      continue;
    }
    a(i, j) = a(j, i) = 1.0;
  }
  // A few rounds of re-matching for rejected stubs; anything still unmatched
  // is dropped, which only nudges the empirical mean degree.
  for (int round = 0; round < 20 && leftover.size() >= 2; ++round) {
    std::shuffle(leftover.begin(), leftover.end(), rng);
    std::vector<int> next;
    for (std::size_t s = 0; s + 1 < leftover.size(); s += 2) {
      int i = leftover[s], j = leftover[s + 1];
      if (i == j || a(i, j) > 0.0) {
        next.push_back(i);
        next.push_back(j);
        continue;
      }
      a(i, j) = a(j, i) = 1.0;
    }
    leftover = std::move(next);
  }
  return a;
}

Matrix latent_process(const Matrix& adj, const SynthConfig& cfg,
                      std::mt19937& rng) {
  const int n = cfg.n_users;
  const int days = cfg.n_days;
  std::normal_distribution<double> noise(0.0, 1.0);
  Matrix e(n, days);
  for (int i = 0; i < n; ++i) e(i, 0) = noise(rng);
  for (int d = 1; d < days; ++d) {
    for (int i = 0; i < n; ++i) {
      double neigh = 0.0;
      int count = 0;
      for (int j = 0; j < n; ++j) {
        if (adj(i, j) > 0.0) {
          neigh += e(j, d - 1);
          count += 1;
        }
      }
      if (count > 0) neigh /= count;
      e(i, d) = cfg.autoregression * e(i, d - 1) + cfg.contagion * neigh +
                noise(rng) * std::sqrt(1.0 - cfg.autoregression * cfg.autoregression);
    }
  }
  return e;
}

// Affine map of the latent state whose *clipped* sample moments match the
// targets; clipping at [0,100] shrinks the sd, so a fixed-point iteration
// on the empirical moments is used instead of a one-shot map.
Matrix calibrate_labels(const Matrix& latent, double mean_t, double sd_t) {
  const double lm = latent.mean();
  const double lsd = std::sqrt((latent.array() - lm).square().mean());
  double a = mean_t;
  double b = lsd > 0.0 ? sd_t / lsd : 0.0;
  Matrix labels;
  for (int it = 0; it < 40; ++it) {
    labels = ((latent.array() - lm) * b + a).cwiseMax(0.0).cwiseMin(100.0).matrix();
    const double m = labels.mean();
    const double sd = std::sqrt((labels.array() - m).square().mean());
    if (std::abs(m - mean_t) < 1e-3 && std::abs(sd - sd_t) < 1e-3) break;
    a += mean_t - m;
    if (sd > 0.0) b *= sd_t / sd;
  }
  return labels;
}

}  // namespace

SynthData generate(const SynthConfig& cfg) {
  if (cfg.n_users < 2) throw Error("synth: n_users must be >= 2");
  if (cfg.contagion < 0.0 || cfg.contagion > 1.0) throw Error("synth: contagion outside [0,1]");
  if (cfg.autoregression < 0.0 || cfg.autoregression >= 1.0) {
    throw Error("synth: autoregression outside [0,1)");
  }
  std::mt19937 rng(cfg.seed);
  SynthData out;

  const Instant start = parse_iso8601("2016-02-01T00:00:00Z");
  Interval interval{start, start + static_cast<Instant>(cfg.n_days) * 86400};

  std::vector<std::string> roster;
  for (int i = 0; i < cfg.n_users; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "u%03d", i);
    roster.emplace_back(buf);
  }

  Matrix adj = sample_graph(cfg, rng);
  out.graph.node_ids = roster;
  out.graph.adjacency = adj;
  out.graph.interval = interval;

  out.latent_stress = latent_process(adj, cfg, rng);
  out.latent_happiness = latent_process(adj, cfg, rng);

  Matrix stress = calibrate_labels(out.latent_stress, cfg.stress_mean, cfg.stress_sd);
  Matrix happiness =
      calibrate_labels(out.latent_happiness, cfg.happiness_mean, cfg.happiness_sd);

  // Features: half track the stress latent, half the happiness latent,
  // alternating linear and saturating shapes, all with observation noise.
  FeaturePanel& p = out.panel;
  p.users = roster;
  for (int d = 0; d < cfg.n_days; ++d) {
    p.days.push_back(format_date(start + static_cast<Instant>(d) * 86400));
  }
  for (int f = 0; f < cfg.n_informative_features; ++f) {
    p.feature_names.push_back("sig" + std::to_string(f));
  }
  for (int f = 0; f < cfg.n_noise_features; ++f) {
    p.feature_names.push_back("noise" + std::to_string(f));
  }
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  p.values.assign(cfg.n_users, Matrix::Zero(cfg.n_days, p.n_features()));
  for (int u = 0; u < cfg.n_users; ++u) {
    for (int d = 0; d < cfg.n_days; ++d) {
      for (int f = 0; f < cfg.n_informative_features; ++f) {
        double e = (f % 2 == 0) ? out.latent_stress(u, d) : out.latent_happiness(u, d);
        double base = (f / 2 % 2 == 0) ? e : std::tanh(e);
        p.values[u](d, f) = base + cfg.feature_noise_sd * noise(rng);
      }
      for (int f = 0; f < cfg.n_noise_features; ++f) {
        p.values[u](d, cfg.n_informative_features + f) = noise(rng);
      }
    }
  }
  // Punch a few holes so the imputation path is exercised end to end.
  for (int u = 0; u < cfg.n_users; ++u) {
    for (int d = 0; d < cfg.n_days; ++d) {
      for (int f = 0; f < p.n_features(); ++f) {
        if (unif(rng) < cfg.missing_rate) p.values[u](d, f) = kNaN;
      }
    }
  }
  p.stress = stress;
  p.happiness = happiness;

  out.traits = Matrix(cfg.n_users, 6);
  std::uniform_int_distribution<int> gender(0, 1);
  for (int u = 0; u < cfg.n_users; ++u) {
    for (int t = 0; t < 5; ++t) {
      out.traits(u, t) = std::clamp(50.0 + 20.0 * noise(rng), 1.0, 100.0);
    }
    out.traits(u, 5) = gender(rng);
  }

  // Interaction logs consistent with the adjacency: every edge gets at
  // least one call and one SMS in each direction somewhere in the interval.
  std::uniform_int_distribution<Instant> when(interval.start, interval.end - 1);
  std::uniform_real_distribution<double> dur(30.0, 600.0);
  std::uniform_int_distribution<int> cls(0, 1);
  for (int i = 0; i < cfg.n_users; ++i) {
    for (int j = i + 1; j < cfg.n_users; ++j) {
      if (adj(i, j) <= 0.0) continue;
      out.calls.push_back({when(rng), roster[i], roster[j], dur(rng)});
      out.calls.push_back({when(rng), roster[j], roster[i], dur(rng)});
      out.sms.push_back({when(rng), roster[i], roster[j], cls(rng)});
      out.sms.push_back({when(rng), roster[j], roster[i], cls(rng)});
    }
  }
  std::sort(out.calls.begin(), out.calls.end(),
            [](const CallRecord& a, const CallRecord& b) {
              return std::tie(a.timestamp, a.caller, a.callee) <
                     std::tie(b.timestamp, b.caller, b.callee);
            });
  std::sort(out.sms.begin(), out.sms.end(),
            [](const SmsRecord& a, const SmsRecord& b) {
              return std::tie(a.timestamp, a.sender, a.receiver) <
                     std::tie(b.timestamp, b.sender, b.receiver);
            });
  return out;
}

}  // namespace emonet::synth
