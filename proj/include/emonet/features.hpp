#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "emonet/common.hpp"

namespace emonet {

// Per-user, per-day feature rows plus daily emotion scores. NaN marks a
// missing value in both features and labels.
struct FeaturePanel {
  std::vector<std::string> users;
  std::vector<std::string> days;  // ordered ISO dates, shared by all users
  std::vector<std::string> feature_names;
  std::vector<Matrix> values;    // per user: days x features
  Matrix stress;                 // users x days
  Matrix happiness;              // users x days

  int n_users() const { return static_cast<int>(users.size()); }
  int n_days() const { return static_cast<int>(days.size()); }
  int n_features() const { return static_cast<int>(feature_names.size()); }
  const Matrix& labels(const std::string& target) const;
};

// Feature CSV: `user_id,date,<feature columns>`, empty cell = missing.
FeaturePanel read_feature_csv(std::istream& features, std::istream& labels);
void write_feature_csv(const FeaturePanel& p, std::ostream& out);
void write_label_csv(const FeaturePanel& p, std::ostream& out);

struct DropSparseResult {
  FeaturePanel panel;
  std::vector<std::string> dropped;
};

// Removes features missing in more than half of all user-day samples
// (strictly more; exactly half is kept).
DropSparseResult drop_sparse_features(const FeaturePanel& panel);

// Two-stage k-NN imputation: per-user day rows first, then the global pool.
// Throws if anything is still missing afterwards.
FeaturePanel knn_impute(const FeaturePanel& panel, int k = 5);

struct OutlierResult {
  FeaturePanel panel;
  int removed = 0;  // user-day rows blanked out
};

// Rows with any per-feature |z| > threshold are blanked (features set to
// missing); zero-variance features never trigger removal.
OutlierResult remove_outliers(const FeaturePanel& panel, double z_threshold = 3.0);

struct Standardization {
  std::vector<double> mean;
  std::vector<double> sd;  // 0 marks a constant feature (mapped to zeros)
};

// Fits mean/sd on rows where `fit_row(user, day)` is true (all rows when
// absent) and applies to the whole panel. Population sd.
std::pair<FeaturePanel, Standardization> standardize(
    const FeaturePanel& panel,
    const std::function<bool(int user, int day)>& fit_row = nullptr);

struct SequenceSample {
  Matrix sequence;  // L x features, rows oldest first
  double target;
  int user;
  int day;  // target day index
  std::string topology_id;
};

struct SequenceBuild {
  std::vector<SequenceSample> samples;
  int skipped_incomplete = 0;
};

// Emits (x[n-L..n-1], y[n]) for every user/day with a complete window and a
// present label. No future leakage: all window days strictly precede n.
SequenceBuild make_sequences(const FeaturePanel& panel, int L,
                             const std::string& target);

// <33 -> 0, [33,66] -> 1, >66 -> 2. Throws outside [0,100].
int bin_label(double score);

}  // namespace emonet
