#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "emonet/centrality.hpp"
#include "emonet/experiment.hpp"
#include "emonet/features.hpp"
#include "emonet/graph.hpp"
#include "emonet/ingest.hpp"
#include "emonet/runio.hpp"
#include "emonet/stats.hpp"
#include "emonet/synth.hpp"

namespace {

using namespace emonet;
using ordered_json = nlohmann::ordered_json;

std::string output_root() {
  const char* env = std::getenv("EMONET_OUT");
  return env && *env ? env : ".";
}

std::string join_path(const std::string& dir, const std::string& name) {
  if (dir.empty() || dir == ".") return name;
  return dir.back() == '/' ? dir + name : dir + "/" + name;
}

// Collects artifacts in memory and flushes them atomically at the end, so a
// failure partway through a command leaves nothing behind.
class ArtifactSet {
 public:
  explicit ArtifactSet(std::string dir) : dir_(std::move(dir)) {}

  void add(const std::string& name, std::string content) {
    names_.push_back(name);
    contents_.push_back(std::move(content));
  }

  void note_input(const std::string& name, const std::string& content) {
    inputs_.push_back({"input:" + name, runio::fingerprint(content)});
  }

  void note(const std::string& key, const std::string& value) {
    inputs_.push_back({key, value});
  }

  void flush(const std::string& command) {
    std::vector<runio::ManifestEntry> entries = inputs_;
    for (std::size_t i = 0; i < names_.size(); ++i) {
      entries.push_back({"output:" + names_[i], runio::fingerprint(contents_[i])});
    }
    for (std::size_t i = 0; i < names_.size(); ++i) {
      runio::atomic_write_file(join_path(dir_, names_[i]), contents_[i]);
    }
    runio::atomic_write_file(join_path(dir_, "manifest.json"),
                             runio::make_manifest(command, entries));
  }

 private:
  std::string dir_;
  std::vector<std::string> names_;
  std::vector<std::string> contents_;
  std::vector<runio::ManifestEntry> inputs_;
};

std::string calls_csv(const std::vector<CallRecord>& calls) {
  std::string out = "timestamp,caller,callee,duration_s\n";
  for (const auto& c : calls) {
    out += format_iso8601(c.timestamp) + "," + c.caller + "," + c.callee + "," +
           format_double(c.duration_s) + "\n";
  }
  return out;
}

std::string sms_csv(const std::vector<SmsRecord>& sms) {
  std::string out = "timestamp,sender,receiver,class\n";
  for (const auto& s : sms) {
    out += format_iso8601(s.timestamp) + "," + s.sender + "," + s.receiver + "," +
           std::to_string(s.sms_class) + "\n";
  }
  return out;
}

std::string traits_csv(const std::vector<std::string>& users, const Matrix& traits) {
  std::string out = "user_id,openness,conscientiousness,extraversion,agreeableness,neuroticism,gender\n";
  for (std::size_t u = 0; u < users.size(); ++u) {
    out += users[u];
    for (int t = 0; t < traits.cols(); ++t) {
      out += "," + format_double(traits(static_cast<int>(u), t));
    }
    out += "\n";
  }
  return out;
}

Interval panel_interval(const FeaturePanel& panel) {
  if (panel.days.empty()) throw Error("panel has no days");
  Instant start = parse_iso8601(panel.days.front());
  Instant end = parse_iso8601(panel.days.back()) + 86400;
  return {start, end};
}

struct DataDir {
  FeaturePanel raw_panel;
  std::vector<CallRecord> calls;
  std::vector<SmsRecord> sms;
  Matrix traits;
  std::vector<std::string> trait_users;
};

DataDir load_data_dir(const std::string& dir, ArtifactSet* artifacts,
                      bool need_traits = false) {
  DataDir d;
  auto slurp = [&](const std::string& name) {
    std::string text = runio::read_file(join_path(dir, name));
    if (artifacts) artifacts->note_input(name, text);
    return text;
  };
  std::string features = slurp("features.csv");
  std::string labels = slurp("labels.csv");
  {
    std::istringstream fs(features), ls(labels);
    d.raw_panel = read_feature_csv(fs, ls);
  }
  {
    std::istringstream cs(slurp("calls.csv"));
    d.calls = parse_call_log(cs);
  }
  {
    std::istringstream ss(slurp("sms.csv"));
    d.sms = parse_sms_log(ss);
  }
  if (need_traits) {
    std::istringstream ts(slurp("traits.csv"));
    std::string line;
    if (!std::getline(ts, line)) throw Error("traits.csv: empty");
    std::vector<std::vector<double>> rows;
    int lineno = 1;
    while (std::getline(ts, line)) {
      ++lineno;
      if (line.empty()) continue;
      auto fields = split_csv_line(line);
      if (fields.size() != 7) {
        throw Error("traits.csv line " + std::to_string(lineno) + ": expected 7 fields");
      }
      d.trait_users.push_back(fields[0]);
      std::vector<double> row;
      for (int i = 1; i < 7; ++i) {
        row.push_back(parse_double(fields[i], "traits.csv line " + std::to_string(lineno)));
      }
      rows.push_back(std::move(row));
    }
    d.traits.resize(static_cast<int>(rows.size()), 6);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (int c = 0; c < 6; ++c) d.traits(static_cast<int>(r), c) = rows[r][c];
    }
  }
  return d;
}

SocialGraph build_combined_graph(const DataDir& d, double mix) {
  Interval interval = panel_interval(d.raw_panel);
  auto call = build_call_graph(d.calls, d.raw_panel.users, interval);
  auto sms = build_sms_graph(d.sms, d.raw_panel.users, interval, 2.0, 1.0);
  return symmetrize(combine_graphs(call.graph, sms.graph, mix));
}

FeaturePanel preprocess_panel(const FeaturePanel& raw) {
  auto dropped = drop_sparse_features(raw);
  auto imputed = knn_impute(dropped.panel);
  return remove_outliers(imputed).panel;
}

experiment::Dataset load_dataset(const std::string& dir, double mix,
                                 ArtifactSet* artifacts) {
  DataDir d = load_data_dir(dir, artifacts);
  experiment::Dataset data;
  data.graph = build_combined_graph(d, mix);
  data.panel = preprocess_panel(d.raw_panel);
  return data;
}

std::string gedd_json(const GeddResult& result, const SocialGraph& graph, int w) {
  ordered_json j;
  j["w"] = w;
  j["cut_weight"] = result.cut_weight;
  j["split_events"] = result.split_events;
  ordered_json batches = ordered_json::array();
  for (const auto& b : result.batches) {
    ordered_json bj;
    bj["node_ids"] = b.node_ids;
    bj["node_indices"] = b.node_indices;
    ordered_json mask = ordered_json::array();
    for (bool m : b.duplicate_mask) mask.push_back(m);
    bj["duplicate_mask"] = std::move(mask);
    bj["source_components"] = b.source_components;
    ordered_json adj = ordered_json::array();
    for (int r = 0; r < b.adjacency.rows(); ++r) {
      ordered_json row = ordered_json::array();
      for (int c = 0; c < b.adjacency.cols(); ++c) row.push_back(b.adjacency(r, c));
      adj.push_back(std::move(row));
    }
    bj["adjacency"] = std::move(adj);
    batches.push_back(std::move(bj));
  }
  j["batches"] = std::move(batches);
  j["source_nodes"] = graph.size();
  return j.dump(2) + "\n";
}

struct CommonFlags {
  std::string config_path;
  std::string out = output_root();
  unsigned seed = 1;
  bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "INI run configuration file");
  cmd->add_option("--out", flags.out, "output directory (default $EMONET_OUT or .)");
  cmd->add_option("--seed", flags.seed, "random seed")->each([&](const std::string&) {
    flags.seed_set = true;
  });
}

experiment::RunConfig make_run_config(const CommonFlags& flags,
                                      ArtifactSet& artifacts) {
  experiment::RunConfig config;
  if (!flags.config_path.empty()) {
    std::string text = runio::read_file(flags.config_path);
    artifacts.note_input("config", text);
    runio::apply_run_config(config, runio::parse_ini(text));
  }
  if (flags.seed_set) config.seed = flags.seed;
  return config;
}

int run_train_like(const CommonFlags& flags, const std::string& data_dir,
                   const std::string& target, const std::string& model,
                   int graph_size, int seq_len, int trials, double mix,
                   const std::string& vary, const std::string& values,
                   const std::string& command) {
  ArtifactSet artifacts(flags.out);
  experiment::RunConfig config = make_run_config(flags, artifacts);
  if (!target.empty()) config.target = target;
  if (!model.empty()) config.kinds = {models::model_kind_from_string(model)};
  if (graph_size > 0) config.w = graph_size;
  if (seq_len > 0) config.seq_len = seq_len;
  if (trials > 0) config.trials = trials;
  if (mix >= 0.0) config.mix = mix;
  if (!vary.empty()) {
    config.sweep_vary = vary;
    config.sweep_values.clear();
    std::stringstream ss(values);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) config.sweep_values.push_back(static_cast<int>(parse_long(item, "--values")));
    }
    if (config.sweep_values.empty()) throw Error("sweep: --values required");
  }
  config.validate();

  experiment::Dataset data = load_dataset(data_dir, config.mix, &artifacts);
  artifacts.note("seed", std::to_string(config.seed));
  auto report = experiment::run_experiment(config, data);
  artifacts.add("report.json", experiment::report_to_json(config, report));
  artifacts.add("report.csv", experiment::report_to_csv(report));
  artifacts.flush(command);
  return 0;
}

std::string clusters_csv(const std::vector<std::string>& users,
                         const std::vector<int>& labels) {
  std::string out = "user_id,cluster\n";
  for (std::size_t i = 0; i < users.size(); ++i) {
    out += users[i] + "," + std::to_string(labels[i]) + "\n";
  }
  return out;
}

std::string outcome_json(const std::vector<stats::OutcomeTable>& tables) {
  ordered_json j;
  j["method"] = "gee-ar1";
  j["posthoc_note"] =
      "pairwise comparisons use permutation tests in place of Tukey HSD";
  ordered_json ts = ordered_json::array();
  for (const auto& t : tables) {
    ordered_json tj;
    tj["response"] = t.response;
    tj["alpha_hat"] = t.alpha_hat;
    tj["converged"] = t.converged;
    tj["dropped_covariates"] = t.dropped_covariates;
    ordered_json rows = ordered_json::array();
    for (const auto& r : t.rows) {
      rows.push_back({{"covariate", r.covariate},
                      {"coefficient", r.coefficient},
                      {"p_value", r.p_value}});
    }
    tj["rows"] = std::move(rows);
    ts.push_back(std::move(tj));
  }
  j["tables"] = std::move(ts);
  return j.dump(2) + "\n";
}

std::string outcome_csv(const std::vector<stats::OutcomeTable>& tables) {
  std::string out = "response,covariate,coefficient,p_value\n";
  for (const auto& t : tables) {
    for (const auto& r : t.rows) {
      out += t.response + "," + r.covariate + "," + format_double(r.coefficient) +
             "," + format_double(r.p_value) + "\n";
    }
  }
  return out;
}

int run_analyze(const CommonFlags& flags, const std::string& data_dir,
                const std::string& report_path, const std::string& model,
                double mix) {
  ArtifactSet artifacts(flags.out);
  DataDir d = load_data_dir(data_dir, &artifacts, /*need_traits=*/true);
  if (d.trait_users != d.raw_panel.users) {
    throw Error("analyze: traits.csv roster does not match features.csv");
  }
  std::string report_text = runio::read_file(report_path);
  artifacts.note_input("report", report_text);
  ordered_json report = ordered_json::parse(report_text);
  const std::string target = report.at("target").get<std::string>();

  // Per-(user, topology) RMSE for the chosen model at the first sweep point,
  // plus trial F1 vectors for every model for ANOVA and the pairwise tests.
  std::vector<experiment::UserTopologyRmse> rmse;
  std::vector<std::pair<std::string, std::vector<double>>> trial_f1;
  const auto& point = report.at("points").at(0);
  bool found = false;
  for (const auto& mj : point.at("models")) {
    std::string name = mj.at("model").get<std::string>();
    std::vector<double> f1s;
    for (const auto& tj : mj.at("trials")) {
      if (tj.at("failed").get<bool>()) continue;
      f1s.push_back(tj.at("micro_f1").get<double>());
    }
    trial_f1.emplace_back(name, std::move(f1s));
    if (!model.empty() && name != model) continue;
    if (found) continue;
    found = true;
    for (const auto& rj : mj.at("per_user_rmse")) {
      rmse.push_back({rj.at("user").get<std::string>(),
                      rj.at("topology").get<std::string>(),
                      rj.at("rmse").get<double>(), rj.at("count").get<int>()});
    }
  }
  if (!found) throw Error("analyze: model not present in report: " + model);

  SocialGraph graph = build_combined_graph(d, mix);
  CentralityTable centrality = compute_centralities(graph);

  auto clusters = stats::ward_cluster(d.traits);
  const Matrix& labels = d.raw_panel.labels(target);
  std::vector<stats::UserScoreStats> score_stats;
  for (int u = 0; u < d.raw_panel.n_users(); ++u) {
    double sum = 0.0, sq = 0.0;
    int n = 0;
    for (int day = 0; day < d.raw_panel.n_days(); ++day) {
      double v = labels(u, day);
      if (std::isnan(v)) continue;
      sum += v;
      sq += v * v;
      n += 1;
    }
    double mean = n > 0 ? sum / n : 0.0;
    double var = n > 0 ? std::max(0.0, sq / n - mean * mean) : 0.0;
    score_stats.push_back({d.raw_panel.users[u], mean, std::sqrt(var)});
  }

  auto tables = stats::centrality_outcome_table(centrality, rmse, score_stats,
                                                clusters.labels);

  ordered_json models_j;
  {
    // ANOVA + permutation tests across model variants, when >= 2 present.
    models_j["posthoc_note"] =
        "pairwise comparisons use permutation tests in place of Tukey HSD";
    std::vector<std::vector<double>> groups;
    for (const auto& [name, f1s] : trial_f1) groups.push_back(f1s);
    bool anova_ok = groups.size() >= 2;
    for (const auto& g : groups) anova_ok = anova_ok && g.size() >= 2;
    if (anova_ok) {
      try {
        auto a = stats::anova_oneway(groups);
        models_j["anova"] = {{"f", a.f_statistic},
                             {"p", a.p_value},
                             {"df_between", a.df_between},
                             {"df_within", a.df_within}};
      } catch (const Error& e) {
        models_j["anova"] = {{"error", e.what()}};
      }
      bool pairwise_ok = true;
      for (const auto& g : groups) pairwise_ok = pairwise_ok && g.size() >= 5;
      if (pairwise_ok) {
        ordered_json pairs = ordered_json::array();
        for (const auto& p : stats::pairwise_permutation_test(trial_f1)) {
          pairs.push_back({{"model_a", p.model_a},
                           {"model_b", p.model_b},
                           {"mean_diff", p.mean_diff},
                           {"p_value", p.p_value}});
        }
        models_j["pairwise"] = std::move(pairs);
      }
    }
  }

  {
    std::ostringstream cs;
    write_centrality_csv(centrality, cs);
    artifacts.add("centrality.csv", cs.str());
  }
  artifacts.add("clusters.csv", clusters_csv(d.raw_panel.users, clusters.labels));
  artifacts.add("outcome.json", outcome_json(tables));
  artifacts.add("outcome.csv", outcome_csv(tables));
  artifacts.add("model_comparison.json", models_j.dump(2) + "\n");
  artifacts.flush("analyze");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"emonet: social-graph emotion prediction pipeline"};
  app.require_subcommand(1);
  app.allow_extras(false);

  CommonFlags flags;

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
  synth::SynthConfig synth_cfg;
  add_common(synth_cmd, flags);
  synth_cmd->add_option("--users", synth_cfg.n_users, "number of users");
  synth_cmd->add_option("--days", synth_cfg.n_days, "number of days");
  synth_cmd->add_option("--contagion", synth_cfg.contagion, "neighbor coupling in [0,1]");
  synth_cmd->add_option("--mean-degree", synth_cfg.mean_degree, "target mean degree");
  synth_cmd->add_option("--sd-degree", synth_cfg.sd_degree, "degree spread");
  synth_cmd->add_option("--autoregression", synth_cfg.autoregression, "latent AR(1) weight");
  synth_cmd->add_option("--missing-rate", synth_cfg.missing_rate, "fraction of blanked cells");

  // build-graph
  auto* graph_cmd = app.add_subcommand("build-graph", "build the combined social graph");
  std::string data_dir;
  double mix = 0.5;
  graph_cmd->add_option("--data", data_dir, "dataset directory")->required();
  graph_cmd->add_option("--mix", mix, "call/sms mixing weight in [0,1]");
  add_common(graph_cmd, flags);

  // gedd
  auto* gedd_cmd = app.add_subcommand("gedd", "re-partition the graph into fixed-size inputs");
  std::string graph_path, roster_data_dir;
  int gedd_w = 10;
  gedd_cmd->add_option("--data", roster_data_dir, "dataset directory")->required();
  gedd_cmd->add_option("--graph", graph_path, "edge-list CSV (default: rebuild from logs)");
  gedd_cmd->add_option("--w", gedd_w, "subgraph size")->required();
  gedd_cmd->add_option("--mix", mix, "call/sms mixing weight in [0,1]");
  add_common(gedd_cmd, flags);

  // centrality
  auto* cent_cmd = app.add_subcommand("centrality", "per-user centrality table");
  cent_cmd->add_option("--data", data_dir, "dataset directory")->required();
  cent_cmd->add_option("--mix", mix, "call/sms mixing weight in [0,1]");
  add_common(cent_cmd, flags);

  // preprocess
  auto* prep_cmd = app.add_subcommand("preprocess", "impute and clean the feature panel");
  prep_cmd->add_option("--data", data_dir, "dataset directory")->required();
  add_common(prep_cmd, flags);

  // train / sweep
  std::string target, model, vary, values;
  int graph_size = 0, seq_len = 0, trials = 0;
  double train_mix = -1.0;
  auto add_train_flags = [&](CLI::App* cmd) {
    cmd->add_option("--data", data_dir, "dataset directory")->required();
    cmd->add_option("--target", target, "stress|happiness");
    cmd->add_option("--model", model, "gcn-lstm|conv-lstm|lstm (default: all)");
    cmd->add_option("--graph-size", graph_size, "GEDD subgraph size w");
    cmd->add_option("--seq-len", seq_len, "LSTM window length L");
    cmd->add_option("--trials", trials, "trials per configuration");
    cmd->add_option("--mix", train_mix, "call/sms mixing weight in [0,1]");
    add_common(cmd, flags);
  };
  auto* train_cmd = app.add_subcommand("train", "train and evaluate the models");
  add_train_flags(train_cmd);
  auto* sweep_cmd = app.add_subcommand("sweep", "sweep graph size or sequence length");
  add_train_flags(sweep_cmd);
  sweep_cmd->add_option("--vary", vary, "graph-size|seq-len")->required();
  sweep_cmd->add_option("--values", values, "comma-separated sweep values")->required();

  // analyze
  auto* analyze_cmd = app.add_subcommand("analyze", "centrality/outcome GEE analysis");
  std::string report_path;
  analyze_cmd->add_option("--data", data_dir, "dataset directory")->required();
  analyze_cmd->add_option("--report", report_path, "report.json from a train run")->required();
  analyze_cmd->add_option("--model", model, "model whose RMSE to analyze");
  analyze_cmd->add_option("--mix", mix, "call/sms mixing weight in [0,1]");
  add_common(analyze_cmd, flags);

  try {
    app.parse(argc, argv);

    if (synth_cmd->parsed()) {
      if (flags.seed_set) synth_cfg.seed = flags.seed;
      auto data = synth::generate(synth_cfg);
      ArtifactSet artifacts(flags.out);
      artifacts.note("seed", std::to_string(synth_cfg.seed));
      artifacts.add("calls.csv", calls_csv(data.calls));
      artifacts.add("sms.csv", sms_csv(data.sms));
      {
        std::ostringstream fs, ls, gs;
        write_feature_csv(data.panel, fs);
        write_label_csv(data.panel, ls);
        write_edge_list_csv(data.graph, gs);
        artifacts.add("features.csv", fs.str());
        artifacts.add("labels.csv", ls.str());
        artifacts.add("graph_true.csv", gs.str());
      }
      artifacts.add("traits.csv", traits_csv(data.panel.users, data.traits));
      artifacts.flush("synth");
      return 0;
    }
    if (graph_cmd->parsed()) {
      ArtifactSet artifacts(flags.out);
      DataDir d = load_data_dir(data_dir, &artifacts);
      SocialGraph g = build_combined_graph(d, mix);
      std::ostringstream gs;
      write_edge_list_csv(g, gs);
      artifacts.add("graph.csv", gs.str());
      artifacts.flush("build-graph");
      return 0;
    }
    if (gedd_cmd->parsed()) {
      ArtifactSet artifacts(flags.out);
      DataDir d = load_data_dir(roster_data_dir, &artifacts);
      SocialGraph g;
      if (graph_path.empty()) {
        g = build_combined_graph(d, mix);
      } else {
        std::string text = runio::read_file(graph_path);
        artifacts.note_input("graph", text);
        std::istringstream gs(text);
        g = symmetrize(read_edge_list_csv(gs, d.raw_panel.users,
                                          panel_interval(d.raw_panel)));
      }
      auto result = gedd(g, gedd_w);
      artifacts.add("subgraphs.json", gedd_json(result, g, gedd_w));
      artifacts.flush("gedd");
      return 0;
    }
    if (cent_cmd->parsed()) {
      ArtifactSet artifacts(flags.out);
      DataDir d = load_data_dir(data_dir, &artifacts);
      CentralityTable t = compute_centralities(build_combined_graph(d, mix));
      std::ostringstream cs;
      write_centrality_csv(t, cs);
      artifacts.add("centrality.csv", cs.str());
      artifacts.flush("centrality");
      return 0;
    }
    if (prep_cmd->parsed()) {
      ArtifactSet artifacts(flags.out);
      DataDir d = load_data_dir(data_dir, &artifacts);
      FeaturePanel clean = preprocess_panel(d.raw_panel);
      std::ostringstream fs, ls;
      write_feature_csv(clean, fs);
      write_label_csv(clean, ls);
      artifacts.add("features_clean.csv", fs.str());
      artifacts.add("labels_clean.csv", ls.str());
      artifacts.flush("preprocess");
      return 0;
    }
    if (train_cmd->parsed()) {
      return run_train_like(flags, data_dir, target, model, graph_size, seq_len,
                            trials, train_mix, "", "", "train");
    }
    if (sweep_cmd->parsed()) {
      return run_train_like(flags, data_dir, target, model, graph_size, seq_len,
                            trials, train_mix, vary, values, "sweep");
    }
    if (analyze_cmd->parsed()) {
      return run_analyze(flags, data_dir, report_path, model, mix);
    }
    throw Error("no subcommand dispatched");
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    nlohmann::ordered_json err;
    err["error"] = e.what();
    std::cerr << err.dump() << "\n";
    return 1;
  }
}
