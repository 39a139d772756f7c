#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "emonet/graph.hpp"

namespace emonet {

struct CallRecord {
  Instant timestamp;
  std::string caller;
  std::string callee;
  double duration_s;  // >= 0
};

struct SmsRecord {
  Instant timestamp;
  std::string sender;
  std::string receiver;
  int sms_class;  // 0 or 1
};

// CSV header `timestamp,caller,callee,duration_s`. Malformed rows (including
// negative durations and caller == callee) raise an Error naming the line.
std::vector<CallRecord> parse_call_log(std::istream& in);

// CSV header `timestamp,sender,receiver,class`.
std::vector<SmsRecord> parse_sms_log(std::istream& in);

struct GraphBuild {
  SocialGraph graph;
  int dropped_unknown_user = 0;
  int dropped_outside_interval = 0;
};

GraphBuild build_call_graph(const std::vector<CallRecord>& records,
                            const std::vector<std::string>& roster,
                            Interval interval);

// w1 weights class-1 (body) messages, w2 class-0; requires w1 > w2 > 0.
GraphBuild build_sms_graph(const std::vector<SmsRecord>& records,
                           const std::vector<std::string>& roster,
                           Interval interval, double w1, double w2);

// Scales each input by its own max entry (skipping all-zero graphs), then
// returns mix*call + (1-mix)*sms. Rosters and intervals must match.
SocialGraph combine_graphs(const SocialGraph& call, const SocialGraph& sms,
                           double mix);

void write_edge_list_csv(const SocialGraph& g, std::ostream& out);
SocialGraph read_edge_list_csv(std::istream& in,
                               const std::vector<std::string>& roster,
                               Interval interval);

}  // namespace emonet
