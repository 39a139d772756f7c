#include "emonet/ingest.hpp"

#include <istream>
#include <ostream>
#include <unordered_map>

namespace emonet {

namespace {

std::unordered_map<std::string, int> index_roster(
    const std::vector<std::string>& roster) {
  std::unordered_map<std::string, int> idx;
  for (std::size_t i = 0; i < roster.size(); ++i) {
    idx.emplace(roster[i], static_cast<int>(i));
  }
  return idx;
}

std::string expect_header(std::istream& in, const std::string& want) {
  std::string header;
  if (!std::getline(in, header)) throw Error("empty input, expected header '" + want + "'");
  if (!header.empty() && header.back() == '\r') header.pop_back();
  if (header != want) throw Error("bad header '" + header + "', expected '" + want + "'");
  return header;
}

}  // namespace

std::vector<CallRecord> parse_call_log(std::istream& in) {
  expect_header(in, "timestamp,caller,callee,duration_s");
  std::vector<CallRecord> out;
  std::string line;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    const std::string where = "call log line " + std::to_string(lineno);
    if (fields.size() != 4) throw Error(where + ": expected 4 fields");
    CallRecord r;
    r.timestamp = parse_iso8601(fields[0]);
    r.caller = fields[1];
    r.callee = fields[2];
    r.duration_s = parse_double(fields[3], where);
    if (r.duration_s < 0.0) throw Error(where + ": negative duration");
    if (r.caller == r.callee) throw Error(where + ": caller equals callee");
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<SmsRecord> parse_sms_log(std::istream& in) {
  expect_header(in, "timestamp,sender,receiver,class");
  std::vector<SmsRecord> out;
  std::string line;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    const std::string where = "sms log line " + std::to_string(lineno);
    if (fields.size() != 4) throw Error(where + ": expected 4 fields");
    SmsRecord r;
    r.timestamp = parse_iso8601(fields[0]);
    r.sender = fields[1];
    r.receiver = fields[2];
    long cls = parse_long(fields[3], where);
    if (cls != 0 && cls != 1) throw Error(where + ": class must be 0 or 1");
    r.sms_class = static_cast<int>(cls);
    if (r.sender == r.receiver) throw Error(where + ": sender equals receiver");
    out.push_back(std::move(r));
  }
  return out;
}

GraphBuild build_call_graph(const std::vector<CallRecord>& records,
                            const std::vector<std::string>& roster,
                            Interval interval) {
  if (roster.empty()) throw Error("build_call_graph: empty roster");
  if (interval.start >= interval.end) throw Error("build_call_graph: bad interval");
  GraphBuild out;
  out.graph = SocialGraph::empty(roster, interval);
  auto idx = index_roster(roster);
  for (const auto& r : records) {
    auto i = idx.find(r.caller);
    auto j = idx.find(r.callee);
    if (i == idx.end() || j == idx.end()) {
      out.dropped_unknown_user += 1;
      continue;
    }
    if (!interval.contains(r.timestamp)) {
      out.dropped_outside_interval += 1;
      continue;
    }
    out.graph.adjacency(i->second, j->second) += r.duration_s;
  }
  return out;
}

GraphBuild build_sms_graph(const std::vector<SmsRecord>& records,
                           const std::vector<std::string>& roster,
                           Interval interval, double w1, double w2) {
  if (!(w1 > w2 && w2 > 0.0)) {
    throw Error("build_sms_graph: requires w1 > w2 > 0");
  }
  if (roster.empty()) throw Error("build_sms_graph: empty roster");
  if (interval.start >= interval.end) throw Error("build_sms_graph: bad interval");
  GraphBuild out;
  out.graph = SocialGraph::empty(roster, interval);
  auto idx = index_roster(roster);
  for (const auto& r : records) {
    auto i = idx.find(r.sender);
    auto j = idx.find(r.receiver);
    if (i == idx.end() || j == idx.end()) {
      out.dropped_unknown_user += 1;
      continue;
    }
    if (!interval.contains(r.timestamp)) {
      out.dropped_outside_interval += 1;
      continue;
    }
    out.graph.adjacency(i->second, j->second) += (r.sms_class == 1) ? w1 : w2;
  }
  return out;
}

SocialGraph combine_graphs(const SocialGraph& call, const SocialGraph& sms,
                           double mix) {
  if (call.node_ids != sms.node_ids) {
    throw Error("combine_graphs: roster mismatch");
  }
  if (call.interval.start != sms.interval.start ||
      call.interval.end != sms.interval.end) {
    throw Error("combine_graphs: interval mismatch");
  }
  if (mix < 0.0 || mix > 1.0) throw Error("combine_graphs: mix outside [0,1]");
  auto scaled = [](const Matrix& a) {
    double m = a.maxCoeff();
    return m > 0.0 ? Matrix(a / m) : a;
  };
  SocialGraph out = call;
  out.adjacency =
      mix * scaled(call.adjacency) + (1.0 - mix) * scaled(sms.adjacency);
  return out;
}

void write_edge_list_csv(const SocialGraph& g, std::ostream& out) {
  out << "src,dst,weight\n";
  for (int i = 0; i < g.size(); ++i) {
    for (int j = 0; j < g.size(); ++j) {
      if (g.adjacency(i, j) > 0.0) {
        out << g.node_ids[i] << ',' << g.node_ids[j] << ','
            << format_double(g.adjacency(i, j)) << '\n';
      }
    }
  }
}

SocialGraph read_edge_list_csv(std::istream& in,
                               const std::vector<std::string>& roster,
                               Interval interval) {
  expect_header(in, "src,dst,weight");
  SocialGraph g = SocialGraph::empty(roster, interval);
  auto idx = index_roster(roster);
  std::string line;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    const std::string where = "edge list line " + std::to_string(lineno);
    if (fields.size() != 3) throw Error(where + ": expected 3 fields");
    auto i = idx.find(fields[0]);
    auto j = idx.find(fields[1]);
    if (i == idx.end() || j == idx.end()) throw Error(where + ": unknown user");
    g.adjacency(i->second, j->second) = parse_double(fields[2], where);
  }
  return g;
}

}  // namespace emonet
