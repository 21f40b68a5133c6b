#pragma once

// Scenario files, patches, runs, sweeps and result artifacts. Formats are
// documented in README.md. Needs the vendored json.hpp on the include path.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sdeq/beckmann.hpp"
#include "sdeq/costs.hpp"
#include "sdeq/demand.hpp"
#include "sdeq/error.hpp"
#include "sdeq/network.hpp"
#include "sdeq/stable_dynamics.hpp"
#include "sdeq/three_stage.hpp"

namespace sdeq {

using Json = nlohmann::ordered_json;

enum class ModelKind { beckmann, sd, sd_split, sd_mixed, three_stage, smooth_three_stage };

inline const std::vector<std::string>& model_names() {
  static const std::vector<std::string> names{"beckmann", "sd", "sd-split", "sd-mixed", "3s", "s3s"};
  return names;
}

inline const char* to_string(ModelKind m) { return model_names()[static_cast<std::size_t>(m)].c_str(); }

inline ModelKind parse_model(const std::string& s) {
  const auto& names = model_names();
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == s) return static_cast<ModelKind>(i);
  std::string valid;
  for (const auto& n : names) valid += (valid.empty() ? "" : ", ") + n;
  throw InputError("unknown model '" + s + "'; valid models: " + valid);
}

struct ScenarioEdge {
  EdgeRecord rec;
  bool cap_from_lanes = false;  // cap = lanes * q_max
  bool enabled = true;

  bool operator==(const ScenarioEdge&) const = default;
};

struct ZoneRecord {
  std::string id;
  std::string node;
  std::string dest_node;  // equals node unless the file says otherwise
  double L = 0.0;
  double W = 0.0;

  bool operator==(const ZoneRecord&) const = default;
};

struct DemandRecord {
  std::string origin;
  std::string destination;
  double volume = 0.0;
  ModeScope scope = ModeScope::car;

  bool operator==(const DemandRecord&) const = default;
};

struct ScenarioParameters {
  double beta = 1.0;
  double temperature = 0.0;
  std::optional<double> eta;
  std::optional<CostFamily> family;
  std::optional<CostFamily> transit_family;
  std::optional<double> q_max;
  std::optional<double> observed_mean_cost;
  bool freeze_transit = false;

  bool operator==(const ScenarioParameters&) const = default;
};

struct SolverSettings {
  std::size_t max_iter = 400000;
  std::size_t epoch_length = 400;
  double feas_tol = 1e-8;
  double comp_tol = 1e-8;
  double gap_tol = 1e-8;
  std::uint64_t seed = 1;
  double box_factor = 100.0;
  double jam_factor = 0.0;
  bool stochastic = false;
  bool refine = true;
  StepPolicy policy = StepPolicy::restarted;
  std::string beckmann_method = "primal";
  double tol_gap = 1e-6;
  double smooth_tol = 1e-9;
  double balance_tol = 1e-12;
  std::size_t hop_bound = 0;

  bool operator==(const SolverSettings&) const = default;
};

enum class PatchTarget { edge, zone, global };

struct Patch {
  PatchTarget target = PatchTarget::edge;
  std::string id;
  std::string field;
  double value = 0.0;

  bool operator==(const Patch&) const = default;
};

struct Scenario {
  std::filesystem::path network_file;
  std::filesystem::path zones_file;
  std::filesystem::path demands_file;
  std::vector<ScenarioEdge> edges;
  std::vector<ZoneRecord> zones;
  std::vector<DemandRecord> demands;
  ModelKind model = ModelKind::sd;
  ScenarioParameters params;
  SolverSettings solver;
  std::vector<std::pair<std::int64_t, double>> pins;
  std::vector<Patch> patches;  // already applied to the fields above

  bool operator==(const Scenario&) const = default;
};

// ---------------------------------------------------------------------------
// Text helpers

namespace detail {

[[noreturn]] inline void parse_fail(const std::string& where, std::size_t line, std::size_t col, const std::string& msg) {
  throw ParseError(where + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + msg);
}

// Shortest text that reads back to the same double.
inline std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

inline std::optional<double> read_number(std::string_view s) {
  if (s == "inf") return kInf;
  if (s == "-inf") return -kInf;
  double x = 0.0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), x);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return x;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string() + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CsvField {
  std::string text;
  std::size_t col = 1;
};

struct CsvRow {
  std::size_t line = 0;
  std::vector<CsvField> fields;
};

struct CsvTable {
  std::string path;
  std::vector<std::string> header;
  std::vector<CsvRow> rows;

  [[noreturn]] void fail(const CsvRow& r, std::size_t i, const std::string& msg) const {
    parse_fail(path, r.line, i < r.fields.size() ? r.fields[i].col : 1, msg);
  }

  bool has(std::size_t i) const { return i < header.size(); }

  double number(const CsvRow& r, std::size_t i) const {
    const auto x = read_number(r.fields[i].text);
    if (!x || !std::isfinite(*x)) fail(r, i, "column '" + header[i] + "': expected a number, found '" + r.fields[i].text + "'");
    return *x;
  }

  std::int64_t integer(const CsvRow& r, std::size_t i) const {
    const std::string& s = r.fields[i].text;
    std::int64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty())
      fail(r, i, "column '" + header[i] + "': expected an integer, found '" + s + "'");
    return v;
  }

  const std::string& text(const CsvRow& r, std::size_t i) const {
    if (r.fields[i].text.empty()) fail(r, i, "column '" + header[i] + "' is empty");
    return r.fields[i].text;
  }
};

// Comma-separated, no quoting; blank lines and lines starting with '#' are
// skipped. The header must list `required` in order, then any prefix of
// `optional`.
inline CsvTable read_csv(const std::filesystem::path& path, const std::vector<std::string>& required,
                         const std::vector<std::string>& optional) {
  const std::string text = read_file(path);
  CsvTable t;
  t.path = path.string();
  std::size_t pos = 0;
  std::size_t ln = 0;
  bool have_header = false;
  if (text.compare(0, 3, "\xEF\xBB\xBF") == 0) pos = 3;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++ln;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string_view::npos || line[first] == '#') continue;
    CsvRow row;
    row.line = ln;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = line.find(',', start);
      const std::size_t stop = comma == std::string_view::npos ? line.size() : comma;
      std::string_view cell = line.substr(start, stop - start);
      std::size_t lead = 0;
      while (lead < cell.size() && (cell[lead] == ' ' || cell[lead] == '\t')) ++lead;
      cell.remove_prefix(lead);
      while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t')) cell.remove_suffix(1);
      row.fields.push_back({std::string(cell), start + lead + 1});
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (!have_header) {
      const std::size_t n = row.fields.size();
      if (n < required.size() || n > required.size() + optional.size()) {
        std::string cols;
        for (const auto& c : required) cols += (cols.empty() ? "" : ",") + c;
        for (const auto& c : optional) cols += "[," + c + "]";
        parse_fail(t.path, ln, 1, "header must be " + cols);
      }
      for (std::size_t i = 0; i < n; ++i) {
        const std::string& want = i < required.size() ? required[i] : optional[i - required.size()];
        if (row.fields[i].text != want)
          parse_fail(t.path, ln, row.fields[i].col, "expected column '" + want + "', found '" + row.fields[i].text + "'");
        t.header.push_back(want);
      }
      have_header = true;
      continue;
    }
    if (row.fields.size() != t.header.size())
      parse_fail(t.path, ln, row.fields.size() > t.header.size() ? row.fields[t.header.size()].col : line.size() + 1,
                 "expected " + std::to_string(t.header.size()) + " fields, found " + std::to_string(row.fields.size()));
    t.rows.push_back(std::move(row));
  }
  if (!have_header) parse_fail(t.path, 1, 1, "missing header row");
  return t;
}

inline void line_col(const std::string& text, std::size_t byte, std::size_t& line, std::size_t& col) {
  line = 1;
  col = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
}

inline Json parse_json_text(const std::string& text, const std::string& where) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1, col = 1;
    line_col(text, e.byte > 0 ? e.byte - 1 : 0, line, col);
    std::string msg = e.what();
    const auto p = msg.find("syntax error");
    parse_fail(where, line, col, p == std::string::npos ? msg : msg.substr(p));
  }
}

// Atomic replace: write a sibling temp file, then rename over the target.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(tmp.string() + ": cannot open for writing");
    out << content;
    out.flush();
    if (!out) throw std::runtime_error(tmp.string() + ": write failed");
  }
  std::filesystem::rename(tmp, path);
}

// Strict JSON object reader: every key must be known.
class JsonObject {
 public:
  JsonObject(const Json& j, std::string where, std::vector<std::string> keys) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw InputError(where_ + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
      if (std::find(keys.begin(), keys.end(), it.key()) == keys.end()) {
        std::string valid;
        for (const auto& k : keys) valid += (valid.empty() ? "" : ", ") + k;
        throw InputError(where_ + ": unknown key '" + it.key() + "'; valid keys: " + valid);
      }
  }

  bool has(const std::string& k) const { return j_.contains(k) && !j_.at(k).is_null(); }
  const Json& at(const std::string& k) const { return j_.at(k); }
  std::string path(const std::string& k) const { return where_ + "." + k; }

  double number(const std::string& k) const {
    const Json& v = j_.at(k);
    if (!v.is_number()) throw InputError(path(k) + ": expected a number");
    return v.get<double>();
  }
  double number_or(const std::string& k, double dflt) const { return has(k) ? number(k) : dflt; }

  std::uint64_t count(const std::string& k) const {
    const Json& v = j_.at(k);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
      throw InputError(path(k) + ": expected a nonnegative integer");
    return v.get<std::uint64_t>();
  }
  std::uint64_t count_or(const std::string& k, std::uint64_t dflt) const { return has(k) ? count(k) : dflt; }

  bool flag_or(const std::string& k, bool dflt) const {
    if (!has(k)) return dflt;
    if (!j_.at(k).is_boolean()) throw InputError(path(k) + ": expected true or false");
    return j_.at(k).get<bool>();
  }

  std::string text(const std::string& k) const {
    const Json& v = j_.at(k);
    if (!v.is_string()) throw InputError(path(k) + ": expected a string");
    return v.get<std::string>();
  }
  std::string text_or(const std::string& k, const std::string& dflt) const { return has(k) ? text(k) : dflt; }

 private:
  const Json& j_;
  std::string where_;
};

inline CostFamily family_from_json(const Json& j, const std::string& where) {
  JsonObject o(j, where, {"kind", "mu", "gamma"});
  if (!o.has("kind")) throw InputError(where + ": missing 'kind'");
  const std::string kind = o.text("kind");
  if (kind == "hard_cap") return CostFamily::hard_cap();
  if (!o.has("mu")) throw InputError(where + ": missing 'mu'");
  const double mu = o.number("mu");
  if (kind == "log_barrier") return CostFamily::log_barrier(mu);
  if (kind == "hyperbolic") return CostFamily::hyperbolic(mu);
  if (kind == "bpr") {
    if (!o.has("gamma")) throw InputError(where + ": missing 'gamma'");
    return CostFamily::bpr(o.number("gamma"), mu);
  }
  throw InputError(where + ": unknown family '" + kind + "'; valid: log_barrier, hyperbolic, bpr, hard_cap");
}

inline Json family_to_json(const CostFamily& f) {
  Json j;
  j["kind"] = family_name(f.kind);
  if (f.kind != FamilyKind::hard_cap) j["mu"] = f.mu;
  if (f.kind == FamilyKind::bpr) j["gamma"] = f.gamma;
  return j;
}

inline std::string id_text(const Json& v, const std::string& where) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  throw InputError(where + ": id must be a string or an integer");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Input files

// edge_id,tail,head,mode,t_free,cap[,length,lanes]; an empty cap cell takes
// lanes * q_max.
inline std::vector<ScenarioEdge> read_edges_csv(const std::filesystem::path& path) {
  const auto t = detail::read_csv(path, {"edge_id", "tail", "head", "mode", "t_free", "cap"}, {"length", "lanes"});
  std::vector<ScenarioEdge> out;
  std::map<std::int64_t, std::size_t> seen;
  for (const auto& r : t.rows) {
    ScenarioEdge e;
    e.rec.id = t.integer(r, 0);
    if (!seen.emplace(e.rec.id, r.line).second)
      t.fail(r, 0, "duplicate edge id " + std::to_string(e.rec.id) + " (first on line " +
                       std::to_string(seen[e.rec.id]) + ")");
    e.rec.tail = t.text(r, 1);
    e.rec.head = t.text(r, 2);
    const std::string& mode = t.text(r, 3);
    if (mode == "car") e.rec.mode = Mode::car;
    else if (mode == "transit") e.rec.mode = Mode::transit;
    else t.fail(r, 3, "mode must be 'car' or 'transit', found '" + mode + "'");
    e.rec.t_free = t.number(r, 4);
    if (r.fields[5].text.empty()) {
      e.cap_from_lanes = true;
      e.rec.cap = 0.0;
    } else {
      e.rec.cap = t.number(r, 5);
    }
    if (t.has(6) && !r.fields[6].text.empty()) e.rec.length = t.number(r, 6);
    if (t.has(7) && !r.fields[7].text.empty()) {
      const std::int64_t lanes = t.integer(r, 7);
      if (lanes <= 0 || lanes > 1000) t.fail(r, 7, "lanes must be a positive integer");
      e.rec.lanes = static_cast<int>(lanes);
    }
    if (e.cap_from_lanes && !e.rec.lanes) t.fail(r, 5, "empty cap needs a lanes value");
    out.push_back(std::move(e));
  }
  if (out.empty()) detail::parse_fail(t.path, 1, 1, "no edges");
  return out;
}

// zone_id,node_id,L,W[,dest_node]
inline std::vector<ZoneRecord> read_zones_csv(const std::filesystem::path& path) {
  const auto t = detail::read_csv(path, {"zone_id", "node_id", "L", "W"}, {"dest_node"});
  std::vector<ZoneRecord> out;
  std::map<std::string, std::size_t> seen;
  double sl = 0.0;
  double sw = 0.0;
  for (const auto& r : t.rows) {
    ZoneRecord z;
    z.id = t.text(r, 0);
    if (!seen.emplace(z.id, r.line).second) t.fail(r, 0, "duplicate zone id '" + z.id + "'");
    z.node = t.text(r, 1);
    z.L = t.number(r, 2);
    z.W = t.number(r, 3);
    if (z.L < 0.0) t.fail(r, 2, "L must be nonnegative");
    if (z.W < 0.0) t.fail(r, 3, "W must be nonnegative");
    z.dest_node = t.has(4) && !r.fields[4].text.empty() ? r.fields[4].text : z.node;
    sl += z.L;
    sw += z.W;
    out.push_back(std::move(z));
  }
  if (out.empty()) detail::parse_fail(t.path, 1, 1, "no zones");
  if (std::abs(sl - sw) > 1e-9 * std::max(sl, sw))
    throw InputError(t.path + ": zone departures sum to " + detail::format_number(sl) + " but arrivals sum to " +
                     detail::format_number(sw));
  return out;
}

// origin,destination,volume[,scope]
inline std::vector<DemandRecord> read_demands_csv(const std::filesystem::path& path) {
  const auto t = detail::read_csv(path, {"origin", "destination", "volume"}, {"scope"});
  std::vector<DemandRecord> out;
  for (const auto& r : t.rows) {
    DemandRecord d;
    d.origin = t.text(r, 0);
    d.destination = t.text(r, 1);
    d.volume = t.number(r, 2);
    if (d.volume < 0.0) t.fail(r, 2, "volume must be nonnegative");
    if (t.has(3) && !r.fields[3].text.empty()) {
      const std::string& s = r.fields[3].text;
      if (s == "car") d.scope = ModeScope::car;
      else if (s == "transit") d.scope = ModeScope::transit;
      else if (s == "either") d.scope = ModeScope::either;
      else t.fail(r, 3, "scope must be car, transit or either, found '" + s + "'");
    }
    out.push_back(std::move(d));
  }
  return out;
}

inline Patch patch_from_json(const Json& j, const std::string& where) {
  detail::JsonObject o(j, where, {"target", "id", "field", "value"});
  for (const char* k : {"target", "field", "value"})
    if (!o.has(k)) throw InputError(where + ": missing '" + k + "'");
  Patch p;
  const std::string target = o.text("target");
  if (target == "edge") p.target = PatchTarget::edge;
  else if (target == "zone") p.target = PatchTarget::zone;
  else if (target == "global") p.target = PatchTarget::global;
  else throw InputError(where + ".target: unknown target '" + target + "'; valid: edge, zone, global");
  if (p.target != PatchTarget::global) {
    if (!o.has("id")) throw InputError(where + ": missing 'id'");
    p.id = detail::id_text(o.at("id"), o.path("id"));
  }
  p.field = o.text("field");
  const Json& v = o.at("value");
  if (v.is_boolean()) p.value = v.get<bool>() ? 1.0 : 0.0;
  else if (v.is_number()) p.value = v.get<double>();
  else throw InputError(o.path("value") + ": expected a number or a boolean");
  return p;
}

inline Json patch_to_json(const Patch& p) {
  Json j;
  j["target"] = p.target == PatchTarget::edge ? "edge" : p.target == PatchTarget::zone ? "zone" : "global";
  if (p.target != PatchTarget::global) j["id"] = p.id;
  j["field"] = p.field;
  j["value"] = p.value;
  return j;
}

inline std::vector<Patch> patches_from_json(const Json& j, const std::string& where) {
  if (!j.is_array()) throw InputError(where + ": expected an array of patches");
  std::vector<Patch> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(patch_from_json(j[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

// Deep copy with overrides. Edge fields: t_free, cap, lanes, length, enabled.
// Zone fields: L, W (marginals are renormalized when the model is built).
// Global fields: beta.
inline Scenario apply_patches(const Scenario& base, const std::vector<Patch>& patches) {
  Scenario s = base;
  for (const Patch& p : patches) {
    if (!std::isfinite(p.value)) throw InputError("patch value must be finite");
    if (p.target == PatchTarget::edge) {
      std::int64_t id = 0;
      auto r = std::from_chars(p.id.data(), p.id.data() + p.id.size(), id);
      auto it = r.ec == std::errc() && r.ptr == p.id.data() + p.id.size()
                    ? std::find_if(s.edges.begin(), s.edges.end(), [&](const ScenarioEdge& e) { return e.rec.id == id; })
                    : s.edges.end();
      if (it == s.edges.end()) throw InputError("patch: unknown edge id '" + p.id + "'");
      if (p.field == "t_free") {
        it->rec.t_free = p.value;
      } else if (p.field == "cap") {
        it->rec.cap = p.value;
        it->cap_from_lanes = false;
      } else if (p.field == "lanes") {
        if (p.value != std::floor(p.value) || p.value < 1.0 || p.value > 1000.0)
          throw InputError("patch: lanes must be a positive integer");
        it->rec.lanes = static_cast<int>(p.value);
      } else if (p.field == "length") {
        it->rec.length = p.value;
      } else if (p.field == "enabled") {
        it->enabled = p.value != 0.0;
      } else {
        throw InputError("patch: unknown edge field '" + p.field + "'; valid: t_free, cap, lanes, length, enabled");
      }
    } else if (p.target == PatchTarget::zone) {
      auto it = std::find_if(s.zones.begin(), s.zones.end(), [&](const ZoneRecord& z) { return z.id == p.id; });
      if (it == s.zones.end()) throw InputError("patch: unknown zone id '" + p.id + "'");
      if (p.value < 0.0) throw InputError("patch: zone marginals must be nonnegative");
      if (p.field == "L") it->L = p.value;
      else if (p.field == "W") it->W = p.value;
      else throw InputError("patch: unknown zone field '" + p.field + "'; valid: L, W");
    } else {
      if (p.field == "beta") {
        if (!(p.value > 0.0)) throw InputError("patch: beta must be positive");
        s.params.beta = p.value;
      } else {
        throw InputError("patch: unknown global field '" + p.field + "'; valid: beta");
      }
    }
    s.patches.push_back(p);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Building the model

inline std::vector<std::string> scenario_nodes(const Scenario& s) {
  std::vector<const ScenarioEdge*> order;
  for (const auto& e : s.edges) order.push_back(&e);
  std::sort(order.begin(), order.end(), [](auto a, auto b) { return a->rec.id < b->rec.id; });
  std::vector<std::string> nodes;
  std::map<std::string, bool> seen;
  for (auto e : order)
    for (const auto* label : {&e->rec.tail, &e->rec.head})
      if (seen.emplace(*label, true).second) nodes.push_back(*label);
  return nodes;
}

// Enabled edges with capacities resolved; every node of the file is kept.
inline Network scenario_network(const Scenario& s) {
  std::vector<EdgeRecord> recs;
  for (const auto& e : s.edges) {
    if (!e.enabled) continue;
    EdgeRecord r = e.rec;
    if (e.cap_from_lanes) {
      if (!s.params.q_max) throw InputError(describe_edge(r) + ": cap from lanes needs parameters.q_max");
      r.cap = estimate_capacity(1.0, static_cast<double>(*r.lanes), *s.params.q_max);
    }
    recs.push_back(std::move(r));
  }
  const auto nodes = scenario_nodes(s);
  return build_network(std::move(recs), nodes);
}

inline Zones scenario_zones(const Scenario& s, const Network& net) {
  if (s.zones.empty()) throw InputError("model " + std::string(to_string(s.model)) + " needs a zones file");
  Zones z;
  double sl = 0.0;
  double sw = 0.0;
  for (const auto& r : s.zones) {
    sl += r.L;
    sw += r.W;
  }
  if (!(sl > 0.0) || !(sw > 0.0)) throw InputError("zone marginals must have positive totals");
  for (const auto& r : s.zones) {
    const auto o = net.find_node(r.node);
    const auto d = net.find_node(r.dest_node);
    if (!o) throw InputError("zone '" + r.id + "' references unknown node '" + r.node + "'");
    if (!d) throw InputError("zone '" + r.id + "' references unknown node '" + r.dest_node + "'");
    z.ids.push_back(r.id);
    z.l.push_back(r.L / sl);
    z.w.push_back(r.W / sw);
    z.origin_nodes.push_back(*o);
    z.dest_nodes.push_back(*d);
  }
  z.total_trips = sl;
  return z;
}

inline std::vector<OdDemand> scenario_demands(const Scenario& s, const Network& net) {
  std::vector<OdDemand> out;
  for (const auto& d : s.demands) {
    const auto o = net.find_node(d.origin);
    const auto t = net.find_node(d.destination);
    if (!o) throw InputError("demand references unknown node '" + d.origin + "'");
    if (!t) throw InputError("demand references unknown node '" + d.destination + "'");
    OdDemand od{{*o, *t, d.scope}, d.volume};
    validate_od(net, od.od);
    out.push_back(od);
  }
  return out;
}

inline std::vector<PinnedFlow> scenario_pins(const Scenario& s, const Network& net) {
  std::vector<PinnedFlow> out;
  for (const auto& [id, flow] : s.pins) {
    const auto e = net.find_edge(id);
    if (!e) throw InputError("pinned edge " + std::to_string(id) + " is not in the network");
    if (!(flow >= 0.0) || !std::isfinite(flow)) throw InputError("pinned flow on edge " + std::to_string(id) + " must be nonnegative");
    out.push_back({*e, flow});
  }
  return out;
}

// Model-specific requirements, checked before any solve.
inline void validate_scenario(const Scenario& s) {
  const Network net = scenario_network(s);
  const auto& prm = s.params;
  const bool ts = s.model == ModelKind::three_stage || s.model == ModelKind::smooth_three_stage;
  if (ts) {
    scenario_zones(s, net);
    if (!(prm.beta > 0.0)) throw InputError("parameters.beta must be positive");
  } else {
    if (s.demands.empty()) throw InputError("model " + std::string(to_string(s.model)) + " needs a demands file");
    scenario_demands(s, net);
  }
  if (s.model == ModelKind::smooth_three_stage && !(prm.temperature > 0.0))
    throw InputError("model s3s needs parameters.temperature > 0");
  if (s.model == ModelKind::beckmann) {
    if (!prm.family) throw InputError("model beckmann needs parameters.family");
    if (!s.pins.empty()) throw InputError("pins apply to the sd and three-stage models only");
    if (s.solver.beckmann_method != "primal" && s.solver.beckmann_method != "dual")
      throw InputError("solver.beckmann_method must be 'primal' or 'dual'");
  }
  if (s.model == ModelKind::sd_mixed) {
    if (!prm.transit_family) throw InputError("model sd-mixed needs parameters.transit_family");
    if (prm.transit_family->kind == FamilyKind::hard_cap)
      throw InputError("parameters.transit_family must be smooth for sd-mixed");
  }
  if (prm.eta && !(*prm.eta > 0.0)) throw InputError("parameters.eta must be positive");
  if (s.solver.stochastic && s.model != ModelKind::sd) throw InputError("solver.stochastic applies to model sd only");
  scenario_pins(s, net);
}

// Config JSON; file references are relative to the config's directory.
inline Scenario load_scenario(const std::filesystem::path& config_path) {
  const std::string where = config_path.string();
  const Json j = detail::parse_json_text(detail::read_file(config_path), where);
  detail::JsonObject o(j, where, {"network", "zones", "demands", "model", "parameters", "solver", "pins", "patches"});
  if (!o.has("network")) throw InputError(where + ": missing 'network'");
  if (!o.has("model")) throw InputError(where + ": missing 'model'");
  const auto dir = config_path.parent_path();
  Scenario s;
  s.model = parse_model(o.text("model"));
  s.network_file = dir / o.text("network");
  s.edges = read_edges_csv(s.network_file);
  if (o.has("zones")) {
    s.zones_file = dir / o.text("zones");
    s.zones = read_zones_csv(s.zones_file);
  }
  if (o.has("demands")) {
    s.demands_file = dir / o.text("demands");
    s.demands = read_demands_csv(s.demands_file);
  }
  if (o.has("parameters")) {
    detail::JsonObject p(o.at("parameters"), o.path("parameters"),
                         {"beta", "temperature", "eta", "family", "transit_family", "q_max", "observed_mean_cost",
                          "freeze_transit"});
    auto& prm = s.params;
    prm.beta = p.number_or("beta", prm.beta);
    prm.temperature = p.number_or("temperature", prm.temperature);
    if (p.has("eta")) prm.eta = p.number("eta");
    if (p.has("family")) prm.family = detail::family_from_json(p.at("family"), p.path("family"));
    if (p.has("transit_family"))
      prm.transit_family = detail::family_from_json(p.at("transit_family"), p.path("transit_family"));
    if (p.has("q_max")) prm.q_max = p.number("q_max");
    if (p.has("observed_mean_cost")) prm.observed_mean_cost = p.number("observed_mean_cost");
    prm.freeze_transit = p.flag_or("freeze_transit", false);
    if (!(prm.beta > 0.0)) throw InputError(p.path("beta") + ": must be positive");
    if (!(prm.temperature >= 0.0)) throw InputError(p.path("temperature") + ": must be nonnegative");
  }
  if (o.has("solver")) {
    detail::JsonObject p(o.at("solver"), o.path("solver"),
                         {"max_iter", "epoch_length", "feas_tol", "comp_tol", "gap_tol", "seed", "box_factor",
                          "jam_factor", "stochastic", "refine", "policy", "beckmann_method", "tol_gap", "smooth_tol",
                          "balance_tol", "hop_bound"});
    auto& so = s.solver;
    so.max_iter = p.count_or("max_iter", so.max_iter);
    so.epoch_length = p.count_or("epoch_length", so.epoch_length);
    so.feas_tol = p.number_or("feas_tol", so.feas_tol);
    so.comp_tol = p.number_or("comp_tol", so.comp_tol);
    so.gap_tol = p.number_or("gap_tol", so.gap_tol);
    so.seed = p.count_or("seed", so.seed);
    so.box_factor = p.number_or("box_factor", so.box_factor);
    so.jam_factor = p.number_or("jam_factor", so.jam_factor);
    so.stochastic = p.flag_or("stochastic", so.stochastic);
    so.refine = p.flag_or("refine", so.refine);
    const std::string policy = p.text_or("policy", "restarted");
    if (policy == "restarted") so.policy = StepPolicy::restarted;
    else if (policy == "dual_averaging") so.policy = StepPolicy::dual_averaging;
    else throw InputError(p.path("policy") + ": must be 'restarted' or 'dual_averaging'");
    so.beckmann_method = p.text_or("beckmann_method", so.beckmann_method);
    so.tol_gap = p.number_or("tol_gap", so.tol_gap);
    so.smooth_tol = p.number_or("smooth_tol", so.smooth_tol);
    so.balance_tol = p.number_or("balance_tol", so.balance_tol);
    so.hop_bound = p.count_or("hop_bound", so.hop_bound);
    if (so.epoch_length < 2) throw InputError(p.path("epoch_length") + ": must be at least 2");
  }
  if (o.has("pins")) {
    const Json& a = o.at("pins");
    if (!a.is_array()) throw InputError(o.path("pins") + ": expected an array");
    for (std::size_t i = 0; i < a.size(); ++i) {
      const std::string w = o.path("pins") + "[" + std::to_string(i) + "]";
      detail::JsonObject p(a[i], w, {"edge", "flow"});
      if (!p.has("edge") || !p.at("edge").is_number_integer()) throw InputError(w + ".edge: expected an integer edge id");
      if (!p.has("flow")) throw InputError(w + ": missing 'flow'");
      s.pins.emplace_back(p.at("edge").get<std::int64_t>(), p.number("flow"));
    }
  }
  std::vector<Patch> patches;
  if (o.has("patches")) patches = patches_from_json(o.at("patches"), o.path("patches"));
  s = apply_patches(s, patches);
  validate_scenario(s);
  return s;
}

// ---------------------------------------------------------------------------
// Results

struct EdgeResult {
  std::int64_t id = 0;
  std::string tail;
  std::string head;
  Mode mode = Mode::car;
  double t = 0.0;
  double f = 0.0;
  double toll = 0.0;

  bool operator==(const EdgeResult&) const = default;
};

struct ResultArtifact {
  std::string model;
  std::string status;
  double objective = 0.0;
  double total_travel_time = 0.0;  // sum f_e t_e
  std::uint64_t iterations = 0;
  std::map<std::string, double> residuals;
  std::vector<EdgeResult> edges;
  std::vector<std::string> zone_ids;  // three-stage models
  std::vector<double> lambda_l;
  std::vector<double> lambda_w;
  std::vector<std::vector<double>> trips;  // vehicle trips, origin zone by destination zone

  bool operator==(const ResultArtifact&) const = default;

  double total_toll() const {
    double s = 0.0;
    for (const auto& e : edges) s += e.f * e.toll;
    return s;
  }
};

namespace detail {

inline Json number_json(double x) { return std::isfinite(x) ? Json(x) : Json(format_number(x)); }

inline double number_from(const Json& v, const std::string& where) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto x = read_number(v.get<std::string>());
    if (x && !std::isfinite(*x)) return *x;
    if (v.get<std::string>() == "nan") return std::nan("");
  }
  throw InputError(where + ": expected a number");
}

inline std::vector<double> numbers_from(const Json& v, const std::string& where) {
  if (!v.is_array()) throw InputError(where + ": expected an array");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(number_from(v[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

}  // namespace detail

inline Json to_json(const ResultArtifact& a) {
  Json j;
  j["format"] = "sdeq-result";
  j["version"] = 1;
  j["model"] = a.model;
  j["status"] = a.status;
  j["objective"] = detail::number_json(a.objective);
  j["total_travel_time"] = detail::number_json(a.total_travel_time);
  j["iterations"] = a.iterations;
  Json res = Json::object();
  for (const auto& [k, v] : a.residuals) res[k] = detail::number_json(v);
  j["residuals"] = res;
  Json edges = Json::array();
  for (const auto& e : a.edges) {
    Json r;
    r["id"] = e.id;
    r["tail"] = e.tail;
    r["head"] = e.head;
    r["mode"] = to_string(e.mode);
    r["t"] = detail::number_json(e.t);
    r["f"] = detail::number_json(e.f);
    r["toll"] = detail::number_json(e.toll);
    edges.push_back(r);
  }
  j["edges"] = edges;
  if (!a.zone_ids.empty()) {
    j["zones"] = a.zone_ids;
    Json ll = Json::array(), lw = Json::array(), tr = Json::array();
    for (double x : a.lambda_l) ll.push_back(detail::number_json(x));
    for (double x : a.lambda_w) lw.push_back(detail::number_json(x));
    for (const auto& row : a.trips) {
      Json r = Json::array();
      for (double x : row) r.push_back(detail::number_json(x));
      tr.push_back(r);
    }
    j["lambda_l"] = ll;
    j["lambda_w"] = lw;
    j["trips"] = tr;
  }
  return j;
}

inline ResultArtifact result_from_json(const Json& j, const std::string& where) {
  detail::JsonObject o(j, where,
                       {"format", "version", "model", "status", "objective", "total_travel_time", "iterations",
                        "residuals", "edges", "zones", "lambda_l", "lambda_w", "trips"});
  if (!o.has("format") || o.text("format") != "sdeq-result") throw InputError(where + ": not an sdeq result file");
  if (!o.has("version") || o.count("version") != 1) throw InputError(where + ": unsupported result version");
  for (const char* k : {"model", "status", "objective", "total_travel_time", "iterations", "residuals", "edges"})
    if (!o.has(k)) throw InputError(where + ": missing '" + k + "'");
  ResultArtifact a;
  a.model = o.text("model");
  a.status = o.text("status");
  a.objective = detail::number_from(o.at("objective"), o.path("objective"));
  a.total_travel_time = detail::number_from(o.at("total_travel_time"), o.path("total_travel_time"));
  a.iterations = o.count("iterations");
  const Json& res = o.at("residuals");
  if (!res.is_object()) throw InputError(o.path("residuals") + ": expected an object");
  for (auto it = res.begin(); it != res.end(); ++it)
    a.residuals[it.key()] = detail::number_from(it.value(), o.path("residuals") + "." + it.key());
  const Json& edges = o.at("edges");
  if (!edges.is_array()) throw InputError(o.path("edges") + ": expected an array");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const std::string w = o.path("edges") + "[" + std::to_string(i) + "]";
    detail::JsonObject e(edges[i], w, {"id", "tail", "head", "mode", "t", "f", "toll"});
    for (const char* k : {"id", "tail", "head", "mode", "t", "f", "toll"})
      if (!e.has(k)) throw InputError(w + ": missing '" + k + "'");
    EdgeResult r;
    if (!e.at("id").is_number_integer()) throw InputError(w + ".id: expected an integer");
    r.id = e.at("id").get<std::int64_t>();
    r.tail = e.text("tail");
    r.head = e.text("head");
    const std::string mode = e.text("mode");
    if (mode != "car" && mode != "transit") throw InputError(w + ".mode: must be car or transit");
    r.mode = mode == "car" ? Mode::car : Mode::transit;
    r.t = detail::number_from(e.at("t"), w + ".t");
    r.f = detail::number_from(e.at("f"), w + ".f");
    r.toll = detail::number_from(e.at("toll"), w + ".toll");
    a.edges.push_back(std::move(r));
  }
  if (o.has("zones")) {
    const Json& z = o.at("zones");
    if (!z.is_array()) throw InputError(o.path("zones") + ": expected an array");
    for (const auto& v : z) {
      if (!v.is_string()) throw InputError(o.path("zones") + ": zone ids must be strings");
      a.zone_ids.push_back(v.get<std::string>());
    }
    const std::size_t n = a.zone_ids.size();
    for (const char* k : {"lambda_l", "lambda_w", "trips"})
      if (!o.has(k)) throw InputError(where + ": missing '" + k + "'");
    a.lambda_l = detail::numbers_from(o.at("lambda_l"), o.path("lambda_l"));
    a.lambda_w = detail::numbers_from(o.at("lambda_w"), o.path("lambda_w"));
    const Json& tr = o.at("trips");
    if (!tr.is_array() || tr.size() != n) throw InputError(o.path("trips") + ": expected one row per zone");
    for (std::size_t i = 0; i < n; ++i) {
      a.trips.push_back(detail::numbers_from(tr[i], o.path("trips") + "[" + std::to_string(i) + "]"));
      if (a.trips.back().size() != n) throw InputError(o.path("trips") + ": expected one column per zone");
    }
    if (a.lambda_l.size() != n || a.lambda_w.size() != n)
      throw InputError(where + ": potentials need one entry per zone");
  }
  return a;
}

inline std::string result_json_text(const ResultArtifact& a) { return to_json(a).dump(2) + "\n"; }

inline ResultArtifact read_result(const std::filesystem::path& path) {
  const std::string where = path.string();
  return result_from_json(detail::parse_json_text(detail::read_file(path), where), where);
}

inline std::string flows_csv(const ResultArtifact& a) {
  std::string out = "edge_id,tail,head,mode,t,f,toll\n";
  for (const auto& e : a.edges)
    out += std::to_string(e.id) + "," + e.tail + "," + e.head + "," + to_string(e.mode) + "," +
           detail::format_number(e.t) + "," + detail::format_number(e.f) + "," + detail::format_number(e.toll) + "\n";
  return out;
}

inline std::string trips_csv(const ResultArtifact& a) {
  std::string out = "origin_zone,dest_zone,trips\n";
  for (std::size_t i = 0; i < a.zone_ids.size(); ++i)
    for (std::size_t j = 0; j < a.zone_ids.size(); ++j)
      out += a.zone_ids[i] + "," + a.zone_ids[j] + "," + detail::format_number(a.trips[i][j]) + "\n";
  return out;
}

inline std::string tolls_csv(const ResultArtifact& a) {
  std::string out = "edge_id,toll\n";
  for (const auto& e : a.edges) out += std::to_string(e.id) + "," + detail::format_number(e.toll) + "\n";
  return out;
}

// result.json, flows.csv and, for three-stage models, trips.csv.
inline void write_result(const std::filesystem::path& dir, const ResultArtifact& a) {
  detail::write_atomic(dir / "result.json", result_json_text(a));
  detail::write_atomic(dir / "flows.csv", flows_csv(a));
  if (!a.zone_ids.empty()) detail::write_atomic(dir / "trips.csv", trips_csv(a));
}

// ---------------------------------------------------------------------------
// Running

namespace detail {

inline std::vector<double> warm_times(const Network& net, const ResultArtifact& w) {
  bool match = w.edges.size() == net.edge_count();
  for (std::size_t e = 0; match && e < net.edge_count(); ++e) {
    const Edge& ed = net.edge(e);
    const EdgeResult& r = w.edges[e];
    match = r.id == ed.id && r.tail == net.node_label(ed.tail) && r.head == net.node_label(ed.head) && r.mode == ed.mode;
  }
  if (!match) throw InputError("warm start does not match the network topology");
  std::vector<double> t(net.edge_count());
  for (std::size_t e = 0; e < t.size(); ++e) t[e] = w.edges[e].t;
  return t;
}

inline AscentOptions ascent_options(const SolverSettings& so) {
  AscentOptions o;
  o.max_iter = so.max_iter;
  o.epoch_length = so.epoch_length;
  o.policy = so.policy;
  o.feas_tol = so.feas_tol;
  o.comp_tol = so.comp_tol;
  o.gap_tol = so.gap_tol;
  o.refine = so.refine;
  o.seed = so.seed;
  return o;
}

inline void fill_edges(ResultArtifact& a, const Network& net, const std::vector<double>& t, const std::vector<double>& f,
                       const std::vector<double>& toll) {
  a.total_travel_time = 0.0;
  for (std::size_t e = 0; e < net.edge_count(); ++e) {
    const Edge& ed = net.edge(e);
    a.edges.push_back({ed.id, net.node_label(ed.tail), net.node_label(ed.head), ed.mode, t[e], f[e], toll[e]});
    if (f[e] != 0.0) a.total_travel_time += f[e] * t[e];
  }
}

}  // namespace detail

// Dispatches to the scenario's solver. A warm start seeds edge times (and
// the arrival potentials of three-stage models); flows are always rebuilt.
inline ResultArtifact run_scenario(const Scenario& s, const ResultArtifact* warm = nullptr) {
  validate_scenario(s);
  const Network net = scenario_network(s);
  ResultArtifact a;
  a.model = to_string(s.model);
  const auto& prm = s.params;
  const auto& so = s.solver;

  switch (s.model) {
    case ModelKind::beckmann: {
      BeckmannProblem p;
      p.net = net;
      p.demands = scenario_demands(s, net);
      p.families = {*prm.family};
      BeckmannResult r;
      if (so.beckmann_method == "dual") {
        BeckmannDualOptions o;
        o.max_iter = so.max_iter;
        o.box_factor = so.box_factor;
        o.hop_bound = so.hop_bound;
        r = beckmann_dual_solve(p, o);
      } else {
        BeckmannOptions o;
        o.tol_gap = so.tol_gap;
        o.max_iter = so.max_iter;
        r = beckmann_solve(p, o);
      }
      std::vector<double> toll(net.edge_count());
      for (std::size_t e = 0; e < toll.size(); ++e)
        toll[e] = marginal_toll(*prm.family, net.edge(e).t_free, net.edge(e).cap, r.f[e]);
      a.status = to_string(r.status);
      a.objective = r.potential;
      a.iterations = r.iterations;
      a.residuals["relative_gap"] = r.relative_gap;
      a.residuals["wardrop_gap"] = wardrop_gap(net, r.f, r.t, p.demands);
      detail::fill_edges(a, net, r.t, r.f, toll);
      return a;
    }
    case ModelKind::sd:
    case ModelKind::sd_split:
    case ModelKind::sd_mixed: {
      SDProblem p;
      p.net = net;
      p.demands = scenario_demands(s, net);
      p.box_factor = so.box_factor;
      p.jam_factor = so.jam_factor;
      p.pins = scenario_pins(s, net);
      SDOptions o = detail::ascent_options(so);
      if (warm) o.warm_t = detail::warm_times(net, *warm);
      SDSolution r;
      if (s.model == ModelKind::sd) r = so.stochastic ? sd_solve_stochastic(p, o) : sd_solve(p, o);
      else if (s.model == ModelKind::sd_split) r = sd_modesplit_solve(p, o);
      else r = sd_mixed_solve(p, *prm.transit_family, o);
      std::vector<double> toll(net.edge_count());
      for (std::size_t e = 0; e < toll.size(); ++e) toll[e] = std::max(r.t[e] - net.edge(e).t_free, 0.0);
      a.status = to_string(r.status);
      a.objective = r.objective;
      a.iterations = r.iterations;
      a.residuals["feasibility"] = r.feasibility;
      a.residuals["complementarity"] = r.complementarity;
      a.residuals["wardrop_gap"] = r.wardrop_gap;
      if (s.model == ModelKind::sd_mixed) a.residuals["smooth_residual"] = r.smooth_residual;
      detail::fill_edges(a, net, r.t, r.f, toll);
      return a;
    }
    case ModelKind::three_stage:
    case ModelKind::smooth_three_stage: {
      ThreeStageProblem p;
      p.net = net;
      p.zones = scenario_zones(s, net);
      p.beta = prm.beta;
      p.box_factor = so.box_factor;
      p.jam_factor = so.jam_factor;
      p.pins = scenario_pins(s, net);
      p.freeze_transit = prm.freeze_transit;
      p.hop_bound = so.hop_bound;
      ThreeStageOptions o;
      static_cast<AscentOptions&>(o) = detail::ascent_options(so);
      o.balance_tol = so.balance_tol;
      o.smooth_tol = so.smooth_tol;
      o.smooth_max_iter = so.max_iter;
      if (warm) {
        o.warm_t = detail::warm_times(net, *warm);
        if (warm->zone_ids == p.zones.ids) o.warm_lambda_w = warm->lambda_w;
      }
      ThreeStageSolution r;
      if (s.model == ModelKind::three_stage) {
        r = ts_solve(p, o);
      } else {
        p.temperature = prm.temperature;
        p.nesting = prm.eta;
        r = s3c_solve(p, o);
      }
      std::vector<double> toll(net.edge_count());
      for (std::size_t e = 0; e < toll.size(); ++e) toll[e] = std::max(r.t[e] - net.edge(e).t_free, 0.0);
      a.status = to_string(r.status);
      a.objective = r.objective;
      a.iterations = r.iterations;
      a.residuals["feasibility"] = r.feasibility;
      a.residuals["complementarity"] = r.complementarity;
      a.residuals["row"] = r.row_residual;
      a.residuals["col"] = r.col_residual;
      if (s.model == ModelKind::three_stage) a.residuals["wardrop_gap"] = r.wardrop_gap;
      detail::fill_edges(a, net, r.t, r.f, toll);
      a.zone_ids = p.zones.ids;
      a.lambda_l = r.lambda_l;
      a.lambda_w = r.lambda_w;
      const std::size_t n = p.zones.size();
      a.trips.assign(n, std::vector<double>(n));
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) a.trips[i][j] = r.d(i, j) * p.zones.total_trips;
      return a;
    }
  }
  throw InputError("unknown model");
}

// ---------------------------------------------------------------------------
// Sweeps and comparisons

struct PatchSet {
  std::string name;
  std::vector<Patch> patches;
};

struct SweepRow {
  std::string name;
  std::string status;   // solver status, or "error"
  std::string message;  // error text for failed rows
  std::optional<ResultArtifact> result;
  bool warm_started = false;
};

// [{"name": ..., "patches": [...]}, ...]
inline std::vector<PatchSet> patch_sets_from_json(const Json& j, const std::string& where) {
  if (!j.is_array()) throw InputError(where + ": expected an array of patch sets");
  std::vector<PatchSet> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string w = where + "[" + std::to_string(i) + "]";
    detail::JsonObject o(j[i], w, {"name", "patches"});
    PatchSet ps;
    ps.name = o.has("name") ? o.text("name") : "variant" + std::to_string(i + 1);
    if (o.has("patches")) ps.patches = patches_from_json(o.at("patches"), o.path("patches"));
    out.push_back(std::move(ps));
  }
  return out;
}

inline std::vector<PatchSet> read_patch_sets(const std::filesystem::path& path) {
  const std::string where = path.string();
  return patch_sets_from_json(detail::parse_json_text(detail::read_file(path), where), where);
}

// Base row first. Variants are warm-started from the base result when the
// topology allows; with `parallel` they run cold and concurrently, and rows
// keep the input order either way.
inline std::vector<SweepRow> run_sweep(const Scenario& base, const std::vector<PatchSet>& sets, bool parallel = false) {
  auto attempt = [](const std::string& name, const Scenario* sc, const std::vector<Patch>* patches,
                    const ResultArtifact* warm) {
    SweepRow row;
    row.name = name;
    try {
      const Scenario v = patches ? apply_patches(*sc, *patches) : *sc;
      if (warm) {
        try {
          detail::warm_times(scenario_network(v), *warm);
        } catch (const InputError&) {
          warm = nullptr;
        }
      }
      row.result = run_scenario(v, warm);
      row.status = row.result->status;
      row.warm_started = warm != nullptr;
    } catch (const std::exception& e) {
      row.status = "error";
      row.message = e.what();
    }
    return row;
  };
  std::vector<SweepRow> rows;
  rows.reserve(sets.size() + 1);  // `warm` points into the base row
  rows.push_back(attempt("base", &base, nullptr, nullptr));
  const ResultArtifact* warm = rows.front().result ? &*rows.front().result : nullptr;
  if (parallel) {
    std::vector<std::future<SweepRow>> jobs;
    for (const auto& ps : sets)
      jobs.push_back(std::async(std::launch::async, attempt, ps.name, &base, &ps.patches, nullptr));
    for (auto& j : jobs) rows.push_back(j.get());
  } else {
    for (const auto& ps : sets) rows.push_back(attempt(ps.name, &base, &ps.patches, warm));
  }
  return rows;
}

// variant,status,objective,total_travel_time,total_toll,iterations,
// df_<edge id>... (flow minus base flow; removed edges count as 0), message
inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::vector<std::int64_t> ids;
  std::map<std::int64_t, double> base_f;
  const ResultArtifact* base = !rows.empty() && rows.front().result ? &*rows.front().result : nullptr;
  if (base)
    for (const auto& e : base->edges) {
      ids.push_back(e.id);
      base_f[e.id] = e.f;
    }
  std::string out = "variant,status,objective,total_travel_time,total_toll,iterations";
  for (auto id : ids) out += ",df_" + std::to_string(id);
  out += ",message\n";
  for (const auto& r : rows) {
    out += r.name + "," + r.status;
    if (r.result) {
      const auto& a = *r.result;
      out += "," + detail::format_number(a.objective) + "," + detail::format_number(a.total_travel_time) + "," +
             detail::format_number(a.total_toll()) + "," + std::to_string(a.iterations);
      std::map<std::int64_t, double> f;
      for (const auto& e : a.edges) f[e.id] = e.f;
      for (auto id : ids) out += "," + detail::format_number((f.count(id) ? f[id] : 0.0) - base_f[id]);
    } else {
      out += ",,,,";
      for (std::size_t k = 0; k < ids.size(); ++k) out += ",";
    }
    std::string msg = r.message;
    std::replace(msg.begin(), msg.end(), ',', ';');
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    out += "," + msg + "\n";
  }
  return out;
}

// edge_id,t_a,t_b,dt,f_a,f_b,df over the union of edge ids; cells of an edge
// missing on one side are empty.
inline std::string compare_csv(const ResultArtifact& a, const ResultArtifact& b) {
  std::map<std::int64_t, std::pair<const EdgeResult*, const EdgeResult*>> all;
  for (const auto& e : a.edges) all[e.id].first = &e;
  for (const auto& e : b.edges) all[e.id].second = &e;
  std::string out = "edge_id,t_a,t_b,dt,f_a,f_b,df\n";
  auto num = [](const EdgeResult* e, double EdgeResult::*m) { return e ? detail::format_number(e->*m) : std::string(); };
  for (const auto& [id, pr] : all) {
    const auto [x, y] = pr;
    out += std::to_string(id) + "," + num(x, &EdgeResult::t) + "," + num(y, &EdgeResult::t) + ",";
    if (x && y) out += detail::format_number(y->t - x->t);
    out += "," + num(x, &EdgeResult::f) + "," + num(y, &EdgeResult::f) + ",";
    if (x && y) out += detail::format_number(y->f - x->f);
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Deterrence calibration

// Zone-to-zone cheapest modal costs at times t (free flow when empty).
inline Matrix zone_cost_matrix(const Network& net, const Zones& z, std::span<const double> t) {
  const CostVector tf = net.free_flow_times();
  const std::span<const double> tt = t.empty() ? std::span<const double>(tf) : t;
  RouteTable table(net, tt);
  const std::size_t n = z.size();
  Matrix C(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      C(i, j) = z.origin_nodes[i] == z.dest_nodes[j]
                    ? 0.0
                    : table.cost({z.origin_nodes[i], z.dest_nodes[j], ModeScope::either});
  return C;
}

inline HymanResult calibrate_beta(const Scenario& s, double target, const std::vector<double>& t = {},
                                  const HymanOptions& opt = {}) {
  const Network net = scenario_network(s);
  const Zones z = scenario_zones(s, net);
  const Matrix C = zone_cost_matrix(net, z, t);
  return hyman_calibrate([&](double beta) { return mean_cost(gravity_balance(z.l, z.w, C, beta).d, C); }, target, opt);
}

}  // namespace sdeq
