#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tscf/errors.hpp"
#include "tscf/harness.hpp"

namespace tscf {

using Json = nlohmann::ordered_json;

std::string to_string(PairState s) {
  switch (s) {
    case PairState::completed: return "completed";
    case PairState::aborted: return "aborted";
    case PairState::unsupported: return "unsupported";
    case PairState::failed: return "failed";
  }
  return "unknown";
}

PairState parse_pair_state(const std::string& s) {
  if (s == "completed") return PairState::completed;
  if (s == "aborted") return PairState::aborted;
  if (s == "unsupported") return PairState::unsupported;
  if (s == "failed") return PairState::failed;
  throw FormatError("unknown pair state '" + s + "'");
}

ReportFormat parse_report_format(const std::string& s) {
  if (s == "table-text") return ReportFormat::table_text;
  if (s == "delimited") return ReportFormat::delimited;
  if (s == "structured") return ReportFormat::structured;
  if (s == "svg-cd") return ReportFormat::svg_cd;
  if (s == "radar-data") return ReportFormat::radar_data;
  throw ConfigError("unknown report format '" + s +
                    "' (expected table-text, delimited, structured, svg-cd or radar-data)");
}

std::string to_string(ReportFormat f) {
  switch (f) {
    case ReportFormat::table_text: return "table-text";
    case ReportFormat::delimited: return "delimited";
    case ReportFormat::structured: return "structured";
    case ReportFormat::svg_cd: return "svg-cd";
    case ReportFormat::radar_data: return "radar-data";
  }
  return "unknown";
}

namespace {

CFStatus parse_status(const std::string& s) {
  if (s == "ok") return CFStatus::ok;
  if (s == "no_cf_found") return CFStatus::no_cf_found;
  if (s == "timed_out") return CFStatus::timed_out;
  throw FormatError("unknown status '" + s + "'");
}

template <class T>
Json opt(const std::optional<T>& v) {
  if (!v) return nullptr;
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(*v)) return nullptr;
  }
  return *v;
}

template <class T>
std::optional<T> get_opt(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

std::string fixed(double v, int digits = 4) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string fixed(const std::optional<double>& v, int digits = 4) { return v ? fixed(*v, digits) : "-"; }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

template <class T>
std::string csv_opt(const std::optional<T>& v) {
  if (!v) return "null";
  if constexpr (std::is_floating_point_v<T>) {
    return format_double(*v);
  } else {
    return std::to_string(*v);
  }
}

std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string safe_name(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> run_methods(const RunResult& run) {
  std::vector<std::string> out;
  for (const auto& p : run.pairs) {
    if (std::find(out.begin(), out.end(), p.method) == out.end()) out.push_back(p.method);
  }
  return out;
}

std::vector<std::string> run_models(const RunResult& run) {
  std::vector<std::string> out;
  for (const auto& p : run.pairs) {
    if (std::find(out.begin(), out.end(), p.model) == out.end()) out.push_back(p.model);
  }
  return out;
}

double config_alpha(const RunResult& run) {
  try {
    return ExperimentConfig::parse(run.config_text).alpha;
  } catch (const Error&) {
    return 0.05;
  }
}

bool config_exclude_failed(const RunResult& run) {
  try {
    return ExperimentConfig::parse(run.config_text).exclude_failed;
  } catch (const Error&) {
    return false;
  }
}

/// Average ranks for every ranked metric, one row per metric.
std::vector<std::pair<std::string, std::vector<double>>> radar_rows(const RunResult& run,
                                                                    const std::vector<PairAggregate>& aggs,
                                                                    const std::string& model,
                                                                    const std::vector<std::string>& methods) {
  std::vector<std::pair<std::string, std::vector<double>>> rows;
  for (const auto& metric : ranked_metrics()) {
    if (methods.size() == 1) {
      rows.emplace_back(metric, std::vector<double>{1.0});
      continue;
    }
    const auto t = rank_metric(aggs, model, methods, metric, config_exclude_failed(run));
    rows.emplace_back(metric, t.average);
  }
  return rows;
}

std::string table_text(const RunResult& run) {
  const auto aggs = aggregate(run);
  const auto methods = run_methods(run);
  std::ostringstream out;
  out << "Counterfactual benchmark report (" << run.version << ")\n";
  for (const auto& model : run_models(run)) {
    out << "\nModel " << model << "\n";
    char line[512];
    std::snprintf(line, sizeof line, "%-20s %-8s %-11s %6s %8s %8s %8s %8s %8s %8s %5s %6s %8s %8s %6s %6s\n",
                  "dataset", "method", "state", "n", "valid", "L1", "L2", "Linf", "L0", "ThrL0", "Sens", "NumSeg",
                  "Dist_all", "Dist_cls", "cBC", "cBV");
    out << line;
    for (const auto& a : aggs) {
      if (a.model != model) continue;
      auto m = [&](const char* k) -> std::optional<double> {
        const auto it = a.metrics.find(k);
        return it == a.metrics.end() ? std::nullopt : it->second.mean;
      };
      std::snprintf(line, sizeof line, "%-20s %-8s %-11s %6zu %8s %8s %8s %8s %8s %8s %5s %6s %8s %8s %6s %6s\n",
                    a.dataset.substr(0, 20).c_str(), a.method.substr(0, 8).c_str(), to_string(a.state).c_str(),
                    a.attempted, fixed(a.validity, 3).c_str(), fixed(m("l1"), 3).c_str(), fixed(m("l2"), 3).c_str(),
                    fixed(m("linf"), 3).c_str(), fixed(m("l0"), 3).c_str(), fixed(m("thresh_l0"), 3).c_str(),
                    fixed(m("sens"), 2).c_str(), fixed(m("num_seg"), 1).c_str(), fixed(m("dist_all"), 3).c_str(),
                    fixed(m("dist_class"), 3).c_str(), fixed(a.consist_bc, 3).c_str(),
                    fixed(a.consist_bv, 3).c_str());
      out << line;
    }
    if (methods.size() < 2) continue;
    out << "\nAverage ranks (1 = best)\n";
    std::snprintf(line, sizeof line, "%-12s", "metric");
    out << line;
    for (const auto& m : methods) {
      std::snprintf(line, sizeof line, " %8s", m.substr(0, 8).c_str());
      out << line;
    }
    out << "   CD     Friedman\n";
    for (const auto& metric : ranked_metrics()) {
      const auto t = rank_metric(aggs, model, methods, metric, config_exclude_failed(run));
      std::snprintf(line, sizeof line, "%-12s", metric.c_str());
      out << line;
      for (double v : t.average) {
        std::snprintf(line, sizeof line, " %8s", t.datasets.empty() ? "-" : fixed(v, 2).c_str());
        out << line;
      }
      if (t.datasets.size() >= 2 && methods.size() <= 10) {
        const auto f = friedman_nemenyi(t.ranks, config_alpha(run));
        out << "   " << fixed(f.cd, 3) << "  chi2=" << fixed(f.chi2, 3) << (f.significant ? " (significant)" : "");
      }
      out << '\n';
      for (const auto& n : t.notes) out << "  note: " << n << '\n';
    }
  }
  out << "\nPair notes\n";
  for (const auto& p : run.pairs) {
    if (p.state == PairState::completed && p.timeouts == 0) continue;
    out << "  " << p.dataset << " / " << p.model << " / " << p.method << ": " << to_string(p.state);
    if (p.timeouts) out << ", " << p.timeouts << " timeouts";
    if (!p.note.empty()) out << " (" << p.note << ")";
    out << '\n';
  }
  return out.str();
}

std::string records_csv(const RunResult& run) {
  std::ostringstream out;
  out << "dataset,model,method,instance,label,predicted,target,valid,status,error,l1,l2,linf,l0,thresh_l0,"
         "thresh_l0_count,sens,num_seg,dist_all,dist_all_degenerate,dist_class,dist_class_degenerate,note\n";
  for (const auto& r : run.records) {
    const auto& m = r.metrics;
    out << csv_field(r.dataset) << ',' << csv_field(r.model) << ',' << csv_field(r.method) << ',' << r.instance
        << ',' << r.label << ',' << r.predicted << ',' << r.target << ',' << (m.valid ? 1 : 0) << ','
        << to_string(m.status) << ',' << (r.error ? 1 : 0) << ',' << csv_opt(m.l1) << ',' << csv_opt(m.l2) << ','
        << csv_opt(m.linf) << ',' << csv_opt(m.l0) << ',' << csv_opt(m.thresh_l0) << ','
        << csv_opt(m.thresh_l0_count) << ',' << csv_opt(m.sens) << ',' << csv_opt(m.num_seg) << ','
        << csv_opt(m.dist_all) << ',' << (m.dist_all_degenerate ? 1 : 0) << ',' << csv_opt(m.dist_class) << ','
        << (m.dist_class_degenerate ? 1 : 0) << ',' << csv_field(r.note) << '\n';
  }
  return out.str();
}

std::string aggregates_csv(const std::vector<PairAggregate>& aggs) {
  std::ostringstream out;
  out << "dataset,model,method,state,attempted,valid,timeouts,errors,validity";
  for (const auto& name : ranked_metrics()) {
    if (name != "validity") out << ',' << name << "_mean," << name << "_std," << name << "_n";
  }
  out << ",consist_bc,consist_bv\n";
  for (const auto& a : aggs) {
    out << csv_field(a.dataset) << ',' << csv_field(a.model) << ',' << csv_field(a.method) << ','
        << to_string(a.state) << ',' << a.attempted << ',' << a.valid << ',' << a.timeouts << ',' << a.errors << ','
        << csv_opt(a.validity);
    for (const auto& name : ranked_metrics()) {
      if (name == "validity") continue;
      const auto it = a.metrics.find(name);
      if (it == a.metrics.end()) {
        out << ",null,null,0";
      } else {
        out << ',' << csv_opt(it->second.mean) << ',' << csv_opt(it->second.std) << ',' << it->second.n;
      }
    }
    out << ',' << csv_opt(a.consist_bc) << ',' << csv_opt(a.consist_bv) << '\n';
  }
  return out.str();
}

std::string timing_records_csv(const RunResult& run) {
  std::ostringstream out;
  out << "dataset,model,method,instance,gen_time\n";
  for (const auto& r : run.records) {
    out << csv_field(r.dataset) << ',' << csv_field(r.model) << ',' << csv_field(r.method) << ',' << r.instance
        << ',' << format_double(r.metrics.gen_time) << '\n';
  }
  return out.str();
}

std::string timing_aggregates_csv(const RunResult& run, const std::vector<PairAggregate>& aggs) {
  std::ostringstream out;
  out << "dataset,model,method,gen_time_all_mean,gen_time_all_std,gen_time_valid_mean,gen_time_valid_std\n";
  for (const auto& a : aggs) {
    out << csv_field(a.dataset) << ',' << csv_field(a.model) << ',' << csv_field(a.method) << ','
        << csv_opt(a.gen_time_all.mean) << ',' << csv_opt(a.gen_time_all.std) << ','
        << csv_opt(a.gen_time_valid.mean) << ',' << csv_opt(a.gen_time_valid.std) << '\n';
  }
  const auto methods = run_methods(run);
  if (methods.size() >= 2) {
    out << "\nmodel,metric";
    for (const auto& m : methods) out << ',' << csv_field(m);
    out << '\n';
    for (const auto& model : run_models(run)) {
      const auto t = rank_metric(aggs, model, methods, "gen_time", config_exclude_failed(run));
      out << csv_field(model) << ",gen_time_rank";
      for (double v : t.average) out << ',' << format_double(v);
      out << '\n';
    }
  }
  return out.str();
}

}  // namespace

std::string run_to_json(const RunResult& run, bool include_timing) {
  Json j;
  j["version"] = run.version;
  j["config"] = run.config_text;
  Json pairs = Json::array();
  for (const auto& p : run.pairs) {
    Json o;
    o["dataset"] = p.dataset;
    o["model"] = p.model;
    o["method"] = p.method;
    o["state"] = to_string(p.state);
    o["note"] = p.note;
    o["attempted"] = p.attempted;
    o["timeouts"] = p.timeouts;
    o["consist_bc"] = opt(p.consist_bc);
    o["consist_bv"] = opt(p.consist_bv);
    pairs.push_back(std::move(o));
  }
  j["pairs"] = std::move(pairs);
  Json records = Json::array();
  for (const auto& r : run.records) {
    const auto& m = r.metrics;
    Json o;
    o["dataset"] = r.dataset;
    o["model"] = r.model;
    o["method"] = r.method;
    o["instance"] = r.instance;
    o["label"] = r.label;
    o["predicted"] = r.predicted;
    o["target"] = r.target;
    o["valid"] = m.valid;
    o["status"] = to_string(m.status);
    o["error"] = r.error;
    o["note"] = r.note;
    o["l1"] = opt(m.l1);
    o["l2"] = opt(m.l2);
    o["linf"] = opt(m.linf);
    o["l0"] = opt(m.l0);
    o["thresh_l0"] = opt(m.thresh_l0);
    o["thresh_l0_count"] = opt(m.thresh_l0_count);
    o["sens"] = opt(m.sens);
    o["num_seg"] = opt(m.num_seg);
    o["dist_all"] = opt(m.dist_all);
    o["dist_all_degenerate"] = m.dist_all_degenerate;
    o["dist_class"] = opt(m.dist_class);
    o["dist_class_degenerate"] = m.dist_class_degenerate;
    if (include_timing) o["gen_time"] = m.gen_time;
    records.push_back(std::move(o));
  }
  j["records"] = std::move(records);
  return j.dump(1) + "\n";
}

RunResult run_from_json(const std::string& text) {
  RunResult run;
  try {
    const Json j = Json::parse(text);
    run.version = j.at("version").get<std::string>();
    run.config_text = j.at("config").get<std::string>();
    for (const auto& o : j.at("pairs")) {
      PairResult p;
      p.dataset = o.at("dataset").get<std::string>();
      p.model = o.at("model").get<std::string>();
      p.method = o.at("method").get<std::string>();
      p.state = parse_pair_state(o.at("state").get<std::string>());
      p.note = o.at("note").get<std::string>();
      p.attempted = o.at("attempted").get<std::size_t>();
      p.timeouts = o.at("timeouts").get<std::size_t>();
      p.consist_bc = get_opt<double>(o, "consist_bc");
      p.consist_bv = get_opt<double>(o, "consist_bv");
      run.pairs.push_back(std::move(p));
    }
    for (const auto& o : j.at("records")) {
      InstanceRecord r;
      auto& m = r.metrics;
      r.dataset = o.at("dataset").get<std::string>();
      r.model = o.at("model").get<std::string>();
      r.method = o.at("method").get<std::string>();
      r.instance = o.at("instance").get<std::size_t>();
      r.label = o.at("label").get<std::size_t>();
      r.predicted = o.at("predicted").get<std::size_t>();
      r.target = o.at("target").get<std::size_t>();
      m.valid = o.at("valid").get<bool>();
      m.status = parse_status(o.at("status").get<std::string>());
      r.error = o.at("error").get<bool>();
      r.note = o.at("note").get<std::string>();
      m.l1 = get_opt<double>(o, "l1");
      m.l2 = get_opt<double>(o, "l2");
      m.linf = get_opt<double>(o, "linf");
      m.l0 = get_opt<double>(o, "l0");
      m.thresh_l0 = get_opt<double>(o, "thresh_l0");
      m.thresh_l0_count = get_opt<std::size_t>(o, "thresh_l0_count");
      m.sens = get_opt<int>(o, "sens");
      m.num_seg = get_opt<std::size_t>(o, "num_seg");
      m.dist_all_degenerate = o.at("dist_all_degenerate").get<bool>();
      m.dist_class_degenerate = o.at("dist_class_degenerate").get<bool>();
      m.dist_all = get_opt<double>(o, "dist_all");
      m.dist_class = get_opt<double>(o, "dist_class");
      const double inf = std::numeric_limits<double>::infinity();
      if (m.valid && m.dist_all_degenerate) m.dist_all = inf;
      if (m.valid && m.dist_class_degenerate) m.dist_class = inf;
      if (o.contains("gen_time")) m.gen_time = o.at("gen_time").get<double>();
      run.records.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed results file: ") + e.what());
  }
  return run;
}

std::string render_cd_svg(const std::vector<std::string>& methods, const FriedmanResult& stats,
                          const std::string& title) {
  const std::size_t m = methods.size();
  const double left = 60.0, right = 540.0, axis_y = 70.0;
  auto x_of = [&](double rank) {
    return m < 2 ? left : left + (rank - 1.0) / static_cast<double>(m - 1) * (right - left);
  };
  std::vector<std::size_t> order(m);
  for (std::size_t i = 0; i < m; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return stats.average[a] < stats.average[b]; });
  const double label_base = axis_y + 40.0 + 12.0 * static_cast<double>(stats.groups.size());
  const double height = label_base + 18.0 * static_cast<double>((m + 1) / 2) + 20.0;

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"" << fixed(height, 0)
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"300\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" << svg_escape(title) << "</text>\n";
  s << "<line x1=\"" << fixed(left, 1) << "\" y1=\"" << fixed(axis_y, 1) << "\" x2=\"" << fixed(right, 1)
    << "\" y2=\"" << fixed(axis_y, 1) << "\" stroke=\"black\"/>\n";
  for (std::size_t r = 1; r <= std::max<std::size_t>(m, 1); ++r) {
    const double x = x_of(static_cast<double>(r));
    s << "<line x1=\"" << fixed(x, 1) << "\" y1=\"" << fixed(axis_y - 5, 1) << "\" x2=\"" << fixed(x, 1)
      << "\" y2=\"" << fixed(axis_y, 1) << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << fixed(x, 1) << "\" y=\"" << fixed(axis_y - 8, 1) << "\" text-anchor=\"middle\">" << r
      << "</text>\n";
  }
  // CD bar above the axis.
  s << "<line x1=\"" << fixed(x_of(1.0), 1) << "\" y1=\"35.0\" x2=\"" << fixed(x_of(1.0 + stats.cd), 1)
    << "\" y2=\"35.0\" stroke=\"black\" stroke-width=\"2\"/>\n";
  s << "<text x=\"" << fixed(x_of(1.0), 1) << "\" y=\"30.0\">CD = " << fixed(stats.cd, 3) << "</text>\n";
  for (std::size_t g = 0; g < stats.groups.size(); ++g) {
    const auto& grp = stats.groups[g];
    if (grp.size() < 2) continue;
    double lo = stats.average[grp.front()], hi = lo;
    for (auto j : grp) {
      lo = std::min(lo, stats.average[j]);
      hi = std::max(hi, stats.average[j]);
    }
    const double y = axis_y + 12.0 + 12.0 * static_cast<double>(g);
    s << "<line x1=\"" << fixed(x_of(lo) - 3, 1) << "\" y1=\"" << fixed(y, 1) << "\" x2=\"" << fixed(x_of(hi) + 3, 1)
      << "\" y2=\"" << fixed(y, 1) << "\" stroke=\"black\" stroke-width=\"3\"/>\n";
  }
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = order[i];
    const double x = x_of(stats.average[j]);
    const bool left_side = i < (m + 1) / 2;
    const std::size_t slot = left_side ? i : m - 1 - i;
    const double y = label_base + 18.0 * static_cast<double>(slot);
    const double tx = left_side ? left - 10 : right + 10;
    s << "<polyline fill=\"none\" stroke=\"gray\" points=\"" << fixed(x, 1) << ',' << fixed(axis_y, 1) << ' '
      << fixed(x, 1) << ',' << fixed(y, 1) << ' ' << fixed(tx, 1) << ',' << fixed(y, 1) << "\"/>\n";
    s << "<text x=\"" << fixed(left_side ? tx - 2 : tx + 2, 1) << "\" y=\"" << fixed(y + 4, 1)
      << "\" text-anchor=\"" << (left_side ? "end" : "start") << "\">" << svg_escape(methods[j]) << " ("
      << fixed(stats.average[j], 2) << ")</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::string render_overlay_svg(const TimeSeries& original, const TimeSeries& perturbed,
                               const SparsityConfig& sparsity, const std::string& title) {
  require_same_shape(original, perturbed, "overlay plot");
  const std::size_t n = original.channels(), t_len = original.steps();
  const double width = 720.0, panel = 160.0, margin = 30.0;
  const double height = 40.0 + panel * static_cast<double>(n);
  const auto marks = perceptible_changes(original, perturbed, sparsity);

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed(width, 0) << "\" height=\"" << fixed(height, 0)
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << fixed(width / 2, 1) << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">"
    << svg_escape(title) << "</text>\n";
  for (std::size_t c = 0; c < n; ++c) {
    const double top = 30.0 + panel * static_cast<double>(c);
    double lo = original(c, 0), hi = lo;
    for (std::size_t t = 0; t < t_len; ++t) {
      lo = std::min({lo, original(c, t), perturbed(c, t)});
      hi = std::max({hi, original(c, t), perturbed(c, t)});
    }
    if (hi == lo) hi = lo + 1.0;
    auto px = [&](std::size_t t) {
      return margin + (t_len < 2 ? 0.0 : static_cast<double>(t) / static_cast<double>(t_len - 1)) * (width - 2 * margin);
    };
    auto py = [&](double v) { return top + 10.0 + (hi - v) / (hi - lo) * (panel - 30.0); };
    for (std::size_t t = 0; t < t_len; ++t) {
      if (!marks[c * t_len + t]) continue;
      const double w = (width - 2 * margin) / static_cast<double>(std::max<std::size_t>(t_len, 1));
      s << "<rect x=\"" << fixed(px(t) - w / 2, 2) << "\" y=\"" << fixed(top + 10, 1) << "\" width=\"" << fixed(w, 2)
        << "\" height=\"" << fixed(panel - 30, 1) << "\" fill=\"#fdd\"/>\n";
    }
    auto path = [&](const TimeSeries& series, const char* colour, const char* dash) {
      s << "<polyline fill=\"none\" stroke=\"" << colour << "\"" << dash << " points=\"";
      for (std::size_t t = 0; t < t_len; ++t) {
        if (t) s << ' ';
        s << fixed(px(t), 2) << ',' << fixed(py(series(c, t)), 2);
      }
      s << "\"/>\n";
    };
    path(original, "#1f77b4", "");
    path(perturbed, "#d62728", " stroke-dasharray=\"4 2\"");
    s << "<text x=\"" << fixed(margin, 1) << "\" y=\"" << fixed(top + 6, 1) << "\">channel " << c << "</text>\n";
  }
  s << "<text x=\"" << fixed(width - margin, 1) << "\" y=\"" << fixed(height - 6, 1)
    << "\" text-anchor=\"end\">blue: original, red dashed: counterfactual, shaded: perceptible change</text>\n";
  s << "</svg>\n";
  return s.str();
}

std::vector<std::filesystem::path> emit_report(const RunResult& run, ReportFormat format,
                                               const std::filesystem::path& dir) {
  const auto methods = run_methods(run);
  if (methods.empty()) throw ContractError("report has no methods");
  std::vector<std::filesystem::path> written;
  auto put = [&](const std::filesystem::path& rel, const std::string& text) {
    write_file(dir / rel, text);
    written.push_back(dir / rel);
  };
  const auto aggs = aggregate(run);
  switch (format) {
    case ReportFormat::table_text:
      put("report.txt", table_text(run));
      break;
    case ReportFormat::delimited:
      put("records.csv", records_csv(run));
      put("aggregates.csv", aggregates_csv(aggs));
      put(std::filesystem::path("timing") / "records.csv", timing_records_csv(run));
      put(std::filesystem::path("timing") / "aggregates.csv", timing_aggregates_csv(run, aggs));
      break;
    case ReportFormat::structured:
      put("results.json", run_to_json(run, false));
      break;
    case ReportFormat::svg_cd: {
      if (methods.size() < 2 || methods.size() > 10) break;
      for (const auto& model : run_models(run)) {
        for (const auto& metric : ranked_metrics()) {
          const auto t = rank_metric(aggs, model, methods, metric, config_exclude_failed(run));
          if (t.datasets.empty()) continue;
          FriedmanResult f;
          if (t.datasets.size() >= 2) {
            f = friedman_nemenyi(t.ranks, config_alpha(run));
          } else {
            f.average = t.average;
            f.cd = critical_difference(methods.size(), 1, config_alpha(run));
            f.groups.push_back({});
            for (std::size_t j = 0; j < methods.size(); ++j) f.groups.back().push_back(j);
          }
          put(std::filesystem::path("cd") / (safe_name(model) + "__" + metric + ".svg"),
              render_cd_svg(methods, f, model + ": " + metric + " (" + std::to_string(t.datasets.size()) +
                                            " datasets)"));
        }
      }
      break;
    }
    case ReportFormat::radar_data:
      for (const auto& model : run_models(run)) {
        std::ostringstream out;
        out << "metric";
        for (const auto& m : methods) out << ',' << csv_field(m);
        out << '\n';
        for (const auto& [metric, avg] : radar_rows(run, aggs, model, methods)) {
          out << metric;
          for (double v : avg) out << ',' << format_double(v);
          out << '\n';
        }
        put(std::filesystem::path("radar") / (safe_name(model) + ".csv"), out.str());
      }
      break;
  }
  return written;
}

void write_results(const RunResult& run, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir / "config.txt", run.config_text);
  std::ostringstream cfs;
  for (const auto& r : run.records) {
    Json o;
    o["dataset"] = r.dataset;
    o["model"] = r.model;
    o["method"] = r.method;
    o["instance"] = r.instance;
    o["perturbed"] = r.perturbed;
    cfs << o.dump() << '\n';
  }
  write_file(dir / "counterfactuals.jsonl", cfs.str());
  if (!run.pairs.empty()) {
    for (auto f : {ReportFormat::structured, ReportFormat::delimited, ReportFormat::table_text,
                   ReportFormat::radar_data, ReportFormat::svg_cd}) {
      emit_report(run, f, dir);
    }
  } else {
    write_file(dir / "results.json", run_to_json(run, false));
  }
}

RunResult read_results(const std::filesystem::path& dir) {
  const auto main = dir / "results.json";
  if (!std::filesystem::exists(main)) {
    throw ContractError("no results found in " + dir.string() + " (missing results.json)");
  }
  RunResult run = run_from_json(read_file(main));
  const auto cf_path = dir / "counterfactuals.jsonl";
  if (std::filesystem::exists(cf_path)) {
    std::stringstream in(read_file(cf_path));
    std::string line;
    std::size_t i = 0;
    while (std::getline(in, line) && i < run.records.size()) {
      if (line.empty()) continue;
      try {
        run.records[i++].perturbed = Json::parse(line).at("perturbed").get<std::vector<double>>();
      } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed counterfactuals.jsonl: " + std::string(e.what()));
      }
    }
  }
  const auto timing = dir / "timing" / "records.csv";
  if (std::filesystem::exists(timing)) {
    std::stringstream in(read_file(timing));
    std::string line;
    std::getline(in, line);
    std::size_t i = 0;
    while (std::getline(in, line) && i < run.records.size()) {
      if (line.empty()) break;
      const auto comma = line.rfind(',');
      try {
        run.records[i++].metrics.gen_time = std::stod(line.substr(comma + 1));
      } catch (const std::logic_error&) {
        throw FormatError("malformed timing record: " + line);
      }
    }
  }
  return run;
}

}  // namespace tscf
