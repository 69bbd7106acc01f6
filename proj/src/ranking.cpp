#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/chi_squared.hpp>

#include "tscf/errors.hpp"
#include "tscf/harness.hpp"

namespace tscf {

Summary summarize(const std::vector<double>& values) {
  Summary s;
  std::vector<double> finite;
  for (double v : values) {
    if (std::isfinite(v)) finite.push_back(v);
  }
  s.n = finite.size();
  if (finite.empty()) return s;
  double sum = 0.0;
  for (double v : finite) sum += v;
  const double mean = sum / static_cast<double>(finite.size());
  double var = 0.0;
  for (double v : finite) var += (v - mean) * (v - mean);
  s.mean = mean;
  s.std = std::sqrt(var / static_cast<double>(finite.size()));
  return s;
}

const std::vector<std::string>& ranked_metrics() {
  static const std::vector<std::string> names{"validity", "l1",       "l2",      "linf",      "l0",        "thresh_l0",
                                              "sens",     "num_seg",  "dist_all", "dist_class"};
  return names;
}

Direction metric_direction(const std::string& metric) {
  if (metric == "validity" || metric == "consist_bc" || metric == "consist_bv") return Direction::higher_is_better;
  return Direction::lower_is_better;
}

std::vector<PairAggregate> aggregate(const RunResult& run) {
  std::vector<PairAggregate> out;
  for (const auto& pr : run.pairs) {
    PairAggregate a;
    a.dataset = pr.dataset;
    a.model = pr.model;
    a.method = pr.method;
    a.state = pr.state;
    a.attempted = pr.attempted;
    a.timeouts = pr.timeouts;
    a.consist_bc = pr.consist_bc;
    a.consist_bv = pr.consist_bv;
    std::map<std::string, std::vector<double>> values;
    std::vector<double> time_all, time_valid;
    for (const auto& r : run.records) {
      if (r.dataset != pr.dataset || r.model != pr.model || r.method != pr.method) continue;
      const auto& m = r.metrics;
      a.errors += r.error;
      time_all.push_back(m.gen_time);
      if (!m.valid) continue;
      ++a.valid;
      time_valid.push_back(m.gen_time);
      auto put = [&](const char* name, const auto& v) {
        if (v) values[name].push_back(static_cast<double>(*v));
      };
      put("l1", m.l1);
      put("l2", m.l2);
      put("linf", m.linf);
      put("l0", m.l0);
      put("thresh_l0", m.thresh_l0);
      put("sens", m.sens);
      put("num_seg", m.num_seg);
      put("dist_all", m.dist_all);
      put("dist_class", m.dist_class);
    }
    if (pr.state == PairState::completed && a.attempted > 0) {
      a.validity = static_cast<double>(a.valid) / static_cast<double>(a.attempted);
      for (const auto& name : ranked_metrics()) {
        if (name == "validity") continue;
        a.metrics[name] = summarize(values[name]);
      }
    }
    a.gen_time_all = summarize(time_all);
    a.gen_time_valid = summarize(time_valid);
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<double> rank_row(const std::vector<std::optional<double>>& values, Direction dir) {
  const std::size_t m = values.size();
  std::vector<std::size_t> present;
  for (std::size_t j = 0; j < m; ++j) {
    if (values[j]) present.push_back(j);
  }
  std::stable_sort(present.begin(), present.end(), [&](std::size_t a, std::size_t b) {
    return dir == Direction::lower_is_better ? *values[a] < *values[b] : *values[a] > *values[b];
  });
  std::vector<double> ranks(m, 0.0);
  std::size_t i = 0;
  while (i < present.size()) {
    std::size_t j = i;
    while (j + 1 < present.size() && *values[present[j + 1]] == *values[present[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) ranks[present[k]] = mid;
    i = j + 1;
  }
  const std::size_t absent = m - present.size();
  if (absent > 0) {
    const double mid = 0.5 * static_cast<double>(present.size() + 1 + m);
    for (std::size_t j = 0; j < m; ++j) {
      if (!values[j]) ranks[j] = mid;
    }
  }
  return ranks;
}

RankTable aggregate_rankings(const std::vector<std::string>& datasets, const std::vector<std::string>& methods,
                             const std::vector<std::vector<std::optional<double>>>& values, Direction dir) {
  if (methods.size() < 2) throw ContractError("ranking needs at least two methods");
  if (values.size() != datasets.size()) throw ContractError("ranking: one value row per dataset expected");
  RankTable t;
  t.methods = methods;
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    if (values[d].size() != methods.size()) throw ContractError("ranking: one value per method expected");
    const bool any = std::any_of(values[d].begin(), values[d].end(), [](const auto& v) { return v.has_value(); });
    if (!any) {
      t.notes.push_back(datasets[d] + ": no method has a value; dataset excluded");
      continue;
    }
    t.datasets.push_back(datasets[d]);
    t.ranks.push_back(rank_row(values[d], dir));
  }
  t.average.assign(methods.size(), 0.0);
  if (!t.ranks.empty()) {
    for (const auto& row : t.ranks) {
      for (std::size_t j = 0; j < row.size(); ++j) t.average[j] += row[j];
    }
    for (auto& v : t.average) v /= static_cast<double>(t.ranks.size());
  }
  return t;
}

namespace {

std::optional<double> metric_value(const PairAggregate& a, const std::string& metric) {
  if (metric == "validity") return a.validity;
  if (metric == "gen_time") return a.state == PairState::completed ? a.gen_time_all.mean : std::nullopt;
  if (metric == "consist_bc") return a.consist_bc;
  if (metric == "consist_bv") return a.consist_bv;
  const auto it = a.metrics.find(metric);
  if (it == a.metrics.end()) return std::nullopt;
  return it->second.mean;
}

}  // namespace

RankTable rank_metric(const std::vector<PairAggregate>& aggs, const std::string& model,
                      const std::vector<std::string>& methods, const std::string& metric, bool exclude_failed) {
  std::vector<std::string> datasets;
  for (const auto& a : aggs) {
    if (a.model == model && std::find(datasets.begin(), datasets.end(), a.dataset) == datasets.end()) {
      datasets.push_back(a.dataset);
    }
  }
  std::vector<std::string> kept;
  std::vector<std::string> notes;
  std::vector<std::vector<std::optional<double>>> values;
  for (const auto& d : datasets) {
    std::vector<std::optional<double>> row(methods.size());
    bool failed = false;
    for (const auto& a : aggs) {
      if (a.model != model || a.dataset != d) continue;
      const auto j = std::find(methods.begin(), methods.end(), a.method) - methods.begin();
      if (static_cast<std::size_t>(j) >= methods.size()) continue;
      if (a.state != PairState::completed) failed = true;
      row[static_cast<std::size_t>(j)] = metric_value(a, metric);
    }
    if (exclude_failed && failed) {
      notes.push_back(d + ": a method did not complete; dataset excluded");
      continue;
    }
    kept.push_back(d);
    values.push_back(std::move(row));
  }
  auto t = aggregate_rankings(kept, methods, values, metric_direction(metric));
  t.notes.insert(t.notes.begin(), notes.begin(), notes.end());
  return t;
}

double nemenyi_q(std::size_t methods, double alpha) {
  static const double q05[] = {1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164};
  static const double q10[] = {1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920};
  const double* table = nullptr;
  if (alpha == 0.05) table = q05;
  if (alpha == 0.10) table = q10;
  if (!table) throw ConfigError("alpha must be 0.05 or 0.10 for the Nemenyi test");
  if (methods < 2 || methods > 10) throw ConfigError("Nemenyi table covers 2 to 10 methods");
  return table[methods - 2];
}

double critical_difference(std::size_t methods, std::size_t datasets, double alpha) {
  if (datasets < 1) throw ContractError("critical difference needs at least one dataset");
  const double m = static_cast<double>(methods);
  return nemenyi_q(methods, alpha) * std::sqrt(m * (m + 1.0) / (6.0 * static_cast<double>(datasets)));
}

FriedmanResult friedman_nemenyi(const std::vector<std::vector<double>>& ranks, double alpha) {
  const std::size_t d = ranks.size();
  if (d < 2) throw ContractError("Friedman test needs at least two datasets");
  const std::size_t m = ranks.front().size();
  if (m < 2) throw ContractError("Friedman test needs at least two methods");
  FriedmanResult r;
  r.average.assign(m, 0.0);
  for (const auto& row : ranks) {
    if (row.size() != m) throw ContractError("Friedman test: ragged rank matrix");
    for (std::size_t j = 0; j < m; ++j) r.average[j] += row[j];
  }
  for (auto& v : r.average) v /= static_cast<double>(d);
  const double md = static_cast<double>(m);
  double sq = 0.0;
  for (double v : r.average) sq += v * v;
  r.chi2 = 12.0 * static_cast<double>(d) / (md * (md + 1.0)) * (sq - md * (md + 1.0) * (md + 1.0) / 4.0);
  if (std::abs(r.chi2) < 1e-12) r.chi2 = 0.0;
  r.cd = critical_difference(m, d, alpha);
  const boost::math::chi_squared dist(md - 1.0);
  r.critical = boost::math::quantile(dist, 1.0 - alpha);
  r.significant = r.chi2 > r.critical;

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return r.average[a] < r.average[b]; });
  std::size_t reach = 0;
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t j = i;
    while (j + 1 < m && r.average[order[j + 1]] - r.average[order[i]] < r.cd) ++j;
    if (i > 0 && j <= reach) continue;
    reach = j;
    std::vector<std::size_t> group(order.begin() + static_cast<std::ptrdiff_t>(i),
                                   order.begin() + static_cast<std::ptrdiff_t>(j + 1));
    r.groups.push_back(std::move(group));
  }
  return r;
}

}  // namespace tscf
