#include "tscf/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "tscf/errors.hpp"
#include "tscf/rng.hpp"
#include "tscf/synthetic.hpp"

namespace tscf {

namespace fs = std::filesystem;

std::size_t Dataset::channels() const {
  if (!train.empty()) return train.front().series.channels();
  if (!test.empty()) return test.front().series.channels();
  return 0;
}

std::size_t Dataset::steps() const {
  if (!train.empty()) return train.front().series.steps();
  if (!test.empty()) return test.front().series.steps();
  return 0;
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (const auto& inst : train) {
    if (inst.label < num_classes) ++counts[inst.label];
  }
  return counts;
}

void Dataset::validate() const {
  if (train.empty() && test.empty()) throw DataError("dataset '" + name + "' is empty");
  const std::size_t n = channels();
  const std::size_t t = steps();
  if (n < 1 || t < 2) {
    throw DataError("dataset '" + name + "': series must have >= 1 channel and >= 2 steps");
  }
  auto check = [&](const std::vector<LabeledInstance>& split, const char* which) {
    for (std::size_t i = 0; i < split.size(); ++i) {
      const auto& inst = split[i];
      if (inst.series.channels() != n || inst.series.steps() != t) {
        throw DataError("dataset '" + name + "': " + which + " instance " + std::to_string(i) +
                        " has shape " + std::to_string(inst.series.channels()) + "x" +
                        std::to_string(inst.series.steps()) + ", expected " +
                        std::to_string(n) + "x" + std::to_string(t));
      }
      if (inst.label >= num_classes) {
        throw DataError("dataset '" + name + "': " + which + " instance " + std::to_string(i) +
                        " has label " + std::to_string(inst.label) + " >= " +
                        std::to_string(num_classes));
      }
      if (!inst.series.all_finite()) {
        throw DataError("dataset '" + name + "': " + which + " instance " + std::to_string(i) +
                        " contains a non-finite value");
      }
    }
  };
  check(train, "train");
  check(test, "test");
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

/// Splits on tab if present, else comma, else runs of spaces.
std::vector<std::string_view> split_fields(std::string_view line) {
  char delim = ' ';
  if (line.find('\t') != std::string_view::npos) {
    delim = '\t';
  } else if (line.find(',') != std::string_view::npos) {
    delim = ',';
  }
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos <= line.size()) {
    auto next = line.find(delim, pos);
    if (next == std::string_view::npos) next = line.size();
    auto field = line.substr(pos, next - pos);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\r')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\r')) field.remove_suffix(1);
    if (delim != ' ' || !field.empty()) out.push_back(field);
    pos = next + 1;
  }
  return out;
}

/// Parses a decimal number. Returns false on malformed text; NaN/inf parse
/// successfully and are rejected by the caller.
bool parse_number(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    lines.push_back(std::move(t));
  }
  return lines;
}

std::vector<double> parse_row(std::string_view line, const fs::path& path, std::size_t row) {
  const auto fields = split_fields(line);
  std::vector<double> values;
  values.reserve(fields.size());
  for (std::size_t j = 0; j < fields.size(); ++j) {
    double v = 0.0;
    if (!parse_number(fields[j], v)) {
      throw FormatError(path.string() + ": row " + std::to_string(row) + ", column " +
                        std::to_string(j) + ": cannot parse '" + std::string(fields[j]) + "'");
    }
    if (!std::isfinite(v)) {
      throw DataError(path.string() + ": row " + std::to_string(row) + ", column " +
                      std::to_string(j) + ": non-finite or missing value");
    }
    values.push_back(v);
  }
  return values;
}

std::vector<LabeledInstance> remap(const RawSplit& raw, const std::vector<double>& classes) {
  std::vector<LabeledInstance> out;
  out.reserve(raw.rows.size());
  for (std::size_t i = 0; i < raw.rows.size(); ++i) {
    const auto it = std::lower_bound(classes.begin(), classes.end(), raw.labels[i]);
    out.push_back({TimeSeries::univariate(raw.rows[i]),
                   static_cast<std::size_t>(it - classes.begin())});
  }
  return out;
}

}  // namespace

RawSplit read_univariate_split(const fs::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw DataError(path.string() + ": empty file");
  RawSplit split;
  std::size_t columns = 0;
  for (std::size_t r = 0; r < lines.size(); ++r) {
    auto row = parse_row(lines[r], path, r);
    if (r == 0) columns = row.size();
    if (row.size() != columns) {
      throw FormatError(path.string() + ": row " + std::to_string(r) + " has " +
                        std::to_string(row.size()) + " columns, expected " +
                        std::to_string(columns));
    }
    if (row.size() < 3) {
      throw FormatError(path.string() + ": row " + std::to_string(r) +
                        " needs a label and at least two values");
    }
    split.labels.push_back(row.front());
    row.erase(row.begin());
    split.rows.push_back(std::move(row));
  }
  return split;
}

Dataset load_univariate_tsv(const fs::path& train_path, const fs::path& test_path,
                            std::string name) {
  const RawSplit train = read_univariate_split(train_path);
  RawSplit test;
  if (!test_path.empty()) test = read_univariate_split(test_path);
  if (!test.rows.empty() && test.rows.front().size() != train.rows.front().size()) {
    throw FormatError("train and test splits have different series lengths (" +
                      std::to_string(train.rows.front().size()) + " vs " +
                      std::to_string(test.rows.front().size()) + ")");
  }
  std::set<double> labels(train.labels.begin(), train.labels.end());
  labels.insert(test.labels.begin(), test.labels.end());

  Dataset d;
  d.name = name.empty() ? train_path.stem().string() : std::move(name);
  d.original_labels.assign(labels.begin(), labels.end());
  d.num_classes = d.original_labels.size();
  d.train = remap(train, d.original_labels);
  d.test = remap(test, d.original_labels);
  d.validate();
  return d;
}

Dataset load_univariate_tsv(const fs::path& path) { return load_univariate_tsv(path, {}, {}); }

MultivariateManifest read_manifest(const fs::path& path) {
  MultivariateManifest m;
  for (const auto& line : read_lines(path)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError(path.string() + ": expected key=value, got '" + line + "'");
    }
    const auto key = trim(std::string_view(line).substr(0, eq));
    const auto value = trim(std::string_view(line).substr(eq + 1));
    auto as_count = [&](const std::string& v) {
      std::size_t out = 0;
      const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
      if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
        throw FormatError(path.string() + ": '" + key + "' must be a non-negative integer");
      }
      return out;
    };
    if (key == "name") {
      m.name = value;
    } else if (key == "channels") {
      m.channels = as_count(value);
    } else if (key == "steps") {
      m.steps = as_count(value);
    } else if (key == "classes") {
      m.classes = as_count(value);
    } else if (key == "train") {
      m.train_file = value;
    } else if (key == "test") {
      m.test_file = value;
    } else {
      throw FormatError(path.string() + ": unknown manifest key '" + key + "'");
    }
  }
  if (m.channels < 1 || m.steps < 2 || m.classes < 1) {
    throw FormatError(path.string() + ": manifest needs channels >= 1, steps >= 2, classes >= 1");
  }
  return m;
}

namespace {

std::vector<LabeledInstance> read_multivariate_split(const fs::path& path,
                                                     const MultivariateManifest& m) {
  const auto lines = read_lines(path);
  std::vector<LabeledInstance> out;
  const std::size_t block = m.channels + 1;
  auto shape_error = [&](std::size_t inst, const std::string& detail) {
    return FormatError(path.string() + ": instance " + std::to_string(inst) + ": " + detail +
                       " (expected " + std::to_string(m.channels) + "x" +
                       std::to_string(m.steps) + " values followed by one label row)");
  };
  for (std::size_t start = 0, inst = 0; start < lines.size(); start += block, ++inst) {
    if (start + block > lines.size()) {
      throw shape_error(inst, "file ends after " + std::to_string(lines.size() - start) + " rows");
    }
    std::vector<double> values;
    values.reserve(m.channels * m.steps);
    for (std::size_t c = 0; c < m.channels; ++c) {
      const auto row = parse_row(lines[start + c], path, start + c);
      if (row.size() != m.steps) {
        throw shape_error(inst, "channel " + std::to_string(c) + " has " +
                                    std::to_string(row.size()) + " values");
      }
      values.insert(values.end(), row.begin(), row.end());
    }
    const auto label_row = parse_row(lines[start + m.channels], path, start + m.channels);
    if (label_row.size() != 1) {
      throw shape_error(inst, "label row has " + std::to_string(label_row.size()) + " values");
    }
    const double label = label_row.front();
    if (label < 0 || label != std::floor(label) || label >= static_cast<double>(m.classes)) {
      throw FormatError(path.string() + ": instance " + std::to_string(inst) + ": label " +
                        format_double(label) + " is not an integer in [0, " +
                        std::to_string(m.classes) + ")");
    }
    out.push_back({TimeSeries(m.channels, m.steps, std::move(values)),
                   static_cast<std::size_t>(label)});
  }
  return out;
}

}  // namespace

Dataset load_multivariate(const fs::path& path) {
  const fs::path manifest_path = fs::is_directory(path) ? path / "manifest.txt" : path;
  const fs::path dir = manifest_path.parent_path();
  const auto m = read_manifest(manifest_path);
  Dataset d;
  d.name = m.name.empty() ? dir.filename().string() : m.name;
  d.num_classes = m.classes;
  d.train = read_multivariate_split(dir / m.train_file, m);
  if (fs::exists(dir / m.test_file)) d.test = read_multivariate_split(dir / m.test_file, m);
  if (d.train.empty()) throw DataError(manifest_path.string() + ": train split is empty");
  d.validate();
  return d;
}

namespace {

Dataset load_synthetic(const std::string& spec) {
  std::string kind = spec;
  synthetic::Options opt;
  const auto q = spec.find('?');
  if (q != std::string::npos) {
    kind = spec.substr(0, q);
    std::stringstream ss(spec.substr(q + 1));
    std::string kv;
    while (std::getline(ss, kv, '&')) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("synthetic option '" + kv + "' lacks '='");
      const auto key = kv.substr(0, eq);
      const auto val = kv.substr(eq + 1);
      try {
        if (key == "seed") {
          opt.seed = std::stoull(val);
        } else if (key == "train") {
          opt.train = std::stoull(val);
        } else if (key == "test") {
          opt.test = std::stoull(val);
        } else if (key == "steps") {
          opt.steps = std::stoull(val);
        } else if (key == "channels") {
          opt.channels = std::stoull(val);
        } else if (key == "noise") {
          opt.noise = std::stod(val);
        } else {
          throw ConfigError("unknown synthetic option '" + key + "'");
        }
      } catch (const std::logic_error&) {
        throw ConfigError("bad value for synthetic option '" + key + "': " + val);
      }
    }
  }
  return synthetic::make(kind, opt);
}

fs::path find_split(const fs::path& dir, const std::string& suffix) {
  const std::string stem = dir.filename().string();
  for (const char* ext : {".tsv", ".txt", ".csv"}) {
    const auto p = dir / (stem + suffix + ext);
    if (fs::exists(p)) return p;
  }
  return {};
}

}  // namespace

Dataset load_dataset(const std::string& reference) {
  constexpr std::string_view prefix = "synthetic:";
  if (reference.starts_with(prefix)) return load_synthetic(reference.substr(prefix.size()));
  const fs::path p(reference);
  if (fs::is_directory(p)) {
    if (fs::exists(p / "manifest.txt")) return load_multivariate(p);
    const auto train = find_split(p, "_TRAIN");
    if (train.empty()) {
      throw DataError("'" + reference + "' holds neither manifest.txt nor " +
                      p.filename().string() + "_TRAIN.tsv");
    }
    return load_univariate_tsv(train, find_split(p, "_TEST"), p.filename().string());
  }
  if (p.filename() == "manifest.txt") return load_multivariate(p);
  if (fs::is_regular_file(p)) {
    std::string s = p.string();
    const auto pos = s.rfind("_TRAIN");
    if (pos != std::string::npos) {
      std::string test = s;
      test.replace(pos, 6, "_TEST");
      const auto name = p.filename().string().substr(0, p.filename().string().rfind("_TRAIN"));
      return load_univariate_tsv(p, fs::exists(test) ? fs::path(test) : fs::path{}, name);
    }
    return load_univariate_tsv(p);
  }
  throw DataError("dataset '" + reference + "' not found");
}

void write_univariate_tsv(const Dataset& d, const fs::path& train_path,
                          const fs::path& test_path) {
  if (d.channels() != 1) throw ContractError("write_univariate_tsv: dataset is multivariate");
  auto write = [&](const std::vector<LabeledInstance>& split, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    for (const auto& inst : split) {
      const double label = inst.label < d.original_labels.size()
                               ? d.original_labels[inst.label]
                               : static_cast<double>(inst.label);
      out << format_double(label);
      for (double v : inst.series.flat()) out << '\t' << format_double(v);
      out << '\n';
    }
  };
  write(d.train, train_path);
  if (!test_path.empty()) write(d.test, test_path);
}

void write_multivariate(const Dataset& d, const fs::path& dir) {
  fs::create_directories(dir);
  {
    std::ofstream m(dir / "manifest.txt");
    if (!m) throw DataError("cannot write manifest in '" + dir.string() + "'");
    m << "name=" << d.name << "\nchannels=" << d.channels() << "\nsteps=" << d.steps()
      << "\nclasses=" << d.num_classes << "\ntrain=train.txt\ntest=test.txt\n";
  }
  auto write = [&](const std::vector<LabeledInstance>& split, const fs::path& path) {
    std::ofstream out(path);
    for (const auto& inst : split) {
      for (std::size_t c = 0; c < inst.series.channels(); ++c) {
        const auto ch = inst.series.channel(c);
        for (std::size_t t = 0; t < ch.size(); ++t) out << (t ? "\t" : "") << format_double(ch[t]);
        out << '\n';
      }
      out << inst.label << '\n';
    }
  };
  write(d.train, dir / "train.txt");
  write(d.test, dir / "test.txt");
}

Dataset z_normalize(const Dataset& d) {
  const std::size_t n = d.channels();
  std::vector<double> mean(n, 0.0), sd(n, 0.0);
  std::vector<double> count(n, 0.0);
  for (const auto& inst : d.train) {
    for (std::size_t c = 0; c < n; ++c) {
      for (double v : inst.series.channel(c)) {
        mean[c] += v;
        count[c] += 1.0;
      }
    }
  }
  for (std::size_t c = 0; c < n; ++c) mean[c] /= std::max(count[c], 1.0);
  for (const auto& inst : d.train) {
    for (std::size_t c = 0; c < n; ++c) {
      for (double v : inst.series.channel(c)) sd[c] += (v - mean[c]) * (v - mean[c]);
    }
  }
  for (std::size_t c = 0; c < n; ++c) sd[c] = std::sqrt(sd[c] / std::max(count[c], 1.0));

  Dataset out = d;
  auto apply = [&](std::vector<LabeledInstance>& split) {
    for (auto& inst : split) {
      for (std::size_t c = 0; c < n; ++c) {
        for (double& v : inst.series.channel(c)) {
          v -= mean[c];
          if (sd[c] > 0) v /= sd[c];
        }
      }
    }
  };
  apply(out.train);
  apply(out.test);
  return out;
}

StratifiedSample stratified_sample(const std::vector<std::size_t>& labels, std::size_t n,
                                   std::uint64_t seed) {
  StratifiedSample out;
  const std::size_t total = labels.size();
  if (n >= total) {
    out.indices.resize(total);
    std::iota(out.indices.begin(), out.indices.end(), std::size_t{0});
    out.truncated = n > total;
    return out;
  }
  const std::size_t classes =
      labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::vector<std::size_t>> members(classes);
  for (std::size_t i = 0; i < total; ++i) members[labels[i]].push_back(i);

  // Exact largest-remainder quotas: n * m_c = quota * total + remainder.
  std::vector<std::size_t> quota(classes), remainder(classes);
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    quota[c] = n * members[c].size() / total;
    remainder[c] = n * members[c].size() % total;
    assigned += quota[c];
  }
  std::vector<std::size_t> order(classes);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++quota[order[i]];

  Rng rng(seed);
  for (std::size_t c = 0; c < classes; ++c) {
    auto pool = members[c];
    rng.shuffle(pool);
    out.indices.insert(out.indices.end(), pool.begin(), pool.begin() + quota[c]);
  }
  std::sort(out.indices.begin(), out.indices.end());
  return out;
}

StratifiedSample stratified_sample(const std::vector<LabeledInstance>& instances, std::size_t n,
                                   std::uint64_t seed) {
  std::vector<std::size_t> labels;
  labels.reserve(instances.size());
  for (const auto& inst : instances) labels.push_back(inst.label);
  return stratified_sample(labels, n, seed);
}

}  // namespace tscf
