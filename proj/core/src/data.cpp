#include "unidg/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "unidg/error.hpp"

namespace unidg {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<double> unit_gaussian(std::mt19937_64& rng, std::size_t d) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(d);
  double n = 0.0;
  for (double& x : v) {
    x = normal(rng);
    n += x * x;
  }
  n = std::sqrt(n);
  for (double& x : v) x /= n;
  return v;
}

// Two orthonormal directions drawn uniformly from the sphere.
std::pair<std::vector<double>, std::vector<double>> random_plane(std::mt19937_64& rng,
                                                                 std::size_t d) {
  std::vector<double> u = unit_gaussian(rng, d);
  std::vector<double> v = unit_gaussian(rng, d);
  double dot = 0.0;
  for (std::size_t i = 0; i < d; ++i) dot += u[i] * v[i];
  double n = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    v[i] -= dot * u[i];
    n += v[i] * v[i];
  }
  n = std::sqrt(n);
  for (double& x : v) x /= n;
  return {std::move(u), std::move(v)};
}

DomainDataset sample_domain(std::mt19937_64& rng, const ShiftSpec& spec, const Tensor2& means,
                            const Tensor2& transform, std::span<const double> offset,
                            std::size_t n, std::string id) {
  const std::size_t d = spec.input_dim;
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor2 raw(n, d);
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = i % spec.num_classes;
    for (std::size_t k = 0; k < d; ++k)
      raw(i, k) = means(labels[i], k) + spec.covariance_scale * normal(rng);
  }
  Tensor2 moved = matmul_transpose_b(raw, transform);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) moved(i, k) += offset[k];

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  DomainDataset ds;
  ds.features = gather_rows(moved, order);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = labels[order[i]];
  ds.domain_id = std::move(id);
  ds.metadata["generator"] = "synthetic";
  ds.metadata["seed"] = std::to_string(spec.seed);
  return ds;
}

std::vector<double> parse_doubles(const std::string& text) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0') throw ConfigError("bad number '" + tok + "'");
    out.push_back(v);
  }
  return out;
}

std::string join_doubles(std::span<const double> v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    out += fmt17(v[i]);
  }
  return out;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

std::size_t DomainDataset::label_span() const noexcept {
  std::size_t m = 0;
  for (std::size_t y : labels) m = std::max(m, y + 1);
  return m;
}

void validate(const DomainDataset& ds, std::optional<std::size_t> num_classes) {
  if (ds.labels.empty()) throw DataError("dataset '" + ds.domain_id + "' is empty");
  if (ds.features.rows() != ds.labels.size()) {
    throw DimensionError("dataset '" + ds.domain_id + "': feature rows and labels disagree");
  }
  if (num_classes) {
    for (std::size_t y : ds.labels) {
      if (y >= *num_classes) {
        throw DataError("dataset '" + ds.domain_id + "': label " + std::to_string(y) +
                        " outside [0, " + std::to_string(*num_classes) + ")");
      }
    }
  }
  if (!all_finite(ds.features)) throw DataError("dataset '" + ds.domain_id + "' has non-finite features");
}

DomainDataset concatenate(std::span<const DomainDataset> parts, std::string domain_id) {
  if (parts.empty()) throw DataError("concatenate: nothing to concatenate");
  const std::size_t d = parts.front().input_dim();
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (p.input_dim() != d) throw DimensionError("concatenate: input widths differ");
    n += p.size();
  }
  DomainDataset out;
  out.features = Tensor2(n, d);
  out.labels.reserve(n);
  std::size_t r = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < p.size(); ++i, ++r) {
      std::copy(p.features.row(i).begin(), p.features.row(i).end(), out.features.row(r).begin());
      out.labels.push_back(p.labels[i]);
    }
  }
  out.domain_id = std::move(domain_id);
  return out;
}

DomainDataset subset(const DomainDataset& ds, std::span<const std::size_t> indices) {
  DomainDataset out;
  out.features = gather_rows(ds.features, indices);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) out.labels.push_back(ds.labels.at(i));
  out.domain_id = ds.domain_id;
  out.metadata = ds.metadata;
  return out;
}

const char* to_string(ShiftKind kind) noexcept {
  switch (kind) {
    case ShiftKind::rotation: return "rotation";
    case ShiftKind::mean_translation: return "mean_translation";
    case ShiftKind::affine: return "affine";
  }
  return "rotation";
}

ShiftKind parse_shift_kind(const std::string& text) {
  if (text == "rotation") return ShiftKind::rotation;
  if (text == "mean_translation") return ShiftKind::mean_translation;
  if (text == "affine") return ShiftKind::affine;
  throw ConfigError("unknown shift kind '" + text + "'");
}

void ShiftSpec::validate() const {
  if (num_classes < 2) throw ConfigError("shift spec: need at least 2 classes");
  if (input_dim < 2) throw ConfigError("shift spec: input_dim must be at least 2");
  if (!(angle_deg >= 0.0 && angle_deg <= 180.0)) {
    throw ConfigError("shift spec: angle " + fmt17(angle_deg) + " outside [0, 180]");
  }
  if (!(source_max_angle_deg >= 0.0 && source_max_angle_deg <= 180.0)) {
    throw ConfigError("shift spec: source angle outside [0, 180]");
  }
  if (!(covariance_scale > 0.0) || !std::isfinite(covariance_scale)) {
    throw ConfigError("shift spec: covariance scale must be positive");
  }
  if (!(separation >= 0.0) || !std::isfinite(separation)) {
    throw ConfigError("shift spec: separation must be non-negative");
  }
  if (!std::isfinite(translation_std)) throw ConfigError("shift spec: translation_std not finite");
  if (num_sources == 0) throw ConfigError("shift spec: need at least one source domain");
  if (samples_per_domain == 0 || target_samples == 0) throw ConfigError("shift spec: empty domain");
  if (!translation.empty() && translation.size() != input_dim) {
    throw ConfigError("shift spec: translation must have input_dim entries");
  }
  if (kind == ShiftKind::affine && affine.size() != input_dim * input_dim) {
    throw ConfigError("shift spec: affine matrix must be input_dim × input_dim");
  }
}

Tensor2 plane_rotation(std::span<const double> u, std::span<const double> v, double angle_rad) {
  if (u.size() != v.size()) throw DimensionError("plane_rotation: u and v differ in length");
  const std::size_t d = u.size();
  const double c = std::cos(angle_rad);
  const double s = std::sin(angle_rad);
  // R = I + (c−1)(uuᵀ + vvᵀ) + s(vuᵀ − uvᵀ)
  Tensor2 r = Tensor2::identity(d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      r(i, j) += (c - 1.0) * (u[i] * u[j] + v[i] * v[j]) + s * (v[i] * u[j] - u[i] * v[j]);
  return r;
}

SyntheticShift gen_synthetic_shift(const ShiftSpec& spec) {
  spec.validate();
  const std::size_t d = spec.input_dim;
  const std::size_t c_count = spec.num_classes;
  std::mt19937_64 rng(spec.seed);

  SyntheticShift out;
  const auto [u0, v0] = random_plane(rng, d);
  const double radius =
      spec.separation / (2.0 * std::sin(std::numbers::pi / static_cast<double>(c_count)));
  out.class_means = Tensor2(c_count, d);
  for (std::size_t c = 0; c < c_count; ++c) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(c_count);
    for (std::size_t k = 0; k < d; ++k)
      out.class_means(c, k) = radius * (std::cos(a) * u0[k] + std::sin(a) * v0[k]);
  }

  const std::vector<double> no_offset(d, 0.0);
  std::uniform_real_distribution<double> angle(-spec.source_max_angle_deg, spec.source_max_angle_deg);
  for (std::size_t s = 0; s < spec.num_sources; ++s) {
    const auto [u, v] = random_plane(rng, d);
    const double a = angle(rng) * std::numbers::pi / 180.0;
    Tensor2 r = plane_rotation(u, v, a);
    out.sources.push_back(sample_domain(rng, spec, out.class_means, r, no_offset,
                                        spec.samples_per_domain, "source" + std::to_string(s)));
    out.sources.back().metadata["rotation_deg"] = fmt17(a * 180.0 / std::numbers::pi);
    out.source_transforms.push_back(std::move(r));
  }

  switch (spec.kind) {
    case ShiftKind::rotation: {
      out.target_transform = plane_rotation(u0, v0, spec.angle_deg * std::numbers::pi / 180.0);
      const std::vector<double> dir = unit_gaussian(rng, d);
      out.target_offset.resize(d);
      for (std::size_t k = 0; k < d; ++k)
        out.target_offset[k] = spec.translation_std * spec.covariance_scale * dir[k];
      break;
    }
    case ShiftKind::mean_translation:
      out.target_transform = Tensor2::identity(d);
      out.target_offset = spec.translation.empty() ? no_offset : spec.translation;
      break;
    case ShiftKind::affine:
      out.target_transform = Tensor2(d, d, spec.affine);
      out.target_offset = spec.translation.empty() ? no_offset : spec.translation;
      break;
  }
  out.target = sample_domain(rng, spec, out.class_means, out.target_transform, out.target_offset,
                             spec.target_samples, "target");
  out.target.metadata["shift"] = to_string(spec.kind);
  return out;
}

std::string serialize_shift_spec(const ShiftSpec& spec) {
  std::ostringstream out;
  out << "num_classes=" << spec.num_classes << '\n'
      << "input_dim=" << spec.input_dim << '\n'
      << "separation=" << fmt17(spec.separation) << '\n'
      << "covariance_scale=" << fmt17(spec.covariance_scale) << '\n'
      << "kind=" << to_string(spec.kind) << '\n'
      << "angle_deg=" << fmt17(spec.angle_deg) << '\n'
      << "translation_std=" << fmt17(spec.translation_std) << '\n'
      << "translation=" << join_doubles(spec.translation) << '\n'
      << "affine=" << join_doubles(spec.affine) << '\n'
      << "num_sources=" << spec.num_sources << '\n'
      << "samples_per_domain=" << spec.samples_per_domain << '\n'
      << "target_samples=" << spec.target_samples << '\n'
      << "source_max_angle_deg=" << fmt17(spec.source_max_angle_deg) << '\n'
      << "seed=" << spec.seed << '\n';
  return out.str();
}

ShiftSpec parse_shift_spec(const std::string& text) {
  ShiftSpec spec;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto to_size = [&](const std::string& v) {
    char* end = nullptr;
    const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
    if (v.empty() || *end != '\0') throw ParseError("bad integer '" + v + "'", lineno);
    return static_cast<std::size_t>(x);
  };
  auto to_double = [&](const std::string& v) {
    const auto xs = parse_doubles(v);
    if (xs.size() != 1) throw ParseError("expected one number, got '" + v + "'", lineno);
    return xs.front();
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key=value", lineno);
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "num_classes") spec.num_classes = to_size(val);
    else if (key == "input_dim") spec.input_dim = to_size(val);
    else if (key == "separation") spec.separation = to_double(val);
    else if (key == "covariance_scale") spec.covariance_scale = to_double(val);
    else if (key == "kind") spec.kind = parse_shift_kind(val);
    else if (key == "angle_deg") spec.angle_deg = to_double(val);
    else if (key == "translation_std") spec.translation_std = to_double(val);
    else if (key == "translation") spec.translation = parse_doubles(val);
    else if (key == "affine") spec.affine = parse_doubles(val);
    else if (key == "num_sources") spec.num_sources = to_size(val);
    else if (key == "samples_per_domain") spec.samples_per_domain = to_size(val);
    else if (key == "target_samples") spec.target_samples = to_size(val);
    else if (key == "source_max_angle_deg") spec.source_max_angle_deg = to_double(val);
    else if (key == "seed") spec.seed = to_size(val);
    else throw ParseError("unknown key '" + key + "'", lineno);
  }
  return spec;
}

std::string to_csv(std::span<const DomainDataset> datasets) {
  if (datasets.empty()) throw DataError("to_csv: no datasets");
  const std::size_t d = datasets.front().input_dim();
  std::string out;
  for (std::size_t k = 0; k < d; ++k) out += "f" + std::to_string(k) + ",";
  out += "label,domain\n";
  for (const auto& ds : datasets) {
    if (ds.input_dim() != d) throw DimensionError("to_csv: datasets differ in width");
    if (ds.domain_id.find_first_of(",\n\r") != std::string::npos) {
      throw DataError("to_csv: domain id '" + ds.domain_id + "' contains a separator");
    }
    for (std::size_t i = 0; i < ds.size(); ++i) {
      for (double v : ds.features.row(i)) {
        out += fmt17(v);
        out += ',';
      }
      out += std::to_string(ds.labels[i]);
      out += ',';
      out += ds.domain_id;
      out += '\n';
    }
  }
  return out;
}

void write_csv(const std::filesystem::path& path, std::span<const DomainDataset> datasets) {
  const std::string text = to_csv(datasets);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw DataError("failed writing '" + path.string() + "'");
}

namespace {

struct CsvRows {
  std::size_t width = 0;
  std::vector<double> values;
  std::vector<std::size_t> labels;
  std::vector<std::string> domains;  // per row
};

CsvRows parse_rows(const std::string& text, std::optional<std::size_t> num_classes) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };

  if (!next_line()) throw ParseError("missing header", 1);
  const auto header = split_fields(line);
  if (header.size() < 3 || header[header.size() - 2] != "label" || header.back() != "domain") {
    throw ParseError("header must be f0,...,f{d-1},label,domain", lineno);
  }
  CsvRows rows;
  rows.width = header.size() - 2;
  for (std::size_t k = 0; k < rows.width; ++k) {
    if (header[k] != "f" + std::to_string(k)) {
      throw ParseError("header column " + std::to_string(k) + " should be f" + std::to_string(k), lineno);
    }
  }

  while (next_line()) {
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw SchemaError("line " + std::to_string(lineno) + ": expected " +
                        std::to_string(header.size()) + " fields, found " +
                        std::to_string(fields.size()));
    }
    for (std::size_t k = 0; k < rows.width; ++k) {
      const std::string& tok = fields[k];
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (tok.empty() || *end != '\0') throw ParseError("malformed number '" + tok + "'", lineno);
      if (!std::isfinite(v)) throw ParseError("non-finite feature '" + tok + "'", lineno);
      rows.values.push_back(v);
    }
    const std::string& lab = fields[rows.width];
    char* end = nullptr;
    const long long y = std::strtoll(lab.c_str(), &end, 10);
    if (lab.empty() || *end != '\0' || y < 0) throw ParseError("malformed label '" + lab + "'", lineno);
    if (num_classes && static_cast<std::size_t>(y) >= *num_classes) {
      throw DataError("line " + std::to_string(lineno) + ": label " + lab + " outside [0, " +
                      std::to_string(*num_classes) + ")");
    }
    rows.labels.push_back(static_cast<std::size_t>(y));
    rows.domains.push_back(fields.back());
  }
  if (rows.labels.empty()) throw DataError("csv has a header but no rows");
  return rows;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

std::vector<DomainDataset> parse_csv(const std::string& text, std::optional<std::size_t> num_classes) {
  CsvRows rows = parse_rows(text, num_classes);
  DomainDataset all;
  all.features = Tensor2(rows.labels.size(), rows.width, std::move(rows.values));
  all.labels = std::move(rows.labels);

  std::vector<std::string> order;
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < rows.domains.size(); ++i) {
    auto [it, fresh] = members.try_emplace(rows.domains[i]);
    if (fresh) order.push_back(rows.domains[i]);
    it->second.push_back(i);
  }
  std::vector<DomainDataset> out;
  for (const auto& dom : order) {
    out.push_back(subset(all, members.at(dom)));
    out.back().domain_id = dom;
  }
  return out;
}

std::vector<DomainDataset> load_csv_by_domain(const std::filesystem::path& path,
                                              std::optional<std::size_t> num_classes) {
  auto parts = parse_csv(read_file(path), num_classes);
  for (auto& p : parts) p.metadata["source_file"] = path.string();
  return parts;
}

DomainDataset load_csv(const std::filesystem::path& path, std::optional<std::size_t> num_classes) {
  CsvRows rows = parse_rows(read_file(path), num_classes);
  DomainDataset out;
  out.features = Tensor2(rows.labels.size(), rows.width, std::move(rows.values));
  out.labels = std::move(rows.labels);
  std::set<std::string> seen;
  for (const auto& dom : rows.domains) {
    if (!seen.insert(dom).second) continue;
    out.domain_id += (out.domain_id.empty() ? "" : "+") + dom;
  }
  out.metadata["source_file"] = path.string();
  return out;
}

HoldoutSplit split_holdout(const DomainDataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("holdout fraction must lie in (0, 1)");
  const std::size_t n = ds.size();
  const auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (n_val == 0 || n_val >= n) {
    throw DataError("dataset '" + ds.domain_id + "' with " + std::to_string(n) +
                    " rows is too small to split at fraction " + fmt17(fraction));
  }

  std::vector<std::vector<std::size_t>> by_class(ds.label_span());
  for (std::size_t i = 0; i < n; ++i) by_class[ds.labels[i]].push_back(i);

  std::vector<std::size_t> quota(by_class.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    const double exact = fraction * static_cast<double>(by_class[c].size());
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[c];
    remainders.emplace_back(exact - std::floor(exact), c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  while (assigned < n_val) {
    bool progressed = false;
    for (const auto& [rem, c] : remainders) {
      if (assigned == n_val) break;
      if (quota[c] < by_class[c].size()) {
        ++quota[c];
        ++assigned;
        progressed = true;
      }
    }
    if (!progressed) break;
  }

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> val_idx;
  std::vector<std::size_t> train_idx;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto idx = by_class[c];
    std::shuffle(idx.begin(), idx.end(), rng);
    val_idx.insert(val_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(quota[c]));
    train_idx.insert(train_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(quota[c]), idx.end());
  }
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(train_idx.begin(), train_idx.end());

  HoldoutSplit out{subset(ds, train_idx), subset(ds, val_idx)};
  out.train.metadata["split"] = "train";
  out.val.metadata["split"] = "val";
  return out;
}

}  // namespace unidg
