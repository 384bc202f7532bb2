#include "unidg/memory_bank.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "unidg/error.hpp"

namespace unidg {

PseudoLabels pseudo_label(const Tensor2& probs) {
  PseudoLabels out;
  out.labels.resize(probs.rows());
  out.entropies.resize(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const auto p = probs.row(i);
    std::size_t best = 0;
    double h = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) {
      if (p[c] > p[best]) best = c;
      if (p[c] > 0.0) h -= p[c] * std::log(p[c]);
    }
    out.labels[i] = best;
    out.entropies[i] = std::max(h, 0.0);
  }
  return out;
}

bool support_precedes(const SupportRecord& a, const SupportRecord& b) noexcept {
  if (a.entropy != b.entropy) return a.entropy < b.entropy;
  return a.step > b.step;
}

MemoryBank MemoryBank::init_from_classifier(const LinearClassifier& classifier,
                                            std::size_t capacity_per_class, std::size_t top_k) {
  if (capacity_per_class == 0) throw ConfigError("memory bank capacity must be positive");
  if (top_k == 0) throw ConfigError("memory bank top_k must be positive");
  MemoryBank bank;
  bank.feature_dim_ = classifier.feature_dim();
  bank.capacity_ = capacity_per_class;
  bank.top_k_ = top_k;
  bank.supports_.resize(classifier.num_classes());
  bank.observed_.assign(classifier.num_classes(), false);
  bank.prototypes_.reserve(classifier.num_classes());
  for (std::size_t j = 0; j < classifier.num_classes(); ++j)
    bank.prototypes_.push_back(classifier.omega().column(j));
  return bank;
}

void MemoryBank::insert(const Tensor2& features, std::span<const std::size_t> labels,
                        std::span<const double> entropies) {
  if (features.cols() != feature_dim_) {
    throw DimensionError("memory bank: feature width " + std::to_string(features.cols()) +
                         ", expected " + std::to_string(feature_dim_));
  }
  if (labels.size() != features.rows() || entropies.size() != features.rows()) {
    throw DimensionError("memory bank: one label and entropy per row required");
  }
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const std::size_t c = labels[i];
    if (c >= supports_.size()) throw DataError("memory bank: class " + std::to_string(c) + " out of range");
    const auto row = features.row(i);
    SupportRecord rec{{row.begin(), row.end()}, entropies[i], arrivals_++};
    auto& list = supports_[c];
    list.insert(std::upper_bound(list.begin(), list.end(), rec, support_precedes), std::move(rec));
    if (list.size() > capacity_) list.pop_back();
    observed_[c] = true;
  }
}

std::vector<SupportRecord> MemoryBank::selected(std::size_t cls) const {
  const auto& list = supports_.at(cls);
  const std::size_t k = std::min(top_k_, list.size());
  return {list.begin(), list.begin() + static_cast<std::ptrdiff_t>(k)};
}

const std::vector<std::vector<double>>& MemoryBank::compute_prototypes() {
  for (std::size_t c = 0; c < supports_.size(); ++c) {
    const auto& list = supports_[c];
    if (list.empty()) continue;
    const std::size_t k = std::min(top_k_, list.size());
    std::vector<double> v(feature_dim_, 0.0);
    for (std::size_t r = 0; r < k; ++r)
      for (std::size_t j = 0; j < feature_dim_; ++j) v[j] += list[r].feature[j];
    for (double& x : v) x /= static_cast<double>(k);
    prototypes_[c] = std::move(v);
  }
  return prototypes_;
}

void MemoryBank::refresh(LinearClassifier& classifier) const {
  if (classifier.feature_dim() != feature_dim_ || classifier.num_classes() != supports_.size()) {
    throw DimensionError("memory bank: classifier shape does not match the bank");
  }
  for (std::size_t c = 0; c < supports_.size(); ++c) {
    if (!observed_[c]) continue;
    classifier.omega().set_column(c, prototypes_[c]);
    classifier.bias()[c] = 0.0;
  }
}

void MemoryBank::clear_supports() {
  for (auto& list : supports_) list.clear();
}

}  // namespace unidg
