#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "unidg/model.hpp"
#include "unidg/tensor.hpp"

namespace unidg {

struct PseudoLabels {
  std::vector<std::size_t> labels;
  std::vector<double> entropies;
};

/// Argmax per row (ties go to the lowest class index) and the row's entropy.
PseudoLabels pseudo_label(const Tensor2& probs);

struct SupportRecord {
  std::vector<double> feature;
  double entropy = 0.0;
  std::size_t step = 0;  // arrival order, unique within a bank

  friend bool operator==(const SupportRecord&, const SupportRecord&) = default;
};

/// Ranking used for both eviction and selection: lower entropy first, and
/// among equal entropies the newer record first. Eviction drops from the back,
/// selection takes from the front.
bool support_precedes(const SupportRecord& a, const SupportRecord& b) noexcept;

/// Per-class store of confident target features and the prototypes derived
/// from them.
class MemoryBank {
 public:
  static MemoryBank init_from_classifier(const LinearClassifier& classifier,
                                         std::size_t capacity_per_class = 64,
                                         std::size_t top_k = 20);

  /// Appends each row to the support set of its pseudo-class, then trims every
  /// class back to capacity.
  void insert(const Tensor2& features, std::span<const std::size_t> labels,
              std::span<const double> entropies);

  /// The Top-K records of a class, best first.
  std::vector<SupportRecord> selected(std::size_t cls) const;

  /// Recomputes v_j as the mean of the selected features; classes without
  /// supports keep their previous prototype.
  const std::vector<std::vector<double>>& compute_prototypes();

  /// ω^j ← v_j and bias_j ← 0 for every class that has ever received a record.
  void refresh(LinearClassifier& classifier) const;

  /// Drops all support records. Observation flags and prototypes are kept.
  void clear_supports();

  std::size_t num_classes() const noexcept { return supports_.size(); }
  std::size_t feature_dim() const noexcept { return feature_dim_; }
  std::size_t capacity_per_class() const noexcept { return capacity_; }
  std::size_t top_k() const noexcept { return top_k_; }
  const std::vector<SupportRecord>& supports(std::size_t cls) const { return supports_.at(cls); }
  const std::vector<std::vector<double>>& prototypes() const noexcept { return prototypes_; }
  bool observed(std::size_t cls) const { return observed_.at(cls); }

 private:
  std::size_t feature_dim_ = 0;
  std::size_t capacity_ = 0;
  std::size_t top_k_ = 0;
  std::size_t arrivals_ = 0;
  std::vector<std::vector<SupportRecord>> supports_;  // kept sorted by support_precedes
  std::vector<std::vector<double>> prototypes_;
  std::vector<bool> observed_;
};

}  // namespace unidg
