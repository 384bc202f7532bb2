#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "unidg/data.hpp"
#include "unidg/losses.hpp"
#include "unidg/memory_bank.hpp"
#include "unidg/model.hpp"

namespace unidg {

enum class Method { none, entropy_norm, pseudo_label, unidg };

const char* to_string(Method m) noexcept;
Method parse_method(const std::string& text);

struct AdaptConfig {
  double sigma = 0.15;
  double lambda_weight = 1.0;
  std::size_t top_k = 20;
  std::size_t capacity = 64;
  double lr = 5e-5;
  std::size_t batch_size = 32;
  /// Optimiser steps. Unset means one step per batch of a single pass.
  std::optional<std::size_t> steps;
  std::uint64_t seed = 0;
  bool enable_lm = true;
  bool enable_le = true;
  bool enable_li = false;
  bool enable_bank = true;
  bool enable_refresh = true;
  Method method = Method::unidg;

  void validate() const;
};

struct AccuracyCurve {
  std::vector<double> cumulative;  // after each evaluated batch
  double final_accuracy = 0.0;
  std::map<std::string, double> per_domain;
  std::optional<double> source_before;
  std::optional<double> source_after;
  std::map<std::string, double> source_before_by_domain;
  std::map<std::string, double> source_after_by_domain;
};

struct AdaptResult {
  ModelPair pair;
  AccuracyCurve curve;
  std::vector<LossReport> losses;  // one per optimiser step
  std::optional<MemoryBank> bank;
  std::size_t steps_taken = 0;
};

/// Streams the target in seeded batches. Each batch is first scored with the
/// current adapted model, then (while steps remain) used for one update.
/// Target labels are read only to score predictions. `source_eval`, when
/// non-empty, is scored with the frozen model before and the adapted model
/// after the stream.
AdaptResult adapt_stream(ModelPair pair, const DomainDataset& target, const AdaptConfig& cfg,
                         std::span<const DomainDataset> source_eval = {});

/// Entropy minimisation over the normalisation affine parameters only, with
/// per-batch statistics (requires norm layers).
AdaptResult adapt_entropy_norm(ModelPair pair, const DomainDataset& target, const AdaptConfig& cfg,
                               std::span<const DomainDataset> source_eval = {});

/// Cross-entropy against the model's own argmax labels, full model.
AdaptResult adapt_pseudo_label(ModelPair pair, const DomainDataset& target, const AdaptConfig& cfg,
                               std::span<const DomainDataset> source_eval = {});

/// Dispatches on cfg.method.
AdaptResult run_adaptation(ModelPair pair, const DomainDataset& target, const AdaptConfig& cfg,
                           std::span<const DomainDataset> source_eval = {});

/// Argmax predictions. In batch mode the rows are scored in chunks of
/// `batch_size`, a trailing single row joining the previous chunk.
std::vector<std::size_t> predict_labels(const MlpEncoder& encoder, const LinearClassifier& classifier,
                                        const Tensor2& x, NormMode mode, std::size_t batch_size);

}  // namespace unidg
