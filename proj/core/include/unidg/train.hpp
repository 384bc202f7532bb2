#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "unidg/data.hpp"
#include "unidg/losses.hpp"
#include "unidg/model.hpp"

namespace unidg {

struct TrainConfig {
  double lr = 5e-5;
  double weight_decay = 0.0;
  std::size_t batch_size = 32;
  std::size_t epochs = 20;
  double holdout_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

/// −(1/N) Σ log p_{y_i}; the gradient is with respect to the logits,
/// (p − onehot(y)) / N.
LossValue cross_entropy_loss(const Tensor2& probs, std::span<const std::size_t> labels);
/// Same loss evaluated through log-softmax, for logits that may saturate.
LossValue cross_entropy_from_logits(const Tensor2& logits, std::span<const std::size_t> labels);

struct TrainResult {
  MlpEncoder encoder;
  LinearClassifier classifier;
  double val_accuracy = 0.0;
  std::size_t best_epoch = 0;           // 0 means the initialisation was never beaten
  std::vector<double> loss_trace;       // mean cross-entropy of every optimiser step
  std::vector<double> val_trace;        // validation accuracy after every epoch
  std::vector<DomainDataset> validation;  // per-source holdout splits
};

/// Fraction of rows whose argmax prediction equals the label.
double accuracy(const MlpEncoder& encoder, const LinearClassifier& classifier,
                const DomainDataset& ds, NormMode mode = NormMode::running);

/// Pooled-source ERM with Adam. Each source domain is split into train and
/// holdout parts; the model with the best pooled holdout accuracy is returned.
TrainResult train_source_erm(MlpEncoder encoder, LinearClassifier classifier,
                             std::span<const DomainDataset> sources, const TrainConfig& cfg);

}  // namespace unidg
