#include "unidg/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "unidg/error.hpp"
#include "unidg/layers.hpp"
#include "unidg/optimizer.hpp"

namespace unidg {

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("train: lr must be a finite value >= 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("train: weight_decay must be >= 0");
  if (batch_size < 2) throw ConfigError("train: batch_size must be at least 2");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw ConfigError("train: holdout_fraction must lie in (0, 1)");
  }
}

namespace {

void check_labels(std::size_t rows, std::size_t classes, std::span<const std::size_t> labels) {
  if (labels.size() != rows) throw DimensionError("cross entropy: one label per row required");
  for (std::size_t y : labels) {
    if (y >= classes) {
      throw DataError("cross entropy: label " + std::to_string(y) + " outside [0, " +
                      std::to_string(classes) + ")");
    }
  }
}

}  // namespace

LossValue cross_entropy_loss(const Tensor2& probs, std::span<const std::size_t> labels) {
  check_labels(probs.rows(), probs.cols(), labels);
  const std::size_t n = probs.rows();
  LossValue out{0.0, probs};
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.value -= std::log(probs(i, labels[i]));
    out.grad(i, labels[i]) -= 1.0;
  }
  out.value *= inv_n;
  for (double& g : out.grad.values()) g *= inv_n;
  return out;
}

LossValue cross_entropy_from_logits(const Tensor2& logits, std::span<const std::size_t> labels) {
  check_labels(logits.rows(), logits.cols(), labels);
  const std::size_t n = logits.rows();
  LossValue out{0.0, softmax_rows(logits)};
  if (n == 0) return out;
  const Tensor2 logp = log_softmax_rows(logits);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.value -= logp(i, labels[i]);
    out.grad(i, labels[i]) -= 1.0;
  }
  out.value *= inv_n;
  for (double& g : out.grad.values()) g *= inv_n;
  return out;
}

double accuracy(const MlpEncoder& encoder, const LinearClassifier& classifier,
                const DomainDataset& ds, NormMode mode) {
  if (ds.size() == 0) return 0.0;
  const Tensor2 logits = classifier.logits(encoder.forward(ds.features, mode));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto row = logits.row(i);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    hits += best == ds.labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

TrainResult train_source_erm(MlpEncoder encoder, LinearClassifier classifier,
                             std::span<const DomainDataset> sources, const TrainConfig& cfg) {
  cfg.validate();
  if (sources.empty()) throw DataError("train: no source domains");
  if (encoder.output_dim() != classifier.feature_dim()) {
    throw DimensionError("train: encoder output does not match classifier input");
  }

  TrainResult result;
  std::vector<DomainDataset> train_parts;
  for (std::size_t s = 0; s < sources.size(); ++s) {
    validate(sources[s], classifier.num_classes());
    if (sources[s].input_dim() != encoder.input_dim()) {
      throw DimensionError("train: source '" + sources[s].domain_id + "' has the wrong width");
    }
    auto split = split_holdout(sources[s], cfg.holdout_fraction, cfg.seed + s);
    train_parts.push_back(std::move(split.train));
    result.validation.push_back(std::move(split.val));
  }
  const DomainDataset pool = concatenate(train_parts, "pooled");
  const DomainDataset val = concatenate(result.validation, "holdout");

  AdamState adam;
  adam.weight_decay = cfg.weight_decay;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);

  result.val_accuracy = accuracy(encoder, classifier, val);
  result.encoder = encoder;
  result.classifier = classifier;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      if (stop - start < 2) continue;  // batch statistics need two rows
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      const Tensor2 x = gather_rows(pool.features, idx);
      std::vector<std::size_t> y;
      y.reserve(idx.size());
      for (std::size_t i : idx) y.push_back(pool.labels[i]);

      EncoderTrace trace;
      const Tensor2 feats = encoder.forward(x, NormMode::batch, &trace);
      const LossValue ce = cross_entropy_from_logits(classifier.logits(feats), y);
      const LinearGrads cg = classifier.backward(feats, ce.grad);
      const EncoderGrads eg = encoder.backward(trace, cg.input);
      encoder.absorb_batch_statistics(trace);

      auto params = encoder.parameters();
      auto grads = eg.views();
      for (auto p : classifier.parameters()) params.push_back(p);
      grads.emplace_back(cg.weight.values());
      grads.emplace_back(cg.bias);
      adam_step(params, grads, adam, cfg.lr);
      result.loss_trace.push_back(ce.value);
    }
    const double acc = accuracy(encoder, classifier, val);
    result.val_trace.push_back(acc);
    if (acc > result.val_accuracy) {
      result.val_accuracy = acc;
      result.best_epoch = epoch;
      result.encoder = encoder;
      result.classifier = classifier;
    }
  }
  return result;
}

}  // namespace unidg
