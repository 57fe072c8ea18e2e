#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gramevo/dataset.hpp"
#include "gramevo/dense_net.hpp"
#include "gramevo/phenotype.hpp"

namespace gramevo {

// ---------------------------------------------------------------------------
// Fitness evaluation. Evaluators receive a decoded network descriptor plus a
// per-individual seed and return a report; the engine treats higher fitness
// as better. Implementations must be safe to call from several threads at
// once, and must depend only on (descriptor, seed) so that re-evaluating an
// individual reproduces its score exactly.
// ---------------------------------------------------------------------------

struct EvaluationBudget {
  int epochs = 10;
  int batch_size = 125;
  double learning_rate = 0.01;
  double momentum = 0.9;
};

struct FitnessReport {
  double fitness = 0.0;
  bool valid = false;
  double train_accuracy = 0.0;
  double elapsed_seconds = 0.0;
  std::string failure_reason;
};

class FitnessEvaluator {
 public:
  virtual ~FitnessEvaluator() = default;
  virtual FitnessReport evaluate(const NetworkDescriptor& nd, std::uint64_t eval_seed) const = 0;
};

// ---------------------------------------------------------------------------
// Surrogate evaluator: scores a descriptor by similarity to a fixed target
// architecture, no training involved. With n candidate layers and n* target
// layers the score is
//
//   exp(-|n - n*| / n*)  *  mean over i < min(n, n*) of f_i
//
// where f_i is the fraction of attribute pairs shared by candidate layer i
// and target layer i: |matching (key, value) pairs| / max(|cand_i|, |tgt_i|).
// A candidate identical to the target scores exactly 1.
// ---------------------------------------------------------------------------

class SurrogateEvaluator : public FitnessEvaluator {
 public:
  explicit SurrogateEvaluator(NetworkDescriptor target) : target_(std::move(target)) {}

  const NetworkDescriptor& target() const { return target_; }

  static double layer_fraction(const LayerDescriptor& a, const LayerDescriptor& b) {
    std::size_t denom = std::max(a.attrs.size(), b.attrs.size());
    if (denom == 0) return 1.0;
    std::size_t matched = 0;
    for (const auto& [key, value] : a.attrs) {
      const std::string* other = b.attr(key);
      if (other && *other == value) ++matched;
    }
    return static_cast<double>(matched) / static_cast<double>(denom);
  }

  double similarity(const NetworkDescriptor& nd) const {
    const std::size_t n = nd.layers.size();
    const std::size_t target_n = target_.layers.size();
    double depth_term = std::exp(-std::abs(static_cast<double>(n) - static_cast<double>(target_n)) /
                                 static_cast<double>(target_n));
    std::size_t compared = std::min(n, target_n);
    if (compared == 0) return 0.0;
    double total = 0;
    for (std::size_t i = 0; i < compared; ++i)
      total += layer_fraction(nd.layers[i], target_.layers[i]);
    return depth_term * (total / static_cast<double>(compared));
  }

  FitnessReport evaluate(const NetworkDescriptor& nd, std::uint64_t) const override {
    auto start = std::chrono::steady_clock::now();
    FitnessReport report;
    report.fitness = similarity(nd);
    report.valid = true;
    report.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
  }

 private:
  NetworkDescriptor target_;
};

// ---------------------------------------------------------------------------
// Dense trainer evaluator: trains the candidate as a dense network on the
// held dataset and reports the best validation accuracy reached across the
// epoch budget. Candidates the trainer cannot express (non-dense layers,
// exotic activations, missing attributes) are invalid with fitness 0, as are
// runs that diverge numerically.
// ---------------------------------------------------------------------------

class DenseTrainerEvaluator : public FitnessEvaluator {
 public:
  DenseTrainerEvaluator(DatasetSplit data, EvaluationBudget budget)
      : data_(std::move(data)), budget_(budget) {}

  const DatasetSplit& data() const { return data_; }
  const EvaluationBudget& budget() const { return budget_; }

  // Resolves the descriptor against the dataset: forces the output layer to
  // the class count and honours any learning-section overrides of the
  // learning rate or momentum.
  struct Resolved {
    bool ok = false;
    DenseNetSpec spec;
    TrainOptions options;
    std::string reason;
  };

  Resolved resolve(const NetworkDescriptor& nd) const {
    Resolved out;
    NetworkDescriptor adjusted;
    try {
      adjusted = apply_output_override(nd, data_.num_classes);
    } catch (const PhenotypeError& e) {
      out.reason = e.what();
      return out;
    }
    DenseBuildResult built = build_dense_spec(adjusted, data_.feature_dim);
    if (!built.ok) {
      out.reason = built.reason;
      return out;
    }
    out.spec = std::move(built.spec);
    out.options.epochs = budget_.epochs;
    // A budget batch larger than the train split degrades to full-batch
    // descent instead of failing the evaluation.
    out.options.batch_size = std::min(budget_.batch_size, static_cast<int>(data_.train.size()));
    out.options.learning_rate = budget_.learning_rate;
    out.options.momentum = budget_.momentum;
    for (const auto& [key, value] : nd.learning) {
      double parsed = 0;
      if (key == "lr" && parse_double(value, parsed)) out.options.learning_rate = parsed;
      if (key == "momentum" && parse_double(value, parsed)) out.options.momentum = parsed;
    }
    out.ok = true;
    return out;
  }

  // Trains the descriptor and returns the full outcome; used directly by
  // callers that want the trained model (for test-set scoring or ensembles).
  TrainOutcome train(const NetworkDescriptor& nd, std::uint64_t eval_seed) const {
    Resolved resolved = resolve(nd);
    if (!resolved.ok) {
      TrainOutcome failed;
      failed.numerical_failure = true;
      return failed;
    }
    resolved.options.seed = eval_seed;
    return train_dense_model(resolved.spec, data_, resolved.options);
  }

  FitnessReport evaluate(const NetworkDescriptor& nd, std::uint64_t eval_seed) const override {
    auto start = std::chrono::steady_clock::now();
    FitnessReport report;
    Resolved resolved = resolve(nd);
    if (!resolved.ok) {
      report.failure_reason = resolved.reason;
      report.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      return report;
    }
    resolved.options.seed = eval_seed;
    TrainOutcome outcome = train_dense_model(resolved.spec, data_, resolved.options);
    if (outcome.numerical_failure) {
      report.failure_reason = "numerical failure during training";
    } else {
      report.fitness = outcome.best_val_accuracy;
      report.valid = true;
      report.train_accuracy = outcome.train_accuracy;
    }
    report.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
  }

 private:
  DatasetSplit data_;
  EvaluationBudget budget_;
};

}  // namespace gramevo
