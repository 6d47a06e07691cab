#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "relab/dataset.hpp"

namespace relab {

enum class Activation { Relu, Tanh };
enum class Head { Embedding, SigmoidClassifier };
enum class OptimizerKind { Sgd, Adam };

/// Dense network shape: input -> hidden layers -> head. The embedding head
/// ends in a linear layer of embed_dim outputs; the classifier head ends in
/// a single sigmoid unit.
struct NetConfig {
  int input_dim = 0;
  std::vector<int> hidden_dims{32, 16};
  int embed_dim = 8;
  Activation activation = Activation::Relu;
  Head head = Head::SigmoidClassifier;
  std::uint64_t seed = 0;

  int output_dim() const { return head == Head::Embedding ? embed_dim : 1; }
  void validate() const;  // throws DataError on non-positive dims
};

/// One dense layer; weights row-major, shape rows x cols = out x in.
struct Layer {
  int in = 0;
  int out = 0;
  std::vector<double> w;  // out * in
  std::vector<double> b;  // out
};

struct NetParams {
  NetConfig config;
  std::vector<Layer> layers;

  std::size_t parameter_count() const;
};

/// Glorot-uniform initialization, seeded by config.seed.
NetParams init_params(const NetConfig& config);

/// Runs the network. Embedding head returns embed_dim values; sigmoid head
/// returns one probability in (0,1). Throws DataError on dimension mismatch
/// and NumericError when any intermediate is non-finite.
std::vector<double> forward(const NetParams& params, std::span<const double> x);

/// Per-layer intermediates kept for backprop.
struct ForwardTrace {
  std::vector<std::vector<double>> inputs;   // activation entering each layer
  std::vector<std::vector<double>> pre;      // pre-activation of each layer
  std::vector<double> output;                // network output (post head)
};

ForwardTrace forward_trace(const NetParams& params, std::span<const double> x);

/// Gradient container, shaped exactly like the parameters.
struct Gradients {
  std::vector<Layer> layers;

  double norm() const;
  void scale(double s);
};

Gradients zero_gradients(const NetParams& params);

/// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(output).
/// For the sigmoid head, `d_output` is w.r.t. the post-sigmoid probability.
void accumulate_output_gradient(const NetParams& params, const ForwardTrace& trace,
                                std::span<const double> d_output, Gradients& grads);

/// Binary cross-entropy; the probability is clamped to [1e-12, 1 - 1e-12].
double bce_loss(double prob, int label);

struct Example {
  std::string id;
  std::vector<double> features;
  int label = 0;
};

/// Pairs records with labels from `labels`, preserving record order;
/// records without an entry are skipped.
std::vector<Example> make_examples(const std::vector<SampleRecord>& records,
                                   const std::map<std::string, int>& labels);

/// Uses verified_label. Throws DataError naming the first unlabeled record.
std::vector<Example> make_examples_verified(const std::vector<SampleRecord>& records);

/// Sum-reduced BCE loss over the batch (classifier head only).
double bce_batch_loss(const NetParams& params, std::span<const Example> batch);

/// Gradient of the sum-reduced BCE batch loss. Throws DataError on an empty
/// batch, NumericError if the result is non-finite.
Gradients bce_backprop(const NetParams& params, std::span<const Example> batch);

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 100;
  double fine_tune_learning_rate = 1e-4;
  int fine_tune_epochs = 50;
  int batch_size = 1;
  double validation_fraction = 0.2;
  OptimizerKind optimizer = OptimizerKind::Adam;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainLog {
  std::vector<EpochStats> epochs;
  std::vector<std::string> warnings;
  int best_epoch = -1;  // -1 = initial parameters kept

  /// JSON lines, one `{epoch, train_loss, val_loss}` record per epoch.
  void write_jsonl(const std::filesystem::path& path) const;
};

/// Adam state (beta1 0.9, beta2 0.999, eps 1e-8).
struct AdamState {
  std::vector<Layer> m;
  std::vector<Layer> v;
  long step = 0;
};

AdamState init_adam(const NetParams& params);
void apply_sgd(NetParams& params, const Gradients& grads, double lr);
void apply_adam(NetParams& params, AdamState& state, const Gradients& grads, double lr);

/// Trains a classifier-head network with per-epoch train/validation losses.
/// A validation split of `validation_fraction` is carved from `data`
/// (falls back to the training loss when the split rounds to empty), and the
/// parameters with the lowest validation loss are returned. Deterministic
/// given (config, net, data).
NetParams train(const TrainConfig& config, const NetConfig& net, const std::vector<Example>& data,
                TrainLog* log = nullptr);

/// Continues optimization from `params` at fine_tune_learning_rate for
/// fine_tune_epochs. Throws DataError when feature dimensions mismatch.
NetParams fine_tune(const NetParams& params, const TrainConfig& config,
                    const std::vector<Example>& data, TrainLog* log = nullptr);

/// Parameter serialization: JSON with config echo and row-major layers.
void save_params(const NetParams& params, const std::filesystem::path& path);
NetParams load_params(const std::filesystem::path& path);

/// Configs as JSON files (all fields optional, defaults applied).
NetConfig load_net_config(const std::filesystem::path& path);
TrainConfig load_train_config(const std::filesystem::path& path);

}  // namespace relab
