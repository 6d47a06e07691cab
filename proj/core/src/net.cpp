#include "relab/net.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "json_util.hpp"
#include "relab/error.hpp"
#include "relab/rng.hpp"

namespace relab {

namespace {

constexpr double kBceEps = 1e-12;
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double activate(double z, Activation act) {
  return act == Activation::Relu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

double activate_grad(double z, Activation act) {
  if (act == Activation::Relu) return z > 0.0 ? 1.0 : 0.0;
  const double t = std::tanh(z);
  return 1.0 - t * t;
}

std::vector<int> layer_dims(const NetConfig& cfg) {
  std::vector<int> dims;
  dims.push_back(cfg.input_dim);
  dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
  dims.push_back(cfg.output_dim());
  return dims;
}

/// Backprop from the delta at the last layer's pre-activation.
void backward_from_delta(const NetParams& params, const ForwardTrace& trace,
                         std::vector<double> delta, Gradients& grads) {
  const auto n_layers = params.layers.size();
  for (std::size_t li = n_layers; li-- > 0;) {
    const Layer& layer = params.layers[li];
    Layer& g = grads.layers[li];
    const auto& input = trace.inputs[li];
    for (int r = 0; r < layer.out; ++r) {
      const double d = delta[static_cast<std::size_t>(r)];
      g.b[static_cast<std::size_t>(r)] += d;
      double* grow = g.w.data() + static_cast<std::size_t>(r) * layer.in;
      for (int c = 0; c < layer.in; ++c) grow[c] += d * input[static_cast<std::size_t>(c)];
    }
    if (li == 0) break;
    // delta for the previous layer: (W^T delta) * act'(pre)
    const auto& prev_pre = trace.pre[li - 1];
    std::vector<double> prev_delta(static_cast<std::size_t>(layer.in), 0.0);
    for (int r = 0; r < layer.out; ++r) {
      const double d = delta[static_cast<std::size_t>(r)];
      const double* wrow = layer.w.data() + static_cast<std::size_t>(r) * layer.in;
      for (int c = 0; c < layer.in; ++c) prev_delta[static_cast<std::size_t>(c)] += d * wrow[c];
    }
    const Activation act = params.config.activation;
    for (int c = 0; c < layer.in; ++c)
      prev_delta[static_cast<std::size_t>(c)] *=
          activate_grad(prev_pre[static_cast<std::size_t>(c)], act);
    delta = std::move(prev_delta);
  }
}

/// Sum-reduced BCE loss + gradient accumulation for one example.
double bce_example_accumulate(const NetParams& params, const Example& ex, Gradients& grads) {
  const ForwardTrace trace = forward_trace(params, ex.features);
  const double p = trace.output[0];
  // d(BCE)/d(pre-sigmoid) = p - y, numerically stable at saturation.
  backward_from_delta(params, trace, {p - static_cast<double>(ex.label)}, grads);
  return bce_loss(p, ex.label);
}

struct OptimizerDriver {
  OptimizerKind kind;
  AdamState adam;

  explicit OptimizerDriver(const NetParams& params, OptimizerKind k)
      : kind(k), adam(k == OptimizerKind::Adam ? init_adam(params) : AdamState{}) {}

  void step(NetParams& params, const Gradients& grads, double lr) {
    if (kind == OptimizerKind::Adam)
      apply_adam(params, adam, grads, lr);
    else
      apply_sgd(params, grads, lr);
  }
};

NetParams train_loop(NetParams params, const TrainConfig& cfg, double lr, int epochs,
                     const std::vector<Example>& data, TrainLog* log) {
  cfg.validate();
  if (data.empty()) throw DataError("training data is empty");
  const auto dim = static_cast<std::size_t>(params.config.input_dim);
  for (const auto& ex : data)
    if (ex.features.size() != dim)
      throw DataError("training sample '" + ex.id + "' has dimension " +
                      std::to_string(ex.features.size()) + ", network expects " +
                      std::to_string(dim));

  if (log && params.config.head == Head::SigmoidClassifier) {
    const bool single_class =
        std::all_of(data.begin(), data.end(), [&](const Example& e) { return e.label == data[0].label; });
    if (single_class) log->warnings.push_back("training labels contain a single class");
  }

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  auto n_val = static_cast<std::size_t>(cfg.validation_fraction * static_cast<double>(data.size()));
  n_val = std::min(n_val, data.size() - 1);
  const std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<long>(n_val));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<long>(n_val), order.end());

  const auto mean_val_loss = [&](const NetParams& p) {
    double sum = 0.0;
    for (std::size_t i : val_idx) sum += bce_loss(forward(p, data[i].features)[0], data[i].label);
    return sum / static_cast<double>(val_idx.size());
  };

  OptimizerDriver opt(params, cfg.optimizer);
  Gradients grads = zero_gradients(params);
  NetParams best = params;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;

  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(train_idx);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < train_idx.size(); start += batch) {
      const std::size_t stop = std::min(start + batch, train_idx.size());
      for (auto& layer : grads.layers) {
        std::fill(layer.w.begin(), layer.w.end(), 0.0);
        std::fill(layer.b.begin(), layer.b.end(), 0.0);
      }
      for (std::size_t i = start; i < stop; ++i)
        loss_sum += bce_example_accumulate(params, data[train_idx[i]], grads);
      opt.step(params, grads, lr);
    }
    const double train_loss = loss_sum / static_cast<double>(train_idx.size());
    const double val_loss = val_idx.empty() ? train_loss : mean_val_loss(params);
    if (log) log->epochs.push_back({epoch, train_loss, val_loss});
    if (val_loss < best_val) {
      best_val = val_loss;
      best = params;
      best_epoch = epoch;
    }
  }
  if (log) log->best_epoch = best_epoch;
  return epochs > 0 ? best : params;
}

}  // namespace

void NetConfig::validate() const {
  if (input_dim < 1) throw DataError("net: input_dim must be >= 1");
  for (int h : hidden_dims)
    if (h < 1) throw DataError("net: hidden dims must be >= 1");
  if (head == Head::Embedding && embed_dim < 1) throw DataError("net: embed_dim must be >= 1");
}

std::size_t NetParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.w.size() + layer.b.size();
  return n;
}

NetParams init_params(const NetConfig& config) {
  config.validate();
  NetParams params;
  params.config = config;
  Rng rng(config.seed);
  const auto dims = layer_dims(config);
  for (std::size_t li = 0; li + 1 < dims.size(); ++li) {
    Layer layer;
    layer.in = dims[li];
    layer.out = dims[li + 1];
    const double a = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
    layer.w.resize(static_cast<std::size_t>(layer.in) * static_cast<std::size_t>(layer.out));
    for (auto& w : layer.w) w = rng.uniform(-a, a);
    layer.b.assign(static_cast<std::size_t>(layer.out), 0.0);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

ForwardTrace forward_trace(const NetParams& params, std::span<const double> x) {
  if (params.layers.empty()) throw DataError("network has no layers");
  if (static_cast<int>(x.size()) != params.config.input_dim)
    throw DataError("input dimension " + std::to_string(x.size()) + ", network expects " +
                    std::to_string(params.config.input_dim));

  ForwardTrace trace;
  std::vector<double> activation(x.begin(), x.end());
  const auto n_layers = params.layers.size();
  for (std::size_t li = 0; li < n_layers; ++li) {
    const Layer& layer = params.layers[li];
    trace.inputs.push_back(activation);
    std::vector<double> pre(static_cast<std::size_t>(layer.out), 0.0);
    for (int r = 0; r < layer.out; ++r) {
      const double* wrow = layer.w.data() + static_cast<std::size_t>(r) * layer.in;
      double z = layer.b[static_cast<std::size_t>(r)];
      for (int c = 0; c < layer.in; ++c) z += wrow[c] * activation[static_cast<std::size_t>(c)];
      if (!std::isfinite(z)) throw NumericError("non-finite value in layer " + std::to_string(li));
      pre[static_cast<std::size_t>(r)] = z;
    }
    const bool last = li + 1 == n_layers;
    if (last) {
      activation = pre;
      // Clamp keeps saturated probabilities strictly inside (0,1).
      if (params.config.head == Head::SigmoidClassifier)
        for (auto& v : activation) v = std::clamp(sigmoid(v), kBceEps, 1.0 - kBceEps);
    } else {
      activation.resize(pre.size());
      for (std::size_t i = 0; i < pre.size(); ++i)
        activation[i] = activate(pre[i], params.config.activation);
    }
    trace.pre.push_back(std::move(pre));
  }
  trace.output = std::move(activation);
  return trace;
}

std::vector<double> forward(const NetParams& params, std::span<const double> x) {
  return forward_trace(params, x).output;
}

double Gradients::norm() const {
  double sum = 0.0;
  for (const auto& layer : layers) {
    for (double w : layer.w) sum += w * w;
    for (double b : layer.b) sum += b * b;
  }
  return std::sqrt(sum);
}

void Gradients::scale(double s) {
  for (auto& layer : layers) {
    for (auto& w : layer.w) w *= s;
    for (auto& b : layer.b) b *= s;
  }
}

Gradients zero_gradients(const NetParams& params) {
  Gradients grads;
  for (const auto& layer : params.layers) {
    Layer g;
    g.in = layer.in;
    g.out = layer.out;
    g.w.assign(layer.w.size(), 0.0);
    g.b.assign(layer.b.size(), 0.0);
    grads.layers.push_back(std::move(g));
  }
  return grads;
}

void accumulate_output_gradient(const NetParams& params, const ForwardTrace& trace,
                                std::span<const double> d_output, Gradients& grads) {
  if (d_output.size() != trace.output.size())
    throw DataError("output gradient dimension mismatch");
  std::vector<double> delta(d_output.begin(), d_output.end());
  if (params.config.head == Head::SigmoidClassifier) {
    for (std::size_t i = 0; i < delta.size(); ++i) {
      const double p = trace.output[i];
      delta[i] *= p * (1.0 - p);
    }
  }
  backward_from_delta(params, trace, std::move(delta), grads);
}

double bce_loss(double prob, int label) {
  const double p = std::clamp(prob, kBceEps, 1.0 - kBceEps);
  return label == 1 ? -std::log(p) : -std::log(1.0 - p);
}

std::vector<Example> make_examples(const std::vector<SampleRecord>& records,
                                   const std::map<std::string, int>& labels) {
  std::vector<Example> out;
  for (const auto& rec : records) {
    const auto it = labels.find(rec.id);
    if (it == labels.end()) continue;
    out.push_back({rec.id, rec.features, it->second});
  }
  return out;
}

std::vector<Example> make_examples_verified(const std::vector<SampleRecord>& records) {
  std::vector<Example> out;
  for (const auto& rec : records) {
    if (!rec.verified_label)
      throw DataError("record '" + rec.id + "' has no verified label");
    out.push_back({rec.id, rec.features, *rec.verified_label});
  }
  return out;
}

double bce_batch_loss(const NetParams& params, std::span<const Example> batch) {
  if (params.config.head != Head::SigmoidClassifier)
    throw DataError("BCE loss requires a sigmoid classifier head");
  double sum = 0.0;
  for (const auto& ex : batch) sum += bce_loss(forward(params, ex.features)[0], ex.label);
  return sum;
}

Gradients bce_backprop(const NetParams& params, std::span<const Example> batch) {
  if (params.config.head != Head::SigmoidClassifier)
    throw DataError("BCE backprop requires a sigmoid classifier head");
  if (batch.empty()) throw DataError("batch is empty");
  Gradients grads = zero_gradients(params);
  for (const auto& ex : batch) bce_example_accumulate(params, ex, grads);
  for (const auto& layer : grads.layers) {
    for (double w : layer.w)
      if (!std::isfinite(w)) throw NumericError("non-finite gradient");
    for (double b : layer.b)
      if (!std::isfinite(b)) throw NumericError("non-finite gradient");
  }
  return grads;
}

void TrainConfig::validate() const {
  if (learning_rate < 0 || fine_tune_learning_rate < 0)
    throw DataError("train: learning rates must be >= 0");
  if (epochs < 0 || fine_tune_epochs < 0) throw DataError("train: epochs must be >= 0");
  if (batch_size < 1) throw DataError("train: batch_size must be >= 1");
  if (validation_fraction <= 0.0 || validation_fraction >= 1.0)
    throw DataError("train: validation_fraction must be in (0,1)");
}

void TrainLog::write_jsonl(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write training log: " + path.string());
  for (const auto& e : epochs) {
    nlohmann::json rec = {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}};
    out << rec.dump() << "\n";
  }
}

AdamState init_adam(const NetParams& params) {
  AdamState state;
  for (const auto& layer : params.layers) {
    Layer z;
    z.in = layer.in;
    z.out = layer.out;
    z.w.assign(layer.w.size(), 0.0);
    z.b.assign(layer.b.size(), 0.0);
    state.m.push_back(z);
    state.v.push_back(std::move(z));
  }
  return state;
}

void apply_sgd(NetParams& params, const Gradients& grads, double lr) {
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    auto& layer = params.layers[li];
    const auto& g = grads.layers[li];
    for (std::size_t i = 0; i < layer.w.size(); ++i) layer.w[i] -= lr * g.w[i];
    for (std::size_t i = 0; i < layer.b.size(); ++i) layer.b[i] -= lr * g.b[i];
  }
}

void apply_adam(NetParams& params, AdamState& state, const Gradients& grads, double lr) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
  const auto update = [&](double& theta, double& m, double& v, double g) {
    m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * g;
    v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * g * g;
    theta -= lr * (m / bc1) / (std::sqrt(v / bc2) + kAdamEps);
  };
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    auto& layer = params.layers[li];
    const auto& g = grads.layers[li];
    auto& m = state.m[li];
    auto& v = state.v[li];
    for (std::size_t i = 0; i < layer.w.size(); ++i) update(layer.w[i], m.w[i], v.w[i], g.w[i]);
    for (std::size_t i = 0; i < layer.b.size(); ++i) update(layer.b[i], m.b[i], v.b[i], g.b[i]);
  }
}

NetParams train(const TrainConfig& config, const NetConfig& net, const std::vector<Example>& data,
                TrainLog* log) {
  if (data.empty()) throw DataError("training data is empty");
  NetConfig cfg = net;
  if (cfg.input_dim == 0) cfg.input_dim = static_cast<int>(data[0].features.size());
  return train_loop(init_params(cfg), config, config.learning_rate, config.epochs, data, log);
}

NetParams fine_tune(const NetParams& params, const TrainConfig& config,
                    const std::vector<Example>& data, TrainLog* log) {
  return train_loop(params, config, config.fine_tune_learning_rate, config.fine_tune_epochs, data,
                    log);
}

namespace {

const char* activation_name(Activation a) { return a == Activation::Relu ? "relu" : "tanh"; }
const char* head_name(Head h) {
  return h == Head::Embedding ? "embedding" : "sigmoid_classifier";
}
const char* optimizer_name(OptimizerKind o) { return o == OptimizerKind::Sgd ? "sgd" : "adam"; }

Activation activation_from(const std::string& s, const std::string& where) {
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  throw DataError(where + ": unknown activation '" + s + "' (relu, tanh)");
}

Head head_from(const std::string& s, const std::string& where) {
  if (s == "embedding") return Head::Embedding;
  if (s == "sigmoid_classifier") return Head::SigmoidClassifier;
  throw DataError(where + ": unknown head '" + s + "' (embedding, sigmoid_classifier)");
}

OptimizerKind optimizer_from(const std::string& s, const std::string& where) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "adam") return OptimizerKind::Adam;
  throw DataError(where + ": unknown optimizer '" + s + "' (sgd, adam)");
}

}  // namespace

namespace detail {

nlohmann::json net_config_to_json(const NetConfig& cfg) {
  return {{"input_dim", cfg.input_dim},   {"hidden_dims", cfg.hidden_dims},
          {"embed_dim", cfg.embed_dim},   {"activation", activation_name(cfg.activation)},
          {"head", head_name(cfg.head)},  {"seed", cfg.seed}};
}

NetConfig net_config_from_json(const nlohmann::json& j, const std::string& where) {
  check_known_keys(j, {"input_dim", "hidden_dims", "embed_dim", "activation", "head", "seed"},
                   where);
  NetConfig cfg;
  cfg.input_dim = j.value("input_dim", cfg.input_dim);
  if (j.contains("hidden_dims")) cfg.hidden_dims = j["hidden_dims"].get<std::vector<int>>();
  cfg.embed_dim = j.value("embed_dim", cfg.embed_dim);
  if (j.contains("activation"))
    cfg.activation = activation_from(j["activation"].get<std::string>(), where);
  if (j.contains("head")) cfg.head = head_from(j["head"].get<std::string>(), where);
  cfg.seed = j.value("seed", cfg.seed);
  return cfg;
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  return {{"learning_rate", cfg.learning_rate},
          {"epochs", cfg.epochs},
          {"fine_tune_learning_rate", cfg.fine_tune_learning_rate},
          {"fine_tune_epochs", cfg.fine_tune_epochs},
          {"batch_size", cfg.batch_size},
          {"validation_fraction", cfg.validation_fraction},
          {"optimizer", optimizer_name(cfg.optimizer)},
          {"seed", cfg.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, const std::string& where) {
  check_known_keys(j,
                   {"learning_rate", "epochs", "fine_tune_learning_rate", "fine_tune_epochs",
                    "batch_size", "validation_fraction", "optimizer", "seed"},
                   where);
  TrainConfig cfg;
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.fine_tune_learning_rate = j.value("fine_tune_learning_rate", cfg.fine_tune_learning_rate);
  cfg.fine_tune_epochs = j.value("fine_tune_epochs", cfg.fine_tune_epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.validation_fraction = j.value("validation_fraction", cfg.validation_fraction);
  if (j.contains("optimizer"))
    cfg.optimizer = optimizer_from(j["optimizer"].get<std::string>(), where);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.validate();
  return cfg;
}

}  // namespace detail

void save_params(const NetParams& params, const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["config"] = detail::net_config_to_json(params.config);
  doc["layers"] = nlohmann::json::array();
  for (const auto& layer : params.layers)
    doc["layers"].push_back(
        {{"in", layer.in}, {"out", layer.out}, {"w", layer.w}, {"b", layer.b}});
  detail::write_json_file(doc, path, "parameter");
}

NetParams load_params(const std::filesystem::path& path) {
  const auto doc = detail::read_json_file(path, "parameter");
  detail::check_known_keys(doc, {"config", "layers"}, path.string());
  if (!doc.contains("config") || !doc.contains("layers"))
    throw DataError(path.string() + ": needs 'config' and 'layers'");
  NetParams params;
  params.config = detail::net_config_from_json(doc["config"], path.string());
  for (const auto& jl : doc["layers"]) {
    Layer layer;
    layer.in = jl.at("in").get<int>();
    layer.out = jl.at("out").get<int>();
    layer.w = jl.at("w").get<std::vector<double>>();
    layer.b = jl.at("b").get<std::vector<double>>();
    if (layer.w.size() != static_cast<std::size_t>(layer.in) * static_cast<std::size_t>(layer.out) ||
        layer.b.size() != static_cast<std::size_t>(layer.out))
      throw DataError(path.string() + ": layer shape mismatch");
    params.layers.push_back(std::move(layer));
  }
  if (params.layers.empty()) throw DataError(path.string() + ": no layers");
  const auto dims = layer_dims(params.config);
  if (params.layers.size() + 1 != dims.size())
    throw DataError(path.string() + ": layer count does not match config");
  for (std::size_t i = 0; i < params.layers.size(); ++i)
    if (params.layers[i].in != dims[i] || params.layers[i].out != dims[i + 1])
      throw DataError(path.string() + ": layer " + std::to_string(i) +
                      " shape does not match config");
  return params;
}

NetConfig load_net_config(const std::filesystem::path& path) {
  return detail::net_config_from_json(detail::read_json_file(path, "net config"), path.string());
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  return detail::train_config_from_json(detail::read_json_file(path, "train config"),
                                        path.string());
}

}  // namespace relab
