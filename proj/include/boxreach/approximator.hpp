#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include "json.hpp"

#include "boxreach/random.hpp"

namespace boxreach {

enum class Activation { relu, tanh, identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

struct Layer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
  Activation activation = Activation::identity;
};

/// Fully-connected network: x_{l+1} = act_l(W_l x_l + b_l).
struct Network {
  std::vector<Layer> layers;

  Eigen::Index input_size() const { return layers.front().weight.cols(); }
  Eigen::Index output_size() const { return layers.back().weight.rows(); }
  std::size_t parameter_count() const;
  bool all_finite() const;
};

/// Parameter-shaped accumulator for gradients and optimizer moments.
struct Gradient {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;

  static Gradient zeros_like(const Network& net);
  Gradient& operator+=(const Gradient& rhs);
  Gradient& operator*=(double scale);
  bool all_finite() const;
  double max_abs() const;
};

/// Weights uniform in +-1/sqrt(fan_in), zero biases. `sizes` has one more
/// entry than `activations`. Throws std::invalid_argument on bad shapes.
Network init_network(std::span<const int> sizes, std::span<const Activation> activations,
                     Rng& rng);

/// Hidden layers use ReLU; the head uses `output`.
Network make_mlp(int input, std::span<const int> hidden, int output, Activation head, Rng& rng);

Eigen::VectorXd forward(const Network& net, const Eigen::VectorXd& input);

/// Columns are samples.
Eigen::MatrixXd forward_batch(const Network& net, const Eigen::MatrixXd& inputs);

/// Layer outputs retained for a backward pass. activations[0] is the input.
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> activations;
  const Eigen::MatrixXd& output() const { return activations.back(); }
};

ForwardTrace trace_forward(const Network& net, const Eigen::MatrixXd& inputs);

struct BackwardResult {
  Gradient params;        // summed over the batch columns
  Eigen::MatrixXd input;  // d(upstream . output) / d input, per column
};

/// Reverse-mode gradients of sum_columns(upstream . output).
BackwardResult backward(const Network& net, const ForwardTrace& trace,
                        const Eigen::MatrixXd& upstream);
BackwardResult backward(const Network& net, const Eigen::VectorXd& input,
                        const Eigen::VectorXd& upstream);

/// Gradient only with respect to the input; skips parameter gradients.
Eigen::MatrixXd input_gradient(const Network& net, const ForwardTrace& trace,
                               const Eigen::MatrixXd& upstream);

struct AdamState {
  Gradient first;
  Gradient second;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_network(const Network& net);
};

/// Bias-corrected Adam descent step. Throws NumericError when `grad` holds a
/// non-finite value; parameters and moments are left untouched in that case.
void adam_step(AdamState& opt, Network& net, const Gradient& grad, double lr);

/// target <- rate * online + (1 - rate) * target, rate in (0, 1].
void soft_update(Network& target, const Network& online, double rate);

nlohmann::json to_json(const Network& net);
Network network_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AdamState& opt);
AdamState adam_from_json(const nlohmann::json& j);

}  // namespace boxreach
