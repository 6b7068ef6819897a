#include "boxreach/approximator.hpp"

#include <cmath>
#include <stdexcept>

#include "boxreach/errors.hpp"

namespace boxreach {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu:
      return "relu";
    case Activation::tanh:
      return "tanh";
    case Activation::identity:
      return "identity";
  }
  return "identity";
}

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "identity") return Activation::identity;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

bool Network::all_finite() const {
  for (const Layer& l : layers) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

Gradient Gradient::zeros_like(const Network& net) {
  Gradient g;
  for (const Layer& l : net.layers) {
    g.weight.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
    g.bias.push_back(Eigen::VectorXd::Zero(l.bias.size()));
  }
  return g;
}

Gradient& Gradient::operator+=(const Gradient& rhs) {
  for (std::size_t i = 0; i < weight.size(); ++i) {
    weight[i] += rhs.weight[i];
    bias[i] += rhs.bias[i];
  }
  return *this;
}

Gradient& Gradient::operator*=(double scale) {
  for (std::size_t i = 0; i < weight.size(); ++i) {
    weight[i] *= scale;
    bias[i] *= scale;
  }
  return *this;
}

bool Gradient::all_finite() const {
  for (std::size_t i = 0; i < weight.size(); ++i) {
    if (!weight[i].allFinite() || !bias[i].allFinite()) return false;
  }
  return true;
}

double Gradient::max_abs() const {
  double m = 0.0;
  for (std::size_t i = 0; i < weight.size(); ++i) {
    if (weight[i].size()) m = std::max(m, weight[i].cwiseAbs().maxCoeff());
    if (bias[i].size()) m = std::max(m, bias[i].cwiseAbs().maxCoeff());
  }
  return m;
}

Network init_network(std::span<const int> sizes, std::span<const Activation> activations,
                     Rng& rng) {
  if (sizes.size() < 2) throw std::invalid_argument("init_network: need at least 2 sizes");
  if (activations.size() != sizes.size() - 1) {
    throw std::invalid_argument("init_network: need one activation per layer");
  }
  Network net;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int in = sizes[l];
    const int out = sizes[l + 1];
    if (in <= 0 || out <= 0) throw std::invalid_argument("init_network: sizes must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Layer layer;
    layer.weight.resize(out, in);
    for (Eigen::Index r = 0; r < out; ++r) {
      for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = dist(rng);
    }
    layer.bias = Eigen::VectorXd::Zero(out);
    layer.activation = activations[l];
    net.layers.push_back(std::move(layer));
  }
  return net;
}

Network make_mlp(int input, std::span<const int> hidden, int output, Activation head, Rng& rng) {
  std::vector<int> sizes{input};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(output);
  std::vector<Activation> acts(hidden.size(), Activation::relu);
  acts.push_back(head);
  return init_network(sizes, acts, rng);
}

namespace {

void apply_activation(Activation act, Eigen::MatrixXd& m) {
  switch (act) {
    case Activation::relu:
      m = m.cwiseMax(0.0);
      break;
    case Activation::tanh:
      m = m.array().tanh().matrix();
      break;
    case Activation::identity:
      break;
  }
}

// Multiplies `delta` in place by the activation derivative, expressed through
// the layer output.
void scale_by_derivative(Activation act, const Eigen::MatrixXd& out, Eigen::MatrixXd& delta) {
  switch (act) {
    case Activation::relu:
      delta = (out.array() > 0.0).select(delta, 0.0);
      break;
    case Activation::tanh:
      delta.array() *= 1.0 - out.array().square();
      break;
    case Activation::identity:
      break;
  }
}

void check_input(const Network& net, Eigen::Index rows) {
  if (net.layers.empty()) throw std::invalid_argument("network has no layers");
  if (rows != net.input_size()) {
    throw std::invalid_argument("network input has " + std::to_string(rows) +
                                " rows, expected " + std::to_string(net.input_size()));
  }
}

}  // namespace

Eigen::MatrixXd forward_batch(const Network& net, const Eigen::MatrixXd& inputs) {
  check_input(net, inputs.rows());
  Eigen::MatrixXd x = inputs;
  for (const Layer& l : net.layers) {
    Eigen::MatrixXd z = l.weight * x;
    z.colwise() += l.bias;
    apply_activation(l.activation, z);
    x = std::move(z);
  }
  return x;
}

Eigen::VectorXd forward(const Network& net, const Eigen::VectorXd& input) {
  return forward_batch(net, input);
}

ForwardTrace trace_forward(const Network& net, const Eigen::MatrixXd& inputs) {
  check_input(net, inputs.rows());
  ForwardTrace trace;
  trace.activations.reserve(net.layers.size() + 1);
  trace.activations.push_back(inputs);
  for (const Layer& l : net.layers) {
    Eigen::MatrixXd z = l.weight * trace.activations.back();
    z.colwise() += l.bias;
    apply_activation(l.activation, z);
    trace.activations.push_back(std::move(z));
  }
  return trace;
}

BackwardResult backward(const Network& net, const ForwardTrace& trace,
                        const Eigen::MatrixXd& upstream) {
  if (upstream.rows() != net.output_size() || upstream.cols() != trace.output().cols()) {
    throw std::invalid_argument("backward: upstream gradient shape mismatch");
  }
  BackwardResult out;
  out.params.weight.resize(net.layers.size());
  out.params.bias.resize(net.layers.size());
  Eigen::MatrixXd delta = upstream;
  for (std::size_t i = net.layers.size(); i-- > 0;) {
    const Layer& l = net.layers[i];
    scale_by_derivative(l.activation, trace.activations[i + 1], delta);
    out.params.weight[i].noalias() = delta * trace.activations[i].transpose();
    out.params.bias[i] = delta.rowwise().sum();
    delta = l.weight.transpose() * delta;
  }
  out.input = std::move(delta);
  return out;
}

BackwardResult backward(const Network& net, const Eigen::VectorXd& input,
                        const Eigen::VectorXd& upstream) {
  return backward(net, trace_forward(net, input), upstream);
}

Eigen::MatrixXd input_gradient(const Network& net, const ForwardTrace& trace,
                               const Eigen::MatrixXd& upstream) {
  Eigen::MatrixXd delta = upstream;
  for (std::size_t i = net.layers.size(); i-- > 0;) {
    scale_by_derivative(net.layers[i].activation, trace.activations[i + 1], delta);
    delta = net.layers[i].weight.transpose() * delta;
  }
  return delta;
}

AdamState AdamState::for_network(const Network& net) {
  AdamState s;
  s.first = Gradient::zeros_like(net);
  s.second = Gradient::zeros_like(net);
  return s;
}

void adam_step(AdamState& opt, Network& net, const Gradient& grad, double lr) {
  if (grad.weight.size() != net.layers.size() || opt.first.weight.size() != net.layers.size()) {
    throw std::invalid_argument("adam_step: shape mismatch");
  }
  if (!grad.all_finite()) throw NumericError("adam_step: non-finite gradient");
  ++opt.step;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = opt.beta1 * m + (1.0 - opt.beta1) * g;
    v = opt.beta2 * v + (1.0 - opt.beta2) * g.cwiseProduct(g);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + opt.epsilon);
  };
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    update(net.layers[i].weight, opt.first.weight[i], opt.second.weight[i], grad.weight[i]);
    update(net.layers[i].bias, opt.first.bias[i], opt.second.bias[i], grad.bias[i]);
  }
}

void soft_update(Network& target, const Network& online, double rate) {
  if (!(rate > 0.0 && rate <= 1.0)) throw std::invalid_argument("soft_update: rate must be in (0, 1]");
  if (target.layers.size() != online.layers.size()) {
    throw std::invalid_argument("soft_update: shape mismatch");
  }
  for (std::size_t i = 0; i < target.layers.size(); ++i) {
    Layer& t = target.layers[i];
    const Layer& o = online.layers[i];
    if (t.weight.rows() != o.weight.rows() || t.weight.cols() != o.weight.cols()) {
      throw std::invalid_argument("soft_update: shape mismatch");
    }
    t.weight = rate * o.weight + (1.0 - rate) * t.weight;
    t.bias = rate * o.bias + (1.0 - rate) * t.bias;
  }
}

namespace {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  std::vector<double> values;
  values.reserve(m.size());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) values.push_back(m(r, c));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"values", values}};
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto values = j.at("values").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(values.size()) != rows * cols) {
    throw CheckpointError("matrix value count does not match its shape");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = values[r * cols + c];
  }
  return m;
}

nlohmann::json gradient_to_json(const Gradient& g) {
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t i = 0; i < g.weight.size(); ++i) {
    layers.push_back({{"weight", matrix_to_json(g.weight[i])},
                      {"bias", matrix_to_json(g.bias[i])}});
  }
  return layers;
}

Gradient gradient_from_json(const nlohmann::json& j) {
  Gradient g;
  for (const auto& layer : j) {
    g.weight.push_back(matrix_from_json(layer.at("weight")));
    g.bias.push_back(matrix_from_json(layer.at("bias")).col(0));
  }
  return g;
}

}  // namespace

nlohmann::json to_json(const Network& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const Layer& l : net.layers) {
    layers.push_back({{"activation", to_string(l.activation)},
                      {"weight", matrix_to_json(l.weight)},
                      {"bias", matrix_to_json(l.bias)}});
  }
  return {{"format", "boxreach-network"}, {"version", 1}, {"layers", layers}};
}

Network network_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "boxreach-network" || j.at("version") != 1) {
      throw CheckpointError("unsupported network format");
    }
    Network net;
    for (const auto& layer : j.at("layers")) {
      Layer l;
      l.activation = activation_from_string(layer.at("activation").get<std::string>());
      l.weight = matrix_from_json(layer.at("weight"));
      l.bias = matrix_from_json(layer.at("bias")).col(0);
      if (l.bias.size() != l.weight.rows()) throw CheckpointError("bias size mismatch");
      if (!net.layers.empty() && net.layers.back().weight.rows() != l.weight.cols()) {
        throw CheckpointError("layer dimensions do not chain");
      }
      net.layers.push_back(std::move(l));
    }
    if (net.layers.empty()) throw CheckpointError("network has no layers");
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed network: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(e.what());
  }
}

nlohmann::json to_json(const AdamState& opt) {
  return {{"step", opt.step},
          {"beta1", opt.beta1},
          {"beta2", opt.beta2},
          {"epsilon", opt.epsilon},
          {"first", gradient_to_json(opt.first)},
          {"second", gradient_to_json(opt.second)}};
}

AdamState adam_from_json(const nlohmann::json& j) {
  try {
    AdamState s;
    s.step = j.at("step").get<long>();
    s.beta1 = j.at("beta1").get<double>();
    s.beta2 = j.at("beta2").get<double>();
    s.epsilon = j.at("epsilon").get<double>();
    s.first = gradient_from_json(j.at("first"));
    s.second = gradient_from_json(j.at("second"));
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed optimizer state: ") + e.what());
  }
}

}  // namespace boxreach
