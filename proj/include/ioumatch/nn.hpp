#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ioumatch/rng.hpp"
#include "ioumatch/synth_data.hpp"

namespace ioumatch {

struct ParamBlock {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;

  bool operator==(const ParamBlock&) const = default;
};

/// Flat parameter storage partitioned into named, shaped blocks. Teacher,
/// student, gradients and optimizer moments all share one layout.
class ParamVector {
 public:
  /// Appends a zero-filled block. Throws std::invalid_argument on a
  /// duplicate name or a non-positive dimension.
  void add_block(const std::string& name, const std::vector<int>& shape);

  bool has_block(const std::string& name) const;
  const ParamBlock& block(const std::string& name) const;
  std::span<double> values(const std::string& name);
  std::span<const double> values(const std::string& name) const;

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }
  std::size_t size() const { return data_.size(); }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }

  bool same_layout(const ParamVector& other) const { return blocks_ == other.blocks_; }
  /// Same layout, all values zero.
  ParamVector zeros_like() const;
  void set_zero();
  bool all_finite() const;

  bool operator==(const ParamVector& other) const = default;

 private:
  std::vector<ParamBlock> blocks_;
  std::vector<double> data_;
};

/// {"blocks": [{"name", "shape", "values"}, ...]}; values round-trip exactly.
Json param_vector_to_json(const ParamVector& params);
ParamVector param_vector_from_json(const Json& doc, const std::string& path = "params");

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Fully connected stack operating on row batches: Y = relu(X W^T + b) per
/// layer, with the activation on the last layer optional. Weights live in a
/// ParamVector under "<prefix>.l<i>.weight" ([out, in]) and ".bias".
class Mlp {
 public:
  struct Cache {
    std::vector<RowMatrix> inputs;  // input to each layer
    std::vector<RowMatrix> pre;     // pre-activation of each layer
  };

  Mlp() = default;
  Mlp(std::string prefix, std::vector<int> dims, bool relu_last);

  int in_dim() const { return dims_.front(); }
  int out_dim() const { return dims_.back(); }
  int num_layers() const { return static_cast<int>(dims_.size()) - 1; }
  const std::string& prefix() const { return prefix_; }

  void register_params(ParamVector& params) const;
  /// He-normal weights, zero biases; the last layer is scaled by last_gain.
  void init_params(ParamVector& params, Rng& rng, double last_gain = 1.0) const;

  RowMatrix forward(const ParamVector& params, const RowMatrix& x, Cache* cache) const;
  /// Accumulates parameter gradients into grad and returns dL/dX.
  RowMatrix backward(const ParamVector& params, const Cache& cache, const RowMatrix& d_out,
                     ParamVector& grad) const;

  std::string weight_name(int layer) const;
  std::string bias_name(int layer) const;

 private:
  std::string prefix_;
  std::vector<int> dims_;
  bool relu_last_ = false;
};

/// PointNet-style set function: shared per-element MLP (ReLU throughout),
/// channel-wise max over elements, then a post-pool MLP with linear output.
/// The output is invariant to element order and to duplicated elements.
class SetEncoder {
 public:
  struct Cache {
    Mlp::Cache point;
    Mlp::Cache head;
    RowMatrix point_out;
    std::vector<int> argmax;  // per pooled channel, first maximizing element
  };

  SetEncoder() = default;
  SetEncoder(const std::string& prefix, std::vector<int> point_dims, std::vector<int> head_dims);

  const Mlp& point_mlp() const { return point_; }
  const Mlp& head_mlp() const { return head_; }

  void register_params(ParamVector& params) const;
  void init_params(ParamVector& params, Rng& rng, double last_gain = 1.0) const;

  Eigen::VectorXd forward(const ParamVector& params, const RowMatrix& elements,
                          Cache* cache) const;
  RowMatrix backward(const ParamVector& params, const Cache& cache,
                     const Eigen::VectorXd& d_out, ParamVector& grad) const;

 private:
  Mlp point_;
  Mlp head_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment optimizer over a ParamVector layout.
class Adam {
 public:
  Adam() = default;
  Adam(const AdamConfig& config, const ParamVector& layout);

  /// params -= lr * mhat / (sqrt(vhat) + eps). Throws on layout mismatch.
  void step(ParamVector& params, const ParamVector& grad, double learning_rate);
  void step(ParamVector& params, const ParamVector& grad) {
    step(params, grad, config_.learning_rate);
  }

  const AdamConfig& config() const { return config_; }
  long steps_taken() const { return t_; }

  Json to_json() const;
  static Adam from_json(const Json& doc, const std::string& path = "optimizer");

 private:
  AdamConfig config_;
  long t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

}  // namespace ioumatch
