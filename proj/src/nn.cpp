#include "ioumatch/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json_util.hpp"

namespace ioumatch {

void ParamVector::add_block(const std::string& name, const std::vector<int>& shape) {
  if (has_block(name)) throw std::invalid_argument("duplicate parameter block " + name);
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("block " + name + " has a non-positive dimension");
    n *= static_cast<std::size_t>(d);
  }
  blocks_.push_back({name, shape, data_.size(), n});
  data_.resize(data_.size() + n, 0.0);
}

bool ParamVector::has_block(const std::string& name) const {
  return std::any_of(blocks_.begin(), blocks_.end(),
                     [&](const ParamBlock& b) { return b.name == name; });
}

const ParamBlock& ParamVector::block(const std::string& name) const {
  for (const ParamBlock& b : blocks_)
    if (b.name == name) return b;
  throw std::out_of_range("no parameter block named " + name);
}

std::span<double> ParamVector::values(const std::string& name) {
  const ParamBlock& b = block(name);
  return {data_.data() + b.offset, b.size};
}

std::span<const double> ParamVector::values(const std::string& name) const {
  const ParamBlock& b = block(name);
  return {data_.data() + b.offset, b.size};
}

ParamVector ParamVector::zeros_like() const {
  ParamVector z = *this;
  z.set_zero();
  return z;
}

void ParamVector::set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

bool ParamVector::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Json param_vector_to_json(const ParamVector& params) {
  Json blocks = Json::array();
  for (const ParamBlock& b : params.blocks()) {
    const auto vals = params.values(b.name);
    blocks.push_back({{"name", b.name},
                      {"shape", b.shape},
                      {"values", std::vector<double>(vals.begin(), vals.end())}});
  }
  return Json{{"blocks", std::move(blocks)}};
}

ParamVector param_vector_from_json(const Json& doc, const std::string& path) {
  const Json& blocks = detail::require(doc, "blocks", path);
  if (!blocks.is_array()) throw ParseError(path + ".blocks: expected an array");
  ParamVector out;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string bpath = path + ".blocks[" + std::to_string(i) + "]";
    const Json& b = blocks[i];
    const Json& name = detail::require(b, "name", bpath);
    if (!name.is_string()) throw ParseError(bpath + ".name: expected a string");
    const Json& shape_doc = detail::require(b, "shape", bpath);
    std::vector<int> shape;
    for (double d : detail::numbers_at(shape_doc, bpath + ".shape")) shape.push_back(static_cast<int>(d));
    try {
      out.add_block(name.get<std::string>(), shape);
    } catch (const std::invalid_argument& e) {
      throw ParseError(bpath + ": " + e.what());
    }
    const auto vals = detail::numbers_at(detail::require(b, "values", bpath), bpath + ".values");
    auto dst = out.values(name.get<std::string>());
    if (vals.size() != dst.size())
      throw ParseError(bpath + ".values: expected " + std::to_string(dst.size()) + " numbers, found " +
                       std::to_string(vals.size()));
    std::copy(vals.begin(), vals.end(), dst.begin());
  }
  return out;
}

// ---------------------------------------------------------------- Mlp

Mlp::Mlp(std::string prefix, std::vector<int> dims, bool relu_last)
    : prefix_(std::move(prefix)), dims_(std::move(dims)), relu_last_(relu_last) {
  if (dims_.size() < 2) throw std::invalid_argument("an MLP needs at least one layer");
}

std::string Mlp::weight_name(int layer) const {
  return prefix_ + ".l" + std::to_string(layer) + ".weight";
}

std::string Mlp::bias_name(int layer) const {
  return prefix_ + ".l" + std::to_string(layer) + ".bias";
}

void Mlp::register_params(ParamVector& params) const {
  for (int l = 0; l < num_layers(); ++l) {
    params.add_block(weight_name(l), {dims_[l + 1], dims_[l]});
    params.add_block(bias_name(l), {dims_[l + 1]});
  }
}

void Mlp::init_params(ParamVector& params, Rng& rng, double last_gain) const {
  for (int l = 0; l < num_layers(); ++l) {
    const double stddev = std::sqrt(2.0 / dims_[l]) * (l + 1 == num_layers() ? last_gain : 1.0);
    for (double& w : params.values(weight_name(l))) w = normal(rng, 0.0, stddev);
    for (double& b : params.values(bias_name(l))) b = 0.0;
  }
}

namespace {

using ConstWeights = Eigen::Map<const RowMatrix>;
using Weights = Eigen::Map<RowMatrix>;

}  // namespace

RowMatrix Mlp::forward(const ParamVector& params, const RowMatrix& x, Cache* cache) const {
  if (x.cols() != in_dim())
    throw std::invalid_argument(prefix_ + ": expected input width " + std::to_string(in_dim()) +
                                ", got " + std::to_string(x.cols()));
  if (cache) {
    cache->inputs.resize(num_layers());
    cache->pre.resize(num_layers());
  }
  RowMatrix a = x;
  for (int l = 0; l < num_layers(); ++l) {
    const auto wv = params.values(weight_name(l));
    const auto bv = params.values(bias_name(l));
    const ConstWeights w(wv.data(), dims_[l + 1], dims_[l]);
    const Eigen::Map<const Eigen::RowVectorXd> b(bv.data(), dims_[l + 1]);
    RowMatrix z = a * w.transpose();
    z.rowwise() += b;
    if (cache) {
      cache->inputs[l] = std::move(a);
      cache->pre[l] = z;
    }
    const bool relu = (l + 1 < num_layers()) || relu_last_;
    a = relu ? RowMatrix(z.cwiseMax(0.0)) : std::move(z);
  }
  return a;
}

RowMatrix Mlp::backward(const ParamVector& params, const Cache& cache, const RowMatrix& d_out,
                        ParamVector& grad) const {
  RowMatrix d = d_out;
  for (int l = num_layers() - 1; l >= 0; --l) {
    const bool relu = (l + 1 < num_layers()) || relu_last_;
    if (relu) d = d.cwiseProduct((cache.pre[l].array() > 0.0).cast<double>().matrix());
    auto gw = grad.values(weight_name(l));
    auto gb = grad.values(bias_name(l));
    Weights(gw.data(), dims_[l + 1], dims_[l]) += d.transpose() * cache.inputs[l];
    Eigen::Map<Eigen::RowVectorXd>(gb.data(), dims_[l + 1]) += d.colwise().sum();
    const auto wv = params.values(weight_name(l));
    d = d * ConstWeights(wv.data(), dims_[l + 1], dims_[l]);
  }
  return d;
}

// ---------------------------------------------------------------- SetEncoder

SetEncoder::SetEncoder(const std::string& prefix, std::vector<int> point_dims,
                       std::vector<int> head_dims)
    : point_(prefix + ".point", std::move(point_dims), true),
      head_(prefix + ".head", std::move(head_dims), false) {
  if (point_.out_dim() != head_.in_dim())
    throw std::invalid_argument(prefix + ": pooled width does not match the post-pool MLP");
}

void SetEncoder::register_params(ParamVector& params) const {
  point_.register_params(params);
  head_.register_params(params);
}

void SetEncoder::init_params(ParamVector& params, Rng& rng, double last_gain) const {
  point_.init_params(params, rng);
  head_.init_params(params, rng, last_gain);
}

Eigen::VectorXd SetEncoder::forward(const ParamVector& params, const RowMatrix& elements,
                                    Cache* cache) const {
  if (elements.rows() == 0) throw std::invalid_argument("set encoder needs at least one element");
  Mlp::Cache local_point;
  RowMatrix per_point = point_.forward(params, elements, cache ? &cache->point : &local_point);
  RowMatrix pooled(1, per_point.cols());
  std::vector<int> argmax(per_point.cols(), 0);
  for (Eigen::Index c = 0; c < per_point.cols(); ++c) {
    Eigen::Index best = 0;
    for (Eigen::Index r = 1; r < per_point.rows(); ++r)
      if (per_point(r, c) > per_point(best, c)) best = r;
    argmax[c] = static_cast<int>(best);
    pooled(0, c) = per_point(best, c);
  }
  Mlp::Cache local_head;
  const RowMatrix out = head_.forward(params, pooled, cache ? &cache->head : &local_head);
  if (cache) {
    cache->point_out = std::move(per_point);
    cache->argmax = std::move(argmax);
  }
  return out.row(0).transpose();
}

RowMatrix SetEncoder::backward(const ParamVector& params, const Cache& cache,
                               const Eigen::VectorXd& d_out, ParamVector& grad) const {
  const RowMatrix d_pooled = head_.backward(params, cache.head, d_out.transpose(), grad);
  RowMatrix d_point = RowMatrix::Zero(cache.point_out.rows(), cache.point_out.cols());
  for (Eigen::Index c = 0; c < d_point.cols(); ++c) d_point(cache.argmax[c], c) = d_pooled(0, c);
  return point_.backward(params, cache.point, d_point, grad);
}

// ---------------------------------------------------------------- Adam

Adam::Adam(const AdamConfig& config, const ParamVector& layout)
    : config_(config), m_(layout.size(), 0.0), v_(layout.size(), 0.0) {}

void Adam::step(ParamVector& params, const ParamVector& grad, double learning_rate) {
  if (params.size() != m_.size() || grad.size() != m_.size())
    throw std::invalid_argument("optimizer state does not match the parameter layout");
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  auto& p = params.data();
  const auto& g = grad.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g[i];
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g[i] * g[i];
    const double mhat = m_[i] / bc1;
    const double vhat = v_[i] / bc2;
    p[i] -= learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
  }
}

Json Adam::to_json() const {
  return Json{{"learning_rate", config_.learning_rate},
              {"beta1", config_.beta1},
              {"beta2", config_.beta2},
              {"epsilon", config_.epsilon},
              {"t", t_},
              {"m", m_},
              {"v", v_}};
}

Adam Adam::from_json(const Json& doc, const std::string& path) {
  Adam a;
  a.config_.learning_rate = detail::number_at(detail::require(doc, "learning_rate", path), path + ".learning_rate");
  a.config_.beta1 = detail::number_at(detail::require(doc, "beta1", path), path + ".beta1");
  a.config_.beta2 = detail::number_at(detail::require(doc, "beta2", path), path + ".beta2");
  a.config_.epsilon = detail::number_at(detail::require(doc, "epsilon", path), path + ".epsilon");
  const Json& t = detail::require(doc, "t", path);
  if (!t.is_number_integer()) throw ParseError(path + ".t: expected an integer");
  a.t_ = t.get<long>();
  a.m_ = detail::numbers_at(detail::require(doc, "m", path), path + ".m");
  a.v_ = detail::numbers_at(detail::require(doc, "v", path), path + ".v");
  if (a.m_.size() != a.v_.size()) throw ParseError(path + ": moment vectors differ in length");
  return a;
}

}  // namespace ioumatch
