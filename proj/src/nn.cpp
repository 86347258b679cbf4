#include "pm/nn.hpp"

#include <cmath>

namespace pm {

TensorPtr ParamStore::add(const std::string& name, TensorPtr t, bool trainable) {
  if (!t) throw config_error("null tensor for parameter '" + name + "'");
  if (find(name)) throw config_error("duplicate parameter name '" + name + "'");
  // Gradient buffers appear on first backward; an optimizer stepping a
  // parameter that never saw a backward pass reports it as missing.
  t->requires_grad = trainable;
  entries_.push_back(ParamEntry{name, t, trainable});
  return t;
}

TensorPtr ParamStore::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.tensor;
  return nullptr;
}

int64_t ParamStore::trainable_count() const {
  int64_t n = 0;
  for (const auto& e : entries_)
    if (e.trainable) n += e.tensor->numel();
  return n;
}

void ParamStore::attach(Graph& g) const {
  for (const auto& e : entries_)
    if (e.trainable) g.add_parameter(e.name, e.tensor);
}

SgdOptimizer::SgdOptimizer(std::vector<ParamEntry> params, SgdConfig cfg)
    : cfg_(cfg) {
  for (auto& e : params) {
    if (!e.trainable) continue;
    params_.push_back(e);
    velocity_.emplace_back(e.tensor->data.size(), 0.f);
  }
}

void SgdOptimizer::step() {
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& t = *params_[pi].tensor;
    if (t.grad.size() != t.data.size())
      throw config_error("parameter '" + params_[pi].name +
                         "' has no gradient buffer");
    auto& v = velocity_[pi];
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = cfg_.momentum * v[i] + t.grad[i] + cfg_.weight_decay * t.data[i];
      t.data[i] -= cfg_.lr * v[i];
    }
    t.zero_grad();
  }
}

void kaiming_fill(Tensor& t, int fan_in, std::mt19937_64& rng) {
  std::normal_distribution<float> dist(
      0.f, std::sqrt(2.f / static_cast<float>(fan_in)));
  for (auto& v : t.data) v = dist(rng);
}

TensorPtr Seq::forward(Graph& g, const TensorPtr& x, bool training) {
  TensorPtr h = x;
  for (auto& b : blocks_) h = b->forward(g, h, training);
  return h;
}

namespace {

TensorPtr make_conv_weight(ParamStore& ps, const std::string& name, int cout,
                           int cin, int k, std::mt19937_64& rng) {
  auto w = Tensor::create({cout, cin, k, k});
  kaiming_fill(*w, cin * k * k, rng);
  return ps.add(name, w);
}

struct BnParams {
  TensorPtr gamma, beta, mean, var;
};

BnParams make_bn(ParamStore& ps, const std::string& prefix, int c) {
  BnParams p;
  p.gamma = Tensor::create({c});
  std::fill(p.gamma->data.begin(), p.gamma->data.end(), 1.f);
  p.beta = Tensor::create({c});
  p.mean = Tensor::create({c});
  p.var = Tensor::create({c});
  std::fill(p.var->data.begin(), p.var->data.end(), 1.f);
  ps.add(prefix + ".gamma", p.gamma);
  ps.add(prefix + ".beta", p.beta);
  ps.add(prefix + ".running_mean", p.mean, /*trainable=*/false);
  ps.add(prefix + ".running_var", p.var, /*trainable=*/false);
  return p;
}

constexpr float kBnMomentum = 0.1f;
constexpr float kBnEps = 1e-5f;

}  // namespace

ConvBlock::ConvBlock(ParamStore& ps, const std::string& name, int cin, int cout,
                     int k, int stride, int pad, bool bn, bool act,
                     std::mt19937_64& rng)
    : name_(name), stride_(stride), pad_(pad), bn_(bn), act_(act) {
  w_ = make_conv_weight(ps, name + ".w", cout, cin, k, rng);
  b_ = ps.add(name + ".b", Tensor::create({cout}));
  if (bn_) {
    auto p = make_bn(ps, name + ".bn", cout);
    bn_gamma_ = p.gamma;
    bn_beta_ = p.beta;
    bn_mean_ = p.mean;
    bn_var_ = p.var;
  }
}

TensorPtr ConvBlock::forward(Graph& g, const TensorPtr& x, bool training) {
  TensorPtr h = conv2d(g, x, w_, b_, stride_, pad_, name_ + ".conv");
  if (bn_)
    h = batch_norm(g, h, bn_gamma_, bn_beta_, bn_mean_, bn_var_, training,
                   kBnMomentum, kBnEps, name_ + ".bn");
  if (act_) h = relu(g, h, name_ + ".relu");
  return h;
}

ResidualBlock::ResidualBlock(ParamStore& ps, const std::string& name,
                             int channels, std::mt19937_64& rng)
    : name_(name) {
  c1_ = std::make_unique<ConvBlock>(ps, name + ".c1", channels, channels, 3, 1, 1,
                                    true, true, rng);
  c2_ = std::make_unique<ConvBlock>(ps, name + ".c2", channels, channels, 3, 1, 1,
                                    true, false, rng);
}

TensorPtr ResidualBlock::forward(Graph& g, const TensorPtr& x, bool training) {
  TensorPtr h = c1_->forward(g, x, training);
  h = c2_->forward(g, h, training);
  h = add(g, h, x, name_ + ".add");
  return relu(g, h, name_ + ".relu");
}

TensorPtr ResidualWrap::forward(Graph& g, const TensorPtr& x, bool training) {
  TensorPtr h = inner_->forward(g, x, training);
  h = add(g, h, x, name_ + ".add");
  return relu(g, h, name_ + ".relu");
}

FireModule::FireModule(ParamStore& ps, const std::string& name, int cin,
                       int squeeze, int e1, int e3, std::mt19937_64& rng)
    : name_(name), out_channels_(e1 + e3) {
  if (squeeze >= e1 + e3)
    throw config_error("fire module '" + name +
                       "': squeeze width must be smaller than total expand width");
  squeeze_ = std::make_unique<ConvBlock>(ps, name + ".squeeze", cin, squeeze, 1, 1,
                                         0, true, true, rng);
  e1_ = std::make_unique<ConvBlock>(ps, name + ".expand1", squeeze, e1, 1, 1, 0,
                                    true, true, rng);
  e3_ = std::make_unique<ConvBlock>(ps, name + ".expand3", squeeze, e3, 3, 1, 1,
                                    true, true, rng);
}

TensorPtr FireModule::forward(Graph& g, const TensorPtr& x, bool training) {
  TensorPtr s = squeeze_->forward(g, x, training);
  TensorPtr a = e1_->forward(g, s, training);
  TensorPtr b = e3_->forward(g, s, training);
  return concat_channels(g, {a, b}, name_ + ".concat");
}

DepthPoint::DepthPoint(ParamStore& ps, const std::string& name, int cin, int cout,
                       int stride, std::mt19937_64& rng)
    : name_(name), stride_(stride) {
  dw_w_ = Tensor::create({cin, 1, 3, 3});
  kaiming_fill(*dw_w_, 9, rng);
  ps.add(name + ".dw.w", dw_w_);
  dw_b_ = ps.add(name + ".dw.b", Tensor::create({cin}));
  auto p = make_bn(ps, name + ".dw.bn", cin);
  dw_gamma_ = p.gamma;
  dw_beta_ = p.beta;
  dw_mean_ = p.mean;
  dw_var_ = p.var;
  pw_ = std::make_unique<ConvBlock>(ps, name + ".pw", cin, cout, 1, 1, 0, true,
                                    true, rng);
}

TensorPtr DepthPoint::forward(Graph& g, const TensorPtr& x, bool training) {
  TensorPtr h = depthwise3x3(g, x, dw_w_, dw_b_, stride_, 1, name_ + ".dw");
  h = batch_norm(g, h, dw_gamma_, dw_beta_, dw_mean_, dw_var_, training,
                 kBnMomentum, kBnEps, name_ + ".dw.bn");
  h = relu(g, h, name_ + ".dw.relu");
  return pw_->forward(g, h, training);
}

TensorPtr AvgPoolBlock::forward(Graph& g, const TensorPtr& x, bool) {
  return avg_pool2(g, x, name_);
}

}  // namespace pm
