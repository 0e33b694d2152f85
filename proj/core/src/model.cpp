#include "gwad/model.hpp"

#include <cmath>

#include "gwad/rng.hpp"

namespace gwad {

ModelPlan plan_model(const ModelConfig& c) {
  if (c.num_classes != 2) throw ConfigError("model: num_classes must be 2");
  if (c.input_len < 1 || c.input_channels < 1)
    throw ConfigError("model: input dimensions must be positive");
  if (c.stem_channels < 1 || c.stem_kernel < 1 || c.stem_pool < 1)
    throw ConfigError("model: stem parameters must be positive");
  if (c.head_hidden && *c.head_hidden < 1)
    throw ConfigError("model: head_hidden must be positive when set");

  ModelPlan p;
  std::size_t len = static_cast<std::size_t>(c.input_len);
  // stem conv uses `same` padding, so only the pool can underflow
  if (len < static_cast<std::size_t>(c.stem_pool))
    throw ConfigError("model: stem pool window exceeds sequence length");
  len = (len - static_cast<std::size_t>(c.stem_pool)) /
            static_cast<std::size_t>(c.stem_pool) +
        1;
  p.len_after_stem = len;

  int ch = c.stem_channels;
  for (const auto& b : c.blocks) {
    if (b.channels < 1 || b.kernel < 1 || b.stride < 1)
      throw ConfigError("model: block parameters must be positive");
    len = conv_out_len(len, b.kernel, b.stride, Padding::Same);
    if (len < 1) throw ConfigError("model: sequence length underflow in blocks");
    ch = b.channels;
  }
  p.len_out = len;
  p.channels_out = ch;
  p.pooled_features = 2 * static_cast<std::size_t>(ch);
  return p;
}

namespace {

template <typename T>
Array<T> he_normal(std::vector<std::size_t> shape, std::size_t fan_in,
                   std::uint64_t seed) {
  Array<T> w(std::move(shape));
  Rng rng(seed);
  double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : w.data()) v = static_cast<T>(std_dev * rng.gaussian());
  return w;
}

template <typename T>
Conv1dLayer<T> make_conv(int out_ch, int in_ch, int kernel, int stride,
                         std::uint64_t root, const std::string& name) {
  Conv1dLayer<T> conv;
  conv.weight = he_normal<T>({static_cast<std::size_t>(out_ch),
                              static_cast<std::size_t>(in_ch),
                              static_cast<std::size_t>(kernel)},
                             static_cast<std::size_t>(in_ch * kernel),
                             derive_seed(root, "init." + name));
  conv.bias = Array<T>({static_cast<std::size_t>(out_ch)});
  conv.stride = stride;
  conv.padding = Padding::Same;
  return conv;
}

template <typename T>
BatchNorm1dLayer<T> make_bn(int channels) {
  BatchNorm1dLayer<T> bn;
  auto ch = static_cast<std::size_t>(channels);
  bn.gamma = Array<T>::full({ch}, T{1});
  bn.beta = Array<T>({ch});
  bn.running_mean.assign(ch, T{0});
  bn.running_var.assign(ch, T{1});
  return bn;
}

}  // namespace

template <typename T>
Model<T>::Model(const ModelConfig& config) : config_(config) {
  ModelPlan plan = plan_model(config_);

  stem_conv_ = make_conv<T>(config_.stem_channels, config_.input_channels,
                            config_.stem_kernel, 1, config_.seed, "stem.conv");
  stem_bn_ = make_bn<T>(config_.stem_channels);

  int in_ch = config_.stem_channels;
  for (std::size_t i = 0; i < config_.blocks.size(); ++i) {
    const auto& spec = config_.blocks[i];
    std::string prefix = "block" + std::to_string(i);
    ResidualDifferenceBlock<T> blk;
    blk.conv1 = make_conv<T>(spec.channels, in_ch, spec.kernel, spec.stride,
                             config_.seed, prefix + ".conv1");
    blk.bn1 = make_bn<T>(spec.channels);
    blk.conv2 = make_conv<T>(spec.channels, spec.channels, spec.kernel, 1,
                             config_.seed, prefix + ".conv2");
    blk.bn2 = make_bn<T>(spec.channels);
    if (in_ch != spec.channels || spec.stride != 1)
      blk.input_proj = make_conv<T>(spec.channels, in_ch, 1, spec.stride,
                                    config_.seed, prefix + ".proj");
    blocks_.push_back(std::move(blk));
    in_ch = spec.channels;
  }

  std::size_t features = plan.pooled_features;
  if (config_.head_hidden) {
    auto hidden = static_cast<std::size_t>(*config_.head_hidden);
    hidden_ = DenseLayer<T>{
        he_normal<T>({hidden, features}, features,
                     derive_seed(config_.seed, "init.head.hidden")),
        Array<T>({hidden})};
    features = hidden;
  }
  out_ = DenseLayer<T>{
      he_normal<T>({2, features}, features,
                   derive_seed(config_.seed, "init.head.out")),
      Array<T>({2})};
}

template <typename T>
Array<T> Model<T>::forward(const Array<T>& x, Mode mode) {
  if (x.rank() != 3 ||
      x.shape()[1] != static_cast<std::size_t>(config_.input_len) ||
      x.shape()[2] != static_cast<std::size_t>(config_.input_channels))
    throw ShapeError("model: input must be [batch, input_len, input_channels]");

  std::size_t batch = x.shape()[0];
  auto len = static_cast<std::size_t>(config_.input_len);
  auto ch = static_cast<std::size_t>(config_.input_channels);

  // channels-first working copy (plain data movement, not taped)
  Array<T> cf({batch, ch, len});
  {
    const T* xp = x.data().data();
    T* cp = cf.data().data();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t t = 0; t < len; ++t)
        for (std::size_t c = 0; c < ch; ++c)
          cp[(b * ch + c) * len + t] = xp[(b * len + t) * ch + c];
  }

  if (config_.standardize_inputs) {
    T* cp = cf.data().data();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < ch; ++c) {
        T* row = cp + (b * ch + c) * len;
        double mean = 0.0;
        for (std::size_t t = 0; t < len; ++t) mean += row[t];
        mean /= static_cast<double>(len);
        double var = 0.0;
        for (std::size_t t = 0; t < len; ++t) {
          double d = row[t] - mean;
          var += d * d;
        }
        var /= static_cast<double>(len);
        T inv = static_cast<T>(1.0 / std::sqrt(var + 1e-8));
        for (std::size_t t = 0; t < len; ++t)
          row[t] = static_cast<T>((row[t] - mean) * inv);
      }
  }

  auto h = maxpool1d(relu(stem_bn_.forward(stem_conv_.forward(cf), mode)),
                     config_.stem_pool, config_.stem_pool);
  for (auto& blk : blocks_) {
    h = blk.forward(h, mode);
    if (config_.post_block_relu) h = relu(h);
  }
  h = global_pool_head(h);
  if (hidden_) h = relu(hidden_->forward(h));
  return out_.forward(h);
}

template <typename T>
std::vector<std::pair<std::string, Array<T>*>> Model<T>::parameters() {
  std::vector<std::pair<std::string, Array<T>*>> out;
  out.emplace_back("stem.conv.weight", &stem_conv_.weight);
  out.emplace_back("stem.conv.bias", &stem_conv_.bias);
  out.emplace_back("stem.bn.gamma", &stem_bn_.gamma);
  out.emplace_back("stem.bn.beta", &stem_bn_.beta);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    std::string p = "block" + std::to_string(i);
    auto& b = blocks_[i];
    out.emplace_back(p + ".conv1.weight", &b.conv1.weight);
    out.emplace_back(p + ".conv1.bias", &b.conv1.bias);
    out.emplace_back(p + ".bn1.gamma", &b.bn1.gamma);
    out.emplace_back(p + ".bn1.beta", &b.bn1.beta);
    out.emplace_back(p + ".conv2.weight", &b.conv2.weight);
    out.emplace_back(p + ".conv2.bias", &b.conv2.bias);
    out.emplace_back(p + ".bn2.gamma", &b.bn2.gamma);
    out.emplace_back(p + ".bn2.beta", &b.bn2.beta);
    if (b.input_proj) {
      out.emplace_back(p + ".proj.weight", &b.input_proj->weight);
      out.emplace_back(p + ".proj.bias", &b.input_proj->bias);
    }
  }
  if (hidden_) {
    out.emplace_back("head.hidden.weight", &hidden_->weight);
    out.emplace_back("head.hidden.bias", &hidden_->bias);
  }
  out.emplace_back("head.out.weight", &out_.weight);
  out.emplace_back("head.out.bias", &out_.bias);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, std::vector<T>*>> Model<T>::buffers() {
  std::vector<std::pair<std::string, std::vector<T>*>> out;
  out.emplace_back("stem.bn.running_mean", &stem_bn_.running_mean);
  out.emplace_back("stem.bn.running_var", &stem_bn_.running_var);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    std::string p = "block" + std::to_string(i);
    auto& b = blocks_[i];
    out.emplace_back(p + ".bn1.running_mean", &b.bn1.running_mean);
    out.emplace_back(p + ".bn1.running_var", &b.bn1.running_var);
    out.emplace_back(p + ".bn2.running_mean", &b.bn2.running_mean);
    out.emplace_back(p + ".bn2.running_var", &b.bn2.running_var);
  }
  return out;
}

template <typename T>
void Model<T>::watch_all(Tape<T>& tape) {
  for (auto& [name, p] : parameters()) tape.watch(*p);
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto& [name, p] : parameters()) p->zero_grad();
}

template class Model<float>;
template class Model<double>;

}  // namespace gwad
