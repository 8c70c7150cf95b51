#include "flowedit/oneshot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <random>

#include "binary_io.hpp"
#include "flowedit/adam.hpp"
#include "flowedit/errors.hpp"
#include "flowedit/image_ops.hpp"
#include "flowedit/warp.hpp"

namespace flowedit {

void OneShotArch::validate() const {
  if (widths.size() < 2) throw ConfigError("one-shot: need at least two channel widths");
  for (int w : widths) {
    if (w <= 0) throw ConfigError("one-shot: channel widths must be positive");
  }
  if (blocks_per_level < 0) throw ConfigError("one-shot: blocks per level must be >= 0");
  if (heads <= 0 || head_width <= 0) throw ConfigError("one-shot: attention heads and head width must be positive");
  if (text_dim <= 0) throw ConfigError("one-shot: text dimension must be positive");
  for (int h : hyper_hidden) {
    if (h <= 0) throw ConfigError("one-shot: hypernetwork widths must be positive");
  }
  color_arch.validate();
  if (color_arch.output_channels() != 1) throw ConfigError("one-shot: color INR must have 1 output");
  if (!(flow_scale > 0.0f)) throw ConfigError("one-shot: flow scale must be positive");
}

OneShotArch OneShotArch::scaled(float width_factor) {
  if (!(width_factor > 0.0f)) throw ConfigError("one-shot: width factor must be positive");
  OneShotArch a;
  a.widths.clear();
  for (int w : {64, 128, 128, 256}) {
    a.widths.push_back(std::max(1, static_cast<int>(std::lround(static_cast<float>(w) * width_factor))));
  }
  return a;
}

Tensor cross_attention(const Tensor& features, const Tensor& text, const Tensor& w_q, const Tensor& w_k,
                       const Tensor& w_v, const Tensor& w_o, int heads, std::vector<Tensor>* weights_out) {
  if (features.rank() != 2 || text.rank() != 2) {
    throw ShapeError("cross_attention: expected [N, C] features and [M, E] text, got " +
                     to_string(features.shape()) + " and " + to_string(text.shape()));
  }
  if (w_q.rank() != 2 || w_q.dim(0) != features.dim(1) || w_k.rank() != 2 || w_k.dim(0) != text.dim(1) ||
      w_v.shape() != w_k.shape() || w_k.dim(1) != w_q.dim(1) || w_o.rank() != 2 || w_o.dim(0) != w_q.dim(1) ||
      w_o.dim(1) != features.dim(1)) {
    throw ShapeError("cross_attention: projections " + to_string(w_q.shape()) + ", " + to_string(w_k.shape()) +
                     ", " + to_string(w_v.shape()) + ", " + to_string(w_o.shape()) + " do not fit features " +
                     to_string(features.shape()) + " and text " + to_string(text.shape()));
  }
  const int d = w_q.dim(1);
  if (heads <= 0 || d % heads != 0) {
    throw ShapeError("cross_attention: width " + std::to_string(d) + " not divisible by " + std::to_string(heads) +
                     " heads");
  }
  const int hw = d / heads;
  const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(hw));
  Tensor q = matmul(features, w_q);
  Tensor k = matmul(text, w_k);
  Tensor v = matmul(text, w_v);
  std::vector<Tensor> outs;
  for (int h = 0; h < heads; ++h) {
    Tensor qh = narrow(q, 1, h * hw, hw);
    Tensor kh = narrow(k, 1, h * hw, hw);
    Tensor vh = narrow(v, 1, h * hw, hw);
    Tensor a = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt));
    if (weights_out != nullptr) weights_out->push_back(a);
    outs.push_back(matmul(a, vh));
  }
  Tensor attended = heads == 1 ? outs.front() : concat(outs, 1);
  return add(features, matmul(attended, w_o));
}

namespace {

std::vector<float> uniform_values(std::mt19937_64& rng, std::size_t n, float bound) {
  std::uniform_real_distribution<float> dist(-bound, bound);
  std::vector<float> v(n);
  for (float& x : v) x = dist(rng);
  return v;
}

std::string level_name(const char* prefix, int level) { return prefix + std::to_string(level); }

}  // namespace

Tensor& OneShotNet::add(std::string name, Shape shape, std::vector<float> values) {
  params_.push_back({std::move(name), Tensor::from(std::move(shape), std::move(values), true)});
  return params_.back().value;
}

OneShotNet::OneShotNet(OneShotArch arch, std::uint64_t seed) : arch_(std::move(arch)) {
  arch_.validate();
  std::mt19937_64 rng(seed);
  const auto& c = arch_.widths;

  auto add_conv = [&](const std::string& name, int out, int in, bool zero = false) {
    const std::size_t n = static_cast<std::size_t>(out) * in * 9;
    add(name + ".w", {out, in, 3, 3},
        zero ? std::vector<float>(n, 0.0f) : uniform_values(rng, n, std::sqrt(3.0f / static_cast<float>(in * 9))));
    add(name + ".b", {out}, std::vector<float>(out, 0.0f));
  };
  auto add_blocks = [&](const std::string& prefix, int width) {
    for (int b = 0; b < arch_.blocks_per_level; ++b) {
      add_conv(prefix + ".block" + std::to_string(b) + ".conv0", width, width);
      add_conv(prefix + ".block" + std::to_string(b) + ".conv1", width, width);
    }
  };
  auto add_linear = [&](const std::string& name, int in, int out) {
    add(name, {in, out}, uniform_values(rng, static_cast<std::size_t>(in) * out, std::sqrt(3.0f / in)));
  };

  add_conv("stem", c[0], 3);
  add_blocks("enc0", c[0]);
  for (int l = 1; l <= arch_.levels(); ++l) {
    add_conv(level_name("down", l), c[l], c[l - 1]);
    add_blocks(level_name("enc", l), c[l]);
  }

  const int bottleneck = c.back();
  const int d = arch_.attention_dim();
  add_linear("attn.q", bottleneck, d);
  add_linear("attn.k", arch_.text_dim, d);
  add_linear("attn.v", arch_.text_dim, d);
  add_linear("attn.o", d, bottleneck);

  for (int l = arch_.levels(); l >= 1; --l) {
    add_conv(level_name("up", l), c[l - 1], c[l] + c[l - 1]);
    add_blocks(level_name("dec", l), c[l - 1]);
  }
  add_conv("head", 2, c[0], true);

  int in = bottleneck;
  for (std::size_t i = 0; i < arch_.hyper_hidden.size(); ++i) {
    const int out = arch_.hyper_hidden[i];
    add("hyper" + std::to_string(i) + ".w", {in, out},
        uniform_values(rng, static_cast<std::size_t>(in) * out, std::sqrt(6.0f / static_cast<float>(in + out))));
    add("hyper" + std::to_string(i) + ".b", {out}, std::vector<float>(out, 0.0f));
    in = out;
  }
  const int theta = static_cast<int>(arch_.color_arch.parameter_count());
  const std::string last = "hyper" + std::to_string(arch_.hyper_hidden.size());
  add(last + ".w", {in, theta}, std::vector<float>(static_cast<std::size_t>(in) * theta, 0.0f));
  add(last + ".b", {theta}, flatten_params(init_params(arch_.color_arch, seed ^ 0x636f6c6f72ULL)));
}

std::vector<Tensor> OneShotNet::parameter_tensors() const {
  std::vector<Tensor> out;
  for (const auto& p : params_) out.push_back(p.value);
  return out;
}

std::size_t OneShotNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

Tensor& OneShotNet::param(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p.value;
  }
  throw std::out_of_range("one-shot: no parameter '" + name + "'");
}

const Tensor& OneShotNet::param(const std::string& name) const {
  return const_cast<OneShotNet*>(this)->param(name);
}

Tensor OneShotNet::conv(const Tensor& x, const std::string& name, int stride) const {
  return conv2d(x, param(name + ".w"), param(name + ".b"), stride, 1);
}

Tensor OneShotNet::res_block(const Tensor& x, const std::string& name) const {
  Tensor y = conv(relu(conv(x, name + ".conv0", 1)), name + ".conv1", 1);
  return relu(flowedit::add(x, y));
}

OneShotOutput OneShotNet::forward(const Tensor& image, const Tensor& text) const {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw ShapeError("one-shot: expected H x W x 3 image, got " + to_string(image.shape()));
  }
  const int h = image.dim(0), w = image.dim(1);
  const int factor = 1 << arch_.levels();
  if (h % factor != 0 || w % factor != 0) {
    throw ShapeError("one-shot: image " + std::to_string(h) + "x" + std::to_string(w) + " not divisible by " +
                     std::to_string(factor));
  }
  if (text.rank() != 2 || text.dim(1) != arch_.text_dim) {
    throw ShapeError("one-shot: expected [M, " + std::to_string(arch_.text_dim) + "] text tokens, got " +
                     to_string(text.shape()));
  }
  auto blocks = [&](Tensor x, const std::string& prefix) {
    for (int b = 0; b < arch_.blocks_per_level; ++b) x = res_block(x, prefix + ".block" + std::to_string(b));
    return x;
  };

  Tensor x = blocks(relu(conv(permute(image, {2, 0, 1}), "stem", 1)), "enc0");
  std::vector<Tensor> skips{x};
  for (int l = 1; l <= arch_.levels(); ++l) {
    x = blocks(relu(conv(x, level_name("down", l), 2)), level_name("enc", l));
    skips.push_back(x);
  }

  const int channels = x.dim(0), bh = x.dim(1), bw = x.dim(2);
  const int tokens = bh * bw;
  OneShotOutput out;
  Tensor feats = transpose(reshape(x, {channels, tokens}));
  feats = cross_attention(feats, text, param("attn.q"), param("attn.k"), param("attn.v"), param("attn.o"),
                          arch_.heads, &out.attention);
  x = reshape(transpose(feats), {channels, bh, bw});

  for (int l = arch_.levels(); l >= 1; --l) {
    x = concat({nearest_upsample(x, 2), skips[l - 1]}, 0);
    x = blocks(relu(conv(x, level_name("up", l), 1)), level_name("dec", l));
  }
  out.flow = scale(permute(conv(x, "head", 1), {1, 2, 0}), arch_.flow_scale);

  Tensor pooled = matmul(Tensor::full({1, tokens}, 1.0f / static_cast<float>(tokens)), feats);
  Tensor z = pooled;
  const int hidden = static_cast<int>(arch_.hyper_hidden.size());
  for (int i = 0; i <= hidden; ++i) {
    const std::string n = "hyper" + std::to_string(i);
    z = add_bias(matmul(z, param(n + ".w")), param(n + ".b"));
    if (i < hidden) z = relu(z);
  }
  out.theta_c = reshape(z, {static_cast<int>(arch_.color_arch.parameter_count())});
  const Tensor encoded = encode_grid(normalized_grid(h, w), arch_.color_arch.encoding_levels);
  out.cflow = inr_forward_encoded(arch_.color_arch, out.theta_c, encoded, h, w);
  return out;
}

Tensor text_tokens(const std::vector<float>& embedding) {
  return Tensor::from({1, static_cast<int>(embedding.size())}, embedding);
}

void OneShotTrainConfig::validate() const {
  weights.validate();
  if (epochs < 0) throw ConfigError("one-shot: epochs must be >= 0");
  if (!(lr > 0.0f)) throw ConfigError("one-shot: lr must be positive");
  if (blur_kernel < 0 || (blur_kernel > 0 && blur_kernel % 2 == 0)) {
    throw ConfigError("one-shot: blur kernel must be 0 or odd, got " + std::to_string(blur_kernel));
  }
  if (!(alpha >= 0.0f)) throw ConfigError("one-shot: alpha must be >= 0");
  if (augment && augment_count < 1) throw ConfigError("one-shot: augment count must be >= 1");
}

std::vector<OneShotTraceRow> train_oneshot(OneShotNet& net, const std::vector<Image>& dataset,
                                           const std::vector<std::string>& prompts, GuidanceScorer& scorer,
                                           const OneShotTrainConfig& config, IdentityEmbedder* identity,
                                           const std::function<void(const OneShotTraceRow&)>& on_step) {
  config.validate();
  if (dataset.empty()) throw ConfigError("one-shot: empty dataset");
  if (prompts.empty()) throw ConfigError("one-shot: empty prompt list");

  const int per_epoch = static_cast<int>(dataset.size());
  Adam adam(net.parameter_tensors(), AdamConfig{config.lr, 0.9f, 0.999f, 1e-8f,
                                                config.halve_every_epochs * per_epoch});
  RandomProjectionEmbedder default_identity;
  GuidanceContext ctx;
  ctx.scorer = &scorer;
  ctx.identity = identity != nullptr ? identity : &default_identity;
  ctx.augment = config.augment;
  ctx.augment_count = config.augment_count;
  ctx.augmentation = config.augmentation;

  std::map<std::string, Tensor> token_cache;
  auto tokens_for = [&](const std::string& prompt) -> const Tensor& {
    auto it = token_cache.find(prompt);
    if (it == token_cache.end()) it = token_cache.emplace(prompt, text_tokens(scorer.text_embedding(prompt))).first;
    return it->second;
  };

  std::mt19937_64 rng(config.seed);
  std::vector<int> order(dataset.size());
  std::vector<OneShotTraceRow> trace;
  int step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::shuffle(order.begin(), order.end(), rng);
    for (int idx : order) {
      if (config.max_steps >= 0 && step >= config.max_steps) return trace;
      const std::string& prompt = prompts[std::uniform_int_distribution<std::size_t>(0, prompts.size() - 1)(rng)];
      const Image& img = dataset[idx];
      const Tensor input = img.tensor();
      ctx.prompt = prompt;
      ctx.augmentation.seed = config.augmentation.seed ^ (static_cast<std::uint64_t>(step) * 0xbf58476d1ce4e5b9ULL);

      adam.zero_grad();
      OneShotOutput out = net.forward(input, tokens_for(prompt));
      Tensor flow = smooth_and_scale(out.flow, config.blur_kernel, config.alpha);
      Tensor cflow = config.weights.color > 0.0f ? smooth_and_scale(out.cflow, 0, config.alpha)
                                                 : Tensor::zeros({img.height, img.width, 1});
      LossTerms terms = total_loss(input, flow, cflow, config.weights, ctx);
      OneShotTraceRow row{epoch, step, terms.total.item(), adam.current_lr()};
      backward(terms.total);
      adam.step();
      trace.push_back(row);
      if (on_step) on_step(row);
      ++step;
    }
  }
  return trace;
}

OneShotEdit oneshot_edit(const OneShotNet& net, const Image& image, const std::vector<float>& text_embedding,
                         int blur_kernel, float alpha) {
  OneShotOutput out = net.forward(image.tensor(), text_tokens(text_embedding));
  OneShotEdit e;
  e.flow = SpatialFlowField::from_tensor(smooth_and_scale(out.flow, blur_kernel, alpha));
  e.cflow = ColorFlowField::from_tensor(smooth_and_scale(out.cflow, 0, alpha));
  e.theta_c = out.theta_c.to_vector();
  e.edited = warp_image(image, e.flow, e.cflow);
  return e;
}

namespace {

constexpr const char* kFormat = "OSN1";

void put_list(std::ostream& out, const std::vector<int>& values) {
  detail::put_u32(out, static_cast<std::uint32_t>(values.size()));
  for (int v : values) detail::put_u32(out, static_cast<std::uint32_t>(v));
}

std::vector<int> get_list(std::istream& in) {
  const std::uint32_t n = detail::get_u32(in, kFormat);
  if (n > 64) throw IoError("OSN1: implausible list length " + std::to_string(n));
  std::vector<int> v(n);
  for (int& x : v) x = static_cast<int>(detail::get_u32(in, kFormat));
  return v;
}

}  // namespace

void save_oneshot(const std::filesystem::path& path, const OneShotNet& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  const OneShotArch& a = net.arch();
  out.write(kFormat, 4);
  put_list(out, a.widths);
  detail::put_u32(out, static_cast<std::uint32_t>(a.blocks_per_level));
  detail::put_u32(out, static_cast<std::uint32_t>(a.heads));
  detail::put_u32(out, static_cast<std::uint32_t>(a.head_width));
  detail::put_u32(out, static_cast<std::uint32_t>(a.text_dim));
  put_list(out, a.hyper_hidden);
  detail::put_u32(out, static_cast<std::uint32_t>(a.color_arch.encoding_levels));
  put_list(out, a.color_arch.dims);
  detail::put_f32(out, a.flow_scale);
  const auto count = static_cast<std::uint64_t>(net.parameter_count());
  detail::put_u32(out, static_cast<std::uint32_t>(count & 0xffffffffu));
  detail::put_u32(out, static_cast<std::uint32_t>(count >> 32));
  for (const auto& p : net.parameters()) {
    for (float v : p.value.data()) detail::put_f32(out, v);
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

OneShotNet load_oneshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  char magic[4];
  if (!in.read(magic, 4) || std::string_view(magic, 4) != kFormat) {
    throw IoError("'" + path.string() + "' is not an OSN1 checkpoint");
  }
  OneShotArch a;
  a.widths = get_list(in);
  a.blocks_per_level = static_cast<int>(detail::get_u32(in, kFormat));
  a.heads = static_cast<int>(detail::get_u32(in, kFormat));
  a.head_width = static_cast<int>(detail::get_u32(in, kFormat));
  a.text_dim = static_cast<int>(detail::get_u32(in, kFormat));
  a.hyper_hidden = get_list(in);
  a.color_arch.encoding_levels = static_cast<int>(detail::get_u32(in, kFormat));
  a.color_arch.dims = get_list(in);
  a.flow_scale = detail::get_f32(in, kFormat);
  std::uint64_t count = detail::get_u32(in, kFormat);
  count |= static_cast<std::uint64_t>(detail::get_u32(in, kFormat)) << 32;

  std::optional<OneShotNet> net;
  try {
    net.emplace(a, 0);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("OSN1 architecture header: ") + e.what());
  }
  if (count != net->parameter_count()) {
    throw ConfigError("OSN1: header declares " + std::to_string(count) + " parameters, architecture needs " +
                  std::to_string(net->parameter_count()));
  }
  for (auto& p : net->parameters()) {
    for (float& v : p.value.mutable_data()) v = detail::get_f32(in, kFormat);
  }
  return std::move(*net);
}

std::vector<Image> load_image_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw IoError("'" + dir.string() + "' is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png" || ext == ".ppm" || ext == ".pnm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Image> images;
  for (const auto& f : files) images.push_back(read_image(f));
  return images;
}

std::vector<std::string> load_prompts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open prompt list '" + path.string() + "'");
  std::vector<std::string> prompts;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
    const auto start = line.find_first_not_of(" \t");
    if (start == std::string::npos) continue;
    prompts.push_back(line.substr(start));
  }
  return prompts;
}

}  // namespace flowedit
