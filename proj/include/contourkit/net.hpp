/**
 * @file net.hpp
 * @brief Forward pass of a convolutional feature extractor with loadable weights.
 *
 * Supported layer kinds: conv (true cross-correlation, zero padding), relu,
 * maxpool (ceil-mode window placement, as in the Caffe lineage, so map sizes
 * stay exact ratios of the input), and cross-channel lrn. Named tap points
 * mark where activation maps are extracted together with their cumulative
 * spatial stride.
 *
 * Net architectures load from a plain-text layer list, one layer per line of
 * key=value tokens, e.g.
 *
 *   input_channels=3
 *   kind=conv name=conv1 out_channels=96 kernel=11 stride=4 pad=5
 *   kind=relu
 *   kind=lrn depth_radius=2 alpha=2e-05 beta=0.75 bias=1 tap=Conv1
 *   kind=maxpool kernel=3 stride=2
 *
 * A tap=NAME token marks that layer's output as an extraction point.
 *
 * Weights load from PXW1 bundles: "PXW1" | u32 record count | per record
 * (u32 name length | name bytes | embedded PXF1 tensor). Conv layer NAME
 * expects records "NAME.weight" with dims (out_channels, in_channels,
 * kernel, kernel) and "NAME.bias" with dims (out_channels). Unknown record
 * names are ignored so full exports from other frameworks load as-is;
 * grouped convolutions must be expanded to dense block-diagonal kernels
 * before export.
 */
#pragma once

#include <contourkit/errors.hpp>
#include <contourkit/image.hpp>
#include <contourkit/rng.hpp>

#include <cstring>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace ck {

// =============================================================================
// Layer and net specification
// =============================================================================

enum class LayerKind { conv, relu, maxpool, lrn };

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::string name;  // required for conv (weight record lookup)

  // conv
  int out_channels = 0;
  // conv + maxpool
  int kernel = 1;
  int stride = 1;
  int pad = 0;  // conv only

  // lrn
  int depth_radius = 0;
  double alpha = 0.0;
  double beta = 1.0;
  double bias = 1.0;
};

struct TapPoint {
  std::string name;
  int layer_index = 0;  // tap captures the output of layers[layer_index]
};

struct NetSpec {
  int input_channels = 3;
  std::vector<LayerSpec> layers;
  std::vector<TapPoint> taps;

  static NetSpec parse(const std::string& text, const std::string& origin = "<netspec>");
  static NetSpec load(const std::filesystem::path& path) {
    return parse(detail::read_file_bytes(path), path.string());
  }

  const TapPoint& tap(const std::string& name) const {
    for (const auto& t : taps)
      if (t.name == name) return t;
    throw ContractError("unknown tap: " + name);
  }

  /// Cumulative spatial stride of the output of layers[index].
  int stride_at(int index) const {
    int s = 1;
    for (int i = 0; i <= index && i < static_cast<int>(layers.size()); ++i)
      if (layers[i].kind == LayerKind::conv || layers[i].kind == LayerKind::maxpool)
        s *= layers[i].stride;
    return s;
  }

  int tap_stride(const std::string& name) const { return stride_at(tap(name).layer_index); }

  /// Channel count flowing out of layers[index].
  int channels_at(int index) const {
    int c = input_channels;
    for (int i = 0; i <= index && i < static_cast<int>(layers.size()); ++i)
      if (layers[i].kind == LayerKind::conv) c = layers[i].out_channels;
    return c;
  }

  int tap_channels(const std::string& name) const { return channels_at(tap(name).layer_index); }

  std::vector<std::string> tap_names() const {
    std::vector<std::string> names;
    names.reserve(taps.size());
    for (const auto& t : taps) names.push_back(t.name);
    return names;
  }

  /// Receptive-field radius (pixels) of the deepest tapped activation.
  int receptive_field_radius() const {
    int rf = 1;
    int jump = 1;
    int last = taps.empty() ? static_cast<int>(layers.size()) - 1 : taps.back().layer_index;
    for (int i = 0; i <= last && i < static_cast<int>(layers.size()); ++i) {
      const LayerSpec& l = layers[i];
      if (l.kind == LayerKind::conv || l.kind == LayerKind::maxpool) {
        rf += (l.kernel - 1) * jump;
        jump *= l.stride;
      }
    }
    return (rf + 1) / 2;
  }

  /// Least common multiple of all tap strides; tile offsets aligned to this
  /// divide exactly at every tap resolution.
  int tap_stride_lcm() const {
    int l = 1;
    for (const auto& t : taps) l = std::lcm(l, stride_at(t.layer_index));
    return l;
  }
};

namespace detail {

inline std::map<std::string, std::string> parse_kv_line(const std::string& line,
                                                        const std::string& origin, int lineno) {
  std::map<std::string, std::string> kv;
  std::istringstream tokens(line);
  std::string tok;
  while (tokens >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos || eq == 0)
      throw FormatError(origin + ":" + std::to_string(lineno) + ": expected key=value, got '" +
                        tok + "'");
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return kv;
}

inline int kv_int(const std::map<std::string, std::string>& kv, const std::string& key,
                  std::optional<int> fallback, const std::string& where) {
  const auto it = kv.find(key);
  if (it == kv.end()) {
    if (fallback) return *fallback;
    throw FormatError(where + ": missing " + key);
  }
  try {
    return std::stoi(it->second);
  } catch (...) {
    throw FormatError(where + ": bad integer for " + key + ": '" + it->second + "'");
  }
}

inline double kv_real(const std::map<std::string, std::string>& kv, const std::string& key,
                      std::optional<double> fallback, const std::string& where) {
  const auto it = kv.find(key);
  if (it == kv.end()) {
    if (fallback) return *fallback;
    throw FormatError(where + ": missing " + key);
  }
  try {
    return std::stod(it->second);
  } catch (...) {
    throw FormatError(where + ": bad real for " + key + ": '" + it->second + "'");
  }
}

}  // namespace detail

inline NetSpec NetSpec::parse(const std::string& text, const std::string& origin) {
  NetSpec net;
  net.input_channels = 0;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    auto kv = detail::parse_kv_line(line, origin, lineno);

    if (kv.count("input_channels")) {
      net.input_channels = detail::kv_int(kv, "input_channels", std::nullopt, where);
      if (net.input_channels < 1) throw FormatError(where + ": input_channels must be >= 1");
      continue;
    }

    const auto kind_it = kv.find("kind");
    if (kind_it == kv.end()) throw FormatError(where + ": missing kind");
    LayerSpec layer;
    if (kind_it->second == "conv") {
      layer.kind = LayerKind::conv;
      if (!kv.count("name")) throw FormatError(where + ": conv layer needs name");
      layer.name = kv["name"];
      layer.out_channels = detail::kv_int(kv, "out_channels", std::nullopt, where);
      layer.kernel = detail::kv_int(kv, "kernel", std::nullopt, where);
      layer.stride = detail::kv_int(kv, "stride", 1, where);
      layer.pad = detail::kv_int(kv, "pad", 0, where);
    } else if (kind_it->second == "relu") {
      layer.kind = LayerKind::relu;
    } else if (kind_it->second == "maxpool") {
      layer.kind = LayerKind::maxpool;
      layer.kernel = detail::kv_int(kv, "kernel", std::nullopt, where);
      layer.stride = detail::kv_int(kv, "stride", 1, where);
    } else if (kind_it->second == "lrn") {
      layer.kind = LayerKind::lrn;
      layer.depth_radius = detail::kv_int(kv, "depth_radius", std::nullopt, where);
      layer.alpha = detail::kv_real(kv, "alpha", std::nullopt, where);
      layer.beta = detail::kv_real(kv, "beta", std::nullopt, where);
      layer.bias = detail::kv_real(kv, "bias", 1.0, where);
    } else {
      throw FormatError(where + ": unknown layer kind '" + kind_it->second + "'");
    }
    if (layer.kernel < 1 || layer.stride < 1 || layer.pad < 0)
      throw FormatError(where + ": kernel/stride must be >= 1 and pad >= 0");
    if (layer.kind == LayerKind::conv && layer.out_channels < 1)
      throw FormatError(where + ": out_channels must be >= 1");
    net.layers.push_back(layer);

    if (kv.count("tap"))
      net.taps.push_back({kv["tap"], static_cast<int>(net.layers.size()) - 1});
  }
  if (net.input_channels < 1)
    throw FormatError(origin + ": missing input_channels declaration");
  if (net.layers.empty()) throw FormatError(origin + ": no layers");
  return net;
}

// =============================================================================
// PXW1 weight bundles
// =============================================================================

struct WeightBundle {
  // insertion-ordered so save/load round-trips preserve the record layout
  std::vector<std::pair<std::string, TensorData>> records;

  const TensorData* find(const std::string& name) const {
    for (const auto& [n, t] : records)
      if (n == name) return &t;
    return nullptr;
  }

  const TensorData& require(const std::string& name) const {
    const TensorData* t = find(name);
    if (!t) throw FormatError("weight bundle is missing record '" + name + "'");
    return *t;
  }

  void add(const std::string& name, TensorData tensor) {
    records.emplace_back(name, std::move(tensor));
  }

  void save(const std::filesystem::path& path) const {
    std::string out = "PXW1";
    detail::put_u32_le(out, static_cast<uint32_t>(records.size()));
    for (const auto& [name, tensor] : records) {
      detail::put_u32_le(out, static_cast<uint32_t>(name.size()));
      out += name;
      detail::append_pxf_record(out, tensor);
    }
    detail::write_file_bytes(path, out);
  }

  static WeightBundle load(const std::filesystem::path& path) {
    const std::string bytes = detail::read_file_bytes(path);
    detail::ByteReader r(bytes, path.string());
    const char* magic = r.take(4, "PXW1 magic");
    if (std::memcmp(magic, "PXW1", 4) != 0)
      throw FormatError(path.string() + ": bad PXW1 magic at byte 0");
    const uint32_t count = detail::get_u32_le(r.take(4, "record count"));
    WeightBundle bundle;
    for (uint32_t i = 0; i < count; ++i) {
      const uint32_t len = detail::get_u32_le(r.take(4, "record name length"));
      if (len > 4096) r.fail("record name too long");
      const char* name = r.take(len, "record name");
      bundle.add(std::string(name, len), detail::read_pxf_record(r));
    }
    if (r.remaining() != 0) r.fail("trailing bytes after last record");
    return bundle;
  }

  /// Checks that every conv layer has kernel/bias records of the exact shape
  /// implied by the net. Throws FormatError on any mismatch.
  void validate_against(const NetSpec& net) const {
    int in_ch = net.input_channels;
    for (const auto& layer : net.layers) {
      if (layer.kind != LayerKind::conv) continue;
      const TensorData& w = require(layer.name + ".weight");
      const std::vector<uint32_t> want = {
          static_cast<uint32_t>(layer.out_channels), static_cast<uint32_t>(in_ch),
          static_cast<uint32_t>(layer.kernel), static_cast<uint32_t>(layer.kernel)};
      if (w.dims != want)
        throw FormatError("record '" + layer.name + ".weight' shape does not match net spec");
      const TensorData& b = require(layer.name + ".bias");
      if (b.dims != std::vector<uint32_t>{static_cast<uint32_t>(layer.out_channels)})
        throw FormatError("record '" + layer.name + ".bias' shape does not match net spec");
      in_ch = layer.out_channels;
    }
  }
};

// =============================================================================
// Layer forward passes
// =============================================================================

/// Cross-correlation with zero padding. Output spatial dims are
/// floor((in + 2*pad - kernel) / stride) + 1.
inline ImagePlane conv_forward(const ImagePlane& input, const LayerSpec& layer,
                               const TensorData& kernel, const TensorData& bias) {
  const int k = layer.kernel;
  const int s = layer.stride;
  const int p = layer.pad;
  const int out_ch = layer.out_channels;
  if (kernel.dims.size() != 4 || kernel.dims[0] != static_cast<uint32_t>(out_ch) ||
      kernel.dims[2] != static_cast<uint32_t>(k) || kernel.dims[3] != static_cast<uint32_t>(k))
    throw ContractError("conv kernel tensor shape mismatch for layer " + layer.name);
  if (kernel.dims[1] != static_cast<uint32_t>(input.channels))
    throw ContractError("conv input has " + std::to_string(input.channels) +
                        " channels but kernel expects " + std::to_string(kernel.dims[1]));
  if (bias.dims != std::vector<uint32_t>{static_cast<uint32_t>(out_ch)})
    throw ContractError("conv bias tensor shape mismatch for layer " + layer.name);

  const int out_h = (input.height + 2 * p - k) / s + 1;
  const int out_w = (input.width + 2 * p - k) / s + 1;
  if (input.height + 2 * p - k < 0 || input.width + 2 * p - k < 0 || out_h < 1 || out_w < 1)
    throw ContractError("conv output dims would be < 1");

  const int in_ch = input.channels;
  ImagePlane out(out_h, out_w, out_ch);
  const float* wdata = kernel.values.data();
  for (int y = 0; y < out_h; ++y) {
    const int y_origin = y * s - p;
    const int ky_lo = std::max(0, -y_origin);
    const int ky_hi = std::min(k, input.height - y_origin);
    for (int x = 0; x < out_w; ++x) {
      const int x_origin = x * s - p;
      const int kx_lo = std::max(0, -x_origin);
      const int kx_hi = std::min(k, input.width - x_origin);
      for (int o = 0; o < out_ch; ++o) {
        double acc = bias.values[o];
        const float* wo = wdata + static_cast<std::size_t>(o) * in_ch * k * k;
        for (int c = 0; c < in_ch; ++c) {
          const float* wc = wo + static_cast<std::size_t>(c) * k * k;
          for (int ky = ky_lo; ky < ky_hi; ++ky) {
            const float* row = &input.data[input.index(y_origin + ky, x_origin + kx_lo, c)];
            const float* wrow = wc + ky * k + kx_lo;
            for (int kx = 0; kx < kx_hi - kx_lo; ++kx)
              acc += static_cast<double>(row[static_cast<std::size_t>(kx) * in_ch]) * wrow[kx];
          }
        }
        out.at(y, x, o) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

inline ImagePlane relu(const ImagePlane& input) {
  ImagePlane out = input;
  for (auto& v : out.data) v = std::max(0.0f, v);
  return out;
}

/// Per-channel window maximum. Ceil-mode placement: the output has
/// ceil((in - kernel) / stride) + 1 positions per axis and the last window is
/// truncated at the border (it always starts inside the input).
inline ImagePlane maxpool(const ImagePlane& input, const LayerSpec& layer) {
  const int k = layer.kernel;
  const int s = layer.stride;
  auto pooled = [&](int in) {
    int out = (in - k + s - 1) / s + 1;
    if (in - k < 0) out = 1;               // single truncated window
    if ((out - 1) * s >= in) out -= 1;     // last window must start inside
    return out;
  };
  const int out_h = pooled(input.height);
  const int out_w = pooled(input.width);
  if (out_h < 1 || out_w < 1) throw ContractError("maxpool output dims would be < 1");

  ImagePlane out(out_h, out_w, input.channels);
  for (int y = 0; y < out_h; ++y) {
    const int y0 = y * s;
    const int y1 = std::min(y0 + k, input.height);
    for (int x = 0; x < out_w; ++x) {
      const int x0 = x * s;
      const int x1 = std::min(x0 + k, input.width);
      for (int c = 0; c < input.channels; ++c) {
        float m = -std::numeric_limits<float>::infinity();
        for (int yy = y0; yy < y1; ++yy)
          for (int xx = x0; xx < x1; ++xx) m = std::max(m, input.at(yy, xx, c));
        out.at(y, x, c) = m;
      }
    }
  }
  return out;
}

/// Cross-channel local response normalization:
/// out(c) = v(c) / (bias + alpha * sum_{|c'-c| <= depth_radius} v(c')^2)^beta
inline ImagePlane lrn(const ImagePlane& input, const LayerSpec& layer) {
  ImagePlane out(input.height, input.width, input.channels);
  const int radius = layer.depth_radius;
  for (int y = 0; y < input.height; ++y) {
    for (int x = 0; x < input.width; ++x) {
      for (int c = 0; c < input.channels; ++c) {
        double sum = 0.0;
        const int lo = std::max(0, c - radius);
        const int hi = std::min(input.channels - 1, c + radius);
        for (int cc = lo; cc <= hi; ++cc) {
          const double v = input.at(y, x, cc);
          sum += v * v;
        }
        out.at(y, x, c) = static_cast<float>(
            input.at(y, x, c) / std::pow(layer.bias + layer.alpha * sum, layer.beta));
      }
    }
  }
  return out;
}

// =============================================================================
// Tapped forward pass
// =============================================================================

struct TapActivation {
  std::string name;
  ImagePlane map;
  int stride = 1;  // cumulative spatial stride relative to the input
};

/// Runs the net and captures the activation map at every tap point. The
/// input must already be mean-subtracted and match the net's channel count.
/// Layers beyond the last tap are skipped.
inline std::vector<TapActivation> forward_taps(const ImagePlane& image, const NetSpec& net,
                                               const WeightBundle& weights) {
  if (image.channels != net.input_channels)
    throw ContractError("forward_taps input has " + std::to_string(image.channels) +
                        " channels, net expects " + std::to_string(net.input_channels));
  if (net.taps.empty()) throw ContractError("net has no tap points");

  std::vector<TapActivation> acts;
  acts.reserve(net.taps.size());
  const int last_needed = net.taps.back().layer_index;

  ImagePlane current = image;
  int stride = 1;
  std::size_t next_tap = 0;
  for (int i = 0; i <= last_needed; ++i) {
    const LayerSpec& layer = net.layers[i];
    switch (layer.kind) {
      case LayerKind::conv:
        current = conv_forward(current, layer, weights.require(layer.name + ".weight"),
                               weights.require(layer.name + ".bias"));
        stride *= layer.stride;
        break;
      case LayerKind::relu:
        current = relu(current);
        break;
      case LayerKind::maxpool:
        current = maxpool(current, layer);
        stride *= layer.stride;
        break;
      case LayerKind::lrn:
        current = lrn(current, layer);
        break;
    }
    while (next_tap < net.taps.size() && net.taps[next_tap].layer_index == i) {
      acts.push_back({net.taps[next_tap].name, current, stride});
      ++next_tap;
    }
  }
  return acts;
}

// =============================================================================
// Bundled weight generators
// =============================================================================

/// Fills every conv layer with seeded He-scaled normal weights, biases zero.
inline WeightBundle make_random_weights(const NetSpec& net, uint64_t seed) {
  WeightBundle bundle;
  Rng root(seed);
  int in_ch = net.input_channels;
  int layer_idx = 0;
  for (const auto& layer : net.layers) {
    if (layer.kind != LayerKind::conv) continue;
    Rng rng = root.fork("weights", static_cast<uint64_t>(layer_idx++));
    const int fan_in = in_ch * layer.kernel * layer.kernel;
    const double scale = std::sqrt(2.0 / fan_in);
    TensorData w;
    w.dims = {static_cast<uint32_t>(layer.out_channels), static_cast<uint32_t>(in_ch),
              static_cast<uint32_t>(layer.kernel), static_cast<uint32_t>(layer.kernel)};
    w.values.resize(w.element_count());
    for (auto& v : w.values) v = static_cast<float>(rng.next_normal() * scale);
    TensorData b;
    b.dims = {static_cast<uint32_t>(layer.out_channels)};
    b.values.assign(layer.out_channels, 0.0f);
    bundle.add(layer.name + ".weight", std::move(w));
    bundle.add(layer.name + ".bias", std::move(b));
    in_ch = layer.out_channels;
  }
  return bundle;
}

/// Like make_random_weights, but the first conv layer becomes a bank of
/// oriented derivative filters (4 orientations x 2 polarities, cycled across
/// output channels, averaged over input channels). The first layer's kernel
/// must be 3x3.
inline WeightBundle make_filter_bank_weights(const NetSpec& net, uint64_t seed) {
  WeightBundle bundle = make_random_weights(net, seed);
  const LayerSpec* first_conv = nullptr;
  for (const auto& layer : net.layers)
    if (layer.kind == LayerKind::conv) {
      first_conv = &layer;
      break;
    }
  if (!first_conv) throw ContractError("net has no conv layer");
  if (first_conv->kernel != 3)
    throw ContractError("filter bank weights require a 3x3 first conv layer");

  // Sobel-style derivative kernels at 0, 45, 90, 135 degrees
  static const float banks[4][9] = {
      {-1, 0, 1, -2, 0, 2, -1, 0, 1},  // d/dx
      {-2, -1, 0, -1, 0, 1, 0, 1, 2},  // diagonal
      {-1, -2, -1, 0, 0, 0, 1, 2, 1},  // d/dy
      {0, -1, -2, 1, 0, -1, 2, 1, 0},  // anti-diagonal
  };

  TensorData* w = nullptr;
  for (auto& [name, tensor] : bundle.records)
    if (name == first_conv->name + ".weight") w = &tensor;
  const int out_ch = first_conv->out_channels;
  const int in_ch = net.input_channels;
  for (int o = 0; o < out_ch; ++o) {
    const float* base = banks[(o / 2) % 4];
    const float sign = (o % 2 == 0) ? 1.0f : -1.0f;
    for (int c = 0; c < in_ch; ++c)
      for (int i = 0; i < 9; ++i)
        w->values[(static_cast<std::size_t>(o) * in_ch + c) * 9 + i] =
            sign * base[i] / (4.0f * in_ch);
  }
  return bundle;
}

}  // namespace ck
