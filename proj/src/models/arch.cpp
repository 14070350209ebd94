#include <stdexcept>
#include <string>

#include "lact/models.hpp"

namespace lact::models {

using nn::LayerKind;

const char* to_string(ArchKind k) {
  switch (k) {
    case ArchKind::wavelet_unet: return "wavelet_unet";
    case ArchKind::image_unet: return "image_unet";
    case ArchKind::image_plain: return "image_plain";
  }
  return "?";
}

ArchKind parse_arch(std::string_view s) {
  if (s == "wavelet_unet" || s == "proposed") return ArchKind::wavelet_unet;
  if (s == "image_unet") return ArchKind::image_unet;
  if (s == "image_plain") return ArchKind::image_plain;
  throw std::invalid_argument("unknown architecture '" + std::string(s) +
                              "' (expected wavelet_unet, image_unet or image_plain)");
}

void ArchSpec::validate() const {
  if (depth < 1) throw std::invalid_argument("arch: depth must be >= 1");
  if (base_channels < 1) throw std::invalid_argument("arch: base_channels must be >= 1");
  if (convs_per_stage < 1) throw std::invalid_argument("arch: convs_per_stage must be >= 1");
  if (channels < 1) throw std::invalid_argument("arch: channels must be >= 1");
  if (kind == ArchKind::wavelet_unet) {
    if (levels < 1) throw std::invalid_argument("arch: levels must be >= 1");
    const int expect = (1 << levels) - 1;
    if (channels != expect)
      throw std::invalid_argument("arch: a " + std::to_string(levels) + "-stage bank has " + std::to_string(expect) +
                                  " channels, got " + std::to_string(channels));
  } else if (channels != 1) {
    throw std::invalid_argument("arch: image-domain networks take one channel");
  }
}

ArchSpec make_arch(ArchKind kind, int depth, int base_channels) {
  ArchSpec a;
  a.kind = kind;
  a.depth = depth;
  a.base_channels = base_channels;
  a.channels = kind == ArchKind::wavelet_unet ? (1 << a.levels) - 1 : 1;
  a.validate();
  return a;
}

namespace {

int conv_block(nn::NetworkSpec& g, int x, int ch) {
  x = g.add(LayerKind::conv3x3, x, ch);
  x = g.add(LayerKind::batchnorm, x);
  return g.add(LayerKind::relu, x);
}

} // namespace

nn::NetworkSpec build_arch(const ArchSpec& spec) {
  spec.validate();
  nn::NetworkSpec g(spec.channels);
  int x = 0;
  if (spec.kind == ArchKind::image_plain) {
    const int blocks = spec.convs_per_stage * (2 * spec.depth + 1);
    for (int b = 0; b < blocks; ++b) x = conv_block(g, x, spec.base_channels);
  } else {
    std::vector<int> skips;
    int ch = spec.base_channels;
    for (int s = 0; s < spec.depth; ++s) {
      for (int c = 0; c < spec.convs_per_stage; ++c) x = conv_block(g, x, ch);
      skips.push_back(x);
      x = g.add(LayerKind::maxpool2, x);
      ch *= 2;
    }
    for (int c = 0; c < spec.convs_per_stage; ++c) x = conv_block(g, x, ch);
    for (int s = spec.depth - 1; s >= 0; --s) {
      ch /= 2;
      x = g.add(LayerKind::avgunpool2, x);
      x = g.add_concat(x, skips[s]);
      for (int c = 0; c < spec.convs_per_stage; ++c) x = conv_block(g, x, ch);
    }
  }
  const int head = g.add(LayerKind::conv1x1, x, spec.channels);
  g.zero_init(head);
  g.set_output(head);
  g.validate();
  return g;
}

io::Json arch_to_json(const ArchSpec& a) {
  return io::Json{{"kind", to_string(a.kind)},  {"depth", a.depth},
                  {"base_channels", a.base_channels}, {"channels", a.channels},
                  {"convs_per_stage", a.convs_per_stage}, {"levels", a.levels}};
}

ArchSpec arch_from_json(const io::Json& j) {
  ArchSpec a;
  try {
    a.kind = parse_arch(j.at("kind").get<std::string>());
    a.depth = j.at("depth").get<int>();
    a.base_channels = j.at("base_channels").get<int>();
    a.channels = j.at("channels").get<int>();
    a.convs_per_stage = j.at("convs_per_stage").get<int>();
    a.levels = j.at("levels").get<int>();
  } catch (const io::Json::exception& e) {
    throw std::runtime_error(std::string("arch metadata: ") + e.what());
  }
  a.validate();
  return a;
}

} // namespace lact::models
