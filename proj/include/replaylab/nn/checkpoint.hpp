#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <string>

#include <json.hpp>

#include "replaylab/nn/network.hpp"

namespace replaylab::nn {

inline constexpr const char* kNetworkFormat = "replaylab.network";

inline nlohmann::json layer_to_json(const LayerSpec& l) {
  nlohmann::json j;
  switch (l.kind) {
    case LayerKind::Conv2D:
      j = {{"kind", "conv2d"}, {"filters", l.filters}, {"kernel", {l.kernel_h, l.kernel_w}}, {"stride", l.stride}};
      break;
    case LayerKind::Dense: j = {{"kind", "dense"}, {"width", l.width}}; break;
    case LayerKind::Output: j = {{"kind", "output"}, {"width", l.width}}; break;
  }
  j["activation"] = l.activation == Activation::Linear ? "linear" : "leaky_relu";
  return j;
}

inline LayerSpec layer_from_json(const nlohmann::json& j) {
  LayerSpec l;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "conv2d") {
    l.kind = LayerKind::Conv2D;
    l.filters = j.at("filters").get<std::size_t>();
    l.kernel_h = j.at("kernel").at(0).get<std::size_t>();
    l.kernel_w = j.at("kernel").at(1).get<std::size_t>();
    l.stride = j.at("stride").get<std::size_t>();
  } else if (kind == "dense" || kind == "output") {
    l.kind = kind == "dense" ? LayerKind::Dense : LayerKind::Output;
    l.width = j.at("width").get<std::size_t>();
  } else {
    throw Error("unknown layer kind '" + kind + "'");
  }
  l.activation = j.at("activation").get<std::string>() == "linear" ? Activation::Linear : Activation::LeakyReLU;
  return l;
}

/// Architecture descriptor plus the flat parameter and optimizer vectors.
/// Doubles are written with round-trip precision.
inline void save_network(const QNetwork& net, std::ostream& os) {
  nlohmann::json j;
  j["format"] = kNetworkFormat;
  j["version"] = 1;
  const auto& s = net.input_shape();
  j["input_shape"] = {s.height, s.width, s.channels};
  j["leaky_alpha"] = net.leaky_alpha();
  j["layers"] = nlohmann::json::array();
  for (const auto& l : net.layers()) j["layers"].push_back(layer_to_json(l));
  const auto& p = net.parameters();
  const auto& o = net.optimizer_state();
  j["parameters"] = std::vector<double>(p.data(), p.data() + p.size());
  j["optimizer_state"] = std::vector<double>(o.data(), o.data() + o.size());
  os << j.dump() << '\n';
}

inline QNetwork load_network(std::istream& is) {
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed network checkpoint: ") + e.what());
  }
  if (j.value("format", "") != kNetworkFormat) throw Error("not a network checkpoint");
  try {
    const auto& s = j.at("input_shape");
    Shape3 shape{s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>(), s.at(2).get<std::size_t>()};
    std::vector<LayerSpec> layers;
    for (const auto& l : j.at("layers")) layers.push_back(layer_from_json(l));
    QNetwork net(shape, layers, j.at("leaky_alpha").get<double>());
    const auto params = j.at("parameters").get<std::vector<double>>();
    const auto state = j.at("optimizer_state").get<std::vector<double>>();
    if (params.size() != net.parameter_count() || state.size() != net.parameter_count())
      throw Error("checkpoint parameter count does not match its architecture");
    std::copy(params.begin(), params.end(), net.parameters().data());
    std::copy(state.begin(), state.end(), net.optimizer_state().data());
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed network checkpoint: ") + e.what());
  }
}

inline void save_network(const QNetwork& net, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  save_network(net, os);
}

inline QNetwork load_network(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read " + path.string());
  return load_network(is);
}

}  // namespace replaylab::nn
