#include "lst/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string_view>
#include <vector>

#include "lst/errors.hpp"

namespace lst {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = first + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) throw ConfigError("bad value '" + text + "' for key " + key);
  return value;
}

double parse_double(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad value '" + text + "' for key " + key);
  }
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

template <typename T>
Setter count_field(T RunConfig::*member) {
  return [member](RunConfig& c, const std::string& k, const std::string& v) { c.*member = parse_number<T>(k, v); };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"seed", [](RunConfig& c, const auto& k, const auto& v) { c.set_seed(parse_number<std::uint64_t>(k, v)); }},
      {"data_dir", [](RunConfig& c, const auto&, const auto& v) { c.data_dir = v; }},
      {"out_dir", [](RunConfig& c, const auto&, const auto& v) { c.out_dir = v; }},
      {"scene.count", count_field(&RunConfig::scene_count)},
      {"scene.holdout", count_field(&RunConfig::holdout)},
      {"scene.n_points",
       [](RunConfig& c, const auto& k, const auto& v) { c.scene.n_points = parse_number<std::size_t>(k, v); }},
      {"scene.extent",
       [](RunConfig& c, const auto& k, const auto& v) {
         const auto parts = split_list(v);
         if (parts.size() != 2) throw ConfigError("key " + k + " expects two comma-separated values");
         c.scene.extent = {parse_double(k, parts[0]), parse_double(k, parts[1])};
       }},
      {"scene.class_mix",
       [](RunConfig& c, const auto& k, const auto& v) {
         const auto parts = split_list(v);
         if (parts.size() != synth::kClassCount) {
           throw ConfigError("key " + k + " expects " + std::to_string(synth::kClassCount) + " values");
         }
         for (std::size_t i = 0; i < parts.size(); ++i) c.scene.class_mix[i] = parse_double(k, parts[i]);
       }},
      {"scene.noise_sigma", [](RunConfig& c, const auto& k, const auto& v) { c.scene.noise_sigma = parse_double(k, v); }},
      {"prep.grid_cell", [](RunConfig& c, const auto& k, const auto& v) { c.prep.grid_cell = parse_double(k, v); }},
      {"prep.block_k",
       [](RunConfig& c, const auto& k, const auto& v) { c.prep.block_k = parse_number<std::size_t>(k, v); }},
      {"prep.seed_spacing",
       [](RunConfig& c, const auto& k, const auto& v) { c.prep.seed_spacing = parse_double(k, v); }},
      {"model.d1", [](RunConfig& c, const auto& k, const auto& v) { c.model.d1 = parse_number<std::size_t>(k, v); }},
      {"model.supertokens",
       [](RunConfig& c, const auto& k, const auto& v) { c.model.supertokens = parse_number<std::size_t>(k, v); }},
      {"model.k_local",
       [](RunConfig& c, const auto& k, const auto& v) { c.model.k_local = parse_number<std::size_t>(k, v); }},
      {"model.temperature",
       [](RunConfig& c, const auto& k, const auto& v) { c.model.temperature = parse_double(k, v); }},
      {"model.assign_mode",
       [](RunConfig& c, const auto& k, const auto& v) {
         if (v == "hard") c.train.assign_mode = net::AssignMode::hard;
         else if (v == "soft") c.train.assign_mode = net::AssignMode::soft;
         else throw ConfigError("key " + k + " must be hard or soft, got '" + v + "'");
       }},
      {"model.wiring",
       [](RunConfig& c, const auto& k, const auto& v) {
         if (v == "wnet") c.model.wiring = net::Wiring::wnet;
         else if (v == "unet") c.model.wiring = net::Wiring::unet;
         else throw ConfigError("key " + k + " must be wnet or unet, got '" + v + "'");
       }},
      {"train.lr0", [](RunConfig& c, const auto& k, const auto& v) { c.train.lr0 = parse_double(k, v); }},
      {"train.momentum", [](RunConfig& c, const auto& k, const auto& v) { c.train.momentum = parse_double(k, v); }},
      {"train.weight_decay",
       [](RunConfig& c, const auto& k, const auto& v) { c.train.weight_decay = parse_double(k, v); }},
      {"train.epochs",
       [](RunConfig& c, const auto& k, const auto& v) { c.train.epochs = parse_number<std::size_t>(k, v); }},
      {"train.batch_size",
       [](RunConfig& c, const auto& k, const auto& v) { c.train.batch_size = parse_number<std::size_t>(k, v); }},
      {"train.eval_every",
       [](RunConfig& c, const auto& k, const auto& v) { c.train.eval_every = parse_number<std::size_t>(k, v); }},
  };
  return table;
}

}  // namespace

void RunConfig::validate() const {
  try {
    scene.validate();
    model.validate();
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (scene_count < 1) throw ConfigError("scene.count must be at least 1");
  if (holdout >= scene_count) throw ConfigError("scene.holdout must leave at least one training scene");
  if (!(prep.grid_cell > 0.0)) throw ConfigError("prep.grid_cell must be positive");
  if (!(prep.seed_spacing > 0.0)) throw ConfigError("prep.seed_spacing must be positive");
  if (prep.block_k < model.supertokens) throw ConfigError("prep.block_k must be at least model.supertokens");
  if (model.k_local > prep.block_k) throw ConfigError("model.k_local must not exceed prep.block_k");
  if (model.in_features != 2) throw ConfigError("synthetic scenes carry exactly 2 feature channels");
  if (model.classes != synth::kClassCount) throw ConfigError("synthetic scenes carry exactly 6 classes");
}

synth::SceneSpec RunConfig::scene_spec(std::size_t index) const {
  synth::SceneSpec s = scene;
  s.rng_seed = mix_seed(mix_seed(seed, 0x5CE7E), index);
  return s;
}

void RunConfig::set_seed(std::uint64_t value) {
  seed = value;
  train.rng_seed = value;
}

RunConfig parse_config(std::istream& is) {
  RunConfig config;
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value, got '" + body + "'");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) {
      throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    if (auto [pos, fresh] = seen.emplace(key, line_no); !fresh) {
      throw ConfigError("line " + std::to_string(line_no) + ": key '" + key + "' already set on line " +
                        std::to_string(pos->second));
    }
    if (value.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty value for key " + key);
    it->second(config, key, value);
  }
  config.validate();
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse_config(in);
}

void write_config(std::ostream& os, const RunConfig& c) {
  os << std::setprecision(17);
  os << "seed = " << c.seed << '\n'
     << "data_dir = " << c.data_dir.string() << '\n'
     << "out_dir = " << c.out_dir.string() << '\n'
     << "scene.count = " << c.scene_count << '\n'
     << "scene.holdout = " << c.holdout << '\n'
     << "scene.n_points = " << c.scene.n_points << '\n'
     << "scene.extent = " << c.scene.extent[0] << ',' << c.scene.extent[1] << '\n'
     << "scene.class_mix = ";
  for (std::size_t i = 0; i < c.scene.class_mix.size(); ++i) os << (i ? "," : "") << c.scene.class_mix[i];
  os << '\n'
     << "scene.noise_sigma = " << c.scene.noise_sigma << '\n'
     << "prep.grid_cell = " << c.prep.grid_cell << '\n'
     << "prep.block_k = " << c.prep.block_k << '\n'
     << "prep.seed_spacing = " << c.prep.seed_spacing << '\n'
     << "model.d1 = " << c.model.d1 << '\n'
     << "model.supertokens = " << c.model.supertokens << '\n'
     << "model.k_local = " << c.model.k_local << '\n'
     << "model.temperature = " << c.model.temperature << '\n'
     << "model.assign_mode = " << (c.train.assign_mode == net::AssignMode::hard ? "hard" : "soft") << '\n'
     << "model.wiring = " << (c.model.wiring == net::Wiring::wnet ? "wnet" : "unet") << '\n'
     << "train.lr0 = " << c.train.lr0 << '\n'
     << "train.momentum = " << c.train.momentum << '\n'
     << "train.weight_decay = " << c.train.weight_decay << '\n'
     << "train.epochs = " << c.train.epochs << '\n'
     << "train.batch_size = " << c.train.batch_size << '\n'
     << "train.eval_every = " << c.train.eval_every << '\n';
}

}  // namespace lst
