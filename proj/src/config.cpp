//
// Project priorgen - Copyright 2026 The priorgen Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "priorgen/config.h"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace priorgen {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const std::string t = trim(text);
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw ConfigError("invalid value '" + t + "' for " + std::string(key));
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1") return true;
  if (t == "false" || t == "0") return false;
  throw ConfigError("invalid boolean '" + t + "' for " + std::string(key));
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::stringstream ss{std::string(text)};
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Field {
  std::function<void(RunConfig &, std::string_view key, std::string_view value)> set;
  std::function<std::string(const RunConfig &)> get;
};

template <typename Member>
Field number(Member member) {
  return {[member](RunConfig &c, std::string_view k, std::string_view v) {
            auto &ref = member(c);
            ref = parse_number<std::remove_reference_t<decltype(ref)>>(k, v);
          },
          [member](const RunConfig &c) {
            auto &ref = member(const_cast<RunConfig &>(c));
            if constexpr (std::is_floating_point_v<std::remove_reference_t<decltype(ref)>>)
              return format_double(ref);
            else
              return std::to_string(ref);
          }};
}

template <typename Member>
Field boolean(Member member) {
  return {[member](RunConfig &c, std::string_view k, std::string_view v) {
            member(c) = parse_bool(k, v);
          },
          [member](const RunConfig &c) {
            return std::string(member(const_cast<RunConfig &>(c)) ? "true" : "false");
          }};
}

void add_egnn(std::map<std::string, Field> &f, const std::string &prefix,
              EgnnConfig &(*pick)(RunConfig &)) {
  f[prefix + ".layers"] = number([pick](RunConfig &c) -> int & { return pick(c).num_layers; });
  f[prefix + ".hidden"] = number([pick](RunConfig &c) -> int & { return pick(c).hidden_dim; });
  f[prefix + ".message_depth"] =
      number([pick](RunConfig &c) -> int & { return pick(c).message_mlp_depth; });
  f[prefix + ".attention"] =
      boolean([pick](RunConfig &c) -> bool & { return pick(c).use_attention; });
  f[prefix + ".zero_init_coord_head"] =
      boolean([pick](RunConfig &c) -> bool & { return pick(c).zero_init_coord_head; });
}

const std::map<std::string, Field> &schema() {
  static const std::map<std::string, Field> fields = [] {
    std::map<std::string, Field> f;
    f["data.alphabet"] = {
        [](RunConfig &c, std::string_view k, std::string_view v) {
          auto list = split_list(v);
          if (list.empty()) throw ConfigError(std::string(k) + " must not be empty");
          c.model.alphabet = std::move(list);
        },
        [](const RunConfig &c) {
          std::string s;
          for (const auto &e: c.model.alphabet) s += (s.empty() ? "" : ",") + e;
          return s;
        }};
    f["data.has_charge"] = boolean([](RunConfig &c) -> bool & { return c.model.has_charge; });
    f["scaler.coord_weight"] =
        number([](RunConfig &c) -> double & { return c.model.scaler.coord_weight; });
    f["scaler.onehot_weight"] =
        number([](RunConfig &c) -> double & { return c.model.scaler.onehot_weight; });
    f["scaler.charge_weight"] =
        number([](RunConfig &c) -> double & { return c.model.scaler.charge_weight; });
    add_egnn(f, "encoder", [](RunConfig &c) -> EgnnConfig & { return c.model.eaae.encoder; });
    add_egnn(f, "decoder", [](RunConfig &c) -> EgnnConfig & { return c.model.eaae.decoder; });
    add_egnn(f, "denoiser", [](RunConfig &c) -> EgnnConfig & { return c.model.denoiser; });
    f["eaae.latent_dim"] =
        number([](RunConfig &c) -> int & { return c.model.eaae.latent_feat_dim; });
    f["eaae.sigma0"] = number([](RunConfig &c) -> double & { return c.model.eaae.sigma0; });
    f["eaae.asymmetric"] = boolean([](RunConfig &c) -> bool & { return c.model.eaae.asymmetric; });
    f["eaae.virtual_spread"] =
        number([](RunConfig &c) -> double & { return c.model.eaae.virtual_spread; });
    f["diffusion.steps"] = number([](RunConfig &c) -> int & { return c.model.diffusion_steps; });
    f["diffusion.schedule"] = {
        [](RunConfig &c, std::string_view k, std::string_view v) {
          try {
            c.model.schedule = parse_schedule_kind(trim(v));
          } catch (const std::exception &) {
            throw ConfigError("invalid schedule '" + trim(v) + "' for " + std::string(k));
          }
        },
        [](const RunConfig &c) { return std::string(to_string(c.model.schedule)); }};
    f["train.lr"] = number([](RunConfig &c) -> double & { return c.train.learning_rate; });
    f["train.batch_size"] = number([](RunConfig &c) -> int & { return c.train.batch_size; });
    f["train.epochs"] = number([](RunConfig &c) -> int & { return c.train.epochs; });
    f["train.max_steps"] = number([](RunConfig &c) -> long & { return c.train.max_steps; });
    f["train.seed"] = number([](RunConfig &c) -> std::uint64_t & { return c.train.seed; });
    f["train.adam_beta1"] = number([](RunConfig &c) -> double & { return c.train.adam_beta1; });
    f["train.adam_beta2"] = number([](RunConfig &c) -> double & { return c.train.adam_beta2; });
    f["train.adam_eps"] = number([](RunConfig &c) -> double & { return c.train.adam_eps; });
    f["train.ema_decay"] = number([](RunConfig &c) -> double & { return c.train.ema_decay; });
    f["train.clip_norm"] = number([](RunConfig &c) -> double & { return c.train.clip_norm; });
    f["train.dsdm_weight"] = number([](RunConfig &c) -> double & { return c.train.dsdm_weight; });
    f["train.checkpoint_every"] =
        number([](RunConfig &c) -> long & { return c.train.checkpoint_every; });
    f["train.log_every"] = number([](RunConfig &c) -> long & { return c.train.log_every; });
    f["train.bound_every"] = number([](RunConfig &c) -> long & { return c.train.bound_every; });
    f["sample.use_ema"] = boolean([](RunConfig &c) -> bool & { return c.sample.use_ema; });
    f["sample.atoms"] = number([](RunConfig &c) -> int & { return c.sample.atoms; });
    f["sample.seed"] = number([](RunConfig &c) -> std::uint64_t & { return c.sample.seed; });
    return f;
  }();
  return fields;
}

void require(bool ok, const std::string &message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

void ModelConfig::validate() const {
  require(!alphabet.empty(), "data.alphabet must not be empty");
  require(std::set<std::string>(alphabet.begin(), alphabet.end()).size() == alphabet.size(),
          "data.alphabet has duplicate elements");
  try {
    scaler.validate();
    eaae.validate();
    denoiser.validate();
  } catch (const std::invalid_argument &e) {
    throw ConfigError(e.what());
  }
  require(diffusion_steps >= 2, "diffusion.steps must be >= 2");
}

void TrainConfig::validate() const {
  require(learning_rate > 0, "train.lr must be > 0");
  require(batch_size >= 1, "train.batch_size must be >= 1");
  require(epochs >= 1 || max_steps > 0, "train.epochs must be >= 1");
  require(max_steps >= 0, "train.max_steps must be >= 0");
  require(adam_beta1 >= 0 && adam_beta1 < 1, "train.adam_beta1 must lie in [0, 1)");
  require(adam_beta2 >= 0 && adam_beta2 < 1, "train.adam_beta2 must lie in [0, 1)");
  require(adam_eps > 0, "train.adam_eps must be > 0");
  require(ema_decay >= 0 && ema_decay < 1, "train.ema_decay must lie in [0, 1)");
  require(clip_norm >= 0, "train.clip_norm must be >= 0 (0 disables)");
  require(dsdm_weight >= 0, "train.dsdm_weight must be >= 0");
  require(checkpoint_every >= 0 && log_every >= 0 && bound_every >= 0,
          "train intervals must be >= 0");
}

void RunConfig::set(std::string_view key, std::string_view value) {
  const std::string k = trim(key);
  auto it = schema().find(k);
  if (it == schema().end()) throw ConfigError("unknown config key '" + k + "'");
  it->second.set(*this, k, value);
}

void RunConfig::apply_text(std::string_view text, std::string_view source) {
  std::stringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(std::string(source) + ":" + std::to_string(lineno) +
                        ": expected key = value");
    try {
      set(line.substr(0, eq), line.substr(eq + 1));
    } catch (const ConfigError &e) {
      throw ConfigError(std::string(source) + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void RunConfig::apply_file(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  apply_text(ss.str(), path.string());
}

void RunConfig::apply_overrides(const std::vector<std::string> &assignments) {
  for (const auto &a: assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + a + "' is not key=value");
    set(a.substr(0, eq), a.substr(eq + 1));
  }
}

std::map<std::string, std::string> RunConfig::entries() const {
  std::map<std::string, std::string> out;
  for (const auto &[k, f]: schema()) out[k] = f.get(*this);
  return out;
}

std::string RunConfig::to_text() const {
  std::string s;
  for (const auto &[k, v]: entries()) s += k + "=" + v + "\n";
  return s;
}

std::string RunConfig::digest() const { return sha256_hex(to_text()); }

void RunConfig::validate() const {
  model.validate();
  train.validate();
  require(sample.atoms >= 0, "sample.atoms must be >= 0");
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto &[k, f]: schema()) out.push_back(k);
  return out;
}

}  // namespace priorgen
