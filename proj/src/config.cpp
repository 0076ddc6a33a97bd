#include "cpmf/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "cpmf/errors.hpp"

namespace cpmf {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t parse_count(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError("bad count for " + key + ": '" + value + "'");
  }
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad number for " + key + ": '" + value + "'");
  }
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void RunConfig::apply(const std::string& key, const std::string& value) {
  if (key == "n_layers") model.n_layers = parse_count(key, value);
  else if (key == "d_model") model.d_model = parse_count(key, value);
  else if (key == "n_heads") model.n_heads = parse_count(key, value);
  else if (key == "d_head") model.d_head = parse_count(key, value);
  else if (key == "vocab_size") model.vocab_size = parse_count(key, value);
  else if (key == "max_seq_len") model.max_seq_len = parse_count(key, value);
  else if (key == "init_std") model.init_std = parse_real(key, value);
  else if (key == "lr_max") train.lr_max = parse_real(key, value);
  else if (key == "total_steps") train.total_steps = parse_count(key, value);
  else if (key == "warmup_steps") train.warmup_steps = parse_count(key, value);
  else if (key == "batch_size") train.batch_size = parse_count(key, value);
  else if (key == "beta1") train.beta1 = parse_real(key, value);
  else if (key == "beta2") train.beta2 = parse_real(key, value);
  else if (key == "adam_eps") train.eps = parse_real(key, value);
  else if (key == "grad_clip") {
    if (value == "none") train.grad_clip.reset();
    else train.grad_clip = parse_real(key, value);
  } else if (key == "seq_len") seq_len = parse_count(key, value);
  else if (key == "top_p") sampler.p = parse_real(key, value);
  else if (key == "temperature") sampler.temperature = parse_real(key, value);
  else if (key == "max_new_tokens")
    sampler.max_new_tokens = parse_count(key, value);
  else throw ConfigError("unknown config key: '" + key + "'");
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path);
  RunConfig config;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line.erase(comment);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + " of " + path +
                        " has no '='");
    config.apply(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return config;
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  out << "n_layers = " << model.n_layers << '\n';
  out << "d_model = " << model.d_model << '\n';
  out << "n_heads = " << model.n_heads << '\n';
  out << "d_head = " << model.d_head << '\n';
  out << "vocab_size = " << model.vocab_size << '\n';
  out << "max_seq_len = " << model.max_seq_len << '\n';
  out << "init_std = " << fmt(model.init_std) << '\n';
  out << "lr_max = " << fmt(train.lr_max) << '\n';
  out << "total_steps = " << train.total_steps << '\n';
  out << "warmup_steps = " << train.warmup_steps << '\n';
  out << "batch_size = " << train.batch_size << '\n';
  out << "beta1 = " << fmt(train.beta1) << '\n';
  out << "beta2 = " << fmt(train.beta2) << '\n';
  out << "adam_eps = " << fmt(train.eps) << '\n';
  out << "grad_clip = "
      << (train.grad_clip ? fmt(*train.grad_clip) : std::string("none"))
      << '\n';
  out << "seq_len = " << seq_len << '\n';
  out << "top_p = " << fmt(sampler.p) << '\n';
  out << "temperature = " << fmt(sampler.temperature) << '\n';
  out << "max_new_tokens = " << sampler.max_new_tokens << '\n';
  return out.str();
}

}  // namespace cpmf
