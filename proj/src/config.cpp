#include "mtu/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace mtu {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw ConfigError("cannot format value");
  return std::string(buf, end);
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || end != text.data() + text.size()) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + text + "'");
  }
  return v;
}

int parse_int(const std::string& key, const std::string& text) {
  int v = 0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || end != text.data() + text.size()) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true") return true;
  if (text == "false") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + text + "'");
}

const char* bool_str(bool b) { return b ? "true" : "false"; }

}  // namespace

std::string to_string(Precision p) { return p == Precision::half ? "half" : "full"; }

Precision parse_precision(const std::string& text) {
  if (text == "full") return Precision::full;
  if (text == "half") return Precision::half;
  throw ConfigError("precision must be 'full' or 'half', got '" + text + "'");
}

std::vector<double> default_lambdas(int num_stacks) {
  std::vector<double> l(static_cast<std::size_t>(std::max(num_stacks, 0)), 0.1);
  if (!l.empty()) l.back() = 1.0;
  return l;
}

ModelConfig make_config(int num_stacks, int feature_channels, int max_displacement) {
  ModelConfig cfg;
  cfg.num_stacks = num_stacks;
  cfg.feature_channels = feature_channels;
  cfg.max_displacement = max_displacement;
  cfg.lambdas = default_lambdas(num_stacks);
  return cfg;
}

ModelConfig validate_config(const ModelConfig& cfg) {
  if (cfg.num_stacks < 1) throw ConfigError("num_stacks must be >= 1");
  if (cfg.max_displacement < 1) throw ConfigError("max_displacement must be >= 1");
  if (cfg.feature_channels < 1) throw ConfigError("feature_channels must be >= 1");
  if (cfg.motion_stride != ModelConfig::kMotionStride) throw ConfigError("motion_stride must be 4");
  if (cfg.lambdas.size() != static_cast<std::size_t>(cfg.num_stacks)) {
    throw ConfigError("lambdas has " + std::to_string(cfg.lambdas.size()) + " entries, expected num_stacks = " +
                      std::to_string(cfg.num_stacks));
  }
  for (double l : cfg.lambdas) {
    if (!(l > 0.0)) throw ConfigError("every lambda must be > 0");
  }
  if (!(cfg.alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
  return cfg;
}

std::string serialize_config(const ModelConfig& cfg) {
  std::ostringstream os;
  os << "format_version = " << ModelConfig::kFormatVersion << '\n';
  os << "num_stacks = " << cfg.num_stacks << '\n';
  os << "feature_channels = " << cfg.feature_channels << '\n';
  os << "max_displacement = " << cfg.max_displacement << '\n';
  os << "motion_stride = " << cfg.motion_stride << '\n';
  os << "alpha = " << format_double(cfg.alpha) << '\n';
  os << "lambdas = ";
  for (std::size_t i = 0; i < cfg.lambdas.size(); ++i) os << (i ? "," : "") << format_double(cfg.lambdas[i]);
  os << '\n';
  os << "skip_matching = " << bool_str(cfg.skip_matching) << '\n';
  os << "precision = " << to_string(cfg.precision) << '\n';
  os << "enable_residual_learning = " << bool_str(cfg.enable_residual_learning) << '\n';
  os << "enable_motion_compensation = " << bool_str(cfg.enable_motion_compensation) << '\n';
  os << "enable_motion_loss = " << bool_str(cfg.enable_motion_loss) << '\n';
  os << "enable_structure_injection_addition = " << bool_str(cfg.enable_structure_injection_addition) << '\n';
  os << "enable_motion_layer = " << bool_str(cfg.enable_motion_layer) << '\n';
  return os.str();
}

ModelConfig parse_config(const std::string& text) {
  ModelConfig cfg;
  bool lambdas_given = false;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters{
      {"format_version",
       [](const std::string& k, const std::string& v) {
         if (parse_int(k, v) != ModelConfig::kFormatVersion) throw ConfigError("unsupported config format_version " + v);
       }},
      {"num_stacks", [&](const std::string& k, const std::string& v) { cfg.num_stacks = parse_int(k, v); }},
      {"feature_channels", [&](const std::string& k, const std::string& v) { cfg.feature_channels = parse_int(k, v); }},
      {"max_displacement", [&](const std::string& k, const std::string& v) { cfg.max_displacement = parse_int(k, v); }},
      {"motion_stride", [&](const std::string& k, const std::string& v) { cfg.motion_stride = parse_int(k, v); }},
      {"alpha", [&](const std::string& k, const std::string& v) { cfg.alpha = parse_double(k, v); }},
      {"lambdas",
       [&](const std::string& k, const std::string& v) {
         cfg.lambdas.clear();
         std::stringstream ss(v);
         std::string item;
         while (std::getline(ss, item, ',')) cfg.lambdas.push_back(parse_double(k, trim(item)));
         lambdas_given = true;
       }},
      {"skip_matching", [&](const std::string& k, const std::string& v) { cfg.skip_matching = parse_bool(k, v); }},
      {"precision", [&](const std::string&, const std::string& v) { cfg.precision = parse_precision(v); }},
      {"enable_residual_learning",
       [&](const std::string& k, const std::string& v) { cfg.enable_residual_learning = parse_bool(k, v); }},
      {"enable_motion_compensation",
       [&](const std::string& k, const std::string& v) { cfg.enable_motion_compensation = parse_bool(k, v); }},
      {"enable_motion_loss", [&](const std::string& k, const std::string& v) { cfg.enable_motion_loss = parse_bool(k, v); }},
      {"enable_structure_injection_addition",
       [&](const std::string& k, const std::string& v) { cfg.enable_structure_injection_addition = parse_bool(k, v); }},
      {"enable_motion_layer",
       [&](const std::string& k, const std::string& v) { cfg.enable_motion_layer = parse_bool(k, v); }},
  };

  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError("config key '" + key + "' given twice");
    it->second(key, value);
  }
  if (!seen.contains("format_version")) throw ConfigError("config is missing format_version");
  if (!lambdas_given) cfg.lambdas = default_lambdas(cfg.num_stacks);
  return validate_config(cfg);
}

ModelConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void save_config_file(const ModelConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file " + path);
  out << serialize_config(validate_config(cfg));
}

}  // namespace mtu
