#include "config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "abspread/experiments.hpp"

namespace abspread::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  return out;
}

template <class T>
T parse_number(const std::string& v, const char* what) {
  T x{};
  const char* b = v.data();
  const char* e = v.data() + v.size();
  auto [p, ec] = std::from_chars(b, e, x);
  if (ec != std::errc{} || p != e) throw ConfigError(std::string("expected ") + what + ", got '" + v + "'");
  return x;
}

double to_double(const std::string& v) { return parse_number<double>(v, "a number"); }
std::int64_t to_int(const std::string& v) { return parse_number<std::int64_t>(v, "an integer"); }
std::uint64_t to_uint(const std::string& v) { return parse_number<std::uint64_t>(v, "a nonnegative integer"); }

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("expected a boolean, got '" + v + "'");
}

std::vector<double> to_doubles(const std::string& v) {
  std::vector<double> out;
  if (trim(v).empty()) return out;
  for (const auto& part : split(v, ',')) out.push_back(to_double(part));
  return out;
}

struct Key {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<nlohmann::json(const RunConfig&)> get;
};

template <class M>
Key num_key(std::string name, M RunConfig::*field) {
  return {std::move(name),
          [field](RunConfig& c, const std::string& v) {
            using T = std::remove_reference_t<decltype(c.*field)>;
            if constexpr (std::is_same_v<T, double>) {
              c.*field = to_double(v);
            } else if constexpr (std::is_same_v<T, bool>) {
              c.*field = to_bool(v);
            } else if constexpr (std::is_unsigned_v<T>) {
              c.*field = static_cast<T>(to_uint(v));
            } else {
              const auto x = to_int(v);
              if (x < std::numeric_limits<T>::min() || x > std::numeric_limits<T>::max()) {
                throw ConfigError("value '" + v + "' out of range");
              }
              c.*field = static_cast<T>(x);
            }
          },
          [field](const RunConfig& c) { return nlohmann::json(c.*field); }};
}

Key list_key(std::string name, std::vector<double> RunConfig::*field) {
  return {std::move(name), [field](RunConfig& c, const std::string& v) { c.*field = to_doubles(v); },
          [field](const RunConfig& c) { return nlohmann::json(c.*field); }};
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = [] {
    std::vector<Key> k;
    k.push_back(num_key("d", &RunConfig::d));
    k.push_back({"D",
                 [](RunConfig& c, const std::string& v) { c.D_A = c.D_B = to_double(v); },
                 [](const RunConfig& c) { return c.D_A == c.D_B ? nlohmann::json(c.D_A) : nlohmann::json(); }});
    k.push_back(num_key("D_A", &RunConfig::D_A));
    k.push_back(num_key("D_B", &RunConfig::D_B));
    k.push_back(num_key("mu_A", &RunConfig::mu_A));
    k.push_back({"seeds",
                 [](RunConfig& c, const std::string& v) {
                   c.seeds.clear();
                   for (const auto& s : split(v, ';')) {
                     if (!s.empty()) c.seeds.push_back(s);
                   }
                 },
                 [](const RunConfig& c) {
                   nlohmann::json out = nlohmann::json::array();
                   for (const auto& s : c.seed_sites()) out.push_back(s.to_string());
                   return out;
                 }});
    k.push_back(num_key("t_max", &RunConfig::t_max));
    k.push_back(num_key("kappa", &RunConfig::kappa));
    k.push_back(num_key("window_margin", &RunConfig::window_margin));
    k.push_back(num_key("replicas", &RunConfig::replicas));
    k.push_back(num_key("seed", &RunConfig::seed));
    k.push_back(num_key("threads", &RunConfig::threads));
    k.push_back({"out", [](RunConfig& c, const std::string& v) { c.out = v; },
                 [](const RunConfig& c) { return nlohmann::json(c.out); }});
    k.push_back(num_key("epoch_dt", &RunConfig::epoch_dt));
    k.push_back(num_key("epoch_geometric", &RunConfig::epoch_geometric));
    k.push_back(num_key("half_region_slope", &RunConfig::half_region_slope));
    k.push_back(num_key("speed_window", &RunConfig::speed_window));
    k.push_back(num_key("bootstrap", &RunConfig::bootstrap));
    k.push_back(num_key("front", &RunConfig::front));
    k.push_back(num_key("shape", &RunConfig::shape));
    k.push_back(num_key("martingale", &RunConfig::martingale));
    k.push_back(num_key("blocks", &RunConfig::blocks));
    k.push_back(num_key("coupling", &RunConfig::coupling));
    k.push_back(num_key("bounds", &RunConfig::bounds));
    k.push_back(num_key("stationarity", &RunConfig::stationarity));
    k.push_back(list_key("bound_times", &RunConfig::bound_times));
    k.push_back(num_key("bound_replicas", &RunConfig::bound_replicas));
    k.push_back(num_key("martingale_distance", &RunConfig::martingale_distance));
    k.push_back(list_key("martingale_times", &RunConfig::martingale_times));
    k.push_back(num_key("martingale_replicas", &RunConfig::martingale_replicas));
    k.push_back(num_key("martingale_tracking", &RunConfig::martingale_tracking));
    k.push_back(num_key("coupling_pairs", &RunConfig::coupling_pairs));
    k.push_back(num_key("coupling_t_max", &RunConfig::coupling_t_max));
    k.push_back(num_key("C0", &RunConfig::C0));
    k.push_back(num_key("gamma0", &RunConfig::gamma0));
    k.push_back(num_key("r_max", &RunConfig::r_max));
    k.push_back(num_key("C4", &RunConfig::C4));
    k.push_back(list_key("blocks_mus", &RunConfig::blocks_mus));
    k.push_back(num_key("blocks_configs", &RunConfig::blocks_configs));
    k.push_back(num_key("blocks_paths", &RunConfig::blocks_paths));
    k.push_back(num_key("blocks_field_rate", &RunConfig::blocks_field_rate));
    k.push_back(num_key("stationarity_t", &RunConfig::stationarity_t));
    k.push_back(num_key("stationarity_window", &RunConfig::stationarity_window));
    k.push_back(num_key("stationarity_k", &RunConfig::stationarity_k));
    k.push_back(num_key("stationarity_replicas", &RunConfig::stationarity_replicas));
    return k;
  }();
  return table;
}

}  // namespace

int RunConfig::worker_threads() const { return threads > 0 ? threads : default_threads(); }

std::vector<Site> RunConfig::seed_sites() const {
  if (seeds.empty()) return {Site(d)};
  std::vector<Site> out;
  for (const auto& s : seeds) {
    try {
      out.push_back(parse_site(s, d));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("seeds: ") + e.what());
    }
  }
  return out;
}

void RunConfig::validate() const {
  const auto fail = [](const std::string& key, const std::string& msg) { throw ConfigError(key + ": " + msg); };
  if (d < 1 || d > 8) fail("d", "must be in [1, 8]");
  if (!(D_A >= 0.0)) fail("D_A", "must be nonnegative");
  if (!(D_B > 0.0)) fail("D_B", "must be positive");
  if (!(mu_A > 0.0)) fail("mu_A", "must be positive");
  if (!(t_max >= 0.0)) fail("t_max", "must be nonnegative");
  if (!(kappa > 0.0)) fail("kappa", "must be positive");
  if (!(window_margin >= 0.0)) fail("window_margin", "must be nonnegative");
  if (replicas < 1) fail("replicas", "must be at least 1");
  if (threads < 0) fail("threads", "must be nonnegative");
  if (out.empty()) fail("out", "must not be empty");
  if (!(epoch_dt > 0.0)) fail("epoch_dt", "must be positive");
  if (epoch_geometric < 0) fail("epoch_geometric", "must be nonnegative");
  if (!(half_region_slope >= 0.0)) fail("half_region_slope", "must be nonnegative");
  if (!(speed_window > 0.0 && speed_window <= 1.0)) fail("speed_window", "must be in (0, 1]");
  if (bootstrap < 1) fail("bootstrap", "must be at least 1");
  if (bounds && bound_replicas < 100) fail("bound_replicas", "must be at least 100");
  for (double t : bound_times) {
    if (!(t >= 0.0)) fail("bound_times", "must be nonnegative");
  }
  if (martingale && martingale_replicas < 2) fail("martingale_replicas", "must be at least 2");
  if (martingale_distance < 0) fail("martingale_distance", "must be nonnegative");
  if (coupling && D_A != D_B) fail("coupling", "needs D_A == D_B");
  if (C0 < 2) fail("C0", "must be at least 2");
  if (!(gamma0 > 0.0)) fail("gamma0", "must be positive");
  if (r_max < 1) fail("r_max", "must be at least 1");
  if (blocks && blocks_mus.empty()) fail("blocks_mus", "must not be empty");
  (void)seed_sites();
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value, const std::string& where) {
  const auto& table = keys();
  const auto it = std::find_if(table.begin(), table.end(), [&](const Key& k) { return k.name == key; });
  if (it == table.end()) throw ConfigError(where + "unknown key '" + key + "'");
  try {
    it->set(cfg, trim(value));
  } catch (const ConfigError& e) {
    throw ConfigError(where + "key '" + key + "': " + e.what());
  }
}

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value', got '" + line + "'");
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(where + "missing key");
    apply_setting(cfg, key, line.substr(eq + 1), where);
  }
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  apply_config_text(cfg, buf.str(), path.string());
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("--set expects KEY=VALUE, got '" + assignment + "'");
  apply_setting(cfg, trim(assignment.substr(0, eq)), assignment.substr(eq + 1), "--set: ");
}

nlohmann::json config_json(const RunConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& k : keys()) {
    if (k.name == "D") continue;  // D_A and D_B carry it
    j[k.name] = k.get(cfg);
  }
  j["threads"] = cfg.worker_threads();
  return j;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : keys()) out.push_back(k.name);
  return out;
}

}  // namespace abspread::cli
