#include "conrad/config.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;

namespace conrad {

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    const auto slash = value.find('/');
    if (slash != std::string::npos)
      return std::stod(trim(value.substr(0, slash))) / std::stod(trim(value.substr(slash + 1)));
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key, "expected a number, got '" + value + "'");
  }
}

long long parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key, "expected an integer, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(key, "expected true/false, got '" + value + "'");
}

std::vector<std::pair<std::string, std::string>> parse_kv(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno), "expected key=value, got '" + line + "'");
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

AugmentPolicy load_custom_policy(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("augment.custom", "cannot open policy file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  std::map<int, std::map<std::string, std::string>> entries;
  for (const auto& [key, value] : parse_kv(ss.str())) {
    // op.<i>.kind / op.<i>.probability / op.<i>.magnitude
    if (key.rfind("op.", 0) != 0) throw ConfigError(key, "policy entries start with op.<index>.");
    const auto second_dot = key.find('.', 3);
    if (second_dot == std::string::npos) throw ConfigError(key, "expected op.<index>.<field>");
    const int index = static_cast<int>(parse_int(key, key.substr(3, second_dot - 3)));
    entries[index][key.substr(second_dot + 1)] = value;
  }
  std::vector<AugmentOp> ops;
  for (const auto& [index, fields] : entries) {
    const auto kind_it = fields.find("kind");
    if (kind_it == fields.end())
      throw ConfigError("op." + std::to_string(index) + ".kind", "missing");
    double magnitude = 0.0, probability = 1.0;
    if (auto it = fields.find("magnitude"); it != fields.end())
      magnitude = parse_real("op." + std::to_string(index) + ".magnitude", it->second);
    if (auto it = fields.find("probability"); it != fields.end())
      probability = parse_real("op." + std::to_string(index) + ".probability", it->second);
    for (const auto& [field, unused] : fields)
      if (field != "kind" && field != "magnitude" && field != "probability")
        throw ConfigError("op." + std::to_string(index) + "." + field, "unknown policy field");
    try {
      ops.push_back(AugmentOp::make(aug_kind_from_name(kind_it->second), magnitude, probability));
    } catch (const std::invalid_argument& e) {
      throw ConfigError("op." + std::to_string(index), e.what());
    }
  }
  return AugmentPolicy::custom(std::move(ops));
}

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return from_text(ss.str());
}

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig cfg;
  std::string policy_name = "none";
  bool preset_given = false;
  std::string preset = "pgd10_train";

  struct Override {
    bool norm = false, eps = false, steps = false, step_size = false, random_start = false,
         restarts = false;
    Norm p = Norm::LInf;
    double epsilon = 0, alpha = 0;
    int k = 0, r = 1;
    bool rs = false;
  } ov;

  for (const auto& [key, value] : parse_kv(text)) {
    try {
      if (key == "seed") cfg.train.seed = static_cast<std::uint64_t>(parse_int(key, value));
      else if (key == "out.dir") cfg.out_dir = value;
      else if (key == "data.root") cfg.data_root = value;
      else if (key == "data.dataset") cfg.dataset = value;
      else if (key == "data.fraction") cfg.train.fraction = parse_real(key, value);
      else if (key == "data.synthetic_train") cfg.synthetic_train = parse_int(key, value);
      else if (key == "data.synthetic_test") cfg.synthetic_test = parse_int(key, value);
      else if (key == "data.corruption_dir") cfg.corruption_dir = value;
      else if (key == "model.arch") cfg.train.arch = arch_from_name(value);
      else if (key == "model.num_classes") cfg.train.num_classes = static_cast<int>(parse_int(key, value));
      else if (key == "model.input_hw") {
        const int hw = static_cast<int>(parse_int(key, value));
        cfg.train.input_shape = {3, hw, hw};
      } else if (key == "train.epochs") cfg.train.epochs = static_cast<int>(parse_int(key, value));
      else if (key == "train.batch_size") cfg.train.batch_size = static_cast<int>(parse_int(key, value));
      else if (key == "train.lr") cfg.train.lr = parse_real(key, value);
      else if (key == "train.momentum") cfg.train.momentum = parse_real(key, value);
      else if (key == "train.weight_decay") cfg.train.weight_decay = parse_real(key, value);
      else if (key == "train.milestone1") cfg.train.milestone1 = static_cast<int>(parse_int(key, value));
      else if (key == "train.milestone2") cfg.train.milestone2 = static_cast<int>(parse_int(key, value));
      else if (key == "train.eval_subset") cfg.train.eval_subset = static_cast<int>(parse_int(key, value));
      else if (key == "attack.preset") { preset = value; preset_given = true; }
      else if (key == "attack.norm") { ov.norm = true; ov.p = norm_from_name(value); }
      else if (key == "attack.epsilon") { ov.eps = true; ov.epsilon = parse_real(key, value); }
      else if (key == "attack.steps") { ov.steps = true; ov.k = static_cast<int>(parse_int(key, value)); }
      else if (key == "attack.step_size") { ov.step_size = true; ov.alpha = parse_real(key, value); }
      else if (key == "attack.random_start") { ov.random_start = true; ov.rs = parse_bool(key, value); }
      else if (key == "attack.restarts") { ov.restarts = true; ov.r = static_cast<int>(parse_int(key, value)); }
      else if (key == "loss.method") cfg.train.loss.method = method_from_name(value);
      else if (key == "loss.regularizer") cfg.train.loss.regularizer = regularizer_from_name(value);
      else if (key == "loss.lambda") cfg.train.loss.lambda = parse_real(key, value);
      else if (key == "loss.tau") cfg.train.loss.tau = parse_real(key, value);
      else if (key == "loss.beta") cfg.train.loss.beta = parse_real(key, value);
      else if (key == "loss.gamma") cfg.train.loss.gamma = parse_real(key, value);
      else if (key == "loss.regularizer_tau") cfg.train.loss.regularizer_tau = parse_real(key, value);
      else if (key == "augment.policy") policy_name = value;
      else if (key == "augment.custom") cfg.custom_policy_path = value;
      else if (key == "eval.batch_size") cfg.eval_batch_size = static_cast<int>(parse_int(key, value));
      else throw ConfigError(key, "unknown key");
    } catch (const ConfigError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw ConfigError(key, e.what());
    }
  }

  try {
    cfg.train.attack = attack_preset(preset);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("attack.preset", e.what());
  }
  (void)preset_given;
  if (ov.norm) cfg.train.attack.threat.p = ov.p;
  if (ov.eps) cfg.train.attack.threat.epsilon = ov.epsilon;
  if (ov.steps) cfg.train.attack.threat.steps = ov.k;
  if (ov.step_size) cfg.train.attack.threat.step_size = ov.alpha;
  if (ov.random_start) cfg.train.attack.threat.random_start = ov.rs;
  if (ov.restarts) cfg.train.attack.restarts = ov.r;
  // the inner-maximization objective follows the training method
  cfg.train.attack.loss_kind = cfg.train.loss.required_attack_loss();

  if (policy_name == "custom") {
    if (cfg.custom_policy_path.empty())
      throw ConfigError("augment.custom", "custom policy needs a policy file path");
    cfg.train.policy = load_custom_policy(cfg.custom_policy_path);
  } else {
    try {
      cfg.train.policy = AugmentPolicy::named(policy_name);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("augment.policy", e.what());
    }
  }
  return cfg;
}

std::string RunConfig::serialize() const {
  std::map<std::string, std::string> kv;
  auto put_real = [&](const std::string& k, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    kv[k] = buf;
  };
  kv["seed"] = std::to_string(train.seed);
  kv["out.dir"] = out_dir;
  kv["data.root"] = data_root;
  kv["data.dataset"] = dataset;
  put_real("data.fraction", train.fraction);
  kv["data.synthetic_train"] = std::to_string(synthetic_train);
  kv["data.synthetic_test"] = std::to_string(synthetic_test);
  kv["data.corruption_dir"] = corruption_dir;
  kv["model.arch"] = arch_name(train.arch);
  kv["model.num_classes"] = std::to_string(train.num_classes);
  kv["model.input_hw"] = std::to_string(train.input_shape[1]);
  kv["train.epochs"] = std::to_string(train.epochs);
  kv["train.batch_size"] = std::to_string(train.batch_size);
  put_real("train.lr", train.lr);
  put_real("train.momentum", train.momentum);
  put_real("train.weight_decay", train.weight_decay);
  kv["train.milestone1"] = std::to_string(train.milestone1);
  kv["train.milestone2"] = std::to_string(train.milestone2);
  kv["train.eval_subset"] = std::to_string(train.eval_subset);
  kv["attack.norm"] = norm_name(train.attack.threat.p);
  put_real("attack.epsilon", train.attack.threat.epsilon);
  kv["attack.steps"] = std::to_string(train.attack.threat.steps);
  put_real("attack.step_size", train.attack.threat.step_size);
  kv["attack.random_start"] = train.attack.threat.random_start ? "true" : "false";
  kv["attack.restarts"] = std::to_string(train.attack.restarts);
  kv["attack.loss_kind"] = loss_kind_name(train.attack.loss_kind);
  kv["loss.method"] = method_name(train.loss.method);
  kv["loss.regularizer"] = regularizer_name(train.loss.regularizer);
  put_real("loss.lambda", train.loss.lambda);
  put_real("loss.tau", train.loss.tau);
  put_real("loss.beta", train.loss.beta);
  put_real("loss.gamma", train.loss.gamma);
  put_real("loss.regularizer_tau", train.loss.regularizer_tau);
  kv["augment.policy"] = policy_name_str(train.policy.name);
  kv["augment.custom"] = custom_policy_path;
  kv["eval.batch_size"] = std::to_string(eval_batch_size);

  std::ostringstream os;
  for (const auto& [k, v] : kv) os << k << '=' << v << '\n';
  return os.str();
}

std::string RunConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(serialize())));
  return buf;
}

std::string RunConfig::resolved_corruption_dir() const {
  if (!corruption_dir.empty()) return corruption_dir;
  return (fs::path(resolve_data_root(data_root)) / "CIFAR-10-C").string();
}

DatasetSplit RunConfig::load_dataset() const {
  if (dataset == "synthetic")
    return make_synthetic_split(synthetic_train, synthetic_test, train.seed);
  if (dataset == "cifar10") return load_cifar10(resolve_data_root(data_root));
  throw ConfigError("data.dataset", "expected cifar10 or synthetic, got '" + dataset + "'");
}

void RunConfig::validate() const {
  train.validate();
  if (eval_batch_size < 1) throw ConfigError("eval.batch_size", "must be positive");
  if (dataset != "cifar10" && dataset != "synthetic")
    throw ConfigError("data.dataset", "expected cifar10 or synthetic");
}

}  // namespace conrad
