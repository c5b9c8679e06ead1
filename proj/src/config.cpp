#include "panoda/config.hpp"

#include <fstream>
#include <sstream>

using nlohmann::json;

namespace panoda::config {

bool ModulesConfig::has(const std::string& m) const {
  for (const auto& s : active)
    if (s == m) return true;
  return false;
}

json default_config_json() {
  json j;
  j["seed"] = 1;
  j["data"] = {{"layout", "synthetic"},
               {"source_root", ""},
               {"target_root", ""},
               {"source_split", "train"},
               {"target_split", "train"},
               {"val_split", "val"},
               {"test_split", "test"},
               {"source_resize", nullptr},
               {"class_weights", "auto"}};
  j["model"] = {{"mode", "danet_like"},
                {"channels", {16, 32, 48, 64}},
                {"head_hidden", 32},
                {"gn_groups", 8}};
  j["modules"] = {{"active", json::array()},
                  {"sdam_placement", {"output"}},
                  {"rcdam_placement", "output"},
                  {"d_base", 64}};
  j["lambdas"] = {{"S", {{"seg", 1.0}, {"adv", 1e-3}, {"d", 1.0}}},
                  {"A", {{"seg", 0.1}, {"adv", 2e-4}, {"d", 1.0}}},
                  {"R1", {{"seg", 1.5}, {"adv", 1e-3}, {"d", 1.0}}},
                  {"R2", {{"seg", 1.0}, {"adv", 1e-3}, {"d", 1.0}}},
                  {"boundary", 1.0},
                  {"ent_s", 1e-3},
                  {"ent_t", 1e-3}};
  j["optim"] = {{"g_lr", 1e-5},     {"g_momentum", 0.9}, {"g_weight_decay", 5e-4},
                {"d_lr", 4e-6},     {"d_beta1", 0.9},    {"d_beta2", 0.99},
                {"ssl_g_lr", 1e-8}, {"ssl_d_lr", 4e-9}};
  j["schedule"] = {{"max_iter", 200000}, {"iters", 200000}, {"batch", 2},
                   {"poly_power", 0.9},  {"eval_every", 500}, {"log_every", 10}};
  j["ssl"] = {{"iters", 500}, {"runs", 1}, {"gate_quantile", 0.7}, {"retain_adversarial", true}};
  j["eval"] = {{"head", "mean"}, {"sectors", 8}};
  j["bench"] = {{"n", 100}, {"warmup", 10}, {"height", 64}, {"width", 256}};
  j["synth"] = {{"out_root", ""},
                {"pano_h", 64},
                {"pano_w", 256},
                {"pin_h", 64},
                {"pin_w", 64},
                {"pin_hfov_deg", 70.0},
                {"pano_vfov_deg", 70.0},
                {"src_noise", 0.02},
                {"tgt_noise", 0.06},
                {"tgt_brightness", -0.05},
                {"tgt_color_shift", 0.6},
                {"counts",
                 {{"src_train", 200}, {"src_val", 20}, {"tgt_train", 200}, {"tgt_val", 20},
                  {"tgt_test", 50}}}};
  return j;
}

namespace {

void merge_into(json& base, const json& overlay, const std::string& prefix,
                std::vector<std::string>& errors) {
  for (auto it = overlay.begin(); it != overlay.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) {
      errors.push_back("unknown config key: " + path);
      continue;
    }
    json& slot = base[it.key()];
    if (slot.is_object() && it.value().is_object()) {
      merge_into(slot, it.value(), path, errors);
      continue;
    }
    const bool number_ok = (slot.is_number() && it.value().is_number()) ||
                           (slot.is_null() || it.value().is_null());
    if (!number_ok && slot.type() != it.value().type() &&
        !(slot.is_array() && it.value().is_array())) {
      errors.push_back("type mismatch at " + path + ": expected " + std::string(slot.type_name()) +
                       ", got " + std::string(it.value().type_name()));
      continue;
    }
    slot = it.value();
  }
}

double num(const json& j) { return j.get<double>(); }

}  // namespace

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw std::invalid_argument("override must look like key.path=value: " + assignment);
  const std::string keypath = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  json* cur = &doc;
  std::istringstream is(keypath);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(is, part, '.')) parts.push_back(part);
  for (size_t i = 0; i < parts.size(); ++i) {
    if (!cur->contains(parts[i]))
      throw std::invalid_argument("override targets unknown key: " + keypath);
    cur = &(*cur)[parts[i]];
    if (i + 1 < parts.size() && !cur->is_object())
      throw std::invalid_argument("override path crosses a leaf: " + keypath);
  }

  // parse the value with the existing leaf's type
  if (cur->is_string())
    *cur = value;
  else if (cur->is_boolean()) {
    if (value == "true" || value == "1")
      *cur = true;
    else if (value == "false" || value == "0")
      *cur = false;
    else
      throw std::invalid_argument("override expects a boolean at " + keypath + ": " + value);
  } else if (cur->is_number_integer() && value.find('.') == std::string::npos &&
             value.find('e') == std::string::npos)
    *cur = std::stoll(value);
  else if (cur->is_number() || cur->is_null())
    *cur = std::stod(value);
  else if (cur->is_array()) {
    json arr = json::parse(value, nullptr, false);
    if (arr.is_discarded() || !arr.is_array())
      throw std::invalid_argument("override expects a JSON array at " + keypath + ": " + value);
    *cur = arr;
  } else
    throw std::invalid_argument("override cannot set a value of type " +
                                std::string(cur->type_name()) + " at " + keypath);
}

ExperimentConfig parse_config_json(json merged) {
  std::vector<std::string> errors;
  ExperimentConfig c;
  c.resolved = merged;

  auto require = [&errors](bool ok, const std::string& msg) {
    if (!ok) errors.push_back(msg);
  };

  c.seed = merged.at("seed").get<uint64_t>();

  const json& d = merged.at("data");
  c.data.layout = d.at("layout").get<std::string>();
  require(c.data.layout == "synthetic" || c.data.layout == "densepass" ||
              c.data.layout == "cityscapes",
          "data.layout must be synthetic|densepass|cityscapes");
  c.data.source_root = d.at("source_root").get<std::string>();
  c.data.target_root = d.at("target_root").get<std::string>();
  c.data.source_split = d.at("source_split").get<std::string>();
  c.data.target_split = d.at("target_split").get<std::string>();
  c.data.val_split = d.at("val_split").get<std::string>();
  c.data.test_split = d.at("test_split").get<std::string>();
  if (!d.at("source_resize").is_null()) {
    auto arr = d.at("source_resize");
    require(arr.is_array() && arr.size() == 2, "data.source_resize must be [h, w] or null");
    if (arr.is_array() && arr.size() == 2)
      c.data.source_resize = std::pair{arr[0].get<int>(), arr[1].get<int>()};
  }
  c.data.class_weights = d.at("class_weights").get<std::string>();
  require(c.data.class_weights == "auto" || c.data.class_weights == "uniform",
          "data.class_weights must be auto|uniform");

  const json& m = merged.at("model");
  c.model.mode = m.at("mode").get<std::string>();
  require(c.model.mode == "danet_like" || c.model.mode == "fanet_like",
          "model.mode must be danet_like|fanet_like");
  auto ch = m.at("channels");
  require(ch.is_array() && ch.size() == 4, "model.channels must have 4 entries");
  if (ch.is_array() && ch.size() == 4)
    for (int i = 0; i < 4; ++i) {
      c.model.channels[static_cast<size_t>(i)] = ch[static_cast<size_t>(i)].get<int>();
      require(c.model.channels[static_cast<size_t>(i)] > 0, "model.channels must be positive");
    }
  c.model.head_hidden = m.at("head_hidden").get<int>();
  c.model.gn_groups = m.at("gn_groups").get<int>();
  require(c.model.head_hidden > 0 && c.model.gn_groups > 0,
          "model.head_hidden and model.gn_groups must be positive");

  const json& mods = merged.at("modules");
  for (const auto& a : mods.at("active")) {
    const std::string s = a.get<std::string>();
    require(s == "S" || s == "A" || s == "R" || s == "F",
            "modules.active entries must be S|A|R|F, got " + s);
    c.modules.active.push_back(s);
  }
  c.modules.sdam_placement.clear();
  for (const auto& p : mods.at("sdam_placement")) {
    const std::string s = p.get<std::string>();
    require(s == "feature" || s == "output", "modules.sdam_placement entries must be feature|output");
    c.modules.sdam_placement.push_back(s);
  }
  require(!c.modules.sdam_placement.empty(), "modules.sdam_placement must not be empty");
  c.modules.rcdam_placement = mods.at("rcdam_placement").get<std::string>();
  require(c.modules.rcdam_placement == "feature" || c.modules.rcdam_placement == "output",
          "modules.rcdam_placement must be feature|output");
  c.modules.d_base = mods.at("d_base").get<int>();
  require(c.modules.d_base > 0, "modules.d_base must be positive");

  const json& lam = merged.at("lambdas");
  auto read_mod = [&](const char* key, damods::ModuleLambdas& out) {
    const json& e = lam.at(key);
    out.seg = num(e.at("seg"));
    out.adv = num(e.at("adv"));
    out.d = num(e.at("d"));
  };
  read_mod("S", c.lambdas.sdam);
  read_mod("A", c.lambdas.adam);
  read_mod("R1", c.lambdas.rcdam1);
  read_mod("R2", c.lambdas.rcdam2);
  c.lambdas.boundary = num(lam.at("boundary"));
  c.lambdas.ent_s = num(lam.at("ent_s"));
  c.lambdas.ent_t = num(lam.at("ent_t"));

  const json& o = merged.at("optim");
  c.optim.g_lr = num(o.at("g_lr"));
  c.optim.g_momentum = num(o.at("g_momentum"));
  c.optim.g_weight_decay = num(o.at("g_weight_decay"));
  c.optim.d_lr = num(o.at("d_lr"));
  c.optim.d_beta1 = num(o.at("d_beta1"));
  c.optim.d_beta2 = num(o.at("d_beta2"));
  c.optim.ssl_g_lr = num(o.at("ssl_g_lr"));
  c.optim.ssl_d_lr = num(o.at("ssl_d_lr"));
  require(c.optim.g_lr > 0 && c.optim.d_lr > 0 && c.optim.ssl_g_lr > 0 && c.optim.ssl_d_lr > 0,
          "optim learning rates must be positive");

  const json& s = merged.at("schedule");
  c.schedule.max_iter = s.at("max_iter").get<int64_t>();
  c.schedule.iters = s.at("iters").get<int64_t>();
  c.schedule.batch = s.at("batch").get<int>();
  c.schedule.poly_power = num(s.at("poly_power"));
  c.schedule.eval_every = s.at("eval_every").get<int64_t>();
  c.schedule.log_every = s.at("log_every").get<int64_t>();
  require(c.schedule.max_iter > 0, "schedule.max_iter must be positive");
  require(c.schedule.iters >= 0 && c.schedule.iters <= c.schedule.max_iter,
          "schedule.iters must lie in [0, schedule.max_iter]");
  require(c.schedule.batch > 0, "schedule.batch must be positive");

  const json& ssl = merged.at("ssl");
  c.ssl.iters = ssl.at("iters").get<int64_t>();
  c.ssl.runs = ssl.at("runs").get<int>();
  c.ssl.gate_quantile = num(ssl.at("gate_quantile"));
  c.ssl.retain_adversarial = ssl.at("retain_adversarial").get<bool>();
  require(c.ssl.gate_quantile >= 0.0 && c.ssl.gate_quantile <= 1.0,
          "ssl.gate_quantile must be in [0,1]");

  const json& e = merged.at("eval");
  c.eval.head = e.at("head").get<std::string>();
  require(c.eval.head == "c1" || c.eval.head == "c2" || c.eval.head == "mean",
          "eval.head must be c1|c2|mean");
  c.eval.sectors = e.at("sectors").get<int>();
  require(c.eval.sectors >= 1, "eval.sectors must be >= 1");

  const json& b = merged.at("bench");
  c.bench.n = b.at("n").get<int>();
  c.bench.warmup = b.at("warmup").get<int>();
  c.bench.height = b.at("height").get<int>();
  c.bench.width = b.at("width").get<int>();

  const json& sy = merged.at("synth");
  c.synth.seed = c.seed;
  c.synth.pano_h = sy.at("pano_h").get<int>();
  c.synth.pano_w = sy.at("pano_w").get<int>();
  c.synth.pin_h = sy.at("pin_h").get<int>();
  c.synth.pin_w = sy.at("pin_w").get<int>();
  c.synth.pin_hfov_deg = num(sy.at("pin_hfov_deg"));
  c.synth.pano_vfov_deg = num(sy.at("pano_vfov_deg"));
  c.synth.src_noise = num(sy.at("src_noise"));
  c.synth.tgt_noise = num(sy.at("tgt_noise"));
  c.synth.tgt_brightness = num(sy.at("tgt_brightness"));
  c.synth.tgt_color_shift = num(sy.at("tgt_color_shift"));
  const json& sc = sy.at("counts");
  c.synth_counts.src_train = sc.at("src_train").get<int>();
  c.synth_counts.src_val = sc.at("src_val").get<int>();
  c.synth_counts.tgt_train = sc.at("tgt_train").get<int>();
  c.synth_counts.tgt_val = sc.at("tgt_val").get<int>();
  c.synth_counts.tgt_test = sc.at("tgt_test").get<int>();

  if (!errors.empty()) {
    std::ostringstream os;
    os << "config validation failed with " << errors.size() << " problem(s):";
    for (const auto& msg : errors) os << "\n  - " << msg;
    throw std::invalid_argument(os.str());
  }
  return c;
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file: " + path);
  json file_json = json::parse(f, nullptr, true, /*ignore_comments=*/true);

  json merged = default_config_json();
  std::vector<std::string> errors;
  merge_into(merged, file_json, "", errors);
  if (!errors.empty()) {
    std::ostringstream os;
    os << "config validation failed with " << errors.size() << " problem(s):";
    for (const auto& msg : errors) os << "\n  - " << msg;
    throw std::invalid_argument(os.str());
  }
  for (const auto& ov : overrides) apply_override(merged, ov);
  return parse_config_json(std::move(merged));
}

std::string run_id(const json& resolved) {
  const std::string text = resolved.dump();
  uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace panoda::config
