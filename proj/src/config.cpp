#include "m3net/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace m3net {

std::size_t OptimConfig::drop_epoch() const {
  if (lr_drop_epoch) return *lr_drop_epoch;
  return static_cast<std::size_t>(std::lround(static_cast<Real>(epochs) * 100.0 / 120.0));
}

Real OptimConfig::lr_at(std::size_t epoch) const { return epoch > drop_epoch() ? lr_drop_lr : lr; }

void RunConfig::validate() const {
  model.validate();
  if (!(optim.lr >= 0)) throw ConfigError("optim.lr must be >= 0");
  if (!(optim.lr_drop_lr >= 0)) throw ConfigError("optim.lr_drop_lr must be >= 0");
  if (optim.batch == 0) throw ConfigError("optim.batch must be >= 1");
  if (optim.drop_epoch() > optim.epochs) throw ConfigError("optim.lr_drop_epoch exceeds optim.epochs");
  if (!(optim.beta1 >= 0 && optim.beta1 < 1 && optim.beta2 >= 0 && optim.beta2 < 1 && optim.eps > 0)) {
    throw ConfigError("optim: betas must lie in [0,1) and eps must be positive");
  }
  if (!(data.val_fraction >= 0 && data.val_fraction < 1)) throw ConfigError("data.val_fraction must lie in [0,1)");
  if (!(data.crop > 0 && data.crop <= 1)) throw ConfigError("data.crop must lie in (0,1]");
  model.decoder.check_geometry(data.image_size, data.image_size, model.encoder.patch_size);
  const std::size_t unit = 4 * model.encoder.patch_size;
  if (data.image_size == 0 || data.image_size % unit != 0) {
    throw ConfigError("data.image_size must be a positive multiple of " + std::to_string(unit));
  }
}

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const std::string& why) {
  throw ConfigError(key + " = '" + value + "': " + why);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad(key, v, "expected a non-negative integer");
  return out;
}

std::size_t to_size(const std::string& key, const std::string& v) { return static_cast<std::size_t>(to_u64(key, v)); }

Real to_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const Real out = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(out)) bad(key, v, "expected a finite number");
    return out;
  } catch (const std::logic_error&) {
    bad(key, v, "expected a number");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  bad(key, v, "expected true or false");
}

std::vector<std::size_t> to_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_size(key, trim(item)));
  if (out.empty()) bad(key, v, "expected a comma-separated list");
  return out;
}

Window to_window(const std::string& key, const std::string& v) {
  const auto x = v.find('x');
  if (x == std::string::npos) {
    const std::size_t n = to_size(key, v);
    return Window{n, n};
  }
  return Window{to_size(key, trim(v.substr(0, x))), to_size(key, trim(v.substr(x + 1)))};
}

std::string fmt_real(Real v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, p);
}

std::string fmt_list(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

struct Key {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <std::size_t Field>
std::vector<std::size_t> fold_field(const DecoderConfig& d) {
  std::vector<std::size_t> out;
  for (const FoldGeometry& g : d.fold) out.push_back(Field == 0 ? g.k : Field == 1 ? g.s : g.p);
  return out;
}

template <std::size_t Field>
void set_fold_field(DecoderConfig& d, const std::string& key, const std::string& v) {
  const auto list = to_list(key, v);
  if (list.size() != 3) bad(key, v, "expected three values, one per upsampling step");
  for (std::size_t i = 0; i < 3; ++i) (Field == 0 ? d.fold[i].k : Field == 1 ? d.fold[i].s : d.fold[i].p) = list[i];
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = [] {
    std::vector<Key> t;
    auto add = [&](std::string n, auto set, auto get) { t.push_back({std::move(n), set, get}); };
    add("seed", [](RunConfig& c, const std::string& v) { c.seed = to_u64("seed", v); },
        [](const RunConfig& c) { return std::to_string(c.seed); });
    // encoder
    add("encoder.patch_size", [](RunConfig& c, const std::string& v) { c.model.encoder.patch_size = to_size("encoder.patch_size", v); },
        [](const RunConfig& c) { return std::to_string(c.model.encoder.patch_size); });
    add("encoder.dims", [](RunConfig& c, const std::string& v) { c.model.encoder.dims = to_list("encoder.dims", v); },
        [](const RunConfig& c) { return fmt_list(c.model.encoder.dims); });
    add("encoder.depths", [](RunConfig& c, const std::string& v) { c.model.encoder.depths = to_list("encoder.depths", v); },
        [](const RunConfig& c) { return fmt_list(c.model.encoder.depths); });
    add("encoder.window", [](RunConfig& c, const std::string& v) { c.model.encoder.window = to_window("encoder.window", v); },
        [](const RunConfig& c) { return std::to_string(c.model.encoder.window.h) + "x" + std::to_string(c.model.encoder.window.w); });
    add("encoder.head_dim", [](RunConfig& c, const std::string& v) { c.model.encoder.head_dim = to_size("encoder.head_dim", v); },
        [](const RunConfig& c) { return std::to_string(c.model.encoder.head_dim); });
    add("encoder.mlp_ratio", [](RunConfig& c, const std::string& v) { c.model.encoder.mlp_ratio = to_size("encoder.mlp_ratio", v); },
        [](const RunConfig& c) { return std::to_string(c.model.encoder.mlp_ratio); });
    add("encoder.rel_pos_bias", [](RunConfig& c, const std::string& v) { c.model.encoder.rel_pos_bias = to_bool("encoder.rel_pos_bias", v); },
        [](const RunConfig& c) { return fmt_bool(c.model.encoder.rel_pos_bias); });
    // decoder
    add("decoder.r", [](RunConfig& c, const std::string& v) { c.model.decoder.r = to_size("decoder.r", v); },
        [](const RunConfig& c) { return std::to_string(c.model.decoder.r); });
    add("decoder.d_mab", [](RunConfig& c, const std::string& v) { c.model.decoder.d_mab = to_size("decoder.d_mab", v); },
        [](const RunConfig& c) { return std::to_string(c.model.decoder.d_mab); });
    add("decoder.window", [](RunConfig& c, const std::string& v) { c.model.decoder.window = to_window("decoder.window", v); },
        [](const RunConfig& c) { return std::to_string(c.model.decoder.window.h) + "x" + std::to_string(c.model.decoder.window.w); });
    add("decoder.attention", [](RunConfig& c, const std::string& v) { c.model.decoder.attention = parse_mab_attention(v); },
        [](const RunConfig& c) { return std::string(to_string(c.model.decoder.attention)); });
    add("decoder.interaction", [](RunConfig& c, const std::string& v) { c.model.decoder.interaction = parse_interaction(v); },
        [](const RunConfig& c) { return std::string(to_string(c.model.decoder.interaction)); });
    add("decoder.across_levels", [](RunConfig& c, const std::string& v) { c.model.decoder.across_levels = to_size("decoder.across_levels", v); },
        [](const RunConfig& c) { return std::to_string(c.model.decoder.across_levels); });
    add("decoder.upsample", [](RunConfig& c, const std::string& v) { c.model.decoder.upsample = parse_upsample_method(v); },
        [](const RunConfig& c) { return std::string(to_string(c.model.decoder.upsample)); });
    add("decoder.fold_k", [](RunConfig& c, const std::string& v) { set_fold_field<0>(c.model.decoder, "decoder.fold_k", v); },
        [](const RunConfig& c) { return fmt_list(fold_field<0>(c.model.decoder)); });
    add("decoder.fold_s", [](RunConfig& c, const std::string& v) { set_fold_field<1>(c.model.decoder, "decoder.fold_s", v); },
        [](const RunConfig& c) { return fmt_list(fold_field<1>(c.model.decoder)); });
    add("decoder.fold_p", [](RunConfig& c, const std::string& v) { set_fold_field<2>(c.model.decoder, "decoder.fold_p", v); },
        [](const RunConfig& c) { return fmt_list(fold_field<2>(c.model.decoder)); });
    add("decoder.mab_attention_residual",
        [](RunConfig& c, const std::string& v) { c.model.decoder.mab_attention_residual = to_bool("decoder.mab_attention_residual", v); },
        [](const RunConfig& c) { return fmt_bool(c.model.decoder.mab_attention_residual); });
    add("decoder.mab_pre_norm", [](RunConfig& c, const std::string& v) { c.model.decoder.mab_pre_norm = to_bool("decoder.mab_pre_norm", v); },
        [](const RunConfig& c) { return fmt_bool(c.model.decoder.mab_pre_norm); });
    add("decoder.fold_normalize", [](RunConfig& c, const std::string& v) { c.model.decoder.fold_normalize = to_bool("decoder.fold_normalize", v); },
        [](const RunConfig& c) { return fmt_bool(c.model.decoder.fold_normalize); });
    add("decoder.ctx_source", [](RunConfig& c, const std::string& v) { c.model.decoder.ctx_source = parse_context_source(v); },
        [](const RunConfig& c) { return std::string(to_string(c.model.decoder.ctx_source)); });
    add("decoder.head_dim", [](RunConfig& c, const std::string& v) { c.model.decoder.head_dim = to_size("decoder.head_dim", v); },
        [](const RunConfig& c) { return std::to_string(c.model.decoder.head_dim); });
    add("decoder.mlp_ratio", [](RunConfig& c, const std::string& v) { c.model.decoder.mlp_ratio = to_size("decoder.mlp_ratio", v); },
        [](const RunConfig& c) { return std::to_string(c.model.decoder.mlp_ratio); });
    add("decoder.ca_dim", [](RunConfig& c, const std::string& v) { c.model.decoder.ca_dim = to_size("decoder.ca_dim", v); },
        [](const RunConfig& c) { return std::to_string(c.model.decoder.ca_dim); });
    // loss, optimizer, data
    add("loss.bce_reduction", [](RunConfig& c, const std::string& v) { c.bce_reduction = parse_bce_reduction(v); },
        [](const RunConfig& c) { return std::string(to_string(c.bce_reduction)); });
    add("optim.lr", [](RunConfig& c, const std::string& v) { c.optim.lr = to_real("optim.lr", v); },
        [](const RunConfig& c) { return fmt_real(c.optim.lr); });
    add("optim.beta1", [](RunConfig& c, const std::string& v) { c.optim.beta1 = to_real("optim.beta1", v); },
        [](const RunConfig& c) { return fmt_real(c.optim.beta1); });
    add("optim.beta2", [](RunConfig& c, const std::string& v) { c.optim.beta2 = to_real("optim.beta2", v); },
        [](const RunConfig& c) { return fmt_real(c.optim.beta2); });
    add("optim.eps", [](RunConfig& c, const std::string& v) { c.optim.eps = to_real("optim.eps", v); },
        [](const RunConfig& c) { return fmt_real(c.optim.eps); });
    add("optim.epochs", [](RunConfig& c, const std::string& v) { c.optim.epochs = to_size("optim.epochs", v); },
        [](const RunConfig& c) { return std::to_string(c.optim.epochs); });
    add("optim.batch", [](RunConfig& c, const std::string& v) { c.optim.batch = to_size("optim.batch", v); },
        [](const RunConfig& c) { return std::to_string(c.optim.batch); });
    add("optim.lr_drop_epoch",
        [](RunConfig& c, const std::string& v) {
          if (v == "auto") c.optim.lr_drop_epoch.reset();
          else c.optim.lr_drop_epoch = to_size("optim.lr_drop_epoch", v);
        },
        [](const RunConfig& c) { return c.optim.lr_drop_epoch ? std::to_string(*c.optim.lr_drop_epoch) : std::string("auto"); });
    add("optim.lr_drop_lr", [](RunConfig& c, const std::string& v) { c.optim.lr_drop_lr = to_real("optim.lr_drop_lr", v); },
        [](const RunConfig& c) { return fmt_real(c.optim.lr_drop_lr); });
    add("data.image_size", [](RunConfig& c, const std::string& v) { c.data.image_size = to_size("data.image_size", v); },
        [](const RunConfig& c) { return std::to_string(c.data.image_size); });
    add("data.synthetic", [](RunConfig& c, const std::string& v) { c.data.synthetic = to_size("data.synthetic", v); },
        [](const RunConfig& c) { return std::to_string(c.data.synthetic); });
    add("data.val_fraction", [](RunConfig& c, const std::string& v) { c.data.val_fraction = to_real("data.val_fraction", v); },
        [](const RunConfig& c) { return fmt_real(c.data.val_fraction); });
    add("data.rotate", [](RunConfig& c, const std::string& v) { c.data.rotate = to_bool("data.rotate", v); },
        [](const RunConfig& c) { return fmt_bool(c.data.rotate); });
    add("data.crop", [](RunConfig& c, const std::string& v) { c.data.crop = to_real("data.crop", v); },
        [](const RunConfig& c) { return fmt_real(c.data.crop); });
    return t;
  }();
  return table;
}

}  // namespace

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const Key& k : keys()) {
    if (k.name == key) {
      k.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const Key& k : keys()) out.push_back(k.name);
  return out;
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    try {
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  for (const Key& k : keys()) out += k.name + " = " + k.get(cfg) + "\n";
  return out;
}

std::uint64_t config_hash(const RunConfig& cfg, const std::vector<std::string>& exclude) {
  std::uint64_t h = 1469598103934665603ull;
  for (const Key& k : keys()) {
    if (std::find(exclude.begin(), exclude.end(), k.name) != exclude.end()) continue;
    for (char c : k.name + " = " + k.get(cfg) + "\n") {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace m3net
