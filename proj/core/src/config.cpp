#include "driftfuse/config.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <type_traits>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "driftfuse/errors.hpp"

namespace driftfuse {

namespace {

template <typename E, std::size_t N = 2>
using NameTable = std::array<std::pair<E, std::string_view>, N>;

constexpr NameTable<WarmupScope> kWarmupScopes{{{WarmupScope::global, "global"},
                                                {WarmupScope::per_task, "per_task"}}};
constexpr NameTable<StageAccuracy> kStageAccuracy{{{StageAccuracy::pooled, "pooled"},
                                                   {StageAccuracy::mean, "mean"}}};
constexpr NameTable<OptimizerKind> kOptimizers{{{OptimizerKind::adam, "adam"},
                                                {OptimizerKind::sgd, "sgd"}}};
constexpr NameTable<MaskMode> kMaskModes{{{MaskMode::elementwise, "elementwise"},
                                          {MaskMode::scalar, "scalar"}}};
constexpr NameTable<InitSource> kInitSources{{{InitSource::kaiming, "kaiming"},
                                              {InitSource::previous, "previous"}}};

constexpr NameTable<CueMode, 3> kCueModes{{{CueMode::fixed, "fixed"},
                                           {CueMode::permuted, "permuted"},
                                           {CueMode::independent, "independent"}}};

constexpr std::uint64_t kNever = std::numeric_limits<std::uint64_t>::max();

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view want) {
  throw ConfigError("config key '" + std::string(key) + "': cannot read '" + std::string(value) +
                    "' as " + std::string(want));
}

double parse_double(std::string_view key, std::string_view s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) bad_value(key, s, "a number");
  return v;
}

template <typename U>
U parse_unsigned(std::string_view key, std::string_view s) {
  U v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    bad_value(key, s, "a non-negative integer");
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view s) {
  if (s == "true" || s == "1" || s == "on" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "off" || s == "no") return false;
  bad_value(key, s, "a boolean");
}

template <typename E, std::size_t N>
E parse_enum(std::string_view key, std::string_view s, const NameTable<E, N>& table) {
  for (const auto& [value, name] : table) {
    if (name == s) return value;
  }
  std::string want = "one of";
  for (const auto& entry : table) want += " " + std::string(entry.second);
  bad_value(key, s, want);
}

template <typename E, std::size_t N>
std::string enum_name(E v, const NameTable<E, N>& table) {
  for (const auto& [value, name] : table) {
    if (value == v) return std::string(name);
  }
  return "?";
}

struct Field {
  std::string key;  // section.key
  std::string doc;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

template <typename Access>
Field number(std::string key, std::string doc, Access access) {
  using T = std::remove_reference_t<decltype(access(std::declval<RunConfig&>()))>;
  Field f{key, std::move(doc), nullptr, nullptr};
  f.get = [access](const RunConfig& c) {
    const T& v = access(const_cast<RunConfig&>(c));
    if constexpr (std::is_same_v<T, double>) {
      return format_double(v);
    } else if constexpr (std::is_same_v<T, bool>) {
      return std::string(v ? "true" : "false");
    } else {
      return std::to_string(v);
    }
  };
  f.set = [access, key](RunConfig& c, std::string_view s) {
    T& v = access(c);
    if constexpr (std::is_same_v<T, double>) {
      v = parse_double(key, s);
    } else if constexpr (std::is_same_v<T, bool>) {
      v = parse_bool(key, s);
    } else {
      v = parse_unsigned<T>(key, s);
    }
  };
  return f;
}

template <typename E, std::size_t N, typename Access>
Field choice(std::string key, std::string doc, const NameTable<E, N>& table, Access access) {
  Field f{key, std::move(doc), nullptr, nullptr};
  f.get = [access, &table](const RunConfig& c) {
    return enum_name(access(const_cast<RunConfig&>(c)), table);
  };
  f.set = [access, key, &table](RunConfig& c, std::string_view s) {
    access(c) = parse_enum(key, s, table);
  };
  return f;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    // [data]
    f.push_back(number("data.unseen_domains", "trailing domains kept out of training",
                       [](RunConfig& c) -> auto& { return c.layout.unseen_domains; }));
    f.push_back(number("data.test_fraction", "per-domain test share of training domains",
                       [](RunConfig& c) -> auto& { return c.layout.test_fraction; }));
    f.push_back(number("data.split_seed", "seed of the train/test split",
                       [](RunConfig& c) -> auto& { return c.layout.split_seed; }));
    // [synthetic]
    f.push_back(number("synthetic.domains", "training domains T",
                       [](RunConfig& c) -> auto& { return c.synthetic.num_domains; }));
    f.push_back(number("synthetic.classes", "classes C",
                       [](RunConfig& c) -> auto& { return c.synthetic.classes; }));
    f.push_back(number("synthetic.feature_dim", "feature width D",
                       [](RunConfig& c) -> auto& { return c.synthetic.feature_dim; }));
    f.push_back(number("synthetic.samples_per_domain", "records per domain",
                       [](RunConfig& c) -> auto& { return c.synthetic.samples_per_domain; }));
    f.push_back(number("synthetic.bias_ratio", "probability a sample carries its class's cue",
                       [](RunConfig& c) -> auto& { return c.synthetic.bias_ratio; }));
    f.push_back(number("synthetic.intrinsic_rank", "class latent width",
                       [](RunConfig& c) -> auto& { return c.synthetic.intrinsic_rank; }));
    f.push_back(number("synthetic.nuisance_rank", "style/cue latent width",
                       [](RunConfig& c) -> auto& { return c.synthetic.nuisance_rank; }));
    f.push_back(number("synthetic.class_separation", "std of class prototypes",
                       [](RunConfig& c) -> auto& { return c.synthetic.class_separation; }));
    f.push_back(number("synthetic.noise_scale", "per-sample latent noise std",
                       [](RunConfig& c) -> auto& { return c.synthetic.noise_scale; }));
    f.push_back(number("synthetic.style_scale", "std of per-domain style offsets",
                       [](RunConfig& c) -> auto& { return c.synthetic.style_scale; }));
    f.push_back(number("synthetic.bias_scale", "norm scale of spurious class cues",
                       [](RunConfig& c) -> auto& { return c.synthetic.bias_scale; }));
    f.push_back(choice("synthetic.cues", "fixed | permuted | independent cue-to-class assignment",
                       kCueModes, [](RunConfig& c) -> auto& { return c.synthetic.cues; }));
    f.push_back(number("synthetic.seed", "generator seed",
                       [](RunConfig& c) -> auto& { return c.synthetic.seed; }));
    // [model]
    f.push_back(number("model.hidden_width", "encoder hidden width",
                       [](RunConfig& c) -> auto& { return c.train.model.hidden_width; }));
    f.push_back(number("model.latent_dim", "latent width d of each stream",
                       [](RunConfig& c) -> auto& { return c.train.model.latent_dim; }));
    f.push_back(number("model.encoder_layers", "linear layers per encoder",
                       [](RunConfig& c) -> auto& { return c.train.model.encoder_layers; }));
    f.push_back(number("model.dropout", "encoder dropout rate",
                       [](RunConfig& c) -> auto& { return c.train.model.dropout; }));
    // [train]
    f.push_back(number("train.q", "GCE exponent, (0, 1]",
                       [](RunConfig& c) -> auto& { return c.train.q; }));
    f.push_back(number("train.lambda", "swap loss weight",
                       [](RunConfig& c) -> auto& { return c.train.lambda; }));
    {
      Field w{"train.warmup_steps", "steps before swapping starts; 'never' disables", nullptr,
              nullptr};
      w.get = [](const RunConfig& c) {
        return c.train.warmup_steps == kNever ? std::string("never")
                                              : std::to_string(c.train.warmup_steps);
      };
      w.set = [](RunConfig& c, std::string_view s) {
        c.train.warmup_steps =
            s == "never" ? kNever : parse_unsigned<std::uint64_t>("train.warmup_steps", s);
      };
      f.push_back(std::move(w));
    }
    f.push_back(choice("train.warmup_scope", "global | per_task step counter", kWarmupScopes,
                       [](RunConfig& c) -> auto& { return c.train.warmup_scope; }));
    f.push_back(number("train.epochs", "epochs per task",
                       [](RunConfig& c) -> auto& { return c.train.epochs; }));
    f.push_back(number("train.batch_size", "mini-batch size",
                       [](RunConfig& c) -> auto& { return c.train.batch_size; }));
    f.push_back(number("train.seed", "training seed",
                       [](RunConfig& c) -> auto& { return c.train.seed; }));
    f.push_back(number("train.reservoir_capacity", "donor features kept from the last task",
                       [](RunConfig& c) -> auto& { return c.train.reservoir_capacity; }));
    f.push_back(choice("train.stage_accuracy", "pooled | mean over seen domains",
                       kStageAccuracy, [](RunConfig& c) -> auto& { return c.train.stage_accuracy; }));
    // [optimizer]
    f.push_back(choice("optimizer.kind", "adam | sgd", kOptimizers,
                       [](RunConfig& c) -> auto& { return c.train.optimizer.kind; }));
    f.push_back(number("optimizer.lr", "learning rate",
                       [](RunConfig& c) -> auto& { return c.train.optimizer.learning_rate; }));
    f.push_back(number("optimizer.beta1", "Adam first-moment decay",
                       [](RunConfig& c) -> auto& { return c.train.optimizer.beta1; }));
    f.push_back(number("optimizer.beta2", "Adam second-moment decay",
                       [](RunConfig& c) -> auto& { return c.train.optimizer.beta2; }));
    f.push_back(number("optimizer.epsilon", "Adam denominator guard",
                       [](RunConfig& c) -> auto& { return c.train.optimizer.epsilon; }));
    f.push_back(number("optimizer.clip_norm", "global gradient-norm clip, 0 disables",
                       [](RunConfig& c) -> auto& { return c.train.optimizer.clip_norm; }));
    // [fusion]
    f.push_back(number("fusion.beta", "mask bias, [0, 1]",
                       [](RunConfig& c) -> auto& { return c.train.fusion.beta; }));
    f.push_back(choice("fusion.mask_mode", "elementwise | scalar", kMaskModes,
                       [](RunConfig& c) -> auto& { return c.train.fusion.mask_mode; }));
    f.push_back(number("fusion.fuse_biases", "fuse biases as well as weights",
                       [](RunConfig& c) -> auto& { return c.train.fusion.fuse_biases; }));
    f.push_back(choice("fusion.init", "kaiming | previous source of fresh weights", kInitSources,
                       [](RunConfig& c) -> auto& { return c.train.fusion.init; }));
    {
      Field m{"fusion.forced_mask", "constant mask overriding the computed one; 'none' disables",
              nullptr, nullptr};
      m.get = [](const RunConfig& c) {
        return c.train.fusion.forced_mask ? format_double(*c.train.fusion.forced_mask)
                                          : std::string("none");
      };
      m.set = [](RunConfig& c, std::string_view s) {
        if (s == "none" || s.empty()) {
          c.train.fusion.forced_mask.reset();
        } else {
          c.train.fusion.forced_mask = parse_double("fusion.forced_mask", s);
        }
      };
      f.push_back(std::move(m));
    }
    // [ablation]
    f.push_back(number("ablation.disentangle", "two-stream objective",
                       [](RunConfig& c) -> auto& { return c.train.ablation.disentangle; }));
    f.push_back(number("ablation.fusion", "task-boundary weight fusion",
                       [](RunConfig& c) -> auto& { return c.train.ablation.fusion; }));
    f.push_back(number("ablation.swap", "counterfactual feature swapping",
                       [](RunConfig& c) -> auto& { return c.train.ablation.swap; }));
    return f;
  }();
  return table;
}

const Field* find_field(std::string_view key) {
  for (const Field& f : fields()) {
    if (f.key == key) return &f;
  }
  return nullptr;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

void check(const RunConfig& cfg) {
  validate(cfg.train);
  validate(synthetic_config(cfg));
}

std::string render(const RunConfig& cfg, bool train_only) {
  std::ostringstream out;
  std::string section;
  for (const Field& f : fields()) {
    const auto dot = f.key.find('.');
    const std::string sec = f.key.substr(0, dot);
    if (train_only && (sec == "data" || sec == "synthetic")) continue;
    if (sec != section) {
      if (!section.empty()) out << '\n';
      out << '[' << sec << "]\n";
      section = sec;
    }
    out << f.key.substr(dot + 1) << " = " << f.get(cfg) << '\n';
  }
  return out.str();
}

}  // namespace

SyntheticConfig synthetic_config(const RunConfig& cfg) {
  SyntheticConfig s = cfg.synthetic;
  s.unseen_domains = cfg.layout.unseen_domains;
  s.test_fraction = cfg.layout.test_fraction;
  s.split_seed = cfg.layout.split_seed;
  return s;
}

RunConfig parse_config(std::string_view ini_text, const std::string& source) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in{std::string(ini_text)};
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(source + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  RunConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      throw ConfigError(source + ": key '" + section + "' must sit inside a [section]");
    }
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      const Field* f = find_field(full);
      if (!f) throw ConfigError(source + ": unknown config key '" + full + "'");
      f->set(cfg, trim(value.data()));
    }
  }
  check(cfg);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.string());
}

void apply_override(RunConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override '" + std::string(assignment) + "' is not section.key=value");
  }
  const std::string key(trim(assignment.substr(0, eq)));
  const Field* f = find_field(key);
  if (!f) throw ConfigError("unknown config key '" + key + "'");
  f->set(cfg, trim(assignment.substr(eq + 1)));
  check(cfg);
}

std::string to_ini(const RunConfig& cfg) { return render(cfg, false); }

std::string to_ini(const TrainConfig& cfg) {
  RunConfig run;
  run.train = cfg;
  return render(run, true);
}

std::vector<std::pair<std::string, std::string>> flatten(const RunConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const Field& f : fields()) out.emplace_back(f.key, f.get(cfg));
  return out;
}

std::vector<std::pair<std::string, std::string>> config_schema() {
  std::vector<std::pair<std::string, std::string>> out;
  for (const Field& f : fields()) out.emplace_back(f.key, f.doc);
  return out;
}

}  // namespace driftfuse
