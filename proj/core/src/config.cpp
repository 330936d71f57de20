#include "bgmd/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

#include "json.hpp"

namespace bgmd {
namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

// Shortest decimal that round-trips to the same double (what the JSON
// serializer emits), so echo -> parse -> echo is byte-stable.
std::string format_double(double v) { return nlohmann::json(v).dump(); }

struct Field {
  std::string section;
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

void check_enum(const std::string& what, const std::string& value,
                std::initializer_list<const char*> allowed) {
  for (const char* a : allowed) {
    if (value == a) return;
  }
  std::string msg = what + ": '" + value + "' is not one of {";
  bool first = true;
  for (const char* a : allowed) {
    if (!first) msg += ", ";
    msg += a;
    first = false;
  }
  throw ConfigError(msg + "}");
}

bool parse_bool(const std::string& what, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(what + ": expected true/false, got '" + v + "'");
}

double parse_double(const std::string& what, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return x;
  } catch (const std::exception&) {
    throw ConfigError(what + ": expected a number, got '" + v + "'");
  }
}

std::int64_t parse_int(const std::string& what, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return x;
  } catch (const std::exception&) {
    throw ConfigError(what + ": expected an integer, got '" + v + "'");
  }
}

std::uint64_t parse_uint(const std::string& what, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size() || (!v.empty() && v[0] == '-')) {
      throw std::invalid_argument("not unsigned");
    }
    return x;
  } catch (const std::exception&) {
    throw ConfigError(what + ": expected a non-negative integer, got '" + v +
                      "'");
  }
}

std::size_t parse_size(const std::string& what, const std::string& v) {
  return static_cast<std::size_t>(parse_uint(what, v));
}

// One schema table drives parsing, sweep overrides, and the canonical echo;
// the echo order is the order of this vector.
const std::vector<Field>& schema() {
  static const std::vector<Field> fields = [] {
    std::vector<Field> f;
    auto add = [&f](const char* sec, const char* key, auto set, auto get) {
      f.push_back(Field{sec, key, set, get});
    };

    // [task]
    add("task", "kind",
        [](ExperimentConfig& c, const std::string& v) {
          check_enum("task.kind", v,
                     {"quadratic", "least_squares", "logistic", "tiny_mlp"});
          c.task_kind = v;
        },
        [](const ExperimentConfig& c) { return c.task_kind; });
    add("task", "dim",
        [](ExperimentConfig& c, const std::string& v) {
          c.dim = parse_size("task.dim", v);
        },
        [](const ExperimentConfig& c) { return std::to_string(c.dim); });
    add("task", "num_samples",
        [](ExperimentConfig& c, const std::string& v) {
          c.num_samples = parse_size("task.num_samples", v);
        },
        [](const ExperimentConfig& c) { return std::to_string(c.num_samples); });
    add("task", "noise_std",
        [](ExperimentConfig& c, const std::string& v) {
          c.noise_std = parse_double("task.noise_std", v);
        },
        [](const ExperimentConfig& c) { return format_double(c.noise_std); });
    add("task", "ridge",
        [](ExperimentConfig& c, const std::string& v) {
          c.ridge = parse_double("task.ridge", v);
        },
        [](const ExperimentConfig& c) { return format_double(c.ridge); });
    add("task", "hidden",
        [](ExperimentConfig& c, const std::string& v) {
          c.hidden = parse_size("task.hidden", v);
        },
        [](const ExperimentConfig& c) { return std::to_string(c.hidden); });
    add("task", "data_csv",
        [](ExperimentConfig& c, const std::string& v) { c.data_csv = v; },
        [](const ExperimentConfig& c) { return c.data_csv; });
    add("task", "feature_noise_psi",
        [](ExperimentConfig& c, const std::string& v) {
          c.feature_noise_psi = parse_double("task.feature_noise_psi", v);
        },
        [](const ExperimentConfig& c) {
          return format_double(c.feature_noise_psi);
        });
    add("task", "feature_noise_std",
        [](ExperimentConfig& c, const std::string& v) {
          c.feature_noise_std = parse_double("task.feature_noise_std", v);
        },
        [](const ExperimentConfig& c) {
          return format_double(c.feature_noise_std);
        });
    add("task", "label_flip_psi",
        [](ExperimentConfig& c, const std::string& v) {
          c.label_flip_psi = parse_double("task.label_flip_psi", v);
        },
        [](const ExperimentConfig& c) {
          return format_double(c.label_flip_psi);
        });

    // [oracle]
    add("oracle", "batch_size",
        [](ExperimentConfig& c, const std::string& v) {
          c.batch_size = parse_size("oracle.batch_size", v);
        },
        [](const ExperimentConfig& c) { return std::to_string(c.batch_size); });
    add("oracle", "minibatch",
        [](ExperimentConfig& c, const std::string& v) {
          c.minibatch = parse_size("oracle.minibatch", v);
        },
        [](const ExperimentConfig& c) { return std::to_string(c.minibatch); });
    add("oracle", "additive_std",
        [](ExperimentConfig& c, const std::string& v) {
          c.additive_std = parse_double("oracle.additive_std", v);
        },
        [](const ExperimentConfig& c) { return format_double(c.additive_std); });
    add("oracle", "heterogeneous",
        [](ExperimentConfig& c, const std::string& v) {
          c.heterogeneous = parse_bool("oracle.heterogeneous", v);
        },
        [](const ExperimentConfig& c) {
          return std::string(c.heterogeneous ? "true" : "false");
        });
    add("oracle", "sigma_sq",
        [](ExperimentConfig& c, const std::string& v) {
          c.sigma_sq = parse_double("oracle.sigma_sq", v);
        },
        [](const ExperimentConfig& c) { return format_double(c.sigma_sq); });

    // [aggregator]
    add("aggregator", "kind",
        [](ExperimentConfig& c, const std::string& v) {
          check_enum("aggregator.kind", v,
                     {"mean", "coord_median", "gm", "bgmd"});
          c.agg_kind = v;
        },
        [](const ExperimentConfig& c) { return c.agg_kind; });
    add("aggregator", "k",
        [](ExperimentConfig& c, const std::string& v) {
          c.k = parse_size("aggregator.k", v);
        },
        [](const ExperimentConfig& c) { return std::to_string(c.k); });
    add("aggregator", "k_frac",
        [](ExperimentConfig& c, const std::string& v) {
          c.k_frac = parse_double("aggregator.k_frac", v);
        },
        [](const ExperimentConfig& c) { return format_double(c.k_frac); });
    add("aggregator", "block_mode",
        [](ExperimentConfig& c, const std::string& v) {
          check_enum("aggregator.block_mode", v, {"norm_sample", "top_k"});
          c.block_mode = v;
        },
        [](const ExperimentConfig& c) { return c.block_mode; });
    add("aggregator", "use_memory",
        [](ExperimentConfig& c, const std::string& v) {
          c.use_memory = parse_bool("aggregator.use_memory", v);
        },
        [](const ExperimentConfig& c) {
          return std::string(c.use_memory ? "true" : "false");
        });
    add("aggregator", "gm_rel_tol",
        [](ExperimentConfig& c, const std::string& v) {
          c.gm_rel_tol = parse_double("aggregator.gm_rel_tol", v);
        },
        [](const ExperimentConfig& c) { return format_double(c.gm_rel_tol); });
    add("aggregator", "gm_max_iters",
        [](ExperimentConfig& c, const std::string& v) {
          c.gm_max_iters = parse_size("aggregator.gm_max_iters", v);
        },
        [](const ExperimentConfig& c) {
          return std::to_string(c.gm_max_iters);
        });
    add("aggregator", "gm_smoothing",
        [](ExperimentConfig& c, const std::string& v) {
          c.gm_smoothing = parse_double("aggregator.gm_smoothing", v);
        },
        [](const ExperimentConfig& c) { return format_double(c.gm_smoothing); });

    // [corruption]
    add("corruption", "psi",
        [](ExperimentConfig& c, const std::string& v) {
          c.psi = parse_double("corruption.psi", v);
          if (!(c.psi >= 0.0) || c.psi >= 0.5) {
            throw ConfigError("corruption.psi: must lie in [0, 0.5)");
          }
        },
        [](const ExperimentConfig& c) { return format_double(c.psi); });
    add("corruption", "attack",
        [](ExperimentConfig& c, const std::string& v) {
          check_enum("corruption.attack", v,
                     {"none", "additive_gaussian", "scaled_bit_flip", "neg_sum"});
          c.attack = v;
        },
        [](const ExperimentConfig& c) { return c.attack; });
    add("corruption", "additive_std",
        [](ExperimentConfig& c, const std::string& v) {
          c.attack_additive_std = parse_double("corruption.additive_std", v);
        },
        [](const ExperimentConfig& c) {
          return format_double(c.attack_additive_std);
        });
    add("corruption", "flip_scale",
        [](ExperimentConfig& c, const std::string& v) {
          c.flip_scale = parse_double("corruption.flip_scale", v);
        },
        [](const ExperimentConfig& c) { return format_double(c.flip_scale); });
    add("corruption", "dynamic",
        [](ExperimentConfig& c, const std::string& v) {
          c.dynamic = parse_bool("corruption.dynamic", v);
        },
        [](const ExperimentConfig& c) {
          return std::string(c.dynamic ? "true" : "false");
        });

    // [engine]
    add("engine", "mode",
        [](ExperimentConfig& c, const std::string& v) {
          check_enum("engine.mode", v, {"sync", "fed"});
          c.mode = v;
        },
        [](const ExperimentConfig& c) { return c.mode; });
    add("engine", "iterations",
        [](ExperimentConfig& c, const std::string& v) {
          c.iterations = parse_int("engine.iterations", v);
          if (c.iterations <= 0) {
            throw ConfigError("engine.iterations: must be > 0");
          }
        },
        [](const ExperimentConfig& c) { return std::to_string(c.iterations); });
    add("engine", "step_policy",
        [](ExperimentConfig& c, const std::string& v) {
          check_enum("engine.step_policy", v,
                     {"constant", "half_inv_l", "quarter_inv_l"});
          c.step_policy = v;
        },
        [](const ExperimentConfig& c) { return c.step_policy; });
    add("engine", "gamma",
        [](ExperimentConfig& c, const std::string& v) {
          c.gamma = parse_double("engine.gamma", v);
        },
        [](const ExperimentConfig& c) { return format_double(c.gamma); });
    add("engine", "local_steps",
        [](ExperimentConfig& c, const std::string& v) {
          c.local_steps = parse_size("engine.local_steps", v);
          if (c.local_steps == 0) {
            throw ConfigError("engine.local_steps: must be >= 1");
          }
        },
        [](const ExperimentConfig& c) { return std::to_string(c.local_steps); });
    add("engine", "quant_bits",
        [](ExperimentConfig& c, const std::string& v) {
          const std::uint64_t bits = parse_uint("engine.quant_bits", v);
          if (bits == 0 || bits > 62) {
            throw ConfigError("engine.quant_bits: must lie in [1, 62]");
          }
          c.quant_bits = static_cast<unsigned>(bits);
        },
        [](const ExperimentConfig& c) { return std::to_string(c.quant_bits); });
    add("engine", "quant_bypass",
        [](ExperimentConfig& c, const std::string& v) {
          c.quant_bypass = parse_bool("engine.quant_bypass", v);
        },
        [](const ExperimentConfig& c) {
          return std::string(c.quant_bypass ? "true" : "false");
        });
    add("engine", "client_scale",
        [](ExperimentConfig& c, const std::string& v) {
          c.client_scale = parse_double("engine.client_scale", v);
        },
        [](const ExperimentConfig& c) { return format_double(c.client_scale); });
    add("engine", "seed",
        [](ExperimentConfig& c, const std::string& v) {
          c.seed = parse_uint("engine.seed", v);
        },
        [](const ExperimentConfig& c) { return std::to_string(c.seed); });
    add("engine", "divergence_factor",
        [](ExperimentConfig& c, const std::string& v) {
          c.divergence_factor = parse_double("engine.divergence_factor", v);
        },
        [](const ExperimentConfig& c) {
          return format_double(c.divergence_factor);
        });

    // [output]
    add("output", "dir",
        [](ExperimentConfig& c, const std::string& v) { c.out_dir = v; },
        [](const ExperimentConfig& c) { return c.out_dir; });
    add("output", "deterministic_timings",
        [](ExperimentConfig& c, const std::string& v) {
          c.deterministic_timings = parse_bool("output.deterministic_timings", v);
        },
        [](const ExperimentConfig& c) {
          return std::string(c.deterministic_timings ? "true" : "false");
        });

    return f;
  }();
  return fields;
}

const Field* find_field(const std::string& section, const std::string& key) {
  for (const Field& f : schema()) {
    if (f.section == section && f.key == key) return &f;
  }
  return nullptr;
}

bool known_section(const std::string& section) {
  for (const Field& f : schema()) {
    if (f.section == section) return true;
  }
  return false;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  std::map<std::string, bool> seen;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') {
        throw ConfigError("line " + std::to_string(line_no) +
                          ": malformed section header");
      }
      section = trim(t.substr(1, t.size() - 2));
      if (!known_section(section)) {
        throw ConfigError("line " + std::to_string(line_no) +
                          ": unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected 'key = value'");
    }
    if (section.empty()) {
      throw ConfigError("line " + std::to_string(line_no) +
                        ": key outside any section");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    const Field* field = find_field(section, key);
    if (field == nullptr) {
      throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" +
                        section + "." + key + "'");
    }
    const std::string dotted = section + "." + key;
    if (seen[dotted]) {
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" +
                        dotted + "'");
    }
    seen[dotted] = true;
    try {
      field->set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string echo_config(const ExperimentConfig& cfg) {
  std::string out;
  std::string section;
  for (const Field& f : schema()) {
    if (f.section != section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += f.key + " = " + f.get(cfg) + "\n";
  }
  return out;
}

void set_config_value(ExperimentConfig& cfg, const std::string& dotted_key,
                      const std::string& value) {
  const auto dot = dotted_key.find('.');
  if (dot == std::string::npos) {
    throw ConfigError("expected 'section.key', got '" + dotted_key + "'");
  }
  const Field* field =
      find_field(dotted_key.substr(0, dot), dotted_key.substr(dot + 1));
  if (field == nullptr) {
    throw ConfigError("unknown key '" + dotted_key + "'");
  }
  field->set(cfg, value);
}

Task build_task(const ExperimentConfig& cfg) {
  RngStream data_rng(cfg.seed, "task-data");
  Task task = [&]() -> Task {
    if (cfg.task_kind == "quadratic") {
      std::vector<double> center(cfg.dim);
      RngStream stream = data_rng.fork("quadratic-center");
      for (auto& v : center) v = stream.next_normal();
      return Task::quadratic(ParamVector(std::move(center)));
    }
    if (cfg.task_kind == "least_squares") {
      if (!cfg.data_csv.empty()) {
        auto [a, y] = load_regression_csv(cfg.data_csv);
        return Task::least_squares(std::move(a), std::move(y));
      }
      return Task::random_least_squares(cfg.dim, cfg.num_samples,
                                        cfg.noise_std, data_rng);
    }
    if (cfg.task_kind == "logistic") {
      return Task::random_logistic(cfg.dim, cfg.num_samples, cfg.ridge,
                                   data_rng);
    }
    if (cfg.task_kind == "tiny_mlp") {
      return Task::random_tiny_mlp(cfg.dim, cfg.hidden, cfg.num_samples,
                                   data_rng);
    }
    throw ConfigError("task.kind: unknown kind '" + cfg.task_kind + "'");
  }();

  if (cfg.feature_noise_psi > 0.0) {
    RngStream poison(cfg.seed, "task-poison");
    task = task.with_feature_noise(cfg.feature_noise_psi,
                                   cfg.feature_noise_std, poison);
  }
  if (cfg.label_flip_psi > 0.0) {
    RngStream poison(cfg.seed, "label-poison");
    task = task.with_flipped_labels(cfg.label_flip_psi, poison);
  }
  return task;
}

std::size_t resolve_block_size(const ExperimentConfig& cfg, std::size_t dim) {
  if (cfg.k > 0) return std::min(cfg.k, dim);
  const double frac = std::clamp(cfg.k_frac, 0.0, 1.0);
  return std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(frac * double(dim) + 1e-9)));
}

namespace {

AggregatorState build_aggregator(const ExperimentConfig& cfg,
                                 std::size_t dim) {
  AggregatorState state;
  if (cfg.agg_kind == "mean") {
    state.kind = AggregatorKind::kMean;
  } else if (cfg.agg_kind == "coord_median") {
    state.kind = AggregatorKind::kCoordMedian;
  } else if (cfg.agg_kind == "gm") {
    state.kind = AggregatorKind::kGm;
  } else {
    state.kind = AggregatorKind::kBgmd;
  }
  state.gm_cfg.rel_tol = cfg.gm_rel_tol;
  state.gm_cfg.max_iters = cfg.gm_max_iters;
  state.gm_cfg.smoothing = cfg.gm_smoothing;
  state.k = resolve_block_size(cfg, dim);
  state.mode = cfg.block_mode == "top_k" ? BlockMode::kTopK
                                         : BlockMode::kNormSample;
  state.use_memory = cfg.use_memory;
  state.reset_memory(dim);
  return state;
}

Oracle build_oracle(const ExperimentConfig& cfg) {
  Oracle oracle;
  oracle.batch_size = cfg.batch_size;
  oracle.minibatch = cfg.minibatch;
  oracle.additive_std = cfg.additive_std;
  oracle.heterogeneous = cfg.heterogeneous;
  oracle.sigma_sq = cfg.sigma_sq;
  return oracle;
}

CorruptionSpec build_corruption(const ExperimentConfig& cfg) {
  CorruptionSpec spec;
  spec.psi = cfg.psi;
  if (cfg.attack == "additive_gaussian") {
    spec.attack = AttackKind::kAdditiveGaussian;
  } else if (cfg.attack == "scaled_bit_flip") {
    spec.attack = AttackKind::kScaledBitFlip;
  } else if (cfg.attack == "neg_sum") {
    spec.attack = AttackKind::kNegSum;
  } else {
    spec.attack = AttackKind::kNone;
  }
  spec.additive_std = cfg.attack_additive_std;
  spec.flip_scale = cfg.flip_scale;
  spec.dynamic = cfg.dynamic;
  return spec;
}

StepSize build_step(const ExperimentConfig& cfg) {
  StepSize step;
  if (cfg.step_policy == "half_inv_l") {
    step.policy = StepSize::Policy::kHalfInvL;
  } else if (cfg.step_policy == "quarter_inv_l") {
    step.policy = StepSize::Policy::kQuarterInvL;
  } else {
    step.policy = StepSize::Policy::kConstant;
    step.gamma = cfg.gamma;
  }
  return step;
}

}  // namespace

RunResult execute_experiment(const ExperimentConfig& cfg, MetricSink* sink) {
  const Task task = build_task(cfg);
  if (cfg.mode == "fed") {
    FedRunConfig run;
    run.task = &task;
    run.oracle = build_oracle(cfg);
    run.aggregator = build_aggregator(cfg, task.dim());
    run.corruption = build_corruption(cfg);
    run.iterations = cfg.iterations;
    run.local_steps = cfg.local_steps;
    run.step = build_step(cfg);
    run.quant.bits = cfg.quant_bits;
    run.quant_bypass = cfg.quant_bypass;
    run.client_scale = cfg.client_scale;
    run.seed = cfg.seed;
    run.divergence_factor = cfg.divergence_factor;
    run.sink = sink;
    return run_fed(std::move(run));
  }
  SyncRunConfig run;
  run.task = &task;
  run.oracle = build_oracle(cfg);
  run.aggregator = build_aggregator(cfg, task.dim());
  run.corruption = build_corruption(cfg);
  run.iterations = cfg.iterations;
  run.step = build_step(cfg);
  run.seed = cfg.seed;
  run.divergence_factor = cfg.divergence_factor;
  run.sink = sink;
  return run_sync(std::move(run));
}

}  // namespace bgmd
