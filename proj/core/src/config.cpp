// SPDX-License-Identifier: Apache-2.0

#include "kcciol/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <sstream>

#include "kcciol/errors.hpp"

namespace kcciol::config {

const char* kind_name(ExperimentKind kind) {
  return kind == ExperimentKind::SineRegression ? "sine-regression" : "synthetic-classification";
}

model::ModelSpec ExperimentConfig::spec() const {
  model::ModelSpec s;
  if (kind == ExperimentKind::SineRegression) {
    s.layer_sizes.push_back(data::kSineInputDim);
    s.layer_sizes.insert(s.layer_sizes.end(), hidden.begin(), hidden.end());
    s.layer_sizes.push_back(1);
    s.head = model::HeadKind::Regression;
  } else {
    s.layer_sizes.push_back(classification.dim);
    s.layer_sizes.insert(s.layer_sizes.end(), hidden.begin(), hidden.end());
    s.layer_sizes.push_back(classification.train_classes + classification.extra_val_classes);
    s.head = model::HeadKind::Classification;
  }
  s.split_index = split;
  return s;
}

meta::TrainConfig ExperimentConfig::train_config() const {
  meta::TrainConfig t;
  t.spec = spec();
  t.phases = phases;
  t.gamma = gamma;
  t.lambda = lambda;
  t.delta = delta;
  t.seed = seed;
  t.options.constraint_first_order = constraint_first_order;
  return t;
}

ad::Index ExperimentConfig::eval_output_dim() const {
  return kind == ExperimentKind::SineRegression ? 1 : classification.eval_classes;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Context {
  std::string key;  // section.key
  int line = 0;

  [[noreturn]] void fail(const std::string& what) const { throw ConfigError(key + ": " + what, line); }
};

double parse_double(const Context& c, const std::string& v, double lo, double hi) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) c.fail("'" + v + "' is not a number");
  if (out < lo || out > hi) {
    std::ostringstream msg;
    msg << "value " << v << " outside [" << lo << ", " << hi << "]";
    c.fail(msg.str());
  }
  return out;
}

std::int64_t parse_int(const Context& c, const std::string& v, std::int64_t lo, std::int64_t hi) {
  std::int64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) c.fail("'" + v + "' is not an integer");
  if (out < lo || out > hi) {
    c.fail("value " + v + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  return out;
}

std::uint64_t parse_u64(const Context& c, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) c.fail("'" + v + "' is not an unsigned 64-bit integer");
  return out;
}

bool parse_bool(const Context& c, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  c.fail("'" + v + "' is not a boolean");
}

constexpr std::int64_t kMaxInt = 1'000'000'000;
constexpr double kInf = HUGE_VAL;

using Setter = std::function<void(ExperimentConfig&, const Context&, const std::string&)>;

struct Field {
  bool required;
  Setter set;
};

std::map<std::string, Field> fields() {
  std::map<std::string, Field> f;
  f["experiment.kind"] = {true, [](ExperimentConfig& c, const Context& ctx, const std::string& v) {
                            if (v == "sine-regression") {
                              c.kind = ExperimentKind::SineRegression;
                            } else if (v == "synthetic-classification") {
                              c.kind = ExperimentKind::SyntheticClassification;
                            } else {
                              ctx.fail("expected sine-regression or synthetic-classification");
                            }
                          }};
  f["experiment.seed"] = {false, [](ExperimentConfig& c, const Context& ctx, const std::string& v) {
                            c.seed = parse_u64(ctx, v);
                          }};
  f["experiment.out"] = {false, [](ExperimentConfig& c, const Context& ctx, const std::string& v) {
                           if (v.empty()) ctx.fail("empty path");
                           c.out = v;
                         }};
  f["model.hidden"] = {true, [](ExperimentConfig& c, const Context& ctx, const std::string& v) {
                         c.hidden.clear();
                         std::stringstream ss(v);
                         std::string item;
                         while (std::getline(ss, item, ',')) c.hidden.push_back(parse_int(ctx, trim(item), 1, 1 << 16));
                         if (c.hidden.empty()) ctx.fail("at least one hidden width is required");
                       }};
  f["model.split"] = {true, [](ExperimentConfig& c, const Context& ctx, const std::string& v) {
                        c.split = static_cast<int>(parse_int(ctx, v, 1, 1 << 16));
                      }};
  for (int p = 0; p < 3; ++p) {
    const std::string s = "phase" + std::to_string(p + 1) + ".";
    f[s + "alpha"] = {true, [p](ExperimentConfig& c, const Context& ctx, const std::string& v) {
                        c.phases[p].alpha = parse_double(ctx, v, 0.0, kInf);
                      }};
    f[s + "beta"] = {true, [p](ExperimentConfig& c, const Context& ctx, const std::string& v) {
                       c.phases[p].beta = parse_double(ctx, v, 0.0, kInf);
                     }};
    f[s + "steps"] = {true, [p](ExperimentConfig& c, const Context& ctx, const std::string& v) {
                        c.phases[p].steps = parse_int(ctx, v, 0, kMaxInt);
                      }};
    f[s + "inner_batch"] = {false, [p](ExperimentConfig& c, const Context& ctx, const std::string& v) {
                              c.phases[p].inner_batch = static_cast<int>(parse_int(ctx, v, 1, kMaxInt));
                            }};
  }
  f["consolidation.gamma"] = {true, [](ExperimentConfig& c, const Context& ctx, const std::string& v) {
                                c.gamma = parse_double(ctx, v, 0.0, kInf);
                              }};
  f["consolidation.lambda"] = {true, [](ExperimentConfig& c, const Context& ctx, const std::string& v) {
                                 c.lambda = parse_double(ctx, v, 0.0, kInf);
                               }};
  f["consolidation.delta"] = {true, [](ExperimentConfig& c, const Context& ctx, const std::string& v) {
                                c.delta = parse_double(ctx, v, 0.0, 1.0);
                              }};
  f["consolidation.constraint_first_order"] = {false,
                                               [](ExperimentConfig& c, const Context& ctx, const std::string& v) {
                                                 c.constraint_first_order = parse_bool(ctx, v);
                                               }};
  f["data.train_functions"] = {false, [](ExperimentConfig& c, const Context& ctx, const std::string& v) {
                                 c.sine.train_functions = static_cast<int>(parse_int(ctx, v, 10, kMaxInt));
                               }};
  f["data.test_functions"] = {false, [](ExperimentConfig& c, const Context& ctx, const std::string& v) {
                                c.sine.test_functions = static_cast<int>(parse_int(ctx, v, 10, kMaxInt));
                              }};
  f["data.train_per_function"] = {false, [](ExperimentConfig& c, const Context& ctx, const std::string& v) {
                                    c.sine.train_per_function = static_cast<int>(parse_int(ctx, v, 1, kMaxInt));
                                  }};
  f["data.val_per_function"] = {false, [](ExperimentConfig& c, const Context& ctx, const std::string& v) {
                                  c.sine.val_per_function = static_cast<int>(parse_int(ctx, v, 1, kMaxInt));
                                }};
  auto class_int = [&f](const std::string& key, int ClassData::*member, std::int64_t lo) {
    f["classification." + key] = {false, [member, lo](ExperimentConfig& c, const Context& ctx, const std::string& v) {
                                    c.classification.*member = static_cast<int>(parse_int(ctx, v, lo, kMaxInt));
                                  }};
  };
  class_int("classes", &ClassData::classes, 2);
  class_int("dim", &ClassData::dim, 1);
  class_int("per_class", &ClassData::per_class, 1);
  class_int("train_classes", &ClassData::train_classes, 1);
  class_int("extra_val_classes", &ClassData::extra_val_classes, 1);
  class_int("per_class_train", &ClassData::per_class_train, 1);
  class_int("per_class_val", &ClassData::per_class_val, 1);
  class_int("eval_classes", &ClassData::eval_classes, 1);
  f["classification.sigma"] = {false, [](ExperimentConfig& c, const Context& ctx, const std::string& v) {
                                 c.classification.sigma = parse_double(ctx, v, 0.0, kInf);
                               }};
  f["eval.alpha"] = {false, [](ExperimentConfig& c, const Context& ctx, const std::string& v) {
                       c.eval.alpha = parse_double(ctx, v, 0.0, kInf);
                     }};
  f["eval.inner_batch"] = {false, [](ExperimentConfig& c, const Context& ctx, const std::string& v) {
                             c.eval.inner_batch = static_cast<int>(parse_int(ctx, v, 1, kMaxInt));
                           }};
  f["eval.trajectories"] = {false, [](ExperimentConfig& c, const Context& ctx, const std::string& v) {
                              c.eval.trajectories = static_cast<int>(parse_int(ctx, v, 1, kMaxInt));
                            }};
  return f;
}

}  // namespace

ExperimentConfig parse_config(std::istream& in) {
  const std::map<std::string, Field> table = fields();
  ExperimentConfig config;
  std::map<std::string, int> seen;  // key -> line
  std::string section;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']') throw ConfigError("malformed section header '" + text + "'", line);
      section = trim(text.substr(1, text.size() - 2));
      bool known = false;
      for (const auto& [key, field] : table) known = known || key.rfind(section + ".", 0) == 0;
      if (!known) throw ConfigError("unknown section [" + section + "]", line);
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key = value, got '" + text + "'", line);
    if (section.empty()) throw ConfigError("key outside of any section", line);
    const std::string key = section + "." + trim(text.substr(0, eq));
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown key '" + key + "'", line);
    if (seen.count(key)) {
      throw ConfigError("duplicate key '" + key + "' (first set on line " + std::to_string(seen[key]) + ")", line);
    }
    seen[key] = line;
    it->second.set(config, Context{key, line}, trim(text.substr(eq + 1)));
  }

  for (const auto& [key, field] : table) {
    if (field.required && !seen.count(key)) throw ConfigError("missing required key '" + key + "'");
  }

  const bool regression = config.kind == ExperimentKind::SineRegression;
  for (int p = 0; p < 3; ++p) {
    if (!seen.count("phase" + std::to_string(p + 1) + ".inner_batch")) config.phases[p].inner_batch = regression ? 32 : 1;
  }
  if (!seen.count("eval.alpha")) config.eval.alpha = config.phases[2].alpha;
  if (!seen.count("eval.inner_batch")) config.eval.inner_batch = regression ? config.phases[2].inner_batch : 1;

  auto line_of = [&](const std::string& key) { return seen.count(key) ? seen[key] : 0; };
  if (config.split >= static_cast<int>(config.hidden.size()) + 1) {
    throw ConfigError("model.split: must be below the number of weight layers (" +
                          std::to_string(config.hidden.size() + 1) + ")",
                      line_of("model.split"));
  }
  const ClassData& cd = config.classification;
  if (!regression) {
    if (cd.train_classes + cd.extra_val_classes > cd.classes) {
      throw ConfigError("classification.train_classes + extra_val_classes exceeds classification.classes",
                        line_of("classification.train_classes"));
    }
    if (cd.eval_classes > cd.classes) {
      throw ConfigError("classification.eval_classes exceeds classification.classes",
                        line_of("classification.eval_classes"));
    }
    if (cd.per_class_train + cd.per_class_val > cd.per_class) {
      throw ConfigError("classification.per_class_train + per_class_val exceeds classification.per_class",
                        line_of("classification.per_class_train"));
    }
  }
  return config;
}

ExperimentConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  try {
    return parse_config(in);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string canonical_text(const ExperimentConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "experiment.kind=" << kind_name(c.kind) << "\n";
  out << "experiment.seed=" << c.seed << "\n";
  out << "model.hidden=";
  for (std::size_t i = 0; i < c.hidden.size(); ++i) out << (i ? "," : "") << c.hidden[i];
  out << "\nmodel.split=" << c.split << "\n";
  for (int p = 0; p < 3; ++p) {
    const meta::PhaseConfig& ph = c.phases[p];
    const std::string s = "phase" + std::to_string(p + 1) + ".";
    out << s << "alpha=" << ph.alpha << "\n" << s << "beta=" << ph.beta << "\n" << s << "steps=" << ph.steps
        << "\n" << s << "inner_batch=" << ph.inner_batch << "\n";
  }
  out << "consolidation.gamma=" << c.gamma << "\nconsolidation.lambda=" << c.lambda
      << "\nconsolidation.delta=" << c.delta << "\nconsolidation.constraint_first_order="
      << (c.constraint_first_order ? "true" : "false") << "\n";
  if (c.kind == ExperimentKind::SineRegression) {
    out << "data.train_functions=" << c.sine.train_functions << "\ndata.test_functions=" << c.sine.test_functions
        << "\ndata.train_per_function=" << c.sine.train_per_function
        << "\ndata.val_per_function=" << c.sine.val_per_function << "\n";
  } else {
    const ClassData& d = c.classification;
    out << "classification.classes=" << d.classes << "\nclassification.dim=" << d.dim
        << "\nclassification.per_class=" << d.per_class << "\nclassification.sigma=" << d.sigma
        << "\nclassification.train_classes=" << d.train_classes
        << "\nclassification.extra_val_classes=" << d.extra_val_classes
        << "\nclassification.per_class_train=" << d.per_class_train
        << "\nclassification.per_class_val=" << d.per_class_val
        << "\nclassification.eval_classes=" << d.eval_classes << "\n";
  }
  out << "eval.alpha=" << c.eval.alpha << "\neval.inner_batch=" << c.eval.inner_batch
      << "\neval.trajectories=" << c.eval.trajectories << "\n";
  return out.str();
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const ExperimentConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical_text(config))));
  return buf;
}

}  // namespace kcciol::config
