#include "sr4ir/config.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

namespace sr4ir {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    int64_t r = std::stoll(v, &pos);
    check(pos == v.size(), "");
    return r;
  } catch (...) {
    fail("config: key " + key + ": expected integer, got '" + v + "'");
  }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    uint64_t r = std::stoull(v, &pos);
    check(pos == v.size(), "");
    return r;
  } catch (...) {
    fail("config: key " + key + ": expected unsigned integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double r = std::stod(v, &pos);
    check(pos == v.size(), "");
    return r;
  } catch (...) {
    fail("config: key " + key + ": expected number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  fail("config: key " + key + ": expected true or false, got '" + v + "'");
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct KeyEntry {
  std::string name;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

const std::vector<KeyEntry>& registry() {
  static const std::vector<KeyEntry> keys = [] {
    std::vector<KeyEntry> r;
    const auto add = [&r](std::string name, auto get, auto set) {
      r.push_back(KeyEntry{std::move(name), get, set});
    };

    add("dataset.num_classes",
        [](const ExperimentConfig& c) { return std::to_string(c.dataset.num_classes); },
        [](ExperimentConfig& c, const std::string& v) {
          c.dataset.num_classes = int(parse_int("dataset.num_classes", v));
        });
    add("dataset.image_size",
        [](const ExperimentConfig& c) { return std::to_string(c.dataset.image_size); },
        [](ExperimentConfig& c, const std::string& v) {
          c.dataset.image_size = int(parse_int("dataset.image_size", v));
        });
    add("dataset.train_count",
        [](const ExperimentConfig& c) { return std::to_string(c.dataset.train_count); },
        [](ExperimentConfig& c, const std::string& v) {
          c.dataset.train_count = int(parse_int("dataset.train_count", v));
        });
    add("dataset.test_count",
        [](const ExperimentConfig& c) { return std::to_string(c.dataset.test_count); },
        [](ExperimentConfig& c, const std::string& v) {
          c.dataset.test_count = int(parse_int("dataset.test_count", v));
        });
    add("dataset.scale",
        [](const ExperimentConfig& c) { return std::to_string(c.dataset.degradation.scale); },
        [](ExperimentConfig& c, const std::string& v) {
          c.dataset.degradation.scale = int(parse_int("dataset.scale", v));
        });
    add("dataset.blur_std",
        [](const ExperimentConfig& c) { return fmt_double(c.dataset.degradation.blur_std); },
        [](ExperimentConfig& c, const std::string& v) {
          c.dataset.degradation.blur_std = parse_double("dataset.blur_std", v);
        });
    add("dataset.stripe_periods",
        [](const ExperimentConfig& c) {
          if (c.dataset.stripe_periods.empty()) return std::string("auto");
          std::string s;
          for (size_t i = 0; i < c.dataset.stripe_periods.size(); ++i)
            s += (i ? "," : "") + std::to_string(c.dataset.stripe_periods[i]);
          return s;
        },
        [](ExperimentConfig& c, const std::string& v) {
          c.dataset.stripe_periods.clear();
          if (v == "auto") return;
          for (const std::string& item : split_csv(v))
            c.dataset.stripe_periods.push_back(int(parse_int("dataset.stripe_periods", item)));
        });
    add("dataset.label_mode",
        [](const ExperimentConfig& c) {
          return std::string(c.dataset.label_mode == LabelMode::texture ? "texture"
                                                                        : "background");
        },
        [](ExperimentConfig& c, const std::string& v) {
          if (v == "texture")
            c.dataset.label_mode = LabelMode::texture;
          else if (v == "background")
            c.dataset.label_mode = LabelMode::background;
          else
            fail("config: key dataset.label_mode: expected texture or background, got '" + v +
                 "'");
        });

    add("net.sr_channels",
        [](const ExperimentConfig& c) { return std::to_string(c.net.sr_channels); },
        [](ExperimentConfig& c, const std::string& v) {
          c.net.sr_channels = int(parse_int("net.sr_channels", v));
        });
    add("net.sr_blocks", [](const ExperimentConfig& c) { return std::to_string(c.net.sr_blocks); },
        [](ExperimentConfig& c, const std::string& v) {
          c.net.sr_blocks = int(parse_int("net.sr_blocks", v));
        });
    add("net.feat_channels",
        [](const ExperimentConfig& c) { return std::to_string(c.net.feat_channels); },
        [](ExperimentConfig& c, const std::string& v) {
          c.net.feat_channels = int(parse_int("net.feat_channels", v));
        });
    add("net.feat_stages",
        [](const ExperimentConfig& c) { return std::to_string(c.net.feat_stages); },
        [](ExperimentConfig& c, const std::string& v) {
          c.net.feat_stages = int(parse_int("net.feat_stages", v));
        });
    add("net.task",
        [](const ExperimentConfig& c) { return std::string(task_name(c.net.task_kind)); },
        [](ExperimentConfig& c, const std::string& v) {
          if (v == "classification")
            c.net.task_kind = TaskKind::classification;
          else if (v == "segmentation")
            c.net.task_kind = TaskKind::segmentation;
          else
            fail("config: key net.task: expected classification or segmentation, got '" + v +
                 "'");
        });
    add("net.tdp_stage", [](const ExperimentConfig& c) { return std::to_string(c.net.tdp_stage); },
        [](ExperimentConfig& c, const std::string& v) {
          c.net.tdp_stage = int(parse_int("net.tdp_stage", v));
        });

    add("train.epochs", [](const ExperimentConfig& c) { return std::to_string(c.train.epochs); },
        [](ExperimentConfig& c, const std::string& v) {
          c.train.epochs = int(parse_int("train.epochs", v));
        });
    add("train.batch_size",
        [](const ExperimentConfig& c) { return std::to_string(c.train.batch_size); },
        [](ExperimentConfig& c, const std::string& v) {
          c.train.batch_size = int(parse_int("train.batch_size", v));
        });
    add("train.lr_sr", [](const ExperimentConfig& c) { return fmt_double(c.train.lr_sr); },
        [](ExperimentConfig& c, const std::string& v) {
          c.train.lr_sr = parse_double("train.lr_sr", v);
        });
    add("train.lr_task", [](const ExperimentConfig& c) { return fmt_double(c.train.lr_task); },
        [](ExperimentConfig& c, const std::string& v) {
          c.train.lr_task = parse_double("train.lr_task", v);
        });
    add("train.weight_decay",
        [](const ExperimentConfig& c) { return fmt_double(c.train.weight_decay); },
        [](ExperimentConfig& c, const std::string& v) {
          c.train.weight_decay = parse_double("train.weight_decay", v);
        });
    add("train.momentum", [](const ExperimentConfig& c) { return fmt_double(c.train.momentum); },
        [](ExperimentConfig& c, const std::string& v) {
          c.train.momentum = parse_double("train.momentum", v);
        });
    add("train.tdp_warmup_fraction",
        [](const ExperimentConfig& c) { return fmt_double(c.train.tdp_warmup_fraction); },
        [](ExperimentConfig& c, const std::string& v) {
          c.train.tdp_warmup_fraction = parse_double("train.tdp_warmup_fraction", v);
        });
    add("train.perceptual_source",
        [](const ExperimentConfig& c) {
          return std::string(perceptual_name(c.train.perceptual_source));
        },
        [](ExperimentConfig& c, const std::string& v) {
          try {
            c.train.perceptual_source = perceptual_from_name(v);
          } catch (...) {
            fail("config: key train.perceptual_source: unknown source '" + v + "'");
          }
        });
    add("train.cqmix.enabled",
        [](const ExperimentConfig& c) {
          return std::string(c.train.cqmix.enabled ? "true" : "false");
        },
        [](ExperimentConfig& c, const std::string& v) {
          c.train.cqmix.enabled = parse_bool("train.cqmix.enabled", v);
        });
    add("train.cqmix.n_patches",
        [](const ExperimentConfig& c) { return std::to_string(c.train.cqmix.n_patches); },
        [](ExperimentConfig& c, const std::string& v) {
          c.train.cqmix.n_patches = int(parse_int("train.cqmix.n_patches", v));
        });
    add("train.cqmix.p_hr",
        [](const ExperimentConfig& c) { return fmt_double(c.train.cqmix.p_hr); },
        [](ExperimentConfig& c, const std::string& v) {
          c.train.cqmix.p_hr = parse_double("train.cqmix.p_hr", v);
        });
    add("train.train_image_set",
        [](const ExperimentConfig& c) { return roles_to_string(c.train.train_image_set); },
        [](ExperimentConfig& c, const std::string& v) {
          c.train.train_image_set = roles_from_string(v);
        });
    add("train.seed", [](const ExperimentConfig& c) { return std::to_string(c.train.seed); },
        [](ExperimentConfig& c, const std::string& v) {
          c.train.seed = parse_u64("train.seed", v);
        });
    add("train.alt_sr_steps",
        [](const ExperimentConfig& c) { return std::to_string(c.train.alt_sr_steps); },
        [](ExperimentConfig& c, const std::string& v) {
          c.train.alt_sr_steps = int(parse_int("train.alt_sr_steps", v));
        });
    add("train.alt_task_steps",
        [](const ExperimentConfig& c) { return std::to_string(c.train.alt_task_steps); },
        [](ExperimentConfig& c, const std::string& v) {
          c.train.alt_task_steps = int(parse_int("train.alt_task_steps", v));
        });
    add("train.pixel_weight",
        [](const ExperimentConfig& c) { return fmt_double(c.train.pixel_weight); },
        [](ExperimentConfig& c, const std::string& v) {
          c.train.pixel_weight = parse_double("train.pixel_weight", v);
        });
    add("train.tdp_weight",
        [](const ExperimentConfig& c) { return fmt_double(c.train.tdp_weight); },
        [](ExperimentConfig& c, const std::string& v) {
          c.train.tdp_weight = parse_double("train.tdp_weight", v);
        });
    add("train.task_weight",
        [](const ExperimentConfig& c) { return fmt_double(c.train.task_weight); },
        [](ExperimentConfig& c, const std::string& v) {
          c.train.task_weight = parse_double("train.task_weight", v);
        });
    add("train.pretrain_epochs",
        [](const ExperimentConfig& c) { return std::to_string(c.train.pretrain_epochs); },
        [](ExperimentConfig& c, const std::string& v) {
          c.train.pretrain_epochs = int(parse_int("train.pretrain_epochs", v));
        });

    add("run.scenarios",
        [](const ExperimentConfig& c) {
          std::string s;
          for (size_t i = 0; i < c.scenarios.size(); ++i)
            s += std::string(i ? "," : "") + scenario_name(c.scenarios[i]);
          return s;
        },
        [](ExperimentConfig& c, const std::string& v) {
          c.scenarios.clear();
          for (const std::string& item : split_csv(v)) {
            try {
              c.scenarios.push_back(scenario_from_name(item));
            } catch (...) {
              fail("config: key run.scenarios: unknown scenario '" + item + "'");
            }
          }
          check(!c.scenarios.empty(), "config: key run.scenarios: empty list");
        });
    add("run.seeds",
        [](const ExperimentConfig& c) {
          std::string s;
          for (size_t i = 0; i < c.seeds.size(); ++i)
            s += (i ? "," : "") + std::to_string(c.seeds[i]);
          return s;
        },
        [](ExperimentConfig& c, const std::string& v) {
          c.seeds.clear();
          for (const std::string& item : split_csv(v))
            c.seeds.push_back(parse_u64("run.seeds", item));
          check(!c.seeds.empty(), "config: key run.seeds: empty list");
        });
    add("output_dir", [](const ExperimentConfig& c) { return c.output_dir; },
        [](ExperimentConfig& c, const std::string& v) { c.output_dir = v; });
    return r;
  }();
  return keys;
}

void set_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  for (const KeyEntry& e : registry())
    if (e.name == key) {
      e.set(cfg, value);
      return;
    }
  fail("config: unknown key '" + key + "'");
}

}  // namespace

std::vector<Role> roles_from_string(const std::string& csv) {
  std::vector<Role> roles;
  for (const std::string& item : split_csv(csv)) {
    if (item == "SR")
      roles.push_back(Role::SR);
    else if (item == "HR")
      roles.push_back(Role::HR);
    else if (item == "AUG")
      roles.push_back(Role::AUG);
    else
      fail("config: key train.train_image_set: expected SR, HR or AUG, got '" + item + "'");
  }
  check(!roles.empty(), "config: key train.train_image_set: empty list");
  return roles;
}

std::string roles_to_string(const std::vector<Role>& roles) {
  std::string s;
  for (size_t i = 0; i < roles.size(); ++i) s += std::string(i ? "," : "") + role_name(roles[i]);
  return s;
}

std::vector<std::pair<ScenarioKind, uint64_t>> ExperimentConfig::run_matrix() const {
  std::vector<std::pair<ScenarioKind, uint64_t>> m;
  for (ScenarioKind s : scenarios)
    for (uint64_t seed : seeds) m.emplace_back(s, seed);
  return m;
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    check(eq != std::string::npos,
          "config: line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    check(!key.empty(), "config: line " + std::to_string(lineno) + ": empty key");
    set_key(cfg, key, value);
  }
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream f(path);
  check(f.good(), "config: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

void apply_override(ExperimentConfig& cfg, const std::string& key_eq_value) {
  const size_t eq = key_eq_value.find('=');
  check(eq != std::string::npos, "config: --set expects key=value, got '" + key_eq_value + "'");
  set_key(cfg, trim(key_eq_value.substr(0, eq)), trim(key_eq_value.substr(eq + 1)));
}

std::string emit_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const KeyEntry& e : registry()) out += e.name + " = " + e.get(cfg) + "\n";
  return out;
}

void finalize_config(ExperimentConfig& cfg) {
  cfg.net.num_classes = cfg.dataset.num_classes;
  cfg.net.scale = cfg.dataset.degradation.scale;
  cfg.dataset.validate();
  cfg.net.validate();
  cfg.train.validate();
  check(!cfg.output_dir.empty(), "config: key output_dir: must not be empty");
}

std::vector<RunReport> run_experiment(const ExperimentConfig& config, bool resume, bool verbose) {
  ExperimentConfig cfg = config;
  finalize_config(cfg);
  std::filesystem::create_directories(cfg.output_dir);
  {
    std::ofstream resolved(cfg.output_dir + "/config.resolved");
    check(resolved.good(), "run: cannot write " + cfg.output_dir + "/config.resolved");
    resolved << emit_config(cfg);
  }
  std::vector<RunReport> reports;
  std::string summary =
      "run_id,scenario,seed,test_top1_or_miou,test_psnr,mean_task_loss,collapse_triggered\n";
  for (const auto& [scenario, seed] : cfg.run_matrix()) {
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    const std::string run_id = std::string(scenario_name(scenario)) + "_s" + std::to_string(seed);
    if (verbose) {
      std::printf("[run] %s (epochs=%d, train=%d, test=%d)\n", run_id.c_str(), tc.epochs,
                  cfg.dataset.train_count, cfg.dataset.test_count);
      std::fflush(stdout);
    }
    RunIO io{cfg.output_dir + "/" + run_id, resume, -1};
    RunReport rep = run_scenario(scenario, cfg.net, tc, cfg.dataset, io);
    char line[256];
    std::snprintf(line, sizeof line, "%s,%s,%llu,%.9g,%.9g,%.9g,%d\n", rep.run_id.c_str(),
                  scenario_name(scenario), (unsigned long long)seed,
                  rep.final_metrics.task_metric, rep.final_metrics.psnr_db,
                  rep.final_metrics.mean_task_loss, rep.collapse_triggered ? 1 : 0);
    summary += line;
    if (verbose) {
      std::printf("[done] %s: metric=%.4f psnr=%.2f\n", rep.run_id.c_str(),
                  rep.final_metrics.task_metric, rep.final_metrics.psnr_db);
      std::fflush(stdout);
    }
    reports.push_back(std::move(rep));
  }
  std::ofstream f(cfg.output_dir + "/summary.csv");
  check(f.good(), "run: cannot write summary.csv");
  f << summary;
  check(f.good(), "run: summary.csv write failed");
  return reports;
}

}  // namespace sr4ir
