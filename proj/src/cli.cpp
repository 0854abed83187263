#include "adaptkf/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "adaptkf/baselines.hpp"
#include "adaptkf/checkpoint.hpp"
#include "adaptkf/errors.hpp"
#include "adaptkf/eval_analysis.hpp"
#include "adaptkf/log.hpp"
#include "adaptkf/meta_model.hpp"
#include "adaptkf/tasks.hpp"

namespace adaptkf {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config schema
// ---------------------------------------------------------------------------

struct TrainSection {
  int sequence_length = 100;
  int outer_steps = 2000;
  double sigma_s_max = 0.3;
  double learning_rate = 1e-3;
  double clip_norm = 10.0;
  int maml_query_size = 16;
  int hidden_size = 128;
  int hidden_layers = 3;
  int lstm_hidden = 64;
  double eps_q = 1e-4;
  int d_z = 16;
  int d_phi = 16;
};

struct EvalSection {
  std::vector<std::string> conditions = {"low", "medium", "high"};
  std::vector<double> noise_levels = {0.0, 0.1, 0.5};
  int n_adapt = 100;
  int n_query = 16;
  int tasks_per_cell = 4;
  std::vector<int> checkpoints = {0, 1, 2, 4, 8, 12, 16, 24, 32, 48, 64, 100};
  int mc_samples = 100;
};

struct AnalysisSection {
  double noise_level = 0.1;
  std::vector<int> at_samples = {0, 5, 10, 20, 40, 80};
  int n_components = 2;
};

struct RunConfig {
  std::string family = "puck";
  std::string method = "kalman";
  uint64_t seed = 0;
  std::string out_dir;
  std::string checkpoint_path;
  std::vector<std::string> curve_csvs;
  TrainSection train;
  EvalSection eval;
  AnalysisSection analysis;
};

void require_keys(const json& obj, const std::string& path,
                  const std::vector<std::string>& allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const auto& k : allowed) {
      if (it.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ValidationError("unknown config key '" + (path.empty() ? it.key() : path + "." + it.key()) + "'");
    }
  }
}

template <typename T>
void read_field(const json& obj, const std::string& path, const std::string& key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError("config field '" + (path.empty() ? key : path + "." + key) +
                          "' has the wrong type");
  }
}

RunConfig parse_config(const json& root) {
  require_keys(root, "", {"family", "method", "seed", "out_dir", "checkpoint_path",
                          "curve_csvs", "train", "eval", "analysis"});
  RunConfig cfg;
  read_field(root, "", "family", cfg.family);
  read_field(root, "", "method", cfg.method);
  read_field(root, "", "seed", cfg.seed);
  read_field(root, "", "out_dir", cfg.out_dir);
  read_field(root, "", "checkpoint_path", cfg.checkpoint_path);
  read_field(root, "", "curve_csvs", cfg.curve_csvs);
  if (root.contains("train")) {
    const json& t = root.at("train");
    if (!t.is_object()) throw ValidationError("config field 'train' must be an object");
    require_keys(t, "train",
                 {"sequence_length", "outer_steps", "sigma_s_max", "learning_rate",
                  "clip_norm", "maml_query_size", "hidden_size", "hidden_layers",
                  "lstm_hidden", "eps_q", "d_z", "d_phi"});
    read_field(t, "train", "sequence_length", cfg.train.sequence_length);
    read_field(t, "train", "outer_steps", cfg.train.outer_steps);
    read_field(t, "train", "sigma_s_max", cfg.train.sigma_s_max);
    read_field(t, "train", "learning_rate", cfg.train.learning_rate);
    read_field(t, "train", "clip_norm", cfg.train.clip_norm);
    read_field(t, "train", "maml_query_size", cfg.train.maml_query_size);
    read_field(t, "train", "hidden_size", cfg.train.hidden_size);
    read_field(t, "train", "hidden_layers", cfg.train.hidden_layers);
    read_field(t, "train", "lstm_hidden", cfg.train.lstm_hidden);
    read_field(t, "train", "eps_q", cfg.train.eps_q);
    read_field(t, "train", "d_z", cfg.train.d_z);
    read_field(t, "train", "d_phi", cfg.train.d_phi);
  }
  if (root.contains("eval")) {
    const json& e = root.at("eval");
    if (!e.is_object()) throw ValidationError("config field 'eval' must be an object");
    require_keys(e, "eval", {"conditions", "noise_levels", "n_adapt", "n_query",
                             "tasks_per_cell", "checkpoints", "mc_samples"});
    read_field(e, "eval", "conditions", cfg.eval.conditions);
    read_field(e, "eval", "noise_levels", cfg.eval.noise_levels);
    read_field(e, "eval", "n_adapt", cfg.eval.n_adapt);
    read_field(e, "eval", "n_query", cfg.eval.n_query);
    read_field(e, "eval", "tasks_per_cell", cfg.eval.tasks_per_cell);
    read_field(e, "eval", "checkpoints", cfg.eval.checkpoints);
    read_field(e, "eval", "mc_samples", cfg.eval.mc_samples);
  }
  if (root.contains("analysis")) {
    const json& a = root.at("analysis");
    if (!a.is_object()) throw ValidationError("config field 'analysis' must be an object");
    require_keys(a, "analysis", {"noise_level", "at_samples", "n_components"});
    read_field(a, "analysis", "noise_level", cfg.analysis.noise_level);
    read_field(a, "analysis", "at_samples", cfg.analysis.at_samples);
    read_field(a, "analysis", "n_components", cfg.analysis.n_components);
  }
  return cfg;
}

json resolved_json(const RunConfig& cfg) {
  json root;
  root["family"] = cfg.family;
  root["method"] = cfg.method;
  root["seed"] = cfg.seed;
  root["out_dir"] = cfg.out_dir;
  if (!cfg.checkpoint_path.empty()) root["checkpoint_path"] = cfg.checkpoint_path;
  if (!cfg.curve_csvs.empty()) root["curve_csvs"] = cfg.curve_csvs;
  root["train"] = {{"sequence_length", cfg.train.sequence_length},
                   {"outer_steps", cfg.train.outer_steps},
                   {"sigma_s_max", cfg.train.sigma_s_max},
                   {"learning_rate", cfg.train.learning_rate},
                   {"clip_norm", cfg.train.clip_norm},
                   {"maml_query_size", cfg.train.maml_query_size},
                   {"hidden_size", cfg.train.hidden_size},
                   {"hidden_layers", cfg.train.hidden_layers},
                   {"lstm_hidden", cfg.train.lstm_hidden},
                   {"eps_q", cfg.train.eps_q},
                   {"d_z", cfg.train.d_z},
                   {"d_phi", cfg.train.d_phi}};
  root["eval"] = {{"conditions", cfg.eval.conditions},
                  {"noise_levels", cfg.eval.noise_levels},
                  {"n_adapt", cfg.eval.n_adapt},
                  {"n_query", cfg.eval.n_query},
                  {"tasks_per_cell", cfg.eval.tasks_per_cell},
                  {"checkpoints", cfg.eval.checkpoints},
                  {"mc_samples", cfg.eval.mc_samples}};
  root["analysis"] = {{"noise_level", cfg.analysis.noise_level},
                      {"at_samples", cfg.analysis.at_samples},
                      {"n_components", cfg.analysis.n_components}};
  return root;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  json root;
  try {
    root = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ValidationError("config root must be a JSON object");
  return parse_config(root);
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

void write_text_file(const std::string& path, const std::string& content) {
  fs::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << content;
  if (!out) throw IoError("write failed: " + path);
}

void write_manifest(const RunConfig& cfg, const std::string& command,
                    const json& extra = json::object()) {
  json m;
  m["command"] = command;
  m["version"] = kVersionString;
  m["seed"] = cfg.seed;
  m["config"] = resolved_json(cfg);
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  write_text_file(cfg.out_dir + "/manifest.json", m.dump(2) + "\n");
  write_text_file(cfg.out_dir + "/config.resolved.json", resolved_json(cfg).dump(2) + "\n");
}

std::vector<Condition> resolve_conditions(const TaskFamily& family,
                                          const std::vector<std::string>& labels) {
  std::vector<Condition> defaults = family.default_conditions();
  std::vector<Condition> out;
  for (const std::string& label : labels) {
    if (label == "all") {
      out.push_back(Condition{"all", 0.0, 0.0});
      if (family.family() == Family::regression) {
        const auto& spec = dynamic_cast<const RegressionFamily&>(family).spec();
        out.back().lo = spec.slope_lo;
        out.back().hi = spec.slope_hi;
      } else {
        const auto& spec = dynamic_cast<const PuckFamily&>(family).spec();
        out.back().lo = spec.mu_x_lo;
        out.back().hi = spec.mu_x_hi;
      }
      continue;
    }
    bool found = false;
    for (const Condition& c : defaults) {
      if (c.label == label) {
        out.push_back(c);
        found = true;
        break;
      }
    }
    if (!found) {
      throw ValidationError("config field 'eval.conditions': unknown condition '" + label +
                            "'");
    }
  }
  return out;
}

int maml_batch_from_method(const std::string& method) {
  if (method == "maml-1") return 1;
  if (method == "maml-4") return 4;
  if (method == "maml-8") return 8;
  throw ValidationError("config field 'method': unknown method '" + method + "'");
}

bool is_maml(const std::string& method) { return method.rfind("maml-", 0) == 0; }

Dims dims_for(const TaskFamily& family, const TrainSection& t) {
  return Dims{family.state_dim(), family.action_dim(), t.d_z, t.d_phi};
}

TrainConfig train_config_for(const RunConfig& cfg) {
  TrainConfig tc;
  tc.sequence_length = cfg.train.sequence_length;
  tc.outer_steps = cfg.train.outer_steps;
  tc.seed = cfg.seed;
  tc.sigma_s_max = cfg.train.sigma_s_max;
  tc.learning_rate = cfg.train.learning_rate;
  tc.clip_norm = cfg.train.clip_norm;
  tc.maml_query_size = cfg.train.maml_query_size;
  return tc;
}

std::string train_log_csv(const std::vector<TrainLogRow>& log) {
  std::ostringstream out;
  out << "step,loss,task_id\n";
  for (const TrainLogRow& row : log) {
    out << row.step << "," << format_double(row.loss) << "," << row.task_id << "\n";
  }
  return out.str();
}

// Models rebuilt from a checkpoint. Exactly one of the three is set.
struct LoadedModel {
  std::string method;
  std::string family_name;
  TrainSection train;
  std::unique_ptr<MetaModel> kalman;
  std::unique_ptr<LstmDynamicsModel> lstm;
  std::unique_ptr<MamlModel> maml;
};

TrainSection train_section_from_meta(const json& meta) {
  TrainSection t;
  const json& tj = meta.at("train");
  t.sequence_length = tj.at("sequence_length").get<int>();
  t.outer_steps = tj.at("outer_steps").get<int>();
  t.sigma_s_max = tj.at("sigma_s_max").get<double>();
  t.learning_rate = tj.at("learning_rate").get<double>();
  t.clip_norm = tj.at("clip_norm").get<double>();
  t.maml_query_size = tj.at("maml_query_size").get<int>();
  t.hidden_size = tj.at("hidden_size").get<int>();
  t.hidden_layers = tj.at("hidden_layers").get<int>();
  t.lstm_hidden = tj.at("lstm_hidden").get<int>();
  t.eps_q = tj.at("eps_q").get<double>();
  t.d_z = tj.at("d_z").get<int>();
  t.d_phi = tj.at("d_phi").get<int>();
  return t;
}

json train_section_to_meta(const TrainSection& t) {
  return json{{"sequence_length", t.sequence_length},
              {"outer_steps", t.outer_steps},
              {"sigma_s_max", t.sigma_s_max},
              {"learning_rate", t.learning_rate},
              {"clip_norm", t.clip_norm},
              {"maml_query_size", t.maml_query_size},
              {"hidden_size", t.hidden_size},
              {"hidden_layers", t.hidden_layers},
              {"lstm_hidden", t.lstm_hidden},
              {"eps_q", t.eps_q},
              {"d_z", t.d_z},
              {"d_phi", t.d_phi}};
}

LoadedModel load_model(const std::string& path) {
  auto [meta, tensors] = load_checkpoint(path);
  LoadedModel lm;
  try {
    lm.method = meta.at("method").get<std::string>();
    lm.family_name = meta.at("family").get<std::string>();
    lm.train = train_section_from_meta(meta);
  } catch (const json::exception& e) {
    throw IoError(std::string("checkpoint meta incomplete: ") + e.what());
  }
  auto family = make_family(family_from_name(lm.family_name), lm.train.sigma_s_max);
  const Dims dims = dims_for(*family, lm.train);
  if (lm.method == "kalman") {
    lm.kalman = std::make_unique<MetaModel>(dims, 0, lm.train.hidden_size,
                                            lm.train.hidden_layers, lm.train.eps_q);
    lm.kalman->load_params(tensors);
  } else if (lm.method == "lstm") {
    lm.lstm = std::make_unique<LstmDynamicsModel>(dims, 0, lm.train.lstm_hidden,
                                                  lm.train.hidden_size,
                                                  lm.train.hidden_layers);
    lm.lstm->load_params(tensors);
  } else if (is_maml(lm.method)) {
    lm.maml = std::make_unique<MamlModel>(dims, 0, maml_batch_from_method(lm.method), 3,
                                          lm.train.hidden_size, 4);
    lm.maml->load_params(tensors);
  } else {
    throw IoError("checkpoint has unknown method '" + lm.method + "'");
  }
  return lm;
}

AdapterFactory adapter_factory(const LoadedModel& lm, const TaskFamily& family,
                               const std::string& method) {
  if (method == "oracle") {
    const TaskFamily* fam = &family;
    return [fam]() { return std::make_unique<OracleAdapter>(*fam); };
  }
  if (lm.kalman) {
    const MetaModel* m = lm.kalman.get();
    return [m]() { return std::make_unique<KalmanFilterAdapter>(*m); };
  }
  if (lm.lstm) {
    const LstmDynamicsModel* m = lm.lstm.get();
    return [m]() { return std::make_unique<LstmAdapter>(*m); };
  }
  const MamlModel* m = lm.maml.get();
  return [m]() { return std::make_unique<MamlAdapter>(*m); };
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

void cmd_gen_data(const RunConfig& cfg) {
  auto family = make_family(family_from_name(cfg.family), cfg.train.sigma_s_max);
  const auto conditions = resolve_conditions(*family, cfg.eval.conditions);
  EvalSuite suite = make_eval_suite(*family, conditions, cfg.eval.noise_levels,
                                    cfg.eval.n_adapt, cfg.eval.n_query,
                                    cfg.eval.tasks_per_cell, cfg.seed);
  const int d_s = family->state_dim();
  const int d_a = family->action_dim();
  std::ostringstream csv;
  csv << "task_id,condition,noise_level,kind,idx";
  for (int i = 0; i < d_s; ++i) csv << ",s" << i;
  for (int i = 0; i < d_a; ++i) csv << ",a" << i;
  for (int i = 0; i < d_s; ++i) csv << ",s_next" << i;
  for (int i = 0; i < d_s; ++i) csv << ",s_next_noisy" << i;
  csv << "\n";
  size_t rows = 0;
  size_t tasks = 0;
  auto emit = [&](const EvalTask& et, const EvalCell& cell, const Transition& tr,
                  const char* kind, int idx) {
    csv << et.task.task_id << "," << cell.condition << ","
        << format_double(cell.noise_level) << "," << kind << "," << idx;
    for (double v : tr.s) csv << "," << format_double(v);
    for (double v : tr.a) csv << "," << format_double(v);
    for (double v : tr.s_next) csv << "," << format_double(v);
    for (double v : tr.s_next_noisy) csv << "," << format_double(v);
    csv << "\n";
    ++rows;
  };
  for (const EvalCell& cell : suite.cells) {
    for (const EvalTask& et : cell.tasks) {
      ++tasks;
      for (size_t i = 0; i < et.adapt.size(); ++i)
        emit(et, cell, et.adapt[i], "adapt", static_cast<int>(i));
      for (size_t i = 0; i < et.query.size(); ++i)
        emit(et, cell, et.query[i], "query", static_cast<int>(i));
    }
  }
  write_text_file(cfg.out_dir + "/dataset.csv", csv.str());
  write_manifest(cfg, "gen-data",
                 json{{"rows", rows},
                      {"tasks", tasks},
                      {"rows_per_task", cfg.eval.n_adapt + cfg.eval.n_query},
                      {"cells", suite.cells.size()},
                      {"schema",
                       "task_id,condition,noise_level,kind,idx,s*,a*,s_next*,s_next_noisy*"}});
  log_info("gen-data: wrote " + std::to_string(rows) + " rows to " + cfg.out_dir);
}

void run_training(const RunConfig& cfg, const TaskFamily& family, const Dims& dims,
                  const TrainConfig& tc, std::vector<TrainLogRow>& log,
                  ParamSet& tensors) {
  if (cfg.method == "kalman") {
    MetaModel model(dims, cfg.seed, cfg.train.hidden_size, cfg.train.hidden_layers,
                    cfg.train.eps_q);
    log = meta_train(model, family, tc);
    tensors = model.all_params();
  } else if (cfg.method == "lstm") {
    LstmDynamicsModel model(dims, cfg.seed, cfg.train.lstm_hidden, cfg.train.hidden_size,
                            cfg.train.hidden_layers);
    log = lstm_meta_train(model, family, tc);
    tensors = model.all_params();
  } else if (is_maml(cfg.method)) {
    MamlModel model(dims, cfg.seed, maml_batch_from_method(cfg.method), 3,
                    cfg.train.hidden_size, 4);
    log = maml_meta_train(model, family, tc);
    tensors = model.all_params();
  } else {
    throw ValidationError("config field 'method': cannot train method '" + cfg.method +
                          "'");
  }
}

void cmd_train(const RunConfig& cfg) {
  auto family = make_family(family_from_name(cfg.family), cfg.train.sigma_s_max);
  const Dims dims = dims_for(*family, cfg.train);
  const TrainConfig tc = train_config_for(cfg);
  std::vector<TrainLogRow> log;
  ParamSet tensors;
  try {
    run_training(cfg, *family, dims, tc, log, tensors);
  } catch (const NumericalError& e) {
    json diag{{"error", e.what()}, {"method", cfg.method}, {"seed", cfg.seed}};
    write_text_file(cfg.out_dir + "/abort.json", diag.dump(2) + "\n");
    throw;
  }
  json meta;
  meta["method"] = cfg.method;
  meta["family"] = cfg.family;
  meta["seed"] = cfg.seed;
  meta["version"] = kVersionString;
  meta["train"] = train_section_to_meta(cfg.train);
  fs::path ckpt = fs::path(cfg.out_dir) / "checkpoint.ckpt";
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  save_checkpoint(ckpt.string(), meta, tensors);
  write_text_file(cfg.out_dir + "/train_log.csv", train_log_csv(log));
  // Wall-clock timing lives outside the deterministic outputs.
  json timing;
  timing["total_wall_ms"] = log.empty() ? 0.0 : log.back().wall_ms;
  timing["steps"] = log.size();
  write_text_file(cfg.out_dir + "/timing.json", timing.dump(2) + "\n");
  write_manifest(cfg, "train",
                 json{{"checkpoint", ckpt.string()}, {"log_rows", log.size()}});
  log_info("train: wrote checkpoint to " + ckpt.string());
}

std::string curves_csv(const std::vector<ErrorCurve>& curves) {
  std::ostringstream out;
  out << "method,condition,noise_level,n_samples,mean_error,std_error,n_tasks\n";
  for (const ErrorCurve& c : curves) {
    for (const ErrorCurvePoint& p : c.points) {
      out << c.method << "," << c.condition << "," << format_double(c.noise_level) << ","
          << p.n_samples << "," << format_double(p.mean_error) << ","
          << format_double(p.std_error) << "," << p.n_tasks << "\n";
    }
  }
  return out.str();
}

void cmd_eval(const RunConfig& cfg, int jobs) {
  if (cfg.checkpoint_path.empty() && cfg.method != "oracle") {
    throw ValidationError("config field 'checkpoint_path' is required for eval");
  }
  LoadedModel lm;
  std::string family_name = cfg.family;
  double sigma_s_max = cfg.train.sigma_s_max;
  if (cfg.method != "oracle") {
    lm = load_model(cfg.checkpoint_path);
    family_name = lm.family_name;
    sigma_s_max = lm.train.sigma_s_max;
    if (lm.method != cfg.method) {
      throw ValidationError("config field 'method' (" + cfg.method +
                            ") does not match checkpoint method (" + lm.method + ")");
    }
  }
  auto family = make_family(family_from_name(family_name), sigma_s_max);
  const auto conditions = resolve_conditions(*family, cfg.eval.conditions);
  EvalSuite suite = make_eval_suite(*family, conditions, cfg.eval.noise_levels,
                                    cfg.eval.n_adapt, cfg.eval.n_query,
                                    cfg.eval.tasks_per_cell, cfg.seed);
  AdapterFactory factory = adapter_factory(lm, *family, cfg.method);
  std::vector<ErrorCurve> curves =
      evaluate_adaptation(factory, suite, cfg.eval.checkpoints, jobs);
  write_text_file(cfg.out_dir + "/error_curves.csv", curves_csv(curves));

  json extra{{"cells", suite.cells.size()}, {"jobs", jobs}};
  if (cfg.method == "kalman") {
    auto adapter = factory();
    auto records =
        calibration_report(*adapter, suite, cfg.eval.checkpoints, cfg.eval.mc_samples);
    std::ostringstream cal;
    cal << "condition,noise_level,n_samples,predicted_spread,empirical_rms\n";
    for (const CalibrationRecord& r : records) {
      cal << r.condition << "," << format_double(r.noise_level) << "," << r.n_samples
          << "," << format_double(r.predicted_spread) << ","
          << format_double(r.empirical_rms) << "\n";
    }
    write_text_file(cfg.out_dir + "/calibration.csv", cal.str());
    extra["calibration_rows"] = records.size();
  }
  write_manifest(cfg, "eval", extra);
  log_info("eval: wrote error curves to " + cfg.out_dir);
}

void cmd_analyze(const RunConfig& cfg) {
  if (cfg.checkpoint_path.empty()) {
    throw ValidationError("config field 'checkpoint_path' is required for analyze");
  }
  LoadedModel lm = load_model(cfg.checkpoint_path);
  if (lm.method != cfg.method) {
    throw ValidationError("config field 'method' (" + cfg.method +
                          ") does not match checkpoint method (" + lm.method + ")");
  }
  auto family = make_family(family_from_name(lm.family_name), lm.train.sigma_s_max);
  const auto conditions = resolve_conditions(*family, cfg.eval.conditions);
  if (conditions.size() < 2) {
    throw ValidationError(
        "config field 'eval.conditions': analyze needs at least two conditions");
  }
  EvalSuite suite = make_eval_suite(*family, conditions, {cfg.analysis.noise_level},
                                    cfg.eval.n_adapt, cfg.eval.n_query,
                                    cfg.eval.tasks_per_cell, cfg.seed);
  auto adapter = adapter_factory(lm, *family, cfg.method)();
  auto records = collect_hidden_states(*adapter, suite, cfg.analysis.at_samples,
                                       cfg.analysis.noise_level);
  PcaResult pca = pca_hidden_states(records, cfg.analysis.n_components);

  std::ostringstream proj;
  proj << "method,condition,n_samples";
  for (int k = 0; k < cfg.analysis.n_components; ++k) proj << ",pc" << (k + 1);
  proj << "\n";
  for (size_t i = 0; i < records.size(); ++i) {
    proj << records[i].method << "," << records[i].condition << "," << records[i].n_samples;
    for (double v : pca.projections[i]) proj << "," << format_double(v);
    proj << "\n";
  }
  write_text_file(cfg.out_dir + "/projections.csv", proj.str());

  std::ostringstream sil;
  sil << "n_samples,silhouette,n_records\n";
  for (int k : cfg.analysis.at_samples) {
    std::vector<std::vector<double>> pts;
    std::vector<std::string> labels;
    for (size_t i = 0; i < records.size(); ++i) {
      if (records[i].n_samples == k) {
        pts.push_back(pca.projections[i]);
        labels.push_back(records[i].condition);
      }
    }
    sil << k << "," << format_double(cluster_separation(pts, labels)) << "," << pts.size()
        << "\n";
  }
  write_text_file(cfg.out_dir + "/silhouette.csv", sil.str());
  json extra;
  extra["explained_variance_ratio"] = pca.explained_variance_ratio;
  extra["records"] = records.size();
  extra["degenerate"] = pca.degenerate;
  write_manifest(cfg, "analyze", extra);
  log_info("analyze: wrote projections and silhouettes to " + cfg.out_dir);
}

std::vector<ErrorCurve> parse_curves_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open curve CSV: " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty curve CSV: " + path);
  if (line != "method,condition,noise_level,n_samples,mean_error,std_error,n_tasks") {
    throw ValidationError("curve CSV '" + path + "' has an unexpected header");
  }
  std::map<std::string, ErrorCurve> by_key;
  std::vector<std::string> order;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string method, condition, noise, n_samples, mean, stddev, n_tasks;
    std::getline(ss, method, ',');
    std::getline(ss, condition, ',');
    std::getline(ss, noise, ',');
    std::getline(ss, n_samples, ',');
    std::getline(ss, mean, ',');
    std::getline(ss, stddev, ',');
    std::getline(ss, n_tasks, ',');
    const std::string key = method + "|" + condition + "|" + noise;
    if (!by_key.count(key)) order.push_back(key);
    ErrorCurve& c = by_key[key];
    c.method = method;
    c.condition = condition;
    c.noise_level = std::stod(noise);
    c.points.push_back(ErrorCurvePoint{std::stoi(n_samples), std::stod(mean),
                                       std::stod(stddev), std::stoi(n_tasks)});
  }
  std::vector<ErrorCurve> curves;
  for (const std::string& key : order) curves.push_back(by_key[key]);
  return curves;
}

void cmd_compare(const RunConfig& cfg) {
  if (cfg.curve_csvs.empty()) {
    throw ValidationError("config field 'curve_csvs' is required for compare");
  }
  std::vector<ErrorCurve> curves;
  for (const std::string& path : cfg.curve_csvs) {
    auto c = parse_curves_csv(path);
    curves.insert(curves.end(), c.begin(), c.end());
  }
  ComparisonTable table = comparison_table(curves);
  write_text_file(cfg.out_dir + "/comparison.csv", table.csv);
  write_text_file(cfg.out_dir + "/comparison.txt", table.text);
  write_manifest(cfg, "compare", json{{"columns", curves.size()}});
  log_info("compare: wrote comparison table to " + cfg.out_dir);
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Few-shot dynamics adaptation with a backprop-trained Kalman filter"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<uint64_t> seed_override;
  std::string out_override;
  std::string method_override;
  int jobs = 1;

  app.add_option("--config", config_path, "JSON run configuration")->required();
  app.add_option("--seed", seed_override, "Override config seed");
  app.add_option("--out", out_override, "Override output directory");
  app.add_option("--method", method_override,
                 "Override method (kalman|lstm|maml-1|maml-4|maml-8|oracle)");
  app.add_option("--jobs", jobs, "Worker threads for evaluation cells");

  CLI::App* gen = app.add_subcommand("gen-data", "Write an evaluation dataset");
  CLI::App* train = app.add_subcommand("train", "Meta-train a model");
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate adaptation error curves");
  CLI::App* analyze = app.add_subcommand("analyze", "PCA + silhouette of hidden states");
  CLI::App* compare = app.add_subcommand("compare", "Render a comparison table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitValidation;
  }

  try {
    RunConfig cfg = load_config(config_path);
    if (seed_override) cfg.seed = *seed_override;
    if (!out_override.empty()) cfg.out_dir = out_override;
    if (!method_override.empty()) cfg.method = method_override;
    if (cfg.out_dir.empty()) {
      throw ValidationError("config field 'out_dir' (or --out) is required");
    }
    if (jobs < 1) throw ValidationError("--jobs must be >= 1");

    if (gen->parsed()) {
      cmd_gen_data(cfg);
    } else if (train->parsed()) {
      cmd_train(cfg);
    } else if (eval_cmd->parsed()) {
      cmd_eval(cfg, jobs);
    } else if (analyze->parsed()) {
      cmd_analyze(cfg);
    } else if (compare->parsed()) {
      cmd_compare(cfg);
    }
    return kExitOk;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
}

}  // namespace adaptkf
