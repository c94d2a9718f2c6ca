#include "layerstitch/app.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "layerstitch/error.hpp"
#include "layerstitch/journal.hpp"
#include "layerstitch/merge.hpp"
#include "layerstitch/space_json.hpp"

namespace layerstitch {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kManifestVersion = 1;

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": malformed JSON: " + e.what());
  }
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

void make_dirs(const fs::path& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

template <typename T>
T field(const json& doc, const std::string& key, const std::string& what) {
  if (!doc.is_object() || !doc.contains(key))
    throw ParseError(what + ": missing field '" + key + "'");
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception&) {
    throw ParseError(what + ": field '" + key + "' has the wrong type");
  }
}

template <typename T>
T field_or(const json& doc, const std::string& key, T fallback, const std::string& what) {
  if (!doc.is_object() || !doc.contains(key)) return fallback;
  return field<T>(doc, key, what);
}

void require_object(const json& doc, const std::string& what) {
  if (!doc.is_object()) throw ParseError(what + ": expected a JSON object");
}

json to_json(const ModelShape& s) {
  return {{"input_dim", s.input_dim},
          {"hidden_dim", s.hidden_dim},
          {"num_layers", s.num_layers},
          {"num_classes", s.num_classes}};
}

ModelShape shape_from_json(const json& doc, const std::string& what) {
  require_object(doc, what);
  ModelShape s;
  s.input_dim = field_or(doc, "input_dim", s.input_dim, what);
  s.hidden_dim = field_or(doc, "hidden_dim", s.hidden_dim, what);
  s.num_layers = field_or(doc, "num_layers", s.num_layers, what);
  s.num_classes = field_or(doc, "num_classes", s.num_classes, what);
  if (s.input_dim <= 0 || s.hidden_dim < s.input_dim || s.num_layers <= 0 || s.num_classes < 2)
    throw ConfigError(what + ": need 0 < input_dim <= hidden_dim, num_layers > 0, num_classes >= 2");
  return s;
}

json to_json(const TrainHyper& h) {
  return {{"steps", h.steps}, {"learning_rate", h.learning_rate}, {"batch_size", h.batch_size}};
}

TrainHyper hyper_from_json(const json& doc, TrainHyper h, const std::string& what) {
  require_object(doc, what);
  h.steps = field_or(doc, "steps", h.steps, what);
  h.learning_rate = field_or(doc, "learning_rate", h.learning_rate, what);
  h.batch_size = field_or(doc, "batch_size", h.batch_size, what);
  if (h.batch_size == 0 || !(h.learning_rate > 0.0))
    throw ConfigError(what + ": batch_size and learning_rate must be positive");
  return h;
}

std::uint64_t variant_seed(std::uint64_t seed, std::size_t t) { return splitmix64(seed ^ (t + 1)); }

std::uint64_t default_shuffle_seed(const TaskSpec& task) { return splitmix64(task.seed ^ 0xca11b); }

std::string fmt_double(double v, int precision = 6) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

std::string removed_layers_str(const Config& config) {
  const auto& bits = removal_bits(config);
  std::ostringstream os;
  os << '{';
  bool first = true;
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (!bits[i]) continue;
    os << (first ? "" : ", ") << i;
    first = false;
  }
  os << '}';
  return os.str();
}

// Maps exceptions onto exit codes.
template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const CapExceeded& e) {
    err << "error: " << e.what() << "\ncardinality: " << e.cardinality() << "\n";
    return kExitCap;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

struct LoadedRun {
  RunConfig cfg;
  Family family;
  CalibrationSuite suite;
};

LoadedRun load_run(const fs::path& run_config, const RunOverrides& overrides) {
  LoadedRun run;
  run.cfg = load_run_config(run_config);
  apply_overrides(run.cfg, overrides);
  run.family = load_family(run.cfg.manifest);
  bind_family(run.cfg, run.family);
  run.suite = make_suite(run.family, run.cfg);
  return run;
}

void write_exports(std::span<const TrialRecord> history, const RunConfig& cfg,
                   const std::vector<std::string>& ids) {
  const ParetoFront front = front_from_history(history, cfg.search.b_max);
  write_text_file(cfg.output_dir / "pareto.json", pareto_to_json(front).dump(2) + "\n");
  write_text_file(cfg.output_dir / "pareto.csv", pareto_to_csv(front, ids));
  const auto rows = budget_allocation_report(history);
  write_text_file(cfg.output_dir / "budgets.txt", format_allocation(rows));
  write_text_file(cfg.output_dir / "budgets.csv", allocation_csv(rows));
}

std::string format_summary(std::span<const TrialRecord> history, const RunConfig& cfg,
                           const std::vector<std::string>& ids) {
  const auto best = best_from_history(history, cfg.search.b_max);
  const ParetoFront front = front_from_history(history, cfg.search.b_max);
  std::ostringstream os;
  os << "trials: " << history.size() << "\n";
  os << "space: mode=" << to_string(cfg.search.space.mode) << " l=" << cfg.search.space.l
     << " K=" << cfg.search.space.K << " sparsity=" << cfg.search.space.sparsity.str()
     << " remove_count=" << cfg.search.space.remove_count << "\n";
  os << "seed: " << cfg.search.seed << "\n";
  os << "pareto front size: " << front.size() << "\n";
  if (!best) {
    os << "best (omega*): none (no successful trial)\n";
    return os.str();
  }
  os << "best (omega*): trial " << best->t << " at budget " << best->budget << "\n";
  os << "  scalarized: " << fmt_double(best->scalarized, 9) << "\n";
  os << "  lambda: [";
  for (std::size_t i = 0; i < best->lambda.size(); ++i)
    os << (i ? ", " : "") << fmt_double(best->lambda.values[i], 3);
  os << "]\n";
  for (std::size_t i = 0; i < ids.size() && i < best->objectives.size(); ++i)
    os << "  error[" << ids[i] << "]: " << fmt_double(best->objectives.values[i]) << "\n";
  os << "  average error: " << fmt_double(best->objectives.mean()) << "\n";
  os << "  removed layers: " << removed_layers_str(best->config) << "\n";
  os << "  config: " << to_json(best->config).dump() << "\n";
  return os.str();
}

}  // namespace

// ---------------------------------------------------------------- zoo config

ZooConfig default_zoo_config() {
  ZooConfig cfg;
  cfg.seed = 1;
  cfg.shape = ModelShape{8, 32, 8, 4};
  const std::pair<const char*, Generator> kinds[] = {{"blobs", Generator::kGaussianBlobs},
                                                     {"xor", Generator::kXorBands},
                                                     {"modsum", Generator::kModularSum}};
  std::uint64_t seed = 11;
  for (const auto& [id, gen] : kinds) {
    TaskSpec t;
    t.task_id = id;
    t.generator = gen;
    t.seed = seed++;
    t.num_classes = cfg.shape.num_classes;
    t.input_dim = cfg.shape.input_dim;
    t.train_size = 2000;
    t.calib_size = 1000;
    t.test_size = 1000;
    cfg.tasks.push_back(t);
  }
  cfg.base = TrainHyper{2000, 0.05, 16};
  cfg.finetune = TrainHyper{300, 0.01, 16};
  return cfg;
}

json to_json(const TaskSpec& spec) {
  return {{"task_id", spec.task_id},         {"generator", to_string(spec.generator)},
          {"seed", spec.seed},               {"num_classes", spec.num_classes},
          {"input_dim", spec.input_dim},     {"train_size", spec.train_size},
          {"calib_size", spec.calib_size},   {"test_size", spec.test_size}};
}

TaskSpec task_spec_from_json(const json& doc) {
  const std::string what = "task";
  require_object(doc, what);
  TaskSpec t;
  t.task_id = field<std::string>(doc, "task_id", what);
  t.generator = parse_generator(field<std::string>(doc, "generator", what));
  t.seed = field_or<std::uint64_t>(doc, "seed", 0, what);
  t.num_classes = field_or(doc, "num_classes", t.num_classes, what);
  t.input_dim = field_or(doc, "input_dim", t.input_dim, what);
  t.train_size = field_or<std::size_t>(doc, "train_size", 2000, what);
  t.calib_size = field_or<std::size_t>(doc, "calib_size", 1000, what);
  t.test_size = field_or<std::size_t>(doc, "test_size", 1000, what);
  if (t.task_id.empty()) throw ConfigError("task: task_id must not be empty");
  return t;
}

ZooConfig zoo_config_from_json(const json& doc) {
  const std::string what = "zoo";
  require_object(doc, what);
  ZooConfig cfg = default_zoo_config();
  cfg.seed = field_or(doc, "seed", cfg.seed, what);
  if (doc.contains("output_dir")) cfg.output_dir = field<std::string>(doc, "output_dir", what);
  if (doc.contains("shape")) cfg.shape = shape_from_json(doc.at("shape"), "zoo.shape");
  if (doc.contains("base")) cfg.base = hyper_from_json(doc.at("base"), cfg.base, "zoo.base");
  if (doc.contains("finetune"))
    cfg.finetune = hyper_from_json(doc.at("finetune"), cfg.finetune, "zoo.finetune");
  if (doc.contains("tasks")) {
    const json& tasks = doc.at("tasks");
    if (!tasks.is_array() || tasks.empty()) throw ParseError("zoo: field 'tasks' must be a non-empty array");
    cfg.tasks.clear();
    for (const auto& t : tasks) cfg.tasks.push_back(task_spec_from_json(t));
  }
  for (const auto& t : cfg.tasks) {
    if (t.num_classes != cfg.shape.num_classes || t.input_dim != cfg.shape.input_dim)
      throw ConfigError("zoo: task '" + t.task_id + "' disagrees with the model shape");
    if (std::count_if(cfg.tasks.begin(), cfg.tasks.end(),
                      [&](const TaskSpec& o) { return o.task_id == t.task_id; }) > 1)
      throw ConfigError("zoo: duplicate task_id '" + t.task_id + "'");
  }
  return cfg;
}

json to_json(const ZooConfig& cfg) {
  json tasks = json::array();
  for (const auto& t : cfg.tasks) tasks.push_back(to_json(t));
  return {{"seed", cfg.seed},
          {"output_dir", cfg.output_dir.string()},
          {"shape", to_json(cfg.shape)},
          {"base", to_json(cfg.base)},
          {"finetune", to_json(cfg.finetune)},
          {"tasks", tasks}};
}

// -------------------------------------------------------------------- family

Family build_family(const ZooConfig& cfg) {
  Family family;
  family.tasks = cfg.tasks;
  family.base = train_base(cfg.tasks, cfg.shape, cfg.base, cfg.seed);
  for (std::size_t t = 0; t < cfg.tasks.size(); ++t)
    family.variants.push_back(
        finetune_variant(family.base, cfg.tasks[t], cfg.finetune, variant_seed(cfg.seed, t)));
  return family;
}

fs::path write_family(const Family& family, const ZooConfig& cfg) {
  make_dirs(cfg.output_dir);
  std::vector<LabeledDataset> calib;
  for (const auto& t : family.tasks) calib.push_back(make_task_datasets(t).calib);

  json models = json::array();
  json errors = json::object();
  auto add_model = [&](const LayeredModel& model, const std::string& role, const std::string& task_id,
                       std::uint64_t seed) {
    const std::string file = model.label + ".json";
    save_checkpoint(model, cfg.output_dir / file);
    json entry = {{"label", model.label}, {"role", role}, {"path", file}, {"seed", seed}};
    if (!task_id.empty()) entry["task_id"] = task_id;
    models.push_back(entry);
    json row = json::object();
    for (std::size_t t = 0; t < family.tasks.size(); ++t)
      row[family.tasks[t].task_id] = error_rate(model, calib[t]);
    errors[model.label] = row;
  };
  add_model(family.base, "base", "", cfg.seed);
  for (std::size_t t = 0; t < family.variants.size(); ++t)
    add_model(family.variants[t], "variant", family.tasks[t].task_id, variant_seed(cfg.seed, t));

  json tasks = json::array();
  for (const auto& t : family.tasks) tasks.push_back(to_json(t));
  json manifest = {{"format_version", kManifestVersion},
                   {"seed", cfg.seed},
                   {"shape", to_json(family.base.shape())},
                   {"base_train", to_json(cfg.base)},
                   {"finetune", to_json(cfg.finetune)},
                   {"tasks", tasks},
                   {"models", models},
                   {"calibration_error", errors}};
  const fs::path path = cfg.output_dir / "manifest.json";
  write_text_file(path, manifest.dump(2) + "\n");
  return path;
}

Family load_family(const fs::path& manifest_path) {
  const json doc = read_json_file(manifest_path);
  const std::string what = "manifest";
  require_object(doc, what);
  if (field<int>(doc, "format_version", what) != kManifestVersion)
    throw ParseError("manifest: unsupported format_version");
  const ModelShape shape = shape_from_json(doc.at("shape"), "manifest.shape");
  Family family;
  const json& tasks = doc.contains("tasks") ? doc.at("tasks") : json();
  if (!tasks.is_array()) throw ParseError("manifest: field 'tasks' must be an array");
  for (const auto& t : tasks) family.tasks.push_back(task_spec_from_json(t));
  const json& models = doc.contains("models") ? doc.at("models") : json();
  if (!models.is_array()) throw ParseError("manifest: field 'models' must be an array");

  const fs::path dir = manifest_path.parent_path();
  auto load = [&](const json& entry) {
    const fs::path rel = field<std::string>(entry, "path", "manifest.models[]");
    LayeredModel m = load_checkpoint(rel.is_absolute() ? rel : dir / rel);
    if (m.shape() != shape)
      throw IntegrityError("manifest: checkpoint " + rel.string() + " has " +
                           std::to_string(m.num_layers()) + " layers / dims that disagree with the manifest shape");
    return m;
  };
  bool have_base = false;
  std::vector<std::optional<LayeredModel>> variants(family.tasks.size());
  for (const auto& entry : models) {
    const std::string role = field<std::string>(entry, "role", "manifest.models[]");
    if (role == "base") {
      family.base = load(entry);
      have_base = true;
    } else if (role == "variant") {
      const std::string id = field<std::string>(entry, "task_id", "manifest.models[]");
      auto it = std::find_if(family.tasks.begin(), family.tasks.end(),
                             [&](const TaskSpec& t) { return t.task_id == id; });
      if (it == family.tasks.end()) throw IntegrityError("manifest: variant for unknown task '" + id + "'");
      variants[static_cast<std::size_t>(it - family.tasks.begin())] = load(entry);
    } else {
      throw ParseError("manifest: unknown model role '" + role + "'");
    }
  }
  if (!have_base) throw IntegrityError("manifest: no base model");
  for (std::size_t t = 0; t < variants.size(); ++t) {
    if (!variants[t]) throw IntegrityError("manifest: no variant for task '" + family.tasks[t].task_id + "'");
    family.variants.push_back(std::move(*variants[t]));
  }
  return family;
}

std::vector<std::string> task_ids(const Family& family) {
  std::vector<std::string> ids;
  for (const auto& t : family.tasks) ids.push_back(t.task_id);
  return ids;
}

double pruned_parameter_fraction(const LayeredModel& base, const LayeredModel& pruned) {
  const double total = static_cast<double>(base.parameter_count());
  return 1.0 - static_cast<double>(pruned.parameter_count()) / total;
}

// ---------------------------------------------------------------- run config

RunConfig run_config_from_json(const json& doc) {
  const std::string what = "run";
  require_object(doc, what);
  RunConfig cfg;
  if (doc.contains("manifest")) cfg.manifest = field<std::string>(doc, "manifest", what);
  if (doc.contains("output_dir")) cfg.output_dir = field<std::string>(doc, "output_dir", what);
  cfg.threads = field_or(doc, "threads", cfg.threads, what);
  cfg.search.seed = field_or(doc, "seed", cfg.search.seed, what);
  if (doc.contains("space")) {
    cfg.space_doc = doc.at("space");
    require_object(cfg.space_doc, "run.space");
  }

  SearchConfig& s = cfg.search;
  if (doc.contains("search")) {
    const json& d = doc.at("search");
    const std::string w = "run.search";
    require_object(d, w);
    s.b_min = field_or(d, "b_min", s.b_min, w);
    s.b_max = field_or(d, "b_max", s.b_max, w);
    s.eta = field_or(d, "eta", s.eta, w);
    s.T_max = field_or(d, "T_max", s.T_max, w);
    s.alpha = field_or(d, "alpha", s.alpha, w);
    s.lattice_q = field_or(d, "lattice_q", s.lattice_q, w);
    if (d.contains("lambda_policy"))
      s.lambda_policy = parse_lambda_policy(field<std::string>(d, "lambda_policy", w));
    s.fixed_lambda = field_or(d, "fixed_lambda", s.fixed_lambda, w);
    if (!s.fixed_lambda.empty()) LambdaWeights::from_values(s.fixed_lambda);
  }
  if (doc.contains("surrogate")) {
    const json& d = doc.at("surrogate");
    const std::string w = "run.surrogate";
    require_object(d, w);
    ProposalParams& p = s.surrogate;
    p.n_min_fit = field_or(d, "n_min_fit", p.n_min_fit, w);
    p.pool_min = field_or(d, "pool_min", p.pool_min, w);
    p.pool_per_n = field_or(d, "pool_per_n", p.pool_per_n, w);
    p.rho = field_or(d, "rho", p.rho, w);
    p.forest.num_trees = field_or(d, "num_trees", p.forest.num_trees, w);
    p.forest.max_depth = field_or(d, "max_depth", p.forest.max_depth, w);
    p.forest.min_leaf = field_or(d, "min_leaf", p.forest.min_leaf, w);
    p.forest.max_features = field_or(d, "max_features", p.forest.max_features, w);
    p.forest.bootstrap = field_or(d, "bootstrap", p.forest.bootstrap, w);
    if (!(p.rho >= 0.0 && p.rho <= 1.0)) throw ConfigError("run.surrogate: rho must lie in [0, 1]");
  }
  if (doc.contains("suite")) {
    const json& d = doc.at("suite");
    if (!d.is_array()) throw ParseError("run: field 'suite' must be an array");
    for (const auto& e : d) {
      const std::string w = "run.suite[]";
      SuiteTaskConfig t;
      t.task_id = field<std::string>(e, "task_id", w);
      t.max_budget = field_or(e, "max_budget", s.b_max, w);
      t.shuffle_seed = field_or<std::uint64_t>(e, "shuffle_seed", 0, w);
      if (e.contains("rung_budgets")) {
        const json& rb = e.at("rung_budgets");
        if (!rb.is_object()) throw ParseError("run.suite[].rung_budgets: expected an object");
        for (const auto& [key, value] : rb.items()) {
          try {
            t.rung_budgets[std::stoull(key)] = value.get<std::size_t>();
          } catch (const std::exception&) {
            throw ParseError("run.suite[].rung_budgets: bad entry '" + key + "'");
          }
        }
      }
      cfg.suite.push_back(std::move(t));
    }
  }
  return cfg;
}

json to_json(const RunConfig& cfg) {
  const SearchConfig& s = cfg.search;
  json suite = json::array();
  for (const auto& t : cfg.suite) {
    json rb = json::object();
    for (const auto& [k, v] : t.rung_budgets) rb[std::to_string(k)] = v;
    suite.push_back({{"task_id", t.task_id},
                     {"max_budget", t.max_budget},
                     {"shuffle_seed", t.shuffle_seed},
                     {"rung_budgets", rb}});
  }
  const auto& p = s.surrogate;
  return {{"manifest", cfg.manifest.string()},
          {"output_dir", cfg.output_dir.string()},
          {"seed", s.seed},
          {"threads", cfg.threads},
          {"space", s.space.l > 0 ? to_json(s.space) : cfg.space_doc},
          {"search",
           {{"b_min", s.b_min},
            {"b_max", s.b_max},
            {"eta", s.eta},
            {"T_max", s.T_max},
            {"alpha", s.alpha},
            {"lattice_q", s.lattice_q},
            {"lambda_policy", to_string(s.lambda_policy)},
            {"fixed_lambda", s.fixed_lambda}}},
          {"surrogate",
           {{"n_min_fit", p.n_min_fit},
            {"pool_min", p.pool_min},
            {"pool_per_n", p.pool_per_n},
            {"rho", p.rho},
            {"num_trees", p.forest.num_trees},
            {"max_depth", p.forest.max_depth},
            {"min_leaf", p.forest.min_leaf},
            {"max_features", p.forest.max_features},
            {"bootstrap", p.forest.bootstrap}}},
          {"suite", suite}};
}

RunConfig load_run_config(const fs::path& path) { return run_config_from_json(read_json_file(path)); }

void bind_family(RunConfig& cfg, const Family& family) {
  json doc = cfg.space_doc.is_object() ? cfg.space_doc : json::object();
  if (!doc.contains("l")) doc["l"] = family.base.num_layers();
  if (!doc.contains("K")) doc["K"] = static_cast<int>(family.variants.size());
  if (!doc.contains("sparsity")) doc["sparsity"] = "0";
  cfg.search.space = space_spec_from_json(doc);
  if (cfg.search.space.l != family.base.num_layers() ||
      cfg.search.space.K != static_cast<int>(family.variants.size()))
    throw ConfigError("space: l=" + std::to_string(cfg.search.space.l) + ", K=" +
                      std::to_string(cfg.search.space.K) + " disagree with the family (" +
                      std::to_string(family.base.num_layers()) + " layers, " +
                      std::to_string(family.variants.size()) + " variants)");
  cfg.search.surrogate.forest.threads = cfg.threads;
}

void apply_overrides(RunConfig& cfg, const RunOverrides& o) {
  if (const char* env = std::getenv("LAYERSTITCH_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      cfg.search.seed = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("LAYERSTITCH_SEED is not an unsigned integer: '") + env + "'");
    }
  }
  if (o.seed) cfg.search.seed = *o.seed;
  if (o.T_max) cfg.search.T_max = *o.T_max;
  if (o.mode) cfg.space_doc["mode"] = to_string(parse_space_mode(*o.mode));
  if (o.sparsity) cfg.space_doc["sparsity"] = *o.sparsity;
  if (o.sparsity) cfg.space_doc.erase("remove_count");
  if (o.output_dir) cfg.output_dir = *o.output_dir;
  if (o.manifest) cfg.manifest = *o.manifest;
  if (o.threads) cfg.threads = std::max<std::size_t>(*o.threads, 1);
}

CalibrationSuite make_suite(const Family& family, const RunConfig& cfg) {
  CalibrationSuite suite;
  auto find_task = [&](const std::string& id) -> const TaskSpec& {
    for (const auto& t : family.tasks)
      if (t.task_id == id) return t;
    throw ConfigError("suite: unknown task '" + id + "'");
  };
  if (cfg.suite.empty()) {
    for (const auto& t : family.tasks)
      suite.tasks.push_back(make_calibration_task(t.task_id, make_task_datasets(t).calib,
                                                  cfg.search.b_max, default_shuffle_seed(t)));
    return suite;
  }
  if (cfg.suite.size() != family.tasks.size())
    throw ConfigError("suite: must list every family task exactly once");
  for (const auto& t : family.tasks) {
    auto it = std::find_if(cfg.suite.begin(), cfg.suite.end(),
                           [&](const SuiteTaskConfig& s) { return s.task_id == t.task_id; });
    if (it == cfg.suite.end()) throw ConfigError("suite: missing task '" + t.task_id + "'");
    const TaskSpec& spec = find_task(it->task_id);
    suite.tasks.push_back(make_calibration_task(spec.task_id, make_task_datasets(spec).calib,
                                                it->max_budget, it->shuffle_seed, it->rung_budgets));
  }
  return suite;
}

// ----------------------------------------------------------------- evaluator

StitchEvaluator::StitchEvaluator(const Family& family, const CalibrationSuite& suite,
                                 const SpaceSpec& space)
    : family_(family), suite_(suite), space_(space) {}

ObjectiveVector StitchEvaluator::evaluate(const Config& config, std::size_t budget) const {
  const LayeredModel model = assemble(config, space_, family_.base, family_.variants);
  return layerstitch::evaluate(model, suite_, budget);
}

std::optional<std::size_t> best_average_member(const ParetoFront& front) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < front.size(); ++i)
    if (!best || front.members[i].objectives.mean() < front.members[*best].objectives.mean()) best = i;
  return best;
}

double best_average_error(const ParetoFront& front) {
  const auto i = best_average_member(front);
  return i ? front.members[*i].objectives.mean() : std::numeric_limits<double>::infinity();
}

// -------------------------------------------------------------------- oracle

OracleResult run_oracle(const SpaceSpec& space, const Evaluator& evaluator, std::size_t budget,
                        std::span<const LambdaWeights> lambdas, double alpha, std::uint64_t cap) {
  OracleResult result;
  Enumerator it(space, cap);
  result.cardinality = it.cardinality();
  while (auto config = it.next()) {
    OracleRow row;
    row.config = *config;
    row.encoding = encode(*config, space);
    try {
      row.objectives = evaluator.evaluate(*config, budget);
    } catch (const ConfigError&) {
      row.feasible = false;
    }
    result.rows.push_back(std::move(row));
  }
  std::vector<ObjectiveVector> objs;
  std::vector<std::vector<double>> encs;
  std::vector<std::size_t> index;
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    if (!result.rows[i].feasible) continue;
    objs.push_back(result.rows[i].objectives);
    encs.push_back(result.rows[i].encoding);
    index.push_back(i);
  }
  for (auto k : non_dominated_indices(objs, encs)) result.front.push_back(index[k]);
  for (const auto& lambda : lambdas) {
    std::optional<OracleArgmin> best;
    for (auto i : index) {
      const double v = parego_scalarize(result.rows[i].objectives, lambda, alpha);
      if (!best || v < best->scalarized) best = OracleArgmin{lambda, v, i};
    }
    if (best) result.argmin.push_back(*best);
  }
  return result;
}

// --------------------------------------------------------------------- sweep

std::vector<SweepRow> sweep_ratios(const Family& family, const RunConfig& base_cfg,
                                   std::span<const double> ratios) {
  if (ratios.empty()) throw ConfigError("sweep: the ratio list is empty");
  for (double r : ratios)
    if (!(r >= 0.0 && r < 1.0)) throw ConfigError("sweep: ratio " + fmt_double(r) + " outside [0, 1)");
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    RunConfig cfg = base_cfg;
    cfg.space_doc["sparsity"] = ratios[i];
    cfg.space_doc.erase("remove_count");
    cfg.search.seed = base_cfg.search.seed ^ i;
    bind_family(cfg, family);
    const CalibrationSuite suite = make_suite(family, cfg);
    const StitchEvaluator evaluator(family, suite, cfg.search.space);
    RunOptions options;
    options.threads = cfg.threads;
    const SearchResult result = run_search(cfg.search, evaluator, options);
    SweepRow row;
    row.ratio = ratios[i];
    row.remove_count = cfg.search.space.remove_count;
    row.seed = cfg.search.seed;
    row.best_average_error = best_average_error(result.front);
    if (auto k = best_average_member(result.front)) row.best = result.front.members[*k];
    rows.push_back(std::move(row));
  }
  return rows;
}

// ------------------------------------------------------------------ commands

int cmd_zoo_build(const std::optional<fs::path>& config, const std::optional<fs::path>& output_dir,
                  const std::optional<std::uint64_t>& seed, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    ZooConfig cfg = config ? zoo_config_from_json(read_json_file(*config)) : default_zoo_config();
    if (output_dir) cfg.output_dir = *output_dir;
    if (seed) cfg.seed = *seed;
    const Family family = build_family(cfg);
    const fs::path manifest = write_family(family, cfg);
    const json doc = read_json_file(manifest);
    out << "wrote " << manifest.string() << " (" << doc.at("models").size() << " models)\n";
    out << "calibration error:\n";
    for (const auto& [label, row] : doc.at("calibration_error").items()) {
      out << "  " << std::left << std::setw(18) << label;
      for (const auto& [task, e] : row.items()) out << ' ' << task << '=' << fmt_double(e.get<double>(), 4);
      out << "\n";
    }
    return static_cast<int>(kExitOk);
  });
}

int cmd_search(const fs::path& run_config, const RunOverrides& overrides, bool resume,
               std::optional<std::size_t> halt_after, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    LoadedRun run = load_run(run_config, overrides);
    const RunConfig& cfg = run.cfg;
    check_search_config(cfg.search);
    make_dirs(cfg.output_dir);
    const fs::path journal_path = cfg.output_dir / "journal.jsonl";

    RunOptions options;
    options.threads = cfg.threads;
    options.halt_after = halt_after;
    if (resume) {
      if (!fs::exists(journal_path)) throw IoError("resume: no journal at " + journal_path.string());
      options.replay = read_journal(journal_path);
    }
    JournalWriter writer(journal_path, options.replay.size());
    options.on_trial = [&](const TrialRecord& rec) { writer.append(rec); };

    const StitchEvaluator evaluator(run.family, run.suite, cfg.search.space);
    const SearchResult result = run_search(cfg.search, evaluator, options);
    if (result.halted) {
      out << "halted after " << result.history.size() << " of " << cfg.search.T_max
          << " trials; continue with 'search resume'\n";
      return static_cast<int>(kExitRuntime);
    }
    const auto ids = task_ids(run.family);
    write_exports(result.history, cfg, ids);
    const std::string summary = format_summary(result.history, cfg, ids);
    write_text_file(cfg.output_dir / "summary.txt", summary);
    out << summary;
    return static_cast<int>(kExitOk);
  });
}

int cmd_oracle(const fs::path& run_config, const RunOverrides& overrides, std::uint64_t cap,
               std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    LoadedRun run = load_run(run_config, overrides);
    const RunConfig& cfg = run.cfg;
    const StitchEvaluator evaluator(run.family, run.suite, cfg.search.space);
    std::vector<LambdaWeights> lambdas;
    if (cfg.search.lambda_policy == LambdaPolicy::kFixed)
      lambdas.push_back(LambdaWeights::from_values(cfg.search.fixed_lambda));
    else
      lambdas = lambda_lattice(run.suite.num_tasks(), cfg.search.lattice_q);
    const OracleResult res =
        run_oracle(cfg.search.space, evaluator, cfg.search.b_max, lambdas, cfg.search.alpha, cap);

    json rows = json::array();
    for (std::size_t i = 0; i < res.rows.size(); ++i) {
      const auto& r = res.rows[i];
      json row = {{"index", i}, {"encoding", r.encoding}, {"config", to_json(r.config)},
                  {"status", r.feasible ? "ok" : "infeasible"}};
      row["objectives"] = r.feasible ? json(r.objectives.values) : json(nullptr);
      rows.push_back(row);
    }
    json argmin = json::array();
    for (const auto& a : res.argmin)
      argmin.push_back({{"lambda", a.lambda.values},
                        {"scalarized", a.scalarized},
                        {"index", a.row},
                        {"encoding", res.rows[a.row].encoding}});
    const json doc = {{"cardinality", res.cardinality.str()},
                      {"budget", cfg.search.b_max},
                      {"alpha", cfg.search.alpha},
                      {"space", to_json(cfg.search.space)},
                      {"rows", rows},
                      {"front", res.front},
                      {"argmin", argmin}};
    make_dirs(cfg.output_dir);
    write_text_file(cfg.output_dir / "oracle.json", doc.dump(2) + "\n");

    const auto ids = task_ids(run.family);
    std::ostringstream csv;
    csv << "index,status,on_front";
    for (const auto& id : ids) csv << ",error_" << id;
    csv << ",average\n";
    for (std::size_t i = 0; i < res.rows.size(); ++i) {
      const auto& r = res.rows[i];
      const bool on_front = std::find(res.front.begin(), res.front.end(), i) != res.front.end();
      csv << i << ',' << (r.feasible ? "ok" : "infeasible") << ',' << (on_front ? 1 : 0);
      for (std::size_t t = 0; t < ids.size(); ++t)
        csv << ',' << (r.feasible ? fmt_double(r.objectives.values[t]) : "");
      csv << ',' << (r.feasible ? fmt_double(r.objectives.mean()) : "") << "\n";
    }
    write_text_file(cfg.output_dir / "oracle.csv", csv.str());

    out << "cardinality: " << res.cardinality.str() << "\n";
    out << "rows: " << res.rows.size() << " (front " << res.front.size() << ")\n";
    for (const auto& a : res.argmin) {
      out << "argmin lambda=[";
      for (std::size_t i = 0; i < a.lambda.size(); ++i) out << (i ? ", " : "") << fmt_double(a.lambda.values[i], 3);
      out << "] scalarized=" << fmt_double(a.scalarized, 9) << " row=" << a.row << "\n";
    }
    return static_cast<int>(kExitOk);
  });
}

int cmd_eval(const fs::path& run_config, const fs::path& config_path, const RunOverrides& overrides,
             std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    LoadedRun run = load_run(run_config, overrides);
    const SpaceSpec& space = run.cfg.search.space;
    json doc = read_json_file(config_path);
    // Accept a bare config or a journal line / front member carrying one.
    if (doc.is_object() && doc.contains("config") && doc.at("config").is_object()) doc = doc.at("config");
    const Config config = config_from_json(doc);
    const auto violations = validate(config, space);
    if (!violations.empty()) {
      std::string msg = "invalid config:";
      for (const auto& v : violations) msg += "\n  " + v;
      throw ConfigError(msg);
    }
    const LayeredModel model = assemble(config, space, run.family.base, run.family.variants);
    const ObjectiveVector f = evaluate(model, run.suite, run.cfg.search.b_max);
    const auto ids = task_ids(run.family);
    for (std::size_t t = 0; t < ids.size(); ++t)
      out << "error[" << ids[t] << "]: " << fmt_double(f.values[t]) << "\n";
    out << "average error: " << fmt_double(f.mean()) << "\n";
    out << "layers removed: " << removed_count(config) << " of " << space.l << "\n";
    out << "parameter fraction removed: "
        << fmt_double(pruned_parameter_fraction(run.family.base, model)) << "\n";
    out << "objectives: " << json(f.values).dump() << "\n";
    return static_cast<int>(kExitOk);
  });
}

int cmd_pareto_export(const fs::path& run_config, const RunOverrides& overrides, std::ostream& out,
                      std::ostream& err) {
  return guarded(err, [&] {
    LoadedRun run = load_run(run_config, overrides);
    const fs::path journal_path = run.cfg.output_dir / "journal.jsonl";
    if (!fs::exists(journal_path)) throw IoError("no journal at " + journal_path.string());
    const auto history = read_journal(journal_path);
    const auto ids = task_ids(run.family);
    write_exports(history, run.cfg, ids);
    const std::string summary = format_summary(history, run.cfg, ids);
    write_text_file(run.cfg.output_dir / "summary.txt", summary);
    out << "front: " << front_from_history(history, run.cfg.search.b_max).size() << " members from "
        << history.size() << " trials\n";
    return static_cast<int>(kExitOk);
  });
}

int cmd_report_budgets(const fs::path& journal, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (!fs::exists(journal)) throw IoError("no journal at " + journal.string());
    const auto history = read_journal(journal);
    out << format_allocation(budget_allocation_report(history));
    out << "total   " << history.size() << "\n";
    return static_cast<int>(kExitOk);
  });
}

int cmd_sweep_ratio(const fs::path& run_config, const std::vector<double>& ratios,
                    const RunOverrides& overrides, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (ratios.empty()) throw ConfigError("sweep: the ratio list is empty");
    RunConfig cfg = load_run_config(run_config);
    apply_overrides(cfg, overrides);
    const Family family = load_family(cfg.manifest);
    const auto rows = sweep_ratios(family, cfg, ratios);

    std::ostringstream table, csv;
    table << std::left << std::setw(8) << "ratio" << std::setw(8) << "removed" << std::setw(14)
          << "best_avg_err" << "best_config\n";
    csv << "ratio,remove_count,seed,best_average_error,best_encoding\n";
    for (const auto& r : rows) {
      table << std::left << std::setw(8) << fmt_double(r.ratio, 3) << std::setw(8) << r.remove_count
            << std::setw(14) << fmt_double(r.best_average_error)
            << (r.best ? to_json(r.best->config).dump() : std::string("-")) << "\n";
      csv << fmt_double(r.ratio, 6) << ',' << r.remove_count << ',' << r.seed << ','
          << fmt_double(r.best_average_error, 9) << ',';
      if (r.best)
        for (std::size_t i = 0; i < r.best->encoding.size(); ++i)
          csv << (i ? " " : "") << r.best->encoding[i];
      csv << "\n";
    }
    make_dirs(cfg.output_dir);
    write_text_file(cfg.output_dir / "sweep.txt", table.str());
    write_text_file(cfg.output_dir / "sweep.csv", csv.str());
    out << table.str();
    return static_cast<int>(kExitOk);
  });
}

}  // namespace layerstitch
