// Command-line front end: run / resume / sample / decode / stats.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <gramevo/gramevo.hpp>

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace gramevo;

namespace {

// Exit codes: 0 success, 2 bad input (flags, config, grammar, dataset),
// 3 execution failure (missing/incompatible checkpoints, write errors).
struct CliError : std::runtime_error {
  int code;
  CliError(int c, const std::string& m) : std::runtime_error(m), code(c) {}
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw CliError(2, "cannot read file: " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw CliError(3, "cannot write file: " + p.string());
  out << text;
  if (!out) throw CliError(3, "failed writing file: " + p.string());
}

// ---------------------------------------------------------------------------
// Config file
// ---------------------------------------------------------------------------

struct DatasetSpec {
  std::string kind;  // "toy" or "csv"
  ToyKind toy = ToyKind::Rings;
  long long n = 0;
  double noise = 0.0;
  std::uint64_t seed = 0;
  std::string path;  // csv only, as written in the config
};

struct AppConfig {
  std::string task;  // "surrogate" or "dense-trainer"
  std::string grammar_ref;
  std::string structure_ref;
  EvolutionConfig engine;
  ordered_json target;  // surrogate only
  DatasetSpec dataset;  // dense-trainer only
  EvaluationBudget budget;
  std::string out_dir;  // optional
};

void check_keys(const ordered_json& obj, std::initializer_list<const char*> allowed,
                const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known) throw CliError(2, "config: unknown key '" + it.key() + "' in " + where);
  }
}

template <class T>
T field_or(const ordered_json& obj, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  return obj.at(key).get<T>();
}

std::string require_string(const ordered_json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key) || !obj.at(key).is_string())
    throw CliError(2, "config: " + where + " needs a string '" + std::string(key) + "'");
  return obj.at(key).get<std::string>();
}

AppConfig parse_app_config(const ordered_json& doc) {
  if (!doc.is_object()) throw CliError(2, "config: top level must be a JSON object");
  check_keys(doc,
             {"task", "grammar", "structure", "population_size", "generations", "tournament_size",
              "elite_fraction", "master_seed", "operators", "target", "dataset", "budget",
              "out_dir"},
             "top level");
  AppConfig cfg;
  try {
    cfg.task = require_string(doc, "task", "top level");
    if (cfg.task != "surrogate" && cfg.task != "dense-trainer")
      throw CliError(2, "config: task must be 'surrogate' or 'dense-trainer', got '" + cfg.task + "'");
    cfg.grammar_ref = require_string(doc, "grammar", "top level");
    cfg.structure_ref = require_string(doc, "structure", "top level");

    cfg.engine.population_size = field_or(doc, "population_size", 100);
    cfg.engine.generations = field_or(doc, "generations", 100);
    cfg.engine.tournament_size = field_or(doc, "tournament_size", 3);
    cfg.engine.elite_fraction = field_or(doc, "elite_fraction", 0.01);
    cfg.engine.master_seed = field_or<std::uint64_t>(doc, "master_seed", 0);

    if (doc.contains("operators")) {
      const ordered_json& ops = doc.at("operators");
      check_keys(ops,
                 {"crossover_rate", "mutation_rate", "bitmask_vs_onepoint",
                  "gaussian_sigma_fraction", "depth_limit"},
                 "operators");
      cfg.engine.operators.crossover_rate = field_or(ops, "crossover_rate", cfg.engine.operators.crossover_rate);
      cfg.engine.operators.mutation_rate = field_or(ops, "mutation_rate", cfg.engine.operators.mutation_rate);
      cfg.engine.operators.bitmask_vs_onepoint =
          field_or(ops, "bitmask_vs_onepoint", cfg.engine.operators.bitmask_vs_onepoint);
      cfg.engine.operators.gaussian_sigma_fraction =
          field_or(ops, "gaussian_sigma_fraction", cfg.engine.operators.gaussian_sigma_fraction);
      cfg.engine.operators.depth_limit = field_or(ops, "depth_limit", cfg.engine.operators.depth_limit);
    }

    if (cfg.task == "surrogate") {
      if (doc.contains("dataset") || doc.contains("budget"))
        throw CliError(2, "config: 'dataset'/'budget' do not apply to the surrogate task");
      if (!doc.contains("target") || !doc.at("target").is_object())
        throw CliError(2, "config: surrogate task needs a 'target' descriptor object");
      cfg.target = doc.at("target");
    } else {
      if (doc.contains("target"))
        throw CliError(2, "config: 'target' does not apply to the dense-trainer task");
      if (!doc.contains("dataset") || !doc.at("dataset").is_object())
        throw CliError(2, "config: dense-trainer task needs a 'dataset' object");
      const ordered_json& ds = doc.at("dataset");
      check_keys(ds, {"kind", "toy", "n", "noise", "seed", "path"}, "dataset");
      cfg.dataset.kind = require_string(ds, "kind", "dataset");
      if (cfg.dataset.kind == "toy") {
        std::string name = require_string(ds, "toy", "dataset");
        if (!parse_toy_kind(name, cfg.dataset.toy))
          throw CliError(2, "config: unknown toy dataset '" + name + "'");
        if (!ds.contains("n")) throw CliError(2, "config: toy dataset needs 'n'");
        cfg.dataset.n = ds.at("n").get<long long>();
        cfg.dataset.noise = field_or(ds, "noise", 0.1);
        cfg.dataset.seed = field_or<std::uint64_t>(ds, "seed", 0);
        if (ds.contains("path")) throw CliError(2, "config: 'path' does not apply to toy datasets");
      } else if (cfg.dataset.kind == "csv") {
        cfg.dataset.path = require_string(ds, "path", "dataset");
        for (const char* k : {"toy", "n", "noise", "seed"})
          if (ds.contains(k))
            throw CliError(2, std::string("config: '") + k + "' does not apply to csv datasets");
      } else {
        throw CliError(2, "config: dataset kind must be 'toy' or 'csv'");
      }
      if (doc.contains("budget")) {
        const ordered_json& b = doc.at("budget");
        check_keys(b, {"epochs", "batch_size", "learning_rate", "momentum"}, "budget");
        cfg.budget.epochs = field_or(b, "epochs", cfg.budget.epochs);
        cfg.budget.batch_size = field_or(b, "batch_size", cfg.budget.batch_size);
        cfg.budget.learning_rate = field_or(b, "learning_rate", cfg.budget.learning_rate);
        cfg.budget.momentum = field_or(b, "momentum", cfg.budget.momentum);
      }
    }
    cfg.out_dir = field_or<std::string>(doc, "out_dir", "");
  } catch (const nlohmann::json::exception& e) {
    throw CliError(2, std::string("config: ") + e.what());
  }
  return cfg;
}

// Canonical form written into the run directory: every semantic field is
// materialized (defaults included), file references are basenames, out_dir is
// dropped because the run directory itself is the output location.
ordered_json canonical_config(const AppConfig& cfg, const std::string& grammar_name,
                              const std::string& structure_name, const std::string& dataset_name) {
  ordered_json j;
  j["task"] = cfg.task;
  j["grammar"] = grammar_name;
  j["structure"] = structure_name;
  j["population_size"] = cfg.engine.population_size;
  j["generations"] = cfg.engine.generations;
  j["tournament_size"] = cfg.engine.tournament_size;
  j["elite_fraction"] = cfg.engine.elite_fraction;
  j["master_seed"] = cfg.engine.master_seed;
  ordered_json ops;
  ops["crossover_rate"] = cfg.engine.operators.crossover_rate;
  ops["mutation_rate"] = cfg.engine.operators.mutation_rate;
  ops["bitmask_vs_onepoint"] = cfg.engine.operators.bitmask_vs_onepoint;
  ops["gaussian_sigma_fraction"] = cfg.engine.operators.gaussian_sigma_fraction;
  ops["depth_limit"] = cfg.engine.operators.depth_limit;
  j["operators"] = std::move(ops);
  if (cfg.task == "surrogate") {
    j["target"] = cfg.target;
  } else {
    ordered_json ds;
    ds["kind"] = cfg.dataset.kind;
    if (cfg.dataset.kind == "toy") {
      ds["toy"] = toy_kind_name(cfg.dataset.toy);
      ds["n"] = cfg.dataset.n;
      ds["noise"] = cfg.dataset.noise;
      ds["seed"] = cfg.dataset.seed;
    } else {
      ds["path"] = dataset_name;
    }
    j["dataset"] = std::move(ds);
    ordered_json b;
    b["epochs"] = cfg.budget.epochs;
    b["batch_size"] = cfg.budget.batch_size;
    b["learning_rate"] = cfg.budget.learning_rate;
    b["momentum"] = cfg.budget.momentum;
    j["budget"] = std::move(b);
  }
  return j;
}

// The run identity: canonical config minus file references, plus the
// referenced file contents. Moving a run directory around does not change it.
std::uint64_t compute_config_hash(ordered_json canonical, const std::string& grammar_text,
                                  const std::string& structure_text,
                                  const std::string& dataset_text) {
  canonical.erase("grammar");
  canonical.erase("structure");
  if (canonical.contains("dataset") && canonical["dataset"].contains("path"))
    canonical["dataset"].erase("path");
  std::string blob = canonical.dump(2);
  blob += '\0';
  blob += grammar_text;
  blob += '\0';
  blob += structure_text;
  blob += '\0';
  blob += dataset_text;
  return fnv1a64(blob);
}

// ---------------------------------------------------------------------------
// Run setup
// ---------------------------------------------------------------------------

struct LoadedRun {
  AppConfig cfg;
  std::string grammar_text, structure_text, dataset_text;
  std::string grammar_name, structure_name, dataset_name;
  Grammar grammar;
  GaStructure structure;
  std::unique_ptr<FitnessEvaluator> evaluator;
  ordered_json canonical;
};

Grammar parse_grammar_checked(const std::string& text, const std::string& name) {
  try {
    return parse_grammar(text);
  } catch (const GrammarError& e) {
    throw CliError(2, name + ": " + e.what());
  }
}

GaStructure parse_structure_checked(const Grammar& g, const std::string& text,
                                    const std::string& name) {
  GaStructure s;
  try {
    s = parse_structure(text);
  } catch (const GrammarError& e) {
    throw CliError(2, name + ": " + e.what());
  }
  std::vector<StructureIssue> issues = validate_structure(g, s);
  if (!issues.empty()) {
    std::string msg = name + ":";
    for (const auto& issue : issues) msg += "\n  " + issue.message;
    throw CliError(2, msg);
  }
  return s;
}

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> generations;
};

LoadedRun load_run(const fs::path& config_path, const Overrides& overrides) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(read_file(config_path));
  } catch (const nlohmann::json::exception& e) {
    throw CliError(2, config_path.string() + ": " + e.what());
  }
  LoadedRun run;
  run.cfg = parse_app_config(doc);
  if (overrides.seed) run.cfg.engine.master_seed = *overrides.seed;
  if (overrides.generations) run.cfg.engine.generations = *overrides.generations;

  const fs::path base = config_path.parent_path();
  const fs::path grammar_path = base / fs::path(run.cfg.grammar_ref);
  const fs::path structure_path = base / fs::path(run.cfg.structure_ref);
  run.grammar_text = read_file(grammar_path);
  run.structure_text = read_file(structure_path);
  run.grammar_name = grammar_path.filename().string();
  run.structure_name = structure_path.filename().string();

  run.grammar = parse_grammar_checked(run.grammar_text, run.grammar_name);
  run.structure = parse_structure_checked(run.grammar, run.structure_text, run.structure_name);

  try {
    validate_config(run.cfg.engine);
  } catch (const std::invalid_argument& e) {
    throw CliError(2, e.what());
  }

  if (run.cfg.task == "surrogate") {
    try {
      run.evaluator = std::make_unique<SurrogateEvaluator>(descriptor_from_json(run.cfg.target));
    } catch (const PhenotypeError& e) {
      throw CliError(2, std::string("config: target descriptor: ") + e.what());
    }
  } else {
    DatasetSplit split;
    try {
      if (run.cfg.dataset.kind == "toy") {
        split = make_toy_dataset(run.cfg.dataset.toy, static_cast<std::size_t>(run.cfg.dataset.n),
                                 run.cfg.dataset.noise, run.cfg.dataset.seed);
      } else {
        const fs::path csv_path = base / fs::path(run.cfg.dataset.path);
        run.dataset_text = read_file(csv_path);
        run.dataset_name = csv_path.filename().string();
        split = load_csv_dataset_text(run.dataset_text);
      }
    } catch (const DatasetError& e) {
      throw CliError(2, std::string("dataset: ") + e.what());
    } catch (const std::invalid_argument& e) {
      throw CliError(2, std::string("dataset: ") + e.what());
    }
    run.evaluator = std::make_unique<DenseTrainerEvaluator>(std::move(split), run.cfg.budget);
  }

  run.canonical = canonical_config(run.cfg, run.grammar_name, run.structure_name, run.dataset_name);
  run.cfg.engine.config_hash =
      compute_config_hash(run.canonical, run.grammar_text, run.structure_text, run.dataset_text);

  // The run directory keeps flat copies of all inputs; names must not clash.
  std::vector<std::string> names = {run.grammar_name, run.structure_name};
  if (!run.dataset_name.empty()) names.push_back(run.dataset_name);
  for (const char* reserved :
       {"config.json", "stats.csv", "checkpoints", "best_descriptor.txt", "best_descriptor.json"})
    names.push_back(reserved);
  std::sort(names.begin(), names.end());
  for (std::size_t i = 1; i < names.size(); ++i)
    if (names[i] == names[i - 1])
      throw CliError(2, "config: input file name '" + names[i] + "' clashes inside the run directory");
  return run;
}

// ---------------------------------------------------------------------------
// Driving a run
// ---------------------------------------------------------------------------

int finish_run(EngineState& state, const LoadedRun& run, const fs::path& dir, bool paused) {
  if (paused || state.generation < state.config.generations) {
    std::cout << "paused at generation " << state.generation << " (of "
              << state.config.generations << "); resume with: gramevo resume --dir " << dir.string()
              << "\n";
    return 0;
  }
  if (!state.best) throw CliError(3, "run finished without a best individual");
  NetworkDescriptor nd = decode_individual(run.grammar, *state.best);
  write_file(dir / "best_descriptor.txt", render(nd));
  write_file(dir / "best_descriptor.json", export_json(nd).dump(2) + "\n");
  std::cout << "run complete: generation " << state.generation << ", best fitness "
            << format_double(state.best->fitness.value_or(0.0)) << " (individual "
            << state.best->id << ")\n";
  return 0;
}

RunHooks make_hooks(std::ofstream& stats_out, const fs::path& dir, int stop_after, bool& paused) {
  RunHooks hooks;
  hooks.after_generation = [&stats_out, dir, stop_after, &paused](const EngineState& state,
                                                                  const GenerationStats& st) {
    stats_out << stats_csv_row(st) << '\n';
    stats_out.flush();
    checkpoint_save(state, dir / "checkpoints" / ("gen_" + std::to_string(st.generation) + ".json"));
    if (stop_after >= 0 && state.generation >= stop_after) {
      paused = true;
      return false;
    }
    return true;
  };
  return hooks;
}

int cmd_run(const fs::path& config_path, const Overrides& overrides, std::optional<int> jobs,
            const std::string& out_flag, int stop_after) {
  LoadedRun run = load_run(config_path, overrides);
  if (jobs) run.cfg.engine.jobs = *jobs;

  std::string out = !out_flag.empty() ? out_flag : run.cfg.out_dir;
  if (out.empty())
    throw CliError(2, "no output directory: pass --out or set out_dir in the config");
  fs::path dir(out);
  if (fs::exists(dir) && (fs::exists(dir / "config.json") || !fs::is_empty(dir)))
    throw CliError(2, "output directory " + dir.string() +
                          " already exists and is not empty; resume it or pick another --out");

  fs::create_directories(dir / "checkpoints");
  write_file(dir / "config.json", run.canonical.dump(2) + "\n");
  write_file(dir / run.grammar_name, run.grammar_text);
  write_file(dir / run.structure_name, run.structure_text);
  if (!run.dataset_name.empty()) write_file(dir / run.dataset_name, run.dataset_text);
  write_file(dir / "stats.csv", stats_csv_header() + "\n");

  std::ofstream stats_out(dir / "stats.csv", std::ios::app | std::ios::binary);
  if (!stats_out) throw CliError(3, "cannot append to stats.csv");
  bool paused = false;
  RunHooks hooks = make_hooks(stats_out, dir, stop_after, paused);
  EngineState state = evolve(run.cfg.engine, run.grammar, run.structure, *run.evaluator, hooks);
  return finish_run(state, run, dir, paused);
}

int cmd_resume(const fs::path& dir, std::optional<int> jobs, std::optional<int> generations,
               int stop_after) {
  if (!fs::exists(dir / "config.json"))
    throw CliError(2, dir.string() + " is not a run directory (no config.json)");
  LoadedRun run = load_run(dir / "config.json", {});
  if (jobs) run.cfg.engine.jobs = *jobs;
  if (generations) run.cfg.engine.generations = *generations;

  std::optional<fs::path> latest = find_latest_checkpoint(dir / "checkpoints");
  if (!latest) throw CliError(3, "no checkpoint found under " + (dir / "checkpoints").string());
  EngineState state;
  try {
    state = checkpoint_load(*latest, run.cfg.engine);
  } catch (const ConfigMismatch& e) {
    throw CliError(3, e.what());
  } catch (const std::runtime_error& e) {
    throw CliError(3, e.what());
  }

  // Rebuild stats.csv from the checkpoint history so the file is byte-exact
  // however the previous process stopped, then append as generations finish.
  std::string text = stats_csv_header() + "\n";
  for (const auto& st : state.stats) text += stats_csv_row(st) + "\n";
  write_file(dir / "stats.csv", text);

  std::ofstream stats_out(dir / "stats.csv", std::ios::app | std::ios::binary);
  if (!stats_out) throw CliError(3, "cannot append to stats.csv");
  bool paused = false;
  RunHooks hooks = make_hooks(stats_out, dir, stop_after, paused);
  evolve_from(state, run.grammar, run.structure, *run.evaluator, hooks);
  return finish_run(state, run, dir, paused);
}

// ---------------------------------------------------------------------------
// sample / decode / stats
// ---------------------------------------------------------------------------

SpatialShape parse_input_shape(const std::string& text) {
  std::vector<std::string_view> parts = split(text, ',');
  long long dims[3] = {0, 0, 0};
  if (parts.size() != 3 || !parse_long(trim(parts[0]), dims[0]) ||
      !parse_long(trim(parts[1]), dims[1]) || !parse_long(trim(parts[2]), dims[2]))
    throw CliError(2, "--input-shape must be H,W,C (e.g. 32,32,3)");
  return SpatialShape{dims[0], dims[1], dims[2]};
}

std::string shape_to_string(const LayerShape& shape) {
  if (const auto* sp = std::get_if<SpatialShape>(&shape))
    return format_int(sp->h) + "x" + format_int(sp->w) + "x" + format_int(sp->c);
  return format_int(std::get<UnitsShape>(shape).units) + " units";
}

int cmd_sample(const std::string& grammar_path, const std::string& structure_path,
               std::uint64_t seed, int count, bool as_json) {
  if (count < 1) throw CliError(2, "--count must be >= 1");
  std::string grammar_text = read_file(grammar_path);
  Grammar g = parse_grammar_checked(grammar_text, grammar_path);
  GaStructure s = parse_structure_checked(g, read_file(structure_path), structure_path);

  ordered_json all = ordered_json::array();
  for (int i = 0; i < count; ++i) {
    RandomStream rng = RandomStream::derive(seed, "init", static_cast<std::uint64_t>(i));
    Individual ind = random_individual(g, s, rng);
    ind.id = static_cast<std::uint64_t>(i);
    if (as_json) {
      all.push_back(individual_to_json(ind));
    } else {
      if (i > 0) std::cout << "---\n";
      std::cout << render(decode_individual(g, ind));
    }
  }
  if (as_json) std::cout << all.dump(2) << "\n";
  return 0;
}

int cmd_decode(const std::string& grammar_path, const std::string& structure_path,
               const std::string& genotype_path, std::uint64_t seed,
               const std::string& input_shape_text, bool as_json) {
  std::string grammar_text = read_file(grammar_path);
  Grammar g = parse_grammar_checked(grammar_text, grammar_path);
  GaStructure s = parse_structure_checked(g, read_file(structure_path), structure_path);
  SpatialShape input = parse_input_shape(input_shape_text);

  std::vector<Individual> individuals;
  if (!genotype_path.empty()) {
    ordered_json doc;
    try {
      doc = ordered_json::parse(read_file(genotype_path));
      if (doc.is_array())
        for (const auto& ij : doc) individuals.push_back(individual_from_json(ij));
      else
        individuals.push_back(individual_from_json(doc));
    } catch (const nlohmann::json::exception& e) {
      throw CliError(2, genotype_path + ": " + e.what());
    } catch (const GenotypeError& e) {
      throw CliError(2, genotype_path + ": " + e.what());
    }
    for (const Individual& ind : individuals) {
      try {
        audit_individual(g, s, ind);
      } catch (const GenotypeError& e) {
        throw CliError(2, genotype_path + ": individual " + format_int(static_cast<long long>(ind.id)) +
                              ": " + e.what());
      }
    }
  } else {
    RandomStream rng = RandomStream::derive(seed, "init", 0);
    individuals.push_back(random_individual(g, s, rng));
  }

  bool first = true;
  for (const Individual& ind : individuals) {
    if (!first) std::cout << "---\n";
    first = false;
    NetworkDescriptor nd = decode_individual(g, ind);
    if (as_json) {
      std::cout << export_json(nd).dump(2) << "\n";
    } else {
      std::cout << render(nd);
    }
    // Shape propagation is advisory: grammars that do not materialize the
    // spatial attributes simply get no verdict.
    try {
      ShapeReport report = check_shapes(nd, input);
      for (std::size_t i = 0; i < report.per_layer_shapes.size(); ++i)
        std::cout << "# shape after layer " << i << ": "
                  << shape_to_string(report.per_layer_shapes[i]) << "\n";
      if (report.valid) {
        std::cout << "# shapes: valid for input " << format_int(input.h) << "x"
                  << format_int(input.w) << "x" << format_int(input.c) << "\n";
      } else {
        std::cout << "# shapes: invalid at layer " << report.failure->layer_index << ": "
                  << report.failure->reason << "\n";
      }
    } catch (const PhenotypeError& e) {
      std::cout << "# shapes: not checkable: " << e.what() << "\n";
    }
  }
  return 0;
}

std::vector<GenerationStats> read_stats_file(const fs::path& run_dir) {
  try {
    return parse_stats_csv(read_file(run_dir / "stats.csv"));
  } catch (const StatsCsvError& e) {
    throw CliError(2, (run_dir / "stats.csv").string() + ": " + e.what());
  }
}

int cmd_stats(const std::string& run_dir, const std::vector<std::string>& correlate,
              std::optional<int> until) {
  if (!correlate.empty()) {
    std::vector<GenerationStats> a = read_stats_file(correlate[0]);
    std::vector<GenerationStats> b = read_stats_file(correlate[1]);
    std::size_t n = std::min(a.size(), b.size());
    if (until) {
      std::size_t limit = static_cast<std::size_t>(*until) + 1;  // generations 0..until
      n = std::min(n, limit);
    }
    if (n < 2) throw CliError(2, "correlate: need at least two overlapping generations");
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < n; ++i) {
      xs.push_back(a[i].best_fitness);
      ys.push_back(b[i].best_fitness);
    }
    double r = pearson(xs, ys);
    std::cout << "pearson(best_fitness, n=" << n << "): " << format_double(r) << "\n";
    return 0;
  }
  if (run_dir.empty()) throw CliError(2, "stats: pass --run DIR or --correlate A B");
  std::vector<GenerationStats> rows = read_stats_file(run_dir);
  if (rows.empty()) throw CliError(2, "stats: no data rows in stats.csv");
  const GenerationStats* best = &rows[0];
  for (const auto& st : rows)
    if (st.best_fitness > best->best_fitness) best = &st;
  const GenerationStats& last = rows.back();
  std::cout << "generations: " << format_int(last.generation) << " (" << rows.size() << " rows)\n";
  std::cout << "final best fitness: " << format_double(last.best_fitness) << " (individual "
            << format_int(static_cast<long long>(last.best_id)) << ")\n";
  std::cout << "overall best fitness: " << format_double(best->best_fitness) << " at generation "
            << format_int(best->generation) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grammar-driven neuroevolution of layered network architectures"};
  app.require_subcommand(1);

  // run
  auto* run_cmd = app.add_subcommand("run", "Start an evolutionary run from a config file");
  std::string run_config;
  std::string run_out;
  std::uint64_t run_seed = 0;
  int run_jobs = 0;
  int run_generations = 0;
  int run_stop_after = -1;
  run_cmd->add_option("--config", run_config, "Run configuration JSON")->required();
  auto* run_seed_opt = run_cmd->add_option("--seed", run_seed, "Override master_seed");
  auto* run_jobs_opt = run_cmd->add_option("--jobs", run_jobs, "Parallel evaluation threads");
  run_cmd->add_option("--out", run_out, "Output run directory (overrides config out_dir)");
  auto* run_gens_opt = run_cmd->add_option("--generations", run_generations, "Override generations");
  run_cmd->add_option("--stop-after", run_stop_after,
                      "Pause once this generation completes (resume later)");

  // resume
  auto* resume_cmd = app.add_subcommand("resume", "Continue a paused or interrupted run");
  std::string resume_dir;
  int resume_jobs = 0;
  int resume_generations = 0;
  int resume_stop_after = -1;
  resume_cmd->add_option("--dir", resume_dir, "Run directory")->required();
  auto* resume_jobs_opt = resume_cmd->add_option("--jobs", resume_jobs, "Parallel evaluation threads");
  auto* resume_gens_opt =
      resume_cmd->add_option("--generations", resume_generations, "Extend the run to this many generations");
  resume_cmd->add_option("--stop-after", resume_stop_after,
                         "Pause once this generation completes (resume later)");

  // sample
  auto* sample_cmd = app.add_subcommand("sample", "Sample random individuals from a grammar");
  std::string sample_grammar, sample_structure;
  std::uint64_t sample_seed = 0;
  int sample_count = 1;
  bool sample_json = false;
  sample_cmd->add_option("--grammar", sample_grammar, "Grammar file")->required();
  sample_cmd->add_option("--structure", sample_structure, "Module structure file")->required();
  sample_cmd->add_option("--seed", sample_seed, "Sampling seed");
  sample_cmd->add_option("--count", sample_count, "How many individuals");
  sample_cmd->add_flag("--json", sample_json, "Print genotype JSON instead of phenotypes");

  // decode
  auto* decode_cmd = app.add_subcommand("decode", "Decode a genotype into a network descriptor");
  std::string decode_grammar, decode_structure, decode_genotype;
  std::uint64_t decode_seed = 0;
  std::string decode_input_shape = "32,32,3";
  bool decode_json = false;
  decode_cmd->add_option("--grammar", decode_grammar, "Grammar file")->required();
  decode_cmd->add_option("--structure", decode_structure, "Module structure file")->required();
  decode_cmd->add_option("--genotype", decode_genotype,
                         "Genotype JSON (an individual or an array of them); samples one when omitted");
  decode_cmd->add_option("--seed", decode_seed, "Sampling seed when no --genotype is given");
  decode_cmd->add_option("--input-shape", decode_input_shape, "Input H,W,C for shape checking");
  decode_cmd->add_flag("--json", decode_json, "Print descriptor JSON instead of text");

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "Summarize or correlate run statistics");
  std::string stats_run;
  std::vector<std::string> stats_correlate;
  int stats_until = 0;
  stats_cmd->add_option("--run", stats_run, "Run directory");
  stats_cmd->add_option("--correlate", stats_correlate, "Two run directories to correlate")
      ->expected(2);
  auto* stats_until_opt =
      stats_cmd->add_option("--until", stats_until, "Correlate generations 0..N only");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run_cmd) {
      Overrides overrides;
      if (*run_seed_opt) overrides.seed = run_seed;
      if (*run_gens_opt) overrides.generations = run_generations;
      std::optional<int> jobs;
      if (*run_jobs_opt) jobs = run_jobs;
      return cmd_run(run_config, overrides, jobs, run_out, run_stop_after);
    }
    if (*resume_cmd) {
      std::optional<int> jobs, generations;
      if (*resume_jobs_opt) jobs = resume_jobs;
      if (*resume_gens_opt) generations = resume_generations;
      return cmd_resume(resume_dir, jobs, generations, resume_stop_after);
    }
    if (*sample_cmd) return cmd_sample(sample_grammar, sample_structure, sample_seed, sample_count, sample_json);
    if (*decode_cmd)
      return cmd_decode(decode_grammar, decode_structure, decode_genotype, decode_seed,
                        decode_input_shape, decode_json);
    if (*stats_cmd) {
      std::optional<int> until;
      if (*stats_until_opt) until = stats_until;
      return cmd_stats(stats_run, stats_correlate, until);
    }
  } catch (const CliError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code;
  } catch (const GrammarError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
