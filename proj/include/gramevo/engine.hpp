#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gramevo/evaluator.hpp"
#include "gramevo/format.hpp"
#include "gramevo/genotype.hpp"
#include "gramevo/grammar.hpp"
#include "gramevo/operators.hpp"
#include "gramevo/phenotype.hpp"
#include "gramevo/rng.hpp"

namespace gramevo {

// ---------------------------------------------------------------------------
// Evolutionary engine: generational replacement with elitism and tournament
// selection. Every random draw comes from a stream derived from the master
// seed plus a purpose label ("init" per founder, "breed" per generation and
// pair, "eval" per individual id), so results are independent of evaluation
// order and thread count, and a run resumed from a checkpoint replays the
// remaining generations bit for bit.
// ---------------------------------------------------------------------------

struct EvolutionConfig {
  int population_size = 100;
  int generations = 100;
  int tournament_size = 3;
  double elite_fraction = 0.01;
  OperatorConfig operators;
  std::uint64_t master_seed = 0;
  int jobs = 1;
  bool audit = false;  // verify genotype invariants on every fresh population
  std::uint64_t config_hash = 0;  // run identity, embedded in checkpoints
  friend bool operator==(const EvolutionConfig&, const EvolutionConfig&) = default;
};

inline void validate_config(const EvolutionConfig& cfg) {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
  if (cfg.population_size < 1) fail("population_size must be >= 1");
  if (cfg.generations < 0) fail("generations must be >= 0");
  if (cfg.tournament_size < 1) fail("tournament_size must be >= 1");
  if (cfg.elite_fraction < 0.0 || cfg.elite_fraction > 1.0) fail("elite_fraction must be in [0, 1]");
  if (cfg.jobs < 1) fail("jobs must be >= 1");
  if (cfg.operators.crossover_rate < 0.0 || cfg.operators.crossover_rate > 1.0)
    fail("crossover_rate must be in [0, 1]");
  if (cfg.operators.mutation_rate < 0.0 || cfg.operators.mutation_rate > 1.0)
    fail("mutation_rate must be in [0, 1]");
  if (cfg.operators.bitmask_vs_onepoint < 0.0 || cfg.operators.bitmask_vs_onepoint > 1.0)
    fail("bitmask_vs_onepoint must be in [0, 1]");
  if (cfg.operators.gaussian_sigma_fraction < 0.0) fail("gaussian_sigma_fraction must be >= 0");
  if (cfg.operators.depth_limit < 1) fail("depth_limit must be >= 1");
}

// ---------------------------------------------------------------------------
// Per-generation statistics
// ---------------------------------------------------------------------------

struct GenerationStats {
  int generation = 0;
  double best_fitness = 0.0;
  double mean_fitness = 0.0;
  int best_hidden_layers = 0;
  double mean_hidden_layers = 0.0;
  std::uint64_t best_id = 0;
  friend bool operator==(const GenerationStats&, const GenerationStats&) = default;
};

inline std::string stats_csv_header() {
  return "generation,best_fitness,mean_fitness,best_hidden_layers,mean_hidden_layers,best_id";
}

inline std::string stats_csv_row(const GenerationStats& st) {
  std::string row = format_int(st.generation);
  row += ',';
  row += format_double(st.best_fitness);
  row += ',';
  row += format_double(st.mean_fitness);
  row += ',';
  row += format_int(st.best_hidden_layers);
  row += ',';
  row += format_double(st.mean_hidden_layers);
  row += ',';
  row += format_int(static_cast<long long>(st.best_id));
  return row;
}

class StatsCsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::vector<GenerationStats> parse_stats_csv(const std::string& text) {
  std::vector<std::string_view> lines = split(text, '\n');
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty() || trim(lines.front()) != stats_csv_header())
    throw StatsCsvError("stats csv: missing or unexpected header");
  std::vector<GenerationStats> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::vector<std::string_view> fields = split(lines[i], ',');
    if (fields.size() != 6)
      throw StatsCsvError("stats csv: row " + std::to_string(i) + " has " +
                          std::to_string(fields.size()) + " fields, expected 6");
    GenerationStats st;
    long long generation = 0, hidden = 0, id = 0;
    bool ok = parse_long(fields[0], generation) && parse_double(fields[1], st.best_fitness) &&
              parse_double(fields[2], st.mean_fitness) && parse_long(fields[3], hidden) &&
              parse_double(fields[4], st.mean_hidden_layers) && parse_long(fields[5], id);
    if (!ok) throw StatsCsvError("stats csv: row " + std::to_string(i) + " is malformed");
    st.generation = static_cast<int>(generation);
    st.best_hidden_layers = static_cast<int>(hidden);
    st.best_id = static_cast<std::uint64_t>(id);
    out.push_back(st);
  }
  return out;
}

// Pearson correlation coefficient, two-pass. NaN when either series is
// constant (the coefficient is undefined there).
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: series lengths differ");
  if (x.size() < 2) throw std::invalid_argument("pearson: need at least two points");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(y.size());
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

// ---------------------------------------------------------------------------
// Engine state
// ---------------------------------------------------------------------------

struct EngineState {
  EvolutionConfig config;
  std::vector<Individual> population;
  int generation = 0;           // completed generations (0 = founders evaluated)
  std::uint64_t next_id = 0;
  std::optional<Individual> best;  // best-ever individual (strict improvement)
  std::vector<GenerationStats> stats;  // one row per completed generation, 0..generation
};

struct RunHooks {
  // Called after each generation's stats are recorded (including generation
  // 0). Return false to pause the run; the state is safe to checkpoint.
  std::function<bool(const EngineState&, const GenerationStats&)> after_generation;
};

// ---------------------------------------------------------------------------
// Selection
// ---------------------------------------------------------------------------

// Tournament of `k` draws with replacement; highest fitness wins, ties
// resolved uniformly among the tied draws.
inline std::size_t tournament_select(const std::vector<Individual>& population, int k,
                                     RandomStream& rng) {
  if (population.empty()) throw std::invalid_argument("tournament over an empty population");
  if (k < 1) throw std::invalid_argument("tournament size must be >= 1");
  constexpr double kUnset = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> draws(static_cast<std::size_t>(k));
  for (auto& d : draws) d = static_cast<std::size_t>(rng.uniform_index(population.size()));
  double best = kUnset;
  for (std::size_t d : draws) best = std::max(best, population[d].fitness.value_or(kUnset));
  std::vector<std::size_t> tied;
  for (std::size_t d : draws)
    if (population[d].fitness.value_or(kUnset) == best) tied.push_back(d);
  if (tied.size() == 1) return tied.front();
  return tied[rng.uniform_index(tied.size())];
}

namespace detail {

// ceil(fraction * pop) with a tiny slack so that e.g. 0.01 * 100 lands on 1
// even though 0.01 rounds up in binary.
inline std::size_t elite_count(double fraction, std::size_t pop) {
  double c = std::ceil(fraction * static_cast<double>(pop) - 1e-9);
  if (c <= 0.0) return 0;
  return std::min(static_cast<std::size_t>(c), pop);
}

// Indices of the top `e` individuals: fitness descending, id ascending.
inline std::vector<std::size_t> elite_indices(const std::vector<Individual>& population,
                                              std::size_t e) {
  std::vector<std::size_t> idx(population.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    double fa = population[a].fitness.value_or(0.0);
    double fb = population[b].fitness.value_or(0.0);
    if (fa != fb) return fa > fb;
    return population[a].id < population[b].id;
  });
  idx.resize(std::min(e, idx.size()));
  return idx;
}

}  // namespace detail

// Index of the population's best individual: highest fitness, lowest id on
// ties.
inline std::size_t best_index(const std::vector<Individual>& population) {
  if (population.empty()) throw std::invalid_argument("best_index over an empty population");
  std::size_t best = 0;
  for (std::size_t i = 1; i < population.size(); ++i) {
    double fi = population[i].fitness.value_or(0.0);
    double fb = population[best].fitness.value_or(0.0);
    if (fi > fb || (fi == fb && population[i].id < population[best].id)) best = i;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Evaluation and statistics
// ---------------------------------------------------------------------------

inline int hidden_layer_count(const NetworkDescriptor& nd) {
  int n = 0;
  for (const auto& layer : nd.layers) {
    const std::string* act = layer.attr("act");
    if (!act || *act != "softmax") ++n;
  }
  return n;
}

// Evaluates every individual without a fitness. Each evaluation seeds from
// the individual's id, so the result is identical whatever `jobs` is.
inline void evaluate_population(EngineState& state, const Grammar& g,
                                const FitnessEvaluator& eval) {
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < state.population.size(); ++i)
    if (!state.population[i].fitness) todo.push_back(i);
  if (todo.empty()) return;

  auto evaluate_one = [&](std::size_t index) {
    Individual& ind = state.population[index];
    std::uint64_t seed = derive_seed(state.config.master_seed, "eval", ind.id);
    double fitness = 0.0;
    try {
      NetworkDescriptor nd = decode_individual(g, ind);
      fitness = eval.evaluate(nd, seed).fitness;
    } catch (const std::exception&) {
      fitness = 0.0;  // undecodable genotypes score zero rather than aborting the run
    }
    ind.fitness = fitness;
  };

  std::size_t jobs = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, state.config.jobs)),
                                           todo.size());
  if (jobs <= 1) {
    for (std::size_t index : todo) evaluate_one(index);
    return;
  }
  std::atomic<std::size_t> cursor{0};
  std::vector<std::thread> workers;
  workers.reserve(jobs);
  for (std::size_t t = 0; t < jobs; ++t) {
    workers.emplace_back([&] {
      for (;;) {
        std::size_t slot = cursor.fetch_add(1);
        if (slot >= todo.size()) return;
        evaluate_one(todo[slot]);
      }
    });
  }
  for (auto& w : workers) w.join();
}

inline GenerationStats compute_stats(const EngineState& state, const Grammar& g) {
  GenerationStats st;
  st.generation = state.generation;
  const auto& pop = state.population;
  std::vector<int> hidden(pop.size(), 0);
  double sum_fitness = 0, sum_hidden = 0;
  for (std::size_t i = 0; i < pop.size(); ++i) {
    try {
      hidden[i] = hidden_layer_count(decode_individual(g, pop[i]));
    } catch (const std::exception&) {
      hidden[i] = 0;
    }
    sum_fitness += pop[i].fitness.value_or(0.0);
    sum_hidden += hidden[i];
  }
  std::size_t bi = best_index(pop);
  st.best_fitness = pop[bi].fitness.value_or(0.0);
  st.mean_fitness = sum_fitness / static_cast<double>(pop.size());
  st.best_hidden_layers = hidden[bi];
  st.mean_hidden_layers = sum_hidden / static_cast<double>(pop.size());
  st.best_id = pop[bi].id;
  return st;
}

namespace detail {

// Appends the generation's stats row and refreshes the best-ever individual
// (strict improvement only, so the earliest achiever is kept).
inline GenerationStats record_generation(EngineState& state, const Grammar& g) {
  GenerationStats st = compute_stats(state, g);
  state.stats.push_back(st);
  const Individual& gen_best = state.population[best_index(state.population)];
  if (!state.best ||
      gen_best.fitness.value_or(0.0) > state.best->fitness.value_or(0.0))
    state.best = gen_best;
  return st;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Generational step
// ---------------------------------------------------------------------------

// Breeds the next generation (elites plus tournament-selected offspring) and
// evaluates the newcomers.
inline void step_generation(EngineState& state, const Grammar& g, const GaStructure& s,
                            const FitnessEvaluator& eval) {
  const EvolutionConfig& cfg = state.config;
  const std::size_t pop_size = state.population.size();
  const int next_gen = state.generation + 1;

  std::vector<Individual> next;
  next.reserve(pop_size);
  std::size_t e = detail::elite_count(cfg.elite_fraction, pop_size);
  for (std::size_t i : detail::elite_indices(state.population, e))
    next.push_back(state.population[i]);

  std::uint64_t pair_index = 0;
  while (next.size() < pop_size) {
    RandomStream rng = RandomStream::derive(cfg.master_seed, "breed",
                                            static_cast<std::uint64_t>(next_gen), pair_index++);
    const Individual& p1 = state.population[tournament_select(state.population, cfg.tournament_size, rng)];
    const Individual& p2 = state.population[tournament_select(state.population, cfg.tournament_size, rng)];
    std::pair<Individual, Individual> offspring = apply_variation(p1, p2, g, s, cfg.operators, rng);
    offspring.first.id = state.next_id++;
    next.push_back(std::move(offspring.first));
    if (next.size() < pop_size) {
      offspring.second.id = state.next_id++;
      next.push_back(std::move(offspring.second));
    }
  }

  state.population = std::move(next);
  state.generation = next_gen;
  if (cfg.audit)
    for (const Individual& ind : state.population) audit_individual(g, s, ind);
  evaluate_population(state, g, eval);
}

// Runs the remaining generations of an existing state (fresh or loaded from a
// checkpoint). The after_generation hook can pause the run early.
inline void evolve_from(EngineState& state, const Grammar& g, const GaStructure& s,
                        const FitnessEvaluator& eval, const RunHooks& hooks = {}) {
  validate_config(state.config);
  while (state.generation < state.config.generations) {
    step_generation(state, g, s, eval);
    GenerationStats st = detail::record_generation(state, g);
    if (hooks.after_generation && !hooks.after_generation(state, st)) return;
  }
}

// Full run: founders, generation 0 evaluation, then the generational loop.
inline EngineState evolve(const EvolutionConfig& cfg, const Grammar& g, const GaStructure& s,
                          const FitnessEvaluator& eval, const RunHooks& hooks = {}) {
  validate_config(cfg);
  EngineState state;
  state.config = cfg;
  state.population.reserve(static_cast<std::size_t>(cfg.population_size));
  for (int i = 0; i < cfg.population_size; ++i) {
    RandomStream rng = RandomStream::derive(cfg.master_seed, "init", static_cast<std::uint64_t>(i));
    Individual ind = random_individual(g, s, rng, cfg.operators.depth_limit);
    ind.id = static_cast<std::uint64_t>(i);
    state.population.push_back(std::move(ind));
  }
  state.next_id = static_cast<std::uint64_t>(cfg.population_size);
  if (cfg.audit)
    for (const Individual& ind : state.population) audit_individual(g, s, ind);
  evaluate_population(state, g, eval);
  GenerationStats st = detail::record_generation(state, g);
  if (hooks.after_generation && !hooks.after_generation(state, st)) return state;
  evolve_from(state, g, s, eval, hooks);
  return state;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr const char* kCheckpointFormat = "gramevo-checkpoint-v1";

class ConfigMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string to_hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

inline bool parse_hex64(std::string_view s, std::uint64_t& out) {
  if (s.size() != 16) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out, 16);
  return ec == std::errc() && ptr == s.data() + s.size();
}

inline nlohmann::ordered_json stats_to_json(const GenerationStats& st) {
  nlohmann::ordered_json j;
  j["generation"] = st.generation;
  j["best_fitness"] = st.best_fitness;
  j["mean_fitness"] = st.mean_fitness;
  j["best_hidden_layers"] = st.best_hidden_layers;
  j["mean_hidden_layers"] = st.mean_hidden_layers;
  j["best_id"] = st.best_id;
  return j;
}

inline GenerationStats stats_from_json(const nlohmann::ordered_json& j) {
  GenerationStats st;
  st.generation = j.at("generation").get<int>();
  st.best_fitness = j.at("best_fitness").get<double>();
  st.mean_fitness = j.at("mean_fitness").get<double>();
  st.best_hidden_layers = j.at("best_hidden_layers").get<int>();
  st.mean_hidden_layers = j.at("mean_hidden_layers").get<double>();
  st.best_id = j.at("best_id").get<std::uint64_t>();
  return st;
}

inline nlohmann::ordered_json state_to_json(const EngineState& state) {
  nlohmann::ordered_json j;
  j["format"] = kCheckpointFormat;
  j["generation"] = state.generation;
  j["config_hash"] = to_hex64(state.config.config_hash);
  j["next_id"] = state.next_id;
  j["best"] = state.best ? individual_to_json(*state.best) : nlohmann::ordered_json(nullptr);
  nlohmann::ordered_json pop = nlohmann::ordered_json::array();
  for (const Individual& ind : state.population) pop.push_back(individual_to_json(ind));
  j["population"] = std::move(pop);
  nlohmann::ordered_json stats = nlohmann::ordered_json::array();
  for (const GenerationStats& st : state.stats) stats.push_back(stats_to_json(st));
  j["stats"] = std::move(stats);
  return j;
}

// Rebuilds a state from checkpoint JSON. The caller supplies the config the
// run should use; its config_hash must match the one stored in the
// checkpoint, otherwise the checkpoint belongs to a different run setup.
inline EngineState state_from_json(const nlohmann::ordered_json& j, const EvolutionConfig& config) {
  if (!j.is_object() || !j.contains("format") || j.at("format") != kCheckpointFormat)
    throw std::runtime_error("checkpoint: unrecognized format");
  std::uint64_t stored_hash = 0;
  if (!j.contains("config_hash") || !j.at("config_hash").is_string() ||
      !parse_hex64(j.at("config_hash").get<std::string>(), stored_hash))
    throw std::runtime_error("checkpoint: missing or malformed config_hash");
  if (stored_hash != config.config_hash)
    throw ConfigMismatch("checkpoint was produced by a different configuration (hash " +
                         to_hex64(stored_hash) + ", expected " + to_hex64(config.config_hash) + ")");
  EngineState state;
  state.config = config;
  try {
    state.generation = j.at("generation").get<int>();
    state.next_id = j.at("next_id").get<std::uint64_t>();
    for (const auto& ij : j.at("population")) state.population.push_back(individual_from_json(ij));
    if (!j.at("best").is_null()) state.best = individual_from_json(j.at("best"));
    for (const auto& sj : j.at("stats")) state.stats.push_back(stats_from_json(sj));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: ") + e.what());
  }
  return state;
}

inline void checkpoint_save(const EngineState& state, const std::filesystem::path& path) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + tmp.string());
    out << state_to_json(state).dump(2) << '\n';
    if (!out) throw std::runtime_error("failed writing checkpoint: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline EngineState checkpoint_load(const std::filesystem::path& path, const EvolutionConfig& config) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path.string());
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("checkpoint " + path.string() + ": " + e.what());
  }
  return state_from_json(j, config);
}

// Finds the highest-numbered gen_<n>.json in a directory.
inline std::optional<std::filesystem::path> find_latest_checkpoint(
    const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) return std::nullopt;
  std::optional<fs::path> best;
  long long best_n = -1;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string name = entry.path().filename().string();
    if (name.size() <= 9 || name.rfind("gen_", 0) != 0 ||
        name.substr(name.size() - 5) != ".json")
      continue;
    long long n = 0;
    if (!parse_long(std::string_view(name).substr(4, name.size() - 9), n) || n < 0) continue;
    if (n > best_n) {
      best_n = n;
      best = entry.path();
    }
  }
  return best;
}

}  // namespace gramevo
