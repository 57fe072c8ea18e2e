#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <gramevo/engine.hpp>
#include <gramevo/evaluator.hpp>
#include <gramevo/genotype.hpp>
#include <gramevo/grammar.hpp>

#include "helpers.hpp"

using namespace gramevo;

namespace {

Grammar blocks_grammar() {
  return parse_grammar(testutil::read_file(testutil::fixture_path("grammars/blocks.grammar")));
}

GaStructure blocks_structure() {
  return parse_structure(testutil::read_file(testutil::fixture_path("grammars/blocks.structure")));
}

NetworkDescriptor blocks_target() {
  NetworkDescriptor nd;
  LayerDescriptor conv;
  conv.kind = "conv";
  conv.attrs = {{"layer", "conv"}, {"num-filters", "5"}, {"act", "relu"}};
  LayerDescriptor pool;
  pool.kind = "pool";
  pool.attrs = {{"layer", "pool"}, {"kernel-size", "2"}};
  LayerDescriptor fc;
  fc.kind = "fc";
  fc.attrs = {{"layer", "fc"}, {"num-units", "8"}, {"act", "sigmoid"}};
  LayerDescriptor out;
  out.kind = "fc";
  out.attrs = {{"layer", "fc"}, {"act", "softmax"}, {"num-units", "4"}, {"bias", "True"}};
  nd.layers = {conv, pool, fc, out};
  return nd;
}

EvolutionConfig small_config() {
  EvolutionConfig cfg;
  cfg.population_size = 12;
  cfg.generations = 6;
  cfg.tournament_size = 3;
  cfg.elite_fraction = 0.1;
  cfg.master_seed = 99;
  cfg.audit = true;
  cfg.config_hash = 0xdeadbeef12345678ULL;
  return cfg;
}

void require_same_state(const EngineState& a, const EngineState& b) {
  REQUIRE(a.generation == b.generation);
  REQUIRE(a.next_id == b.next_id);
  REQUIRE(a.population == b.population);
  REQUIRE(a.stats == b.stats);
  REQUIRE(a.best.has_value() == b.best.has_value());
  if (a.best) REQUIRE(*a.best == *b.best);
}

class CountingEvaluator : public FitnessEvaluator {
 public:
  FitnessReport evaluate(const NetworkDescriptor&, std::uint64_t) const override {
    ++calls;
    FitnessReport r;
    r.fitness = 0.5;
    r.valid = true;
    return r;
  }
  mutable std::atomic<int> calls{0};
};

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path = std::filesystem::temp_directory_path() / ("gramevo-test-" + std::to_string(stamp));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

std::vector<Individual> two_class_population() {
  std::vector<Individual> pop(2);
  pop[0].id = 0;
  pop[0].fitness = 0.1;
  pop[1].id = 1;
  pop[1].fitness = 0.9;
  return pop;
}

}  // namespace

TEST_CASE("tournament selection prefers the fitter individual at the book rate") {
  auto pop = two_class_population();
  const int trials = 10000;
  int wins = 0;
  for (int t = 0; t < trials; ++t) {
    RandomStream rng = RandomStream::derive(5, "tournament", static_cast<std::uint64_t>(t));
    if (tournament_select(pop, 3, rng) == 1) ++wins;
  }
  // three draws with replacement from two individuals: 1 - (1/2)^3
  double freq = static_cast<double>(wins) / trials;
  CHECK(freq > 0.855);
  CHECK(freq < 0.895);
}

TEST_CASE("tournament ties resolve uniformly") {
  std::vector<Individual> pop(5);
  for (std::size_t i = 0; i < pop.size(); ++i) {
    pop[i].id = i;
    pop[i].fitness = 0.5;
  }
  std::vector<int> counts(5, 0);
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    RandomStream rng = RandomStream::derive(6, "tournament", static_cast<std::uint64_t>(t));
    ++counts[tournament_select(pop, 3, rng)];
  }
  for (int c : counts) {
    double freq = static_cast<double>(c) / trials;
    CHECK(freq > 0.17);
    CHECK(freq < 0.23);
  }
}

TEST_CASE("unevaluated individuals lose every tournament") {
  std::vector<Individual> pop(2);
  pop[0].id = 0;  // fitness unset
  pop[1].id = 1;
  pop[1].fitness = 0.05;
  for (int t = 0; t < 100; ++t) {
    RandomStream rng = RandomStream::derive(7, "tournament", static_cast<std::uint64_t>(t));
    CHECK(tournament_select(pop, 20, rng) == 1);
  }
}

TEST_CASE("tournament selection validates its inputs") {
  std::vector<Individual> empty;
  RandomStream rng(1);
  REQUIRE_THROWS_AS(tournament_select(empty, 3, rng), std::invalid_argument);
  auto pop = two_class_population();
  REQUIRE_THROWS_AS(tournament_select(pop, 0, rng), std::invalid_argument);
}

TEST_CASE("elite counts round up with binary-safe slack") {
  CHECK(detail::elite_count(0.01, 100) == 1);  // not 2, despite 0.01*100 > 1 in binary
  CHECK(detail::elite_count(0.0, 100) == 0);
  CHECK(detail::elite_count(1.0, 100) == 100);
  CHECK(detail::elite_count(0.015, 100) == 2);
  CHECK(detail::elite_count(0.01, 50) == 1);
  CHECK(detail::elite_count(0.001, 100) == 1);
  CHECK(detail::elite_count(0.5, 3) == 2);
  CHECK(detail::elite_count(0.25, 0) == 0);
}

TEST_CASE("elites are the top fitnesses with id tie-breaks") {
  std::vector<Individual> pop(4);
  pop[0].id = 3;
  pop[0].fitness = 0.5;
  pop[1].id = 1;
  pop[1].fitness = 0.9;
  pop[2].id = 0;
  pop[2].fitness = 0.9;
  pop[3].id = 2;
  pop[3].fitness = 0.2;
  CHECK(detail::elite_indices(pop, 2) == std::vector<std::size_t>{2, 1});
  CHECK(detail::elite_indices(pop, 10).size() == 4);
  CHECK(best_index(pop) == 2);
}

TEST_CASE("hidden layers are the non-softmax layers") {
  NetworkDescriptor nd = blocks_target();
  CHECK(hidden_layer_count(nd) == 3);
  NetworkDescriptor bare;
  LayerDescriptor no_act;
  no_act.kind = "pool";
  no_act.attrs = {{"layer", "pool"}};
  bare.layers = {no_act};
  CHECK(hidden_layer_count(bare) == 1);
}

TEST_CASE("stats rows survive the CSV round trip") {
  std::vector<GenerationStats> rows;
  for (int i = 0; i < 5; ++i) {
    GenerationStats st;
    st.generation = i;
    st.best_fitness = 0.1 * i + 0.05;
    st.mean_fitness = 0.05 * i;
    st.best_hidden_layers = i % 3;
    st.mean_hidden_layers = 1.5 + i;
    st.best_id = static_cast<std::uint64_t>(100 + i);
    rows.push_back(st);
  }
  std::string csv = stats_csv_header() + "\n";
  for (const auto& st : rows) csv += stats_csv_row(st) + "\n";
  CHECK(parse_stats_csv(csv) == rows);
  CHECK(parse_stats_csv(csv + "\n\n") == rows);  // trailing blanks are fine

  SECTION("malformed files are rejected") {
    CHECK_THROWS_AS(parse_stats_csv(""), StatsCsvError);
    CHECK_THROWS_AS(parse_stats_csv("wrong,header\n1,2\n"), StatsCsvError);
    CHECK_THROWS_AS(parse_stats_csv(stats_csv_header() + "\n1,2,3\n"), StatsCsvError);
    CHECK_THROWS_AS(parse_stats_csv(stats_csv_header() + "\n1,x,3,4,5,6\n"), StatsCsvError);
  }
}

TEST_CASE("pearson correlation matches the raw-moment formula") {
  SECTION("perfect linear relations") {
    std::vector<double> x = {1, 2, 3, 4, 5};
    std::vector<double> up = {3, 5, 7, 9, 11};
    std::vector<double> down = {4, 3, 2, 1, 0};
    CHECK(std::abs(pearson(x, up) - 1.0) < 1e-12);
    CHECK(std::abs(pearson(x, down) + 1.0) < 1e-12);
  }
  SECTION("random series against the algebraic identity") {
    RandomStream rng(44);
    std::vector<double> x, y;
    for (int i = 0; i < 50; ++i) {
      x.push_back(rng.uniform_real(-3, 3));
      y.push_back(0.4 * x.back() + rng.gaussian(0, 1));
    }
    double n = 50, sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (int i = 0; i < 50; ++i) {
      sx += x[i];
      sy += y[i];
      sxx += x[i] * x[i];
      syy += y[i] * y[i];
      sxy += x[i] * y[i];
    }
    double expected = (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
    CHECK(std::abs(pearson(x, y) - expected) < 1e-12);
  }
  SECTION("constant series have no defined correlation") {
    CHECK(std::isnan(pearson({1, 1, 1}, {1, 2, 3})));
    CHECK(std::isnan(pearson({1, 2, 3}, {2, 2, 2})));
  }
  SECTION("input validation") {
    CHECK_THROWS_AS(pearson({1, 2}, {1, 2, 3}), std::invalid_argument);
    CHECK_THROWS_AS(pearson({1}, {2}), std::invalid_argument);
  }
}

TEST_CASE("configs are validated field by field") {
  EvolutionConfig cfg = small_config();
  REQUIRE_NOTHROW(validate_config(cfg));
  auto rejects = [](EvolutionConfig c) { REQUIRE_THROWS_AS(validate_config(c), std::invalid_argument); };
  {
    auto c = cfg;
    c.population_size = 0;
    rejects(c);
  }
  {
    auto c = cfg;
    c.generations = -1;
    rejects(c);
  }
  {
    auto c = cfg;
    c.tournament_size = 0;
    rejects(c);
  }
  {
    auto c = cfg;
    c.elite_fraction = 1.5;
    rejects(c);
  }
  {
    auto c = cfg;
    c.jobs = 0;
    rejects(c);
  }
  {
    auto c = cfg;
    c.operators.crossover_rate = -0.1;
    rejects(c);
  }
  {
    auto c = cfg;
    c.operators.mutation_rate = 1.1;
    rejects(c);
  }
  {
    auto c = cfg;
    c.operators.bitmask_vs_onepoint = 2;
    rejects(c);
  }
  {
    auto c = cfg;
    c.operators.gaussian_sigma_fraction = -1;
    rejects(c);
  }
  {
    auto c = cfg;
    c.operators.depth_limit = 0;
    rejects(c);
  }
}

TEST_CASE("evolution is a pure function of the config") {
  Grammar g = blocks_grammar();
  GaStructure s = blocks_structure();
  SurrogateEvaluator eval(blocks_target());
  EvolutionConfig cfg = small_config();

  EngineState a = evolve(cfg, g, s, eval);
  EngineState b = evolve(cfg, g, s, eval);
  require_same_state(a, b);
  CHECK(a.generation == cfg.generations);
  CHECK(a.stats.size() == static_cast<std::size_t>(cfg.generations) + 1);
  CHECK(a.population.size() == static_cast<std::size_t>(cfg.population_size));
  REQUIRE(a.best.has_value());
  for (const auto& ind : a.population) REQUIRE(ind.fitness.has_value());

  SECTION("a different seed changes the trajectory") {
    EvolutionConfig other = cfg;
    other.master_seed = 100;
    EngineState c = evolve(other, g, s, eval);
    CHECK(c.stats != a.stats);
  }
}

TEST_CASE("thread count does not change the results") {
  Grammar g = blocks_grammar();
  GaStructure s = blocks_structure();
  SurrogateEvaluator eval(blocks_target());
  EvolutionConfig cfg = small_config();
  cfg.jobs = 1;
  EngineState serial = evolve(cfg, g, s, eval);
  cfg.jobs = 4;
  EngineState parallel = evolve(cfg, g, s, eval);
  CHECK(serial.stats == parallel.stats);
  CHECK(serial.population == parallel.population);
  REQUIRE(parallel.best.has_value());
  CHECK(*serial.best == *parallel.best);
}

TEST_CASE("elitism makes the best fitness monotone") {
  Grammar g = blocks_grammar();
  GaStructure s = blocks_structure();
  SurrogateEvaluator eval(blocks_target());
  EvolutionConfig cfg = small_config();
  cfg.generations = 12;

  EngineState state = evolve(cfg, g, s, eval);
  REQUIRE(state.stats.size() == 13);
  for (std::size_t i = 1; i < state.stats.size(); ++i)
    REQUIRE(state.stats[i].best_fitness >= state.stats[i - 1].best_fitness);
  CHECK(state.best->fitness.value() == state.stats.back().best_fitness);
}

TEST_CASE("only unevaluated individuals are sent to the evaluator") {
  Grammar g = blocks_grammar();
  GaStructure s = blocks_structure();
  CountingEvaluator eval;

  EngineState state;
  state.config = small_config();
  for (int i = 0; i < 6; ++i) {
    RandomStream rng = RandomStream::derive(3, "init", static_cast<std::uint64_t>(i));
    Individual ind = random_individual(g, s, rng);
    ind.id = static_cast<std::uint64_t>(i);
    if (i < 2) ind.fitness = 0.9;  // pre-scored: elites carried into a new generation
    state.population.push_back(std::move(ind));
  }
  state.next_id = 6;

  evaluate_population(state, g, eval);
  CHECK(eval.calls.load() == 4);
  for (const auto& ind : state.population) REQUIRE(ind.fitness.has_value());
  CHECK(state.population[0].fitness == 0.9);  // untouched

  evaluate_population(state, g, eval);
  CHECK(eval.calls.load() == 4);  // nothing left to do
}

TEST_CASE("undecodable genotypes score zero instead of aborting") {
  Grammar g = blocks_grammar();
  GaStructure s = blocks_structure();
  SurrogateEvaluator eval(blocks_target());

  EngineState state;
  state.config = small_config();
  RandomStream rng(8);
  Individual good = random_individual(g, s, rng);
  good.id = 0;
  Individual bad = random_individual(g, s, rng);
  bad.id = 1;
  bad.modules[0].records.begin()->second.record.choices.clear();  // no longer replays
  state.population = {good, bad};
  state.next_id = 2;

  evaluate_population(state, g, eval);
  CHECK(state.population[0].fitness.value() > 0.0);
  CHECK(state.population[1].fitness.value() == 0.0);
}

TEST_CASE("a zero-generation run still evaluates and records the founders") {
  Grammar g = blocks_grammar();
  GaStructure s = blocks_structure();
  SurrogateEvaluator eval(blocks_target());
  EvolutionConfig cfg = small_config();
  cfg.generations = 0;

  EngineState state = evolve(cfg, g, s, eval);
  CHECK(state.generation == 0);
  REQUIRE(state.stats.size() == 1);
  CHECK(state.stats[0].generation == 0);
  CHECK(state.next_id == static_cast<std::uint64_t>(cfg.population_size));
  REQUIRE(state.best.has_value());
  CHECK(state.best->fitness.value() == state.stats[0].best_fitness);
}

TEST_CASE("checkpoints round trip through JSON") {
  Grammar g = blocks_grammar();
  GaStructure s = blocks_structure();
  SurrogateEvaluator eval(blocks_target());
  EvolutionConfig cfg = small_config();
  cfg.generations = 3;
  EngineState state = evolve(cfg, g, s, eval);

  nlohmann::ordered_json j = state_to_json(state);
  CHECK(j["format"] == kCheckpointFormat);
  CHECK(j["config_hash"] == "deadbeef12345678");
  EngineState back = state_from_json(j, cfg);
  require_same_state(state, back);

  SECTION("a different config hash is refused") {
    EvolutionConfig other = cfg;
    other.config_hash = 1;
    REQUIRE_THROWS_AS(state_from_json(j, other), ConfigMismatch);
  }
  SECTION("foreign formats are refused") {
    nlohmann::ordered_json bogus = j;
    bogus["format"] = "something-else";
    REQUIRE_THROWS_AS(state_from_json(bogus, cfg), std::runtime_error);
    bogus = j;
    bogus.erase("config_hash");
    REQUIRE_THROWS_AS(state_from_json(bogus, cfg), std::runtime_error);
  }
  SECTION("truncated documents are wrapped in a checkpoint error") {
    nlohmann::ordered_json cut = j;
    cut.erase("population");
    REQUIRE_THROWS_AS(state_from_json(cut, cfg), std::runtime_error);
  }
}

TEST_CASE("checkpoint files save and load through the atomic rename") {
  Grammar g = blocks_grammar();
  GaStructure s = blocks_structure();
  SurrogateEvaluator eval(blocks_target());
  EvolutionConfig cfg = small_config();
  cfg.generations = 2;
  EngineState state = evolve(cfg, g, s, eval);

  TempDir dir;
  std::filesystem::path file = dir.path / "gen_2.json";
  checkpoint_save(state, file);
  CHECK(std::filesystem::exists(file));
  CHECK_FALSE(std::filesystem::exists(dir.path / "gen_2.json.tmp"));
  EngineState back = checkpoint_load(file, cfg);
  require_same_state(state, back);

  SECTION("missing or corrupt files raise a runtime error") {
    REQUIRE_THROWS_AS(checkpoint_load(dir.path / "absent.json", cfg), std::runtime_error);
    std::ofstream(dir.path / "bad.json") << "{ not json";
    REQUIRE_THROWS_AS(checkpoint_load(dir.path / "bad.json", cfg), std::runtime_error);
  }
}

TEST_CASE("the latest checkpoint wins and junk is ignored") {
  TempDir dir;
  CHECK_FALSE(find_latest_checkpoint(dir.path).has_value());
  CHECK_FALSE(find_latest_checkpoint(dir.path / "nope").has_value());

  for (const char* name : {"gen_1.json", "gen_12.json", "gen_3.json"})
    std::ofstream(dir.path / name) << "{}";
  for (const char* junk : {"gen_.json", "gen_x.json", "notes.txt", "gen_5.tmp", "stats.csv"})
    std::ofstream(dir.path / junk) << "";
  std::filesystem::create_directories(dir.path / "gen_99.json");  // a directory, not a file

  auto found = find_latest_checkpoint(dir.path);
  REQUIRE(found.has_value());
  CHECK(found->filename().string() == "gen_12.json");
}

TEST_CASE("a paused run resumed from JSON replays the full run exactly") {
  Grammar g = blocks_grammar();
  GaStructure s = blocks_structure();
  SurrogateEvaluator eval(blocks_target());
  EvolutionConfig cfg = small_config();
  cfg.generations = 8;

  EngineState full = evolve(cfg, g, s, eval);

  RunHooks pause;
  pause.after_generation = [](const EngineState&, const GenerationStats& st) {
    return st.generation < 3;
  };
  EngineState half = evolve(cfg, g, s, eval, pause);
  CHECK(half.generation == 3);
  CHECK(half.stats.size() == 4);

  EngineState resumed = state_from_json(state_to_json(half), cfg);
  evolve_from(resumed, g, s, eval);
  require_same_state(full, resumed);
}
