#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include <gramevo/genotype.hpp>
#include <gramevo/grammar.hpp>
#include <gramevo/operators.hpp>
#include <gramevo/phenotype.hpp>

#include "helpers.hpp"

using namespace gramevo;

namespace {

// One-rule grammar whose layers are identified by an integer tag, so slot
// movement under crossover is directly observable.
Grammar tag_grammar() { return parse_grammar("<gene> ::= [tag,int,1,0,1000]"); }

LayerRecord tag_record(int tag) {
  LayerRecord rec;
  rec.start_symbol = "gene";
  rec.choices["gene"] = {0};
  rec.params.push_back({"tag", {static_cast<double>(tag)}});
  return rec;
}

Individual make_tagged(const std::vector<int>& tags, std::uint64_t id) {
  Individual ind;
  ind.id = id;
  ModuleGenotype m;
  m.structure_index = 0;
  for (int t : tags) m.slots.push_back(m.add_record(tag_record(t), 1));
  ind.modules.push_back(std::move(m));
  return ind;
}

std::vector<int> tags_of(const Grammar& g, const Individual& ind) {
  std::vector<int> out;
  for (const auto& layer : decode_individual(g, ind).layers) {
    const std::string* v = layer.attr("tag");
    REQUIRE(v != nullptr);
    out.push_back(std::stoi(*v));
  }
  return out;
}

// Four independent single-layer modules, for bit-mask crossover.
Grammar abcd_grammar() {
  return parse_grammar(
      "<a> ::= [t,int,1,0,1000]\n"
      "<b> ::= [t,int,1,0,1000]\n"
      "<c> ::= [t,int,1,0,1000]\n"
      "<d> ::= [t,int,1,0,1000]");
}

Individual make_abcd(const std::vector<std::vector<int>>& module_tags, std::uint64_t id) {
  const char* names[] = {"a", "b", "c", "d"};
  Individual ind;
  ind.id = id;
  for (std::size_t m = 0; m < module_tags.size(); ++m) {
    ModuleGenotype module;
    module.structure_index = m;
    for (int t : module_tags[m]) {
      LayerRecord rec;
      rec.start_symbol = names[m];
      rec.choices[names[m]] = {0};
      rec.params.push_back({"t", {static_cast<double>(t)}});
      module.slots.push_back(module.add_record(rec, 1));
    }
    ind.modules.push_back(std::move(module));
  }
  return ind;
}

}  // namespace

TEST_CASE("one-point crossover swaps slot tails at the cut") {
  Grammar g = tag_grammar();
  GaStructure s = parse_structure("gene 1 10");
  Individual p1 = make_tagged({0, 1, 2, 3}, 100);
  Individual p2 = make_tagged({10, 11, 12, 13, 14, 15, 16}, 200);
  p1.fitness = 0.4;
  p2.fitness = 0.6;

  auto [o1, o2] = one_point_crossover_at(p1, p2, 0, 2);
  CHECK(tags_of(g, o1) == std::vector<int>{0, 1, 12, 13, 14, 15, 16});
  CHECK(tags_of(g, o2) == std::vector<int>{10, 11, 2, 3});
  REQUIRE_NOTHROW(audit_individual(g, s, o1));
  REQUIRE_NOTHROW(audit_individual(g, s, o2));

  CHECK_FALSE(o1.fitness.has_value());
  CHECK_FALSE(o2.fitness.has_value());
  REQUIRE(o1.lineage.has_value());
  CHECK(o1.lineage->parents == std::vector<std::uint64_t>{100, 200});
  CHECK(o2.lineage->parents == std::vector<std::uint64_t>{200, 100});
  REQUIRE(o1.lineage->ops.size() == 1);
  CHECK(o1.lineage->ops[0] == "one-point(module=0,cut=2)");

  // Parents are untouched.
  CHECK(tags_of(g, p1) == std::vector<int>{0, 1, 2, 3});
  CHECK(tags_of(g, p2) == std::vector<int>{10, 11, 12, 13, 14, 15, 16});
}

TEST_CASE("one-point cut must fall strictly inside the smaller parent") {
  Individual p1 = make_tagged({0, 1, 2, 3}, 1);
  Individual p2 = make_tagged({10, 11, 12, 13, 14, 15, 16}, 2);
  REQUIRE_THROWS_AS(one_point_crossover_at(p1, p2, 0, 0), std::invalid_argument);
  REQUIRE_THROWS_AS(one_point_crossover_at(p1, p2, 0, 4), std::invalid_argument);
  REQUIRE_THROWS_AS(one_point_crossover_at(p1, p2, 1, 1), std::invalid_argument);
  REQUIRE_NOTHROW(one_point_crossover_at(p1, p2, 0, 3));
}

TEST_CASE("one-point with a single-slot module degrades to copies") {
  Grammar g = tag_grammar();
  Individual p1 = make_tagged({5}, 1);
  Individual p2 = make_tagged({6}, 2);
  RandomStream rng(3);
  auto [o1, o2] = one_point_crossover(p1, p2, rng);
  CHECK(tags_of(g, o1) == std::vector<int>{5});
  CHECK(tags_of(g, o2) == std::vector<int>{6});
  REQUIRE(o1.lineage.has_value());
  CHECK(o1.lineage->ops[0] == "one-point(module=0,degenerate)");
}

TEST_CASE("one-point leaves other modules whole") {
  Individual p1 = make_abcd({{1, 2}, {3, 4}, {5, 6}, {7}}, 1);
  Individual p2 = make_abcd({{10, 20}, {30, 40}, {50, 60}, {70}}, 2);
  auto [o1, o2] = one_point_crossover_at(p1, p2, 2, 1);
  CHECK(o1.modules[0] == p1.modules[0]);
  CHECK(o1.modules[1] == p1.modules[1]);
  CHECK(o1.modules[3] == p1.modules[3]);
  CHECK(o2.modules[0] == p2.modules[0]);
  CHECK(o2.modules[3] == p2.modules[3]);
  Grammar g = abcd_grammar();
  auto tag_at = [&](const Individual& ind, std::size_t m, std::size_t slot) {
    const auto& module = ind.modules[m];
    return static_cast<int>(module.records.at(module.slots[slot]).record.params[0].values[0]);
  };
  CHECK(tag_at(o1, 2, 0) == 5);
  CHECK(tag_at(o1, 2, 1) == 60);
  CHECK(tag_at(o2, 2, 0) == 50);
  CHECK(tag_at(o2, 2, 1) == 6);
  REQUIRE_NOTHROW(audit_individual(g, parse_structure("a 1 4\nb 1 4\nc 1 4\nd 1 4"), o1));
}

TEST_CASE("one-point preserves sharing within each source side") {
  Grammar g = tag_grammar();
  GaStructure s = parse_structure("gene 1 10");

  Individual p1;
  p1.id = 1;
  ModuleGenotype m1;
  m1.structure_index = 0;
  RecordId a = m1.add_record(tag_record(7), 2);
  m1.slots = {a, a};
  RecordId b = m1.add_record(tag_record(8), 1);
  m1.slots.push_back(b);
  p1.modules.push_back(m1);
  REQUIRE_NOTHROW(audit_individual(g, s, p1));

  Individual p2 = make_tagged({20, 21, 22}, 2);

  auto [o1, o2] = one_point_crossover_at(p1, p2, 0, 2);
  // o1 head keeps p1's two shared slots: still one record, refcount 2.
  REQUIRE(o1.modules[0].slots.size() == 3);
  CHECK(o1.modules[0].slots[0] == o1.modules[0].slots[1]);
  CHECK(o1.modules[0].records.at(o1.modules[0].slots[0]).refcount == 2);
  CHECK(tags_of(g, o1) == std::vector<int>{7, 7, 22});
  REQUIRE_NOTHROW(audit_individual(g, s, o1));
  CHECK(tags_of(g, o2) == std::vector<int>{20, 21, 8});
  REQUIRE_NOTHROW(audit_individual(g, s, o2));
}

TEST_CASE("offspring record tables are isolated from the parents") {
  Grammar g = tag_grammar();
  Individual p1 = make_tagged({0, 1, 2}, 1);
  Individual p2 = make_tagged({10, 11, 12}, 2);
  auto [o1, o2] = one_point_crossover_at(p1, p2, 0, 1);
  for (auto& [id, entry] : o1.modules[0].records) entry.record.params[0].values[0] = 999;
  CHECK(tags_of(g, p1) == std::vector<int>{0, 1, 2});
  CHECK(tags_of(g, p2) == std::vector<int>{10, 11, 12});
  CHECK(tags_of(g, o2) == std::vector<int>{10, 1, 2});
}

TEST_CASE("bit-mask crossover exchanges whole modules") {
  Individual p1 = make_abcd({{1}, {2}, {3}, {4}}, 1);
  Individual p2 = make_abcd({{10}, {20}, {30}, {40}}, 2);

  SECTION("a specific mask") {
    auto [o1, o2] = bitmask_crossover_with_mask(p1, p2, {true, false, true, false});
    CHECK(o1.modules[0] == p1.modules[0]);
    CHECK(o1.modules[1] == p2.modules[1]);
    CHECK(o1.modules[2] == p1.modules[2]);
    CHECK(o1.modules[3] == p2.modules[3]);
    CHECK(o2.modules[0] == p2.modules[0]);
    CHECK(o2.modules[1] == p1.modules[1]);
    CHECK(o2.modules[2] == p2.modules[2]);
    CHECK(o2.modules[3] == p1.modules[3]);
    REQUIRE(o1.lineage.has_value());
    CHECK(o1.lineage->ops[0] == "bitmask(1010)");
    CHECK(o1.lineage->parents == std::vector<std::uint64_t>{1, 2});
  }

  SECTION("all 16 masks produce complementary offspring") {
    for (int bits = 0; bits < 16; ++bits) {
      std::vector<bool> mask(4);
      for (int m = 0; m < 4; ++m) mask[m] = (bits >> m) & 1;
      auto [o1, o2] = bitmask_crossover_with_mask(p1, p2, mask);
      for (int m = 0; m < 4; ++m) {
        CHECK(o1.modules[m] == (mask[m] ? p1 : p2).modules[m]);
        CHECK(o2.modules[m] == (mask[m] ? p2 : p1).modules[m]);
      }
      CHECK_FALSE(o1.fitness.has_value());
      CHECK_FALSE(o2.fitness.has_value());
    }
  }

  SECTION("mask length must match the module count") {
    REQUIRE_THROWS_AS(bitmask_crossover_with_mask(p1, p2, {true, false}), std::invalid_argument);
  }
}

TEST_CASE("crossover rejects parents with different structures") {
  Individual p1 = make_tagged({1, 2}, 1);
  Individual p2 = make_abcd({{1}, {2}, {3}, {4}}, 2);
  auto is_mismatch = [](const OperatorError& e) {
    return e.kind() == OperatorErrorKind::StructureMismatch;
  };
  REQUIRE_THROWS_MATCHES(one_point_crossover_at(p1, p2, 0, 1), OperatorError,
                         Catch::Matchers::Predicate<OperatorError>(is_mismatch));
  REQUIRE_THROWS_MATCHES(bitmask_crossover_with_mask(p1, p2, {true}), OperatorError,
                         Catch::Matchers::Predicate<OperatorError>(is_mismatch));
  Grammar g = tag_grammar();
  GaStructure s = parse_structure("gene 1 10");
  RandomStream rng(1);
  REQUIRE_THROWS_MATCHES(apply_variation(p1, p2, g, s, {}, rng), OperatorError,
                         Catch::Matchers::Predicate<OperatorError>(is_mismatch));
}

TEST_CASE("add-layer inserts a fresh valid layer") {
  Grammar g = tag_grammar();
  GaStructure s = parse_structure("gene 2 4");
  Individual ind = make_tagged({1, 2}, 9);
  ind.fitness = 0.5;
  RandomStream rng(11);
  Individual out = mutate_add_layer(ind, 0, g, s, rng);
  REQUIRE(out.modules[0].slots.size() == 3);
  REQUIRE_NOTHROW(audit_individual(g, s, out));
  CHECK_FALSE(out.fitness.has_value());
  std::vector<int> tags = tags_of(g, out);
  CHECK(std::count(tags.begin(), tags.end(), 1) == 1);
  CHECK(std::count(tags.begin(), tags.end(), 2) == 1);
  REQUIRE(out.lineage.has_value());
  CHECK(out.lineage->ops[0].starts_with("add-layer(module=0,pos="));
  CHECK(tags_of(g, ind) == std::vector<int>{1, 2});  // input untouched

  SECTION("refuses at the maximum") {
    Individual full = make_tagged({1, 2, 3, 4}, 9);
    REQUIRE_THROWS_MATCHES(mutate_add_layer(full, 0, g, s, rng), OperatorError,
                           Catch::Matchers::Predicate<OperatorError>([](const OperatorError& e) {
                             return e.kind() == OperatorErrorKind::AtMaxLayers;
                           }));
  }
  SECTION("module index is validated") {
    REQUIRE_THROWS_AS(mutate_add_layer(ind, 5, g, s, rng), std::invalid_argument);
  }
}

TEST_CASE("replicate-layer shares the record by reference") {
  Grammar g = tag_grammar();
  GaStructure s = parse_structure("gene 1 4");
  Individual ind = make_tagged({5}, 3);
  RandomStream rng(2);
  Individual out = mutate_replicate_layer(ind, 0, s, rng);
  REQUIRE(out.modules[0].slots.size() == 2);
  CHECK(out.modules[0].slots[0] == out.modules[0].slots[1]);
  CHECK(out.modules[0].records.at(out.modules[0].slots[0]).refcount == 2);
  CHECK(out.modules[0].records.size() == 1);
  REQUIRE_NOTHROW(audit_individual(g, s, out));
  CHECK(out.lineage->ops[0].starts_with("replicate-layer(module=0,"));

  SECTION("a later mutation of the shared record shows at every slot") {
    // The replicated individual has exactly one stored value, so numeric
    // mutation must hit the shared record; both slots change together.
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      RandomStream mrng(seed);
      Individual mutated = mutate_numeric(out, g, mrng);
      NetworkDescriptor nd = decode_individual(g, mutated);
      REQUIRE(nd.layers.size() == 2);
      CHECK(nd.layers[0] == nd.layers[1]);
      REQUIRE_NOTHROW(audit_individual(g, s, mutated));
    }
  }

  SECTION("refuses at the maximum") {
    Individual full = make_tagged({1, 2, 3, 4}, 9);
    REQUIRE_THROWS_MATCHES(mutate_replicate_layer(full, 0, s, rng), OperatorError,
                           Catch::Matchers::Predicate<OperatorError>([](const OperatorError& e) {
                             return e.kind() == OperatorErrorKind::AtMaxLayers;
                           }));
  }
}

TEST_CASE("remove-layer drops records only when the last reference goes") {
  Grammar g = tag_grammar();
  GaStructure s = parse_structure("gene 1 4");

  Individual ind;
  ind.id = 4;
  ModuleGenotype m;
  m.structure_index = 0;
  RecordId a = m.add_record(tag_record(7), 2);
  m.slots = {a, a};
  RecordId b = m.add_record(tag_record(9), 1);
  m.slots.push_back(b);
  ind.modules.push_back(m);
  REQUIRE_NOTHROW(audit_individual(g, s, ind));

  bool removed_shared = false, removed_unique = false;
  for (std::uint64_t seed = 0; seed < 40 && !(removed_shared && removed_unique); ++seed) {
    RandomStream rng(seed);
    Individual out = mutate_remove_layer(ind, 0, s, rng);
    REQUIRE(out.modules[0].slots.size() == 2);
    REQUIRE_NOTHROW(audit_individual(g, s, out));
    std::vector<int> tags = tags_of(g, out);
    if (tags == std::vector<int>{7, 7}) {
      // the unique record lost its only reference and left the table
      CHECK(out.modules[0].records.count(b) == 0);
      CHECK(out.modules[0].records.at(a).refcount == 2);
      removed_unique = true;
    } else {
      CHECK(tags == std::vector<int>{7, 9});
      CHECK(out.modules[0].records.at(a).refcount == 1);
      CHECK(out.modules[0].records.at(b).refcount == 1);
      removed_shared = true;
    }
  }
  CHECK(removed_shared);
  CHECK(removed_unique);

  SECTION("refuses at the minimum") {
    GaStructure tight = parse_structure("gene 3 4");
    RandomStream rng(1);
    REQUIRE_THROWS_MATCHES(mutate_remove_layer(ind, 0, tight, rng), OperatorError,
                           Catch::Matchers::Predicate<OperatorError>([](const OperatorError& e) {
                             return e.kind() == OperatorErrorKind::AtMinLayers;
                           }));
  }
}

TEST_CASE("grammatical mutation excludes the current alternative uniformly") {
  Grammar g = parse_grammar("<g> ::= a:x | a:y | a:z");
  Individual ind;
  ind.id = 1;
  ModuleGenotype m;
  m.structure_index = 0;
  LayerRecord rec;
  rec.start_symbol = "g";
  rec.choices["g"] = {1};
  m.slots.push_back(m.add_record(rec, 1));
  ind.modules.push_back(m);

  int count0 = 0, count2 = 0;
  const int trials = 5000;
  for (int t = 0; t < trials; ++t) {
    RandomStream rng(static_cast<std::uint64_t>(t));
    Individual out = mutate_grammatical(ind, g, rng);
    int chosen = out.modules[0].records.at(out.modules[0].slots[0]).record.choices.at("g")[0];
    REQUIRE(chosen != 1);
    if (chosen == 0)
      ++count0;
    else {
      REQUIRE(chosen == 2);
      ++count2;
    }
    CHECK_FALSE(out.fitness.has_value());
  }
  double freq0 = static_cast<double>(count0) / trials;
  CHECK(freq0 > 0.47);
  CHECK(freq0 < 0.53);
  CHECK(count0 + count2 == trials);
}

TEST_CASE("grammatical mutation on a shared record reaches every slot") {
  Grammar g = parse_grammar("<g> ::= a:x | a:y");
  GaStructure s = parse_structure("g 1 4");
  Individual ind;
  ind.id = 1;
  ModuleGenotype m;
  m.structure_index = 0;
  LayerRecord rec;
  rec.start_symbol = "g";
  rec.choices["g"] = {0};
  RecordId id = m.add_record(rec, 2);
  m.slots = {id, id};
  ind.modules.push_back(m);

  RandomStream rng(6);
  Individual out = mutate_grammatical(ind, g, rng);
  NetworkDescriptor nd = decode_individual(g, out);
  REQUIRE(nd.layers.size() == 2);
  CHECK(*nd.layers[0].attr("a") == "y");
  CHECK(*nd.layers[1].attr("a") == "y");
  REQUIRE_NOTHROW(audit_individual(g, s, out));
}

TEST_CASE("grammatical mutation regrows a clean sub-derivation") {
  Grammar g = parse_grammar(
      testutil::read_file(testutil::fixture_path("grammars/cnn.grammar")));
  GaStructure s = parse_structure("features 1 30");

  Individual ind;
  ind.id = 1;
  ModuleGenotype m;
  m.structure_index = 0;
  LayerRecord conv;
  conv.start_symbol = "features";
  conv.choices["features"] = {0};
  conv.choices["convolution"] = {0};
  conv.choices["padding"] = {0};
  conv.choices["activation"] = {1};
  conv.choices["bias"] = {0};
  conv.choices["batch-normalisation"] = {0};
  conv.choices["merge-input"] = {1};
  conv.params.push_back({"num-filters", {64.0}});
  conv.params.push_back({"filter-shape", {3.0}});
  conv.params.push_back({"stride", {1.0}});
  m.slots.push_back(m.add_record(conv, 1));
  ind.modules.push_back(m);
  REQUIRE_NOTHROW(audit_individual(g, s, ind));

  bool flipped_to_pooling = false;
  for (std::uint64_t seed = 0; seed < 400 && !flipped_to_pooling; ++seed) {
    RandomStream rng(seed);
    Individual out = mutate_grammatical(ind, g, rng);
    // Whatever site was hit, the record must still replay cleanly.
    REQUIRE_NOTHROW(audit_individual(g, s, out));
    REQUIRE(out.lineage.has_value());
    const std::string& op = out.lineage->ops.back();
    if (op.find("site=features#0") != std::string::npos) {
      flipped_to_pooling = true;
      NetworkDescriptor nd = decode_individual(g, out);
      REQUIRE(nd.layers.size() == 1);
      // The only other alternative of <features> is <pooling>; the regrown
      // subtree must be a complete pooling layer.
      CHECK((nd.layers[0].kind == "pool-avg" || nd.layers[0].kind == "pool-max"));
      CHECK(nd.layers[0].attr("kernel-size") != nullptr);
      CHECK(nd.layers[0].attr("stride") != nullptr);
      CHECK(nd.layers[0].attr("padding") != nullptr);
    }
  }
  CHECK(flipped_to_pooling);
}

TEST_CASE("grammatical mutation needs at least one multi-alternative site") {
  Grammar g = tag_grammar();  // single alternative, no choice sites
  Individual ind = make_tagged({1}, 1);
  RandomStream rng(1);
  REQUIRE_THROWS_MATCHES(mutate_grammatical(ind, g, rng), OperatorError,
                         Catch::Matchers::Predicate<OperatorError>([](const OperatorError& e) {
                           return e.kind() == OperatorErrorKind::NoEligibleSite;
                         }));
}

TEST_CASE("numeric mutation redraws integers inside their range") {
  Grammar g = parse_grammar("<g> ::= [k,int,1,3,7]");
  Individual ind;
  ind.id = 1;
  ModuleGenotype m;
  m.structure_index = 0;
  LayerRecord rec;
  rec.start_symbol = "g";
  rec.choices["g"] = {0};
  rec.params.push_back({"k", {5.0}});
  m.slots.push_back(m.add_record(rec, 1));
  ind.modules.push_back(m);

  std::set<int> seen;
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    RandomStream rng(seed);
    Individual out = mutate_numeric(ind, g, rng);
    double v = out.modules[0].records.at(out.modules[0].slots[0]).record.params[0].values[0];
    REQUIRE(v == std::floor(v));
    REQUIRE(v >= 3.0);
    REQUIRE(v <= 7.0);
    seen.insert(static_cast<int>(v));
    CHECK(out.lineage->ops[0].starts_with("numeric(module=0,"));
  }
  CHECK(seen.size() == 5);  // the whole range is reachable
}

TEST_CASE("numeric mutation perturbs floats with a clamped Gaussian step") {
  Grammar g = parse_grammar("<g> ::= [x,float,1,0,1]");
  Individual ind;
  ind.id = 1;
  ModuleGenotype m;
  m.structure_index = 0;
  LayerRecord rec;
  rec.start_symbol = "g";
  rec.choices["g"] = {0};
  rec.params.push_back({"x", {0.95}});
  m.slots.push_back(m.add_record(rec, 1));
  ind.modules.push_back(m);

  SECTION("results never leave the range") {
    bool clamped_high = false;
    for (std::uint64_t seed = 0; seed < 2000; ++seed) {
      RandomStream rng(seed);
      Individual out = mutate_numeric(ind, g, rng);
      double v = out.modules[0].records.at(out.modules[0].slots[0]).record.params[0].values[0];
      REQUIRE(v >= 0.0);
      REQUIRE(v <= 1.0);
      if (v == 1.0) clamped_high = true;
    }
    // starting at 0.95 with sigma 0.15, the upper clamp must fire sometimes
    CHECK(clamped_high);
  }

  SECTION("sigma scales with the configured range fraction") {
    OperatorConfig cfg;
    cfg.gaussian_sigma_fraction = 1e-12;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      RandomStream rng(seed);
      Individual out = mutate_numeric(ind, g, rng, cfg);
      double v = out.modules[0].records.at(out.modules[0].slots[0]).record.params[0].values[0];
      REQUIRE(std::abs(v - 0.95) < 1e-9);
    }
  }
}

TEST_CASE("mutation passes through when nothing is applicable") {
  Grammar g = parse_grammar("<g> ::= a:x");
  GaStructure s = parse_structure("g 1 1");
  Individual ind;
  ind.id = 1;
  ModuleGenotype m;
  m.structure_index = 0;
  LayerRecord rec;
  rec.start_symbol = "g";
  rec.choices["g"] = {0};
  m.slots.push_back(m.add_record(rec, 1));
  ind.modules.push_back(m);
  ind.fitness = 0.5;

  RandomStream rng(1);
  Individual out = detail::mutate_one(ind, g, s, {}, rng);
  CHECK(out == ind);  // fitness intact, no lineage appended
}

TEST_CASE("variation applies crossover and mutation at the configured rates") {
  Grammar g = tag_grammar();
  GaStructure s = parse_structure("gene 2 6");
  Individual p1 = make_tagged({1, 2, 3}, 1);
  Individual p2 = make_tagged({10, 20, 30, 40}, 2);
  p1.fitness = 0.3;
  p2.fitness = 0.7;

  OperatorConfig cfg;  // defaults: crossover 0.7, mutation 0.3, bitmask split 0.5
  const int trials = 10000;
  int bitmask = 0, onepoint = 0, clones = 0;
  int mutated_first = 0, mutated_second = 0;

  for (int t = 0; t < trials; ++t) {
    RandomStream rng = RandomStream::derive(909, "trial", static_cast<std::uint64_t>(t));
    auto [a, b] = apply_variation(p1, p2, g, s, cfg, rng);

    REQUIRE(a.lineage.has_value());
    REQUIRE(b.lineage.has_value());
    const std::string& first_op = a.lineage->ops.at(0);
    if (first_op.starts_with("bitmask("))
      ++bitmask;
    else if (first_op.starts_with("one-point("))
      ++onepoint;
    else {
      REQUIRE(first_op == "clone");
      ++clones;
    }
    // at most one mutation per offspring, stacked after the crossover tag
    REQUIRE(a.lineage->ops.size() <= 2);
    REQUIRE(b.lineage->ops.size() <= 2);
    if (a.lineage->ops.size() == 2) ++mutated_first;
    if (b.lineage->ops.size() == 2) ++mutated_second;

    CHECK_FALSE(a.fitness.has_value());
    CHECK_FALSE(b.fitness.has_value());
    if (t % 50 == 0) {
      REQUIRE_NOTHROW(audit_individual(g, s, a));
      REQUIRE_NOTHROW(audit_individual(g, s, b));
    }
  }

  double crossover_frac = static_cast<double>(bitmask + onepoint) / trials;
  CHECK(crossover_frac > 0.68);
  CHECK(crossover_frac < 0.72);
  double bitmask_given_crossover = static_cast<double>(bitmask) / (bitmask + onepoint);
  CHECK(bitmask_given_crossover > 0.47);
  CHECK(bitmask_given_crossover < 0.53);
  double mut_a = static_cast<double>(mutated_first) / trials;
  double mut_b = static_cast<double>(mutated_second) / trials;
  CHECK(mut_a > 0.28);
  CHECK(mut_a < 0.32);
  CHECK(mut_b > 0.28);
  CHECK(mut_b < 0.32);
  CHECK(clones + bitmask + onepoint == trials);
}

TEST_CASE("variation output always replays and audits cleanly") {
  Grammar g = parse_grammar(
      testutil::read_file(testutil::fixture_path("grammars/cnn.grammar")));
  GaStructure s = parse_structure(
      testutil::read_file(testutil::fixture_path("grammars/cnn.structure")));

  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    RandomStream init = RandomStream::derive(77, "init", seed);
    Individual p1 = random_individual(g, s, init);
    p1.id = seed * 2;
    Individual p2 = random_individual(g, s, init);
    p2.id = seed * 2 + 1;
    RandomStream rng = RandomStream::derive(77, "var", seed);
    auto [a, b] = apply_variation(p1, p2, g, s, {}, rng);
    REQUIRE_NOTHROW(audit_individual(g, s, a));
    REQUIRE_NOTHROW(audit_individual(g, s, b));
    REQUIRE_NOTHROW(decode_individual(g, a));
    REQUIRE_NOTHROW(decode_individual(g, b));
  }
}
