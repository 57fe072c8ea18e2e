#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gramevo/genotype.hpp"
#include "gramevo/grammar.hpp"
#include "gramevo/rng.hpp"

namespace gramevo {

struct OperatorConfig {
  double crossover_rate = 0.7;
  double mutation_rate = 0.3;            // per offspring
  double bitmask_vs_onepoint = 0.5;      // probability of bit-mask given crossover fires
  double gaussian_sigma_fraction = 0.15;  // float mutation sigma as a fraction of the range
  int depth_limit = kDefaultDepthLimit;
  friend bool operator==(const OperatorConfig&, const OperatorConfig&) = default;
};

enum class OperatorErrorKind { StructureMismatch, AtMaxLayers, AtMinLayers, NoEligibleSite };

class OperatorError : public std::runtime_error {
 public:
  OperatorError(OperatorErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  OperatorErrorKind kind() const { return kind_; }

 private:
  OperatorErrorKind kind_;
};

namespace detail {

inline void check_same_structure(const Individual& a, const Individual& b) {
  if (a.modules.size() != b.modules.size())
    throw OperatorError(OperatorErrorKind::StructureMismatch, "parents have different module counts");
  for (std::size_t m = 0; m < a.modules.size(); ++m)
    if (a.modules[m].structure_index != b.modules[m].structure_index)
      throw OperatorError(OperatorErrorKind::StructureMismatch, "parents have mismatched module layout");
}

inline Individual offspring_shell(const Individual& parent) {
  Individual o = parent;
  o.fitness.reset();
  o.lineage = Lineage{{parent.id}, {}};
  return o;
}

// Rebuilds one module as head.slots[0:cut) followed by tail.slots[cut:),
// copying each referenced record into a fresh table. Sharing between slots
// that come from the same source module is preserved; records from the two
// sources can never merge because the new table is built from scratch.
inline ModuleGenotype splice_module(const ModuleGenotype& head, const ModuleGenotype& tail, std::size_t cut) {
  ModuleGenotype out;
  out.structure_index = head.structure_index;
  std::map<RecordId, RecordId> head_map, tail_map;
  auto append = [&out](const ModuleGenotype& src, std::size_t from, std::size_t to,
                       std::map<RecordId, RecordId>& seen) {
    for (std::size_t i = from; i < to; ++i) {
      RecordId old_id = src.slots[i];
      auto it = seen.find(old_id);
      RecordId new_id;
      if (it == seen.end()) {
        new_id = out.add_record(src.records.at(old_id).record, 0);
        seen.emplace(old_id, new_id);
      } else {
        new_id = it->second;
      }
      out.slots.push_back(new_id);
      ++out.records.at(new_id).refcount;
    }
  };
  append(head, 0, cut, head_map);
  append(tail, cut, tail.slots.size(), tail_map);
  return out;
}

inline std::string mask_to_string(const std::vector<bool>& mask) {
  std::string s;
  s.reserve(mask.size());
  for (bool bit : mask) s += bit ? '1' : '0';
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Crossover
// ---------------------------------------------------------------------------

// One-point crossover inside module m at slot boundary `cut` (1 <= cut < L,
// where L is the smaller parent's slot count in that module). The offspring
// swap slot tails; every other module is inherited whole.
inline std::pair<Individual, Individual> one_point_crossover_at(const Individual& p1, const Individual& p2,
                                                                std::size_t module_index, std::size_t cut) {
  detail::check_same_structure(p1, p2);
  if (module_index >= p1.modules.size()) throw std::invalid_argument("module index out of range");
  const std::size_t l1 = p1.modules[module_index].slots.size();
  const std::size_t l2 = p2.modules[module_index].slots.size();
  const std::size_t smaller = std::min(l1, l2);
  if (cut < 1 || cut >= smaller) throw std::invalid_argument("cut point out of range");

  Individual o1 = detail::offspring_shell(p1);
  Individual o2 = detail::offspring_shell(p2);
  o1.modules[module_index] = detail::splice_module(p1.modules[module_index], p2.modules[module_index], cut);
  o2.modules[module_index] = detail::splice_module(p2.modules[module_index], p1.modules[module_index], cut);

  std::string tag = "one-point(module=" + format_int(static_cast<long long>(module_index)) +
                    ",cut=" + format_int(static_cast<long long>(cut)) + ")";
  o1.lineage = Lineage{{p1.id, p2.id}, {tag}};
  o2.lineage = Lineage{{p2.id, p1.id}, {tag}};
  return {std::move(o1), std::move(o2)};
}

// Draws the module uniformly and the cut uniformly over [1, L-1]. When the
// chosen module has fewer than two slots in either parent there is no legal
// cut, and the offspring degrade to plain copies.
inline std::pair<Individual, Individual> one_point_crossover(const Individual& p1, const Individual& p2,
                                                             RandomStream& rng) {
  detail::check_same_structure(p1, p2);
  std::size_t m = static_cast<std::size_t>(rng.uniform_index(p1.modules.size()));
  std::size_t smaller = std::min(p1.modules[m].slots.size(), p2.modules[m].slots.size());
  if (smaller < 2) {
    Individual o1 = detail::offspring_shell(p1);
    Individual o2 = detail::offspring_shell(p2);
    std::string tag = "one-point(module=" + format_int(static_cast<long long>(m)) + ",degenerate)";
    o1.lineage = Lineage{{p1.id, p2.id}, {tag}};
    o2.lineage = Lineage{{p2.id, p1.id}, {tag}};
    return {std::move(o1), std::move(o2)};
  }
  std::size_t cut = 1 + static_cast<std::size_t>(rng.uniform_index(smaller - 1));
  return one_point_crossover_at(p1, p2, m, cut);
}

// Bit-mask crossover with an explicit mask, one bit per module. Offspring 1
// takes module i from parent 1 where mask[i] is set and from parent 2
// otherwise; offspring 2 is the complement.
inline std::pair<Individual, Individual> bitmask_crossover_with_mask(const Individual& p1, const Individual& p2,
                                                                     const std::vector<bool>& mask) {
  detail::check_same_structure(p1, p2);
  if (mask.size() != p1.modules.size()) throw std::invalid_argument("mask length must match module count");

  Individual o1 = detail::offspring_shell(p1);
  Individual o2 = detail::offspring_shell(p2);
  for (std::size_t m = 0; m < mask.size(); ++m) {
    o1.modules[m] = (mask[m] ? p1 : p2).modules[m];
    o2.modules[m] = (mask[m] ? p2 : p1).modules[m];
  }
  std::string tag = "bitmask(" + detail::mask_to_string(mask) + ")";
  o1.lineage = Lineage{{p1.id, p2.id}, {tag}};
  o2.lineage = Lineage{{p2.id, p1.id}, {tag}};
  return {std::move(o1), std::move(o2)};
}

inline std::pair<Individual, Individual> bitmask_crossover(const Individual& p1, const Individual& p2,
                                                           RandomStream& rng) {
  detail::check_same_structure(p1, p2);
  std::vector<bool> mask(p1.modules.size());
  for (std::size_t m = 0; m < mask.size(); ++m) mask[m] = rng.bernoulli(0.5);
  return bitmask_crossover_with_mask(p1, p2, mask);
}

// ---------------------------------------------------------------------------
// Mutation. All five return a modified copy; the input is never touched.
// ---------------------------------------------------------------------------

namespace detail {

inline void append_op(Individual& ind, std::uint64_t source_id, std::string tag) {
  if (!ind.lineage) ind.lineage = Lineage{{source_id}, {}};
  ind.lineage->ops.push_back(std::move(tag));
}

}  // namespace detail

// Inserts a freshly sampled layer at a uniform position.
inline Individual mutate_add_layer(const Individual& ind, std::size_t module_index, const Grammar& g,
                                   const GaStructure& s, RandomStream& rng,
                                   int depth_limit = kDefaultDepthLimit) {
  if (module_index >= ind.modules.size()) throw std::invalid_argument("module index out of range");
  const auto& entry = s.entries.at(module_index);
  Individual out = ind;
  out.fitness.reset();
  ModuleGenotype& module = out.modules[module_index];
  if (static_cast<int>(module.slots.size()) >= entry.max_layers)
    throw OperatorError(OperatorErrorKind::AtMaxLayers,
                        "module <" + entry.nonterminal + "> is at its maximum layer count");

  RecordId id = module.add_record(random_layer(g, entry.nonterminal, rng, depth_limit), 1);
  std::size_t pos = static_cast<std::size_t>(rng.uniform_index(module.slots.size() + 1));
  module.slots.insert(module.slots.begin() + pos, id);
  detail::append_op(out, ind.id,
                    "add-layer(module=" + format_int(static_cast<long long>(module_index)) +
                        ",pos=" + format_int(static_cast<long long>(pos)) + ")");
  return out;
}

// Inserts another reference to an existing slot's record (by reference, not
// by copy): subsequent mutations of that record show up at every slot that
// shares it.
inline Individual mutate_replicate_layer(const Individual& ind, std::size_t module_index,
                                         const GaStructure& s, RandomStream& rng) {
  if (module_index >= ind.modules.size()) throw std::invalid_argument("module index out of range");
  const auto& entry = s.entries.at(module_index);
  Individual out = ind;
  out.fitness.reset();
  ModuleGenotype& module = out.modules[module_index];
  if (static_cast<int>(module.slots.size()) >= entry.max_layers)
    throw OperatorError(OperatorErrorKind::AtMaxLayers,
                        "module <" + entry.nonterminal + "> is at its maximum layer count");

  std::size_t src = static_cast<std::size_t>(rng.uniform_index(module.slots.size()));
  RecordId id = module.slots[src];
  std::size_t pos = static_cast<std::size_t>(rng.uniform_index(module.slots.size() + 1));
  module.slots.insert(module.slots.begin() + pos, id);
  ++module.records.at(id).refcount;
  detail::append_op(out, ind.id,
                    "replicate-layer(module=" + format_int(static_cast<long long>(module_index)) +
                        ",src=" + format_int(static_cast<long long>(src)) +
                        ",pos=" + format_int(static_cast<long long>(pos)) + ")");
  return out;
}

// Removes a uniform slot; the record is dropped once nothing references it.
inline Individual mutate_remove_layer(const Individual& ind, std::size_t module_index,
                                      const GaStructure& s, RandomStream& rng) {
  if (module_index >= ind.modules.size()) throw std::invalid_argument("module index out of range");
  const auto& entry = s.entries.at(module_index);
  Individual out = ind;
  out.fitness.reset();
  ModuleGenotype& module = out.modules[module_index];
  if (static_cast<int>(module.slots.size()) <= entry.min_layers)
    throw OperatorError(OperatorErrorKind::AtMinLayers,
                        "module <" + entry.nonterminal + "> is at its minimum layer count");

  std::size_t pos = static_cast<std::size_t>(rng.uniform_index(module.slots.size()));
  RecordId id = module.slots[pos];
  module.slots.erase(module.slots.begin() + pos);
  auto& rec_entry = module.records.at(id);
  if (--rec_entry.refcount == 0) module.records.erase(id);
  detail::append_op(out, ind.id,
                    "remove-layer(module=" + format_int(static_cast<long long>(module_index)) +
                        ",pos=" + format_int(static_cast<long long>(pos)) + ")");
  return out;
}

namespace detail {

struct ChoiceSite {
  std::size_t module_index;
  RecordId record_id;
  std::string nonterminal;
  int occurrence;  // position within the record's per-non-terminal choice list
  int current;     // the stored index at that site
};

inline std::vector<ChoiceSite> grammatical_sites(const Grammar& g, const Individual& ind) {
  std::vector<ChoiceSite> sites;
  for (std::size_t m = 0; m < ind.modules.size(); ++m) {
    for (const auto& [id, entry] : ind.modules[m].records) {
      for (const auto& [nt, indices] : entry.record.choices) {
        if (g.alternatives_count(nt) < 2) continue;
        for (std::size_t k = 0; k < indices.size(); ++k)
          sites.push_back({m, id, nt, static_cast<int>(k), indices[k]});
      }
    }
  }
  return sites;
}

// Rebuilds a record with the choice at (target_nt, target_occurrence)
// switched to new_index. Material outside the changed site is copied as-is;
// the stored sub-derivation beneath the old choice is skipped over, and a
// fresh sub-derivation is sampled for the new alternative so the record
// still replays cleanly.
struct ChoiceRegrow {
  const Grammar& g;
  ReplayCursors cur;
  LayerRecord out;
  const std::string& target_nt;
  int target_occurrence;
  int new_index;
  RandomStream& rng;
  int depth_limit;
  std::map<std::string, int> seen;

  ChoiceRegrow(const Grammar& g_, const LayerRecord& old, const std::string& nt, int occurrence,
               int new_index_, RandomStream& rng_, int depth_limit_)
      : g(g_), cur(old), target_nt(nt), target_occurrence(occurrence), new_index(new_index_),
        rng(rng_), depth_limit(depth_limit_) {
    out.start_symbol = old.start_symbol;
  }

  void copy_walk(const std::string& nt) {
    int occurrence = seen[nt]++;
    int old_idx = cur.next_choice(g, nt);
    if (nt == target_nt && occurrence == target_occurrence) {
      out.choices[nt].push_back(new_index);
      skip_walk(g.production(nt).alternatives[old_idx]);
      fresh_walk(g.production(nt).alternatives[new_index], 1);
      return;
    }
    out.choices[nt].push_back(old_idx);
    for (const Symbol& sym : g.production(nt).alternatives[old_idx]) {
      if (const auto* child = std::get_if<NonTerminal>(&sym))
        copy_walk(child->name);
      else if (const auto* pb = std::get_if<ParamBlock>(&sym))
        out.params.push_back(cur.next_param(*pb));
    }
  }

  // Advances the old record's cursors through a subtree without emitting it.
  void skip_walk(const Alternative& alt) {
    for (const Symbol& sym : alt) {
      if (const auto* child = std::get_if<NonTerminal>(&sym)) {
        int idx = cur.next_choice(g, child->name);
        skip_walk(g.production(child->name).alternatives[idx]);
      } else if (const auto* pb = std::get_if<ParamBlock>(&sym)) {
        cur.next_param(*pb);
      }
    }
  }

  void fresh_walk(const Alternative& alt, int depth) {
    if (depth > depth_limit)
      throw GenotypeError(GenotypeErrorKind::DepthExceeded, "regrown sub-derivation exceeded depth limit");
    for (const Symbol& sym : alt) {
      if (const auto* child = std::get_if<NonTerminal>(&sym)) {
        const Production& prod = g.production(child->name);
        int idx = prod.alternatives.size() == 1 ? 0
                                                : static_cast<int>(rng.uniform_index(prod.alternatives.size()));
        out.choices[child->name].push_back(idx);
        fresh_walk(prod.alternatives[idx], depth + 1);
      } else if (const auto* pb = std::get_if<ParamBlock>(&sym)) {
        ParamValues pv{pb->name, {}};
        for (int i = 0; i < pb->count; ++i) {
          if (pb->kind == ParamKind::Int)
            pv.values.push_back(static_cast<double>(rng.uniform_int(
                static_cast<long long>(pb->min_value), static_cast<long long>(pb->max_value))));
          else
            pv.values.push_back(rng.uniform_real(pb->min_value, pb->max_value));
        }
        out.params.push_back(std::move(pv));
      }
    }
  }
};

}  // namespace detail

// Resamples one stored expansion choice (uniform over sites with at least
// two alternatives) to a different alternative and regenerates the
// sub-derivation beneath it. Shared records propagate the change to every
// referring slot.
inline Individual mutate_grammatical(const Individual& ind, const Grammar& g, RandomStream& rng,
                                     int depth_limit = kDefaultDepthLimit) {
  auto sites = detail::grammatical_sites(g, ind);
  if (sites.empty())
    throw OperatorError(OperatorErrorKind::NoEligibleSite, "no expansion choice has an alternative");
  const auto& site = sites[rng.uniform_index(sites.size())];

  const std::size_t alts = g.alternatives_count(site.nonterminal);
  int new_index = static_cast<int>(rng.uniform_index(alts - 1));
  if (new_index >= site.current) ++new_index;  // uniform over the other alternatives

  Individual out = ind;
  out.fitness.reset();
  const LayerRecord& old = out.modules[site.module_index].records.at(site.record_id).record;
  detail::ChoiceRegrow regrow(g, old, site.nonterminal, site.occurrence, new_index, rng, depth_limit);
  regrow.copy_walk(old.start_symbol);
  regrow.cur.finish();
  out.modules[site.module_index].records.at(site.record_id).record = std::move(regrow.out);

  detail::append_op(out, ind.id,
                    "grammatical(module=" + format_int(static_cast<long long>(site.module_index)) +
                        ",record=" + format_int(site.record_id) + ",site=" + site.nonterminal + "#" +
                        format_int(site.occurrence) + "," + format_int(site.current) + "->" +
                        format_int(new_index) + ")");
  return out;
}

namespace detail {

struct NumericSite {
  std::size_t module_index;
  RecordId record_id;
  std::size_t param_index;
  std::size_t value_index;
  ParamBlock block;
};

inline std::vector<NumericSite> numeric_sites(const Grammar& g, const Individual& ind) {
  std::vector<NumericSite> sites;
  for (std::size_t m = 0; m < ind.modules.size(); ++m) {
    for (const auto& [id, entry] : ind.modules[m].records) {
      auto blocks = replay_param_blocks(g, entry.record);
      for (std::size_t p = 0; p < blocks.size(); ++p)
        for (std::size_t v = 0; v < entry.record.params[p].values.size(); ++v)
          sites.push_back({m, id, p, v, blocks[p]});
    }
  }
  return sites;
}

}  // namespace detail

// Perturbs one stored parameter value (uniform over all values in the
// individual): integers are redrawn uniformly from their range, floats get
// Gaussian noise with sigma = gaussian_sigma_fraction * (max - min), clamped
// to the range.
inline Individual mutate_numeric(const Individual& ind, const Grammar& g, RandomStream& rng,
                                 const OperatorConfig& cfg = {}) {
  auto sites = detail::numeric_sites(g, ind);
  if (sites.empty())
    throw OperatorError(OperatorErrorKind::NoEligibleSite, "individual stores no parameter values");
  const auto& site = sites[rng.uniform_index(sites.size())];

  Individual out = ind;
  out.fitness.reset();
  double& value =
      out.modules[site.module_index].records.at(site.record_id).record.params[site.param_index].values[site.value_index];
  if (site.block.kind == ParamKind::Int) {
    value = static_cast<double>(rng.uniform_int(static_cast<long long>(site.block.min_value),
                                                static_cast<long long>(site.block.max_value)));
  } else {
    double sigma = cfg.gaussian_sigma_fraction * (site.block.max_value - site.block.min_value);
    value = std::clamp(value + rng.gaussian(0.0, sigma), site.block.min_value, site.block.max_value);
  }
  detail::append_op(out, ind.id,
                    "numeric(module=" + format_int(static_cast<long long>(site.module_index)) +
                        ",record=" + format_int(site.record_id) + ",param=" + site.block.name + "[" +
                        format_int(static_cast<long long>(site.value_index)) + "])");
  return out;
}

// ---------------------------------------------------------------------------
// Variation pipeline
// ---------------------------------------------------------------------------

namespace detail {

enum class MutationKind { Add, Replicate, Remove, Grammatical, Numeric };

inline std::vector<std::size_t> modules_below_max(const Individual& ind, const GaStructure& s) {
  std::vector<std::size_t> out;
  for (std::size_t m = 0; m < ind.modules.size(); ++m)
    if (static_cast<int>(ind.modules[m].slots.size()) < s.entries[m].max_layers) out.push_back(m);
  return out;
}

inline std::vector<std::size_t> modules_above_min(const Individual& ind, const GaStructure& s) {
  std::vector<std::size_t> out;
  for (std::size_t m = 0; m < ind.modules.size(); ++m)
    if (static_cast<int>(ind.modules[m].slots.size()) > s.entries[m].min_layers) out.push_back(m);
  return out;
}

inline Individual mutate_one(const Individual& ind, const Grammar& g, const GaStructure& s,
                             const OperatorConfig& cfg, RandomStream& rng) {
  std::vector<MutationKind> applicable;
  auto growable = modules_below_max(ind, s);
  auto shrinkable = modules_above_min(ind, s);
  if (!growable.empty()) {
    applicable.push_back(MutationKind::Add);
    applicable.push_back(MutationKind::Replicate);
  }
  if (!shrinkable.empty()) applicable.push_back(MutationKind::Remove);
  if (!grammatical_sites(g, ind).empty()) applicable.push_back(MutationKind::Grammatical);
  if (!numeric_sites(g, ind).empty()) applicable.push_back(MutationKind::Numeric);
  if (applicable.empty()) return ind;  // pass through unchanged

  // Drawing uniformly over the applicable categories is the stationary form
  // of drawing over all five and redrawing on an inapplicable pick.
  MutationKind kind = applicable[rng.uniform_index(applicable.size())];
  switch (kind) {
    case MutationKind::Add:
      return mutate_add_layer(ind, growable[rng.uniform_index(growable.size())], g, s, rng, cfg.depth_limit);
    case MutationKind::Replicate:
      return mutate_replicate_layer(ind, growable[rng.uniform_index(growable.size())], s, rng);
    case MutationKind::Remove:
      return mutate_remove_layer(ind, shrinkable[rng.uniform_index(shrinkable.size())], s, rng);
    case MutationKind::Grammatical:
      return mutate_grammatical(ind, g, rng, cfg.depth_limit);
    case MutationKind::Numeric:
      return mutate_numeric(ind, g, rng, cfg);
  }
  return ind;  // unreachable
}

}  // namespace detail

// Composes crossover and mutation for one offspring pair. With probability
// crossover_rate one of the two crossovers runs (bit-mask with probability
// bitmask_vs_onepoint, one-point otherwise); otherwise the offspring start
// as copies of the parents. Each offspring is then independently mutated
// with probability mutation_rate by exactly one mutation.
inline std::pair<Individual, Individual> apply_variation(const Individual& p1, const Individual& p2,
                                                         const Grammar& g, const GaStructure& s,
                                                         const OperatorConfig& cfg, RandomStream& rng) {
  detail::check_same_structure(p1, p2);

  std::pair<Individual, Individual> offspring = [&] {
    if (rng.bernoulli(cfg.crossover_rate)) {
      if (rng.bernoulli(cfg.bitmask_vs_onepoint)) return bitmask_crossover(p1, p2, rng);
      return one_point_crossover(p1, p2, rng);
    }
    auto o1 = detail::offspring_shell(p1);
    auto o2 = detail::offspring_shell(p2);
    o1.lineage->ops.push_back("clone");
    o2.lineage->ops.push_back("clone");
    return std::make_pair(std::move(o1), std::move(o2));
  }();

  if (rng.bernoulli(cfg.mutation_rate))
    offspring.first = detail::mutate_one(offspring.first, g, s, cfg, rng);
  if (rng.bernoulli(cfg.mutation_rate))
    offspring.second = detail::mutate_one(offspring.second, g, s, cfg, rng);
  return offspring;
}

}  // namespace gramevo
