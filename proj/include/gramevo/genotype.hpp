#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gramevo/format.hpp"
#include "gramevo/grammar.hpp"
#include "gramevo/phenotype.hpp"
#include "gramevo/rng.hpp"

namespace gramevo {

// ---------------------------------------------------------------------------
// Two-level genotype.
//
// Outer level: an ordered list of modules, one per structure entry, each
// holding a variable-length list of layer slots. Inner level: each slot
// references a layer record — a stored derivation of the module's start
// symbol, kept as per-non-terminal lists of expansion choices plus the
// materialized numeric parameters in derivation order. Slots within one
// module may share a record (replication); the record table tracks the
// reference counts.
// ---------------------------------------------------------------------------

using RecordId = std::uint32_t;

struct ParamValues {
  std::string name;
  std::vector<double> values;
  friend bool operator==(const ParamValues&, const ParamValues&) = default;
};

struct LayerRecord {
  std::string start_symbol;
  std::map<std::string, std::vector<int>> choices;  // non-terminal -> indices in consumption order
  std::vector<ParamValues> params;                  // in derivation encounter order
  friend bool operator==(const LayerRecord&, const LayerRecord&) = default;
};

struct RecordEntry {
  LayerRecord record;
  int refcount = 0;
  friend bool operator==(const RecordEntry&, const RecordEntry&) = default;
};

struct ModuleGenotype {
  std::size_t structure_index = 0;
  std::vector<RecordId> slots;
  std::map<RecordId, RecordEntry> records;
  RecordId next_record_id = 0;

  RecordId add_record(LayerRecord rec, int refcount = 0) {
    RecordId id = next_record_id++;
    records.emplace(id, RecordEntry{std::move(rec), refcount});
    return id;
  }

  friend bool operator==(const ModuleGenotype&, const ModuleGenotype&) = default;
};

struct Lineage {
  std::vector<std::uint64_t> parents;
  std::vector<std::string> ops;
  friend bool operator==(const Lineage&, const Lineage&) = default;
};

struct Individual {
  std::uint64_t id = 0;
  std::vector<ModuleGenotype> modules;
  std::optional<double> fitness;
  std::optional<Lineage> lineage;
  friend bool operator==(const Individual&, const Individual&) = default;
};

enum class GenotypeErrorKind { DepthExceeded, InvalidGenotype };

class GenotypeError : public std::runtime_error {
 public:
  GenotypeError(GenotypeErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  GenotypeErrorKind kind() const { return kind_; }

 private:
  GenotypeErrorKind kind_;
};

inline constexpr int kDefaultDepthLimit = 50;

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

namespace detail {

inline void sample_derivation(const Grammar& g, const std::string& nt, LayerRecord& rec,
                              RandomStream& rng, int depth, int depth_limit) {
  if (depth > depth_limit)
    throw GenotypeError(GenotypeErrorKind::DepthExceeded,
                        "derivation of <" + rec.start_symbol + "> exceeded depth limit " +
                            format_int(depth_limit));
  const Production& prod = g.production(nt);
  const std::size_t alts = prod.alternatives.size();
  int idx = alts == 1 ? 0 : static_cast<int>(rng.uniform_index(alts));
  rec.choices[nt].push_back(idx);
  for (const Symbol& sym : prod.alternatives[idx]) {
    if (const auto* child = std::get_if<NonTerminal>(&sym)) {
      sample_derivation(g, child->name, rec, rng, depth + 1, depth_limit);
    } else if (const auto* pb = std::get_if<ParamBlock>(&sym)) {
      ParamValues pv{pb->name, {}};
      pv.values.reserve(pb->count);
      for (int i = 0; i < pb->count; ++i) {
        if (pb->kind == ParamKind::Int)
          pv.values.push_back(static_cast<double>(rng.uniform_int(
              static_cast<long long>(pb->min_value), static_cast<long long>(pb->max_value))));
        else
          pv.values.push_back(rng.uniform_real(pb->min_value, pb->max_value));
      }
      rec.params.push_back(std::move(pv));
    }
    // TerminalAttr carries no genetic material.
  }
}

}  // namespace detail

// Samples a complete derivation of `start`, choosing uniformly at each
// expansion and drawing parameter values uniformly from their ranges.
inline LayerRecord random_layer(const Grammar& g, const std::string& start, RandomStream& rng,
                                int depth_limit = kDefaultDepthLimit) {
  LayerRecord rec;
  rec.start_symbol = start;
  detail::sample_derivation(g, start, rec, rng, 1, depth_limit);
  return rec;
}

// Samples a full individual: per module a slot count uniform over the
// structure bounds, each slot holding a fresh record.
inline Individual random_individual(const Grammar& g, const GaStructure& s, RandomStream& rng,
                                    int depth_limit = kDefaultDepthLimit) {
  Individual ind;
  ind.modules.reserve(s.entries.size());
  for (std::size_t m = 0; m < s.entries.size(); ++m) {
    const auto& entry = s.entries[m];
    if (entry.min_layers < 1 || entry.min_layers > entry.max_layers)
      throw std::invalid_argument("structure entry <" + entry.nonterminal + "> has invalid bounds");
    ModuleGenotype module;
    module.structure_index = m;
    int count = static_cast<int>(rng.uniform_int(entry.min_layers, entry.max_layers));
    for (int i = 0; i < count; ++i) {
      RecordId id = module.add_record(random_layer(g, entry.nonterminal, rng, depth_limit), 1);
      module.slots.push_back(id);
    }
    ind.modules.push_back(std::move(module));
  }
  return ind;
}

// ---------------------------------------------------------------------------
// Replay (decode)
// ---------------------------------------------------------------------------

namespace detail {

struct ReplayCursors {
  const LayerRecord& rec;
  std::map<std::string, std::size_t> choice_pos;
  std::size_t param_pos = 0;

  explicit ReplayCursors(const LayerRecord& r) : rec(r) {}

  int next_choice(const Grammar& g, const std::string& nt) {
    auto it = rec.choices.find(nt);
    std::size_t& pos = choice_pos[nt];
    if (it == rec.choices.end() || pos >= it->second.size())
      throw GenotypeError(GenotypeErrorKind::InvalidGenotype,
                          "record ran out of choices for <" + nt + ">");
    int idx = it->second[pos++];
    if (idx < 0 || static_cast<std::size_t>(idx) >= g.alternatives_count(nt))
      throw GenotypeError(GenotypeErrorKind::InvalidGenotype,
                          "choice index " + format_int(idx) + " out of range for <" + nt + ">");
    return idx;
  }

  const ParamValues& next_param(const ParamBlock& pb) {
    if (param_pos >= rec.params.size())
      throw GenotypeError(GenotypeErrorKind::InvalidGenotype,
                          "record ran out of parameter values at [" + pb.name + "]");
    const ParamValues& pv = rec.params[param_pos++];
    if (pv.name != pb.name)
      throw GenotypeError(GenotypeErrorKind::InvalidGenotype,
                          "parameter name mismatch: stored '" + pv.name + "', grammar wants '" + pb.name + "'");
    if (pv.values.size() != static_cast<std::size_t>(pb.count))
      throw GenotypeError(GenotypeErrorKind::InvalidGenotype,
                          "parameter [" + pb.name + "] holds " + format_int(static_cast<long long>(pv.values.size())) +
                              " values, grammar wants " + format_int(pb.count));
    for (double v : pv.values) {
      if (v < pb.min_value || v > pb.max_value)
        throw GenotypeError(GenotypeErrorKind::InvalidGenotype,
                            "parameter [" + pb.name + "] value " + format_double(v) + " out of range");
      if (pb.kind == ParamKind::Int && v != static_cast<double>(static_cast<long long>(v)))
        throw GenotypeError(GenotypeErrorKind::InvalidGenotype,
                            "parameter [" + pb.name + "] value " + format_double(v) + " is not an integer");
    }
    return pv;
  }

  void finish() const {
    for (const auto& [nt, indices] : rec.choices) {
      auto it = choice_pos.find(nt);
      std::size_t used = it == choice_pos.end() ? 0 : it->second;
      if (used != indices.size())
        throw GenotypeError(GenotypeErrorKind::InvalidGenotype,
                            "record holds unused choices for <" + nt + ">");
    }
    if (param_pos != rec.params.size())
      throw GenotypeError(GenotypeErrorKind::InvalidGenotype, "record holds unused parameter values");
  }
};

inline std::string format_param(const ParamBlock& pb, const ParamValues& pv) {
  std::string out;
  for (std::size_t i = 0; i < pv.values.size(); ++i) {
    if (i) out += ",";
    out += pb.kind == ParamKind::Int ? format_int(static_cast<long long>(pv.values[i]))
                                     : format_double(pv.values[i]);
  }
  return out;
}

template <class ChoiceFn, class ParamFn, class AttrFn>
void replay(const Grammar& g, const std::string& nt, ReplayCursors& cur, ChoiceFn&& on_choice,
            ParamFn&& on_param, AttrFn&& on_attr) {
  int idx = cur.next_choice(g, nt);
  on_choice(nt, idx);
  for (const Symbol& sym : g.production(nt).alternatives[idx]) {
    if (const auto* child = std::get_if<NonTerminal>(&sym))
      replay(g, child->name, cur, on_choice, on_param, on_attr);
    else if (const auto* pb = std::get_if<ParamBlock>(&sym))
      on_param(*pb, cur.next_param(*pb));
    else
      on_attr(std::get<TerminalAttr>(sym));
  }
}

}  // namespace detail

// Replays a stored derivation into the flat (key, value) attribute list.
// Pure: the same record always decodes to the same list.
inline AttrList decode_layer(const Grammar& g, const LayerRecord& rec) {
  AttrList out;
  detail::ReplayCursors cur(rec);
  detail::replay(
      g, rec.start_symbol, cur, [](const std::string&, int) {},
      [&out](const ParamBlock& pb, const ParamValues& pv) {
        out.emplace_back(pb.name, detail::format_param(pb, pv));
      },
      [&out](const TerminalAttr& attr) { out.emplace_back(attr.key, attr.value); });
  cur.finish();
  return out;
}

// Parameter blocks a record's derivation walks through, in encounter order;
// position i corresponds to rec.params[i]. Used by mutation to recover each
// stored value's kind and range.
inline std::vector<ParamBlock> replay_param_blocks(const Grammar& g, const LayerRecord& rec) {
  std::vector<ParamBlock> blocks;
  detail::ReplayCursors cur(rec);
  detail::replay(
      g, rec.start_symbol, cur, [](const std::string&, int) {},
      [&blocks](const ParamBlock& pb, const ParamValues&) { blocks.push_back(pb); },
      [](const TerminalAttr&) {});
  cur.finish();
  return blocks;
}

// Decodes a full individual into a network descriptor. Layers whose first
// pair key is `learning` or `augmentation` are routed into the matching
// descriptor section instead of the layer list.
inline NetworkDescriptor decode_individual(const Grammar& g, const Individual& ind) {
  NetworkDescriptor nd;
  for (const auto& module : ind.modules) {
    for (RecordId slot : module.slots) {
      auto it = module.records.find(slot);
      if (it == module.records.end())
        throw GenotypeError(GenotypeErrorKind::InvalidGenotype,
                            "slot references missing record " + format_int(slot));
      AttrList pairs = decode_layer(g, it->second.record);
      if (pairs.empty())
        throw GenotypeError(GenotypeErrorKind::InvalidGenotype, "record decoded to no attributes");

      const std::string& first_key = pairs.front().first;
      if (first_key == "learning") {
        nd.learning.insert(nd.learning.end(), pairs.begin(), pairs.end());
        continue;
      }
      if (first_key == "augmentation") {
        nd.augmentation.insert(nd.augmentation.end(), pairs.begin(), pairs.end());
        continue;
      }

      LayerDescriptor layer;
      layer.kind = first_key == "layer" ? pairs.front().second : std::string();
      std::set<std::string> seen;
      for (const auto& [k, v] : pairs) {
        if (!seen.insert(k).second)
          throw GenotypeError(GenotypeErrorKind::InvalidGenotype,
                              "layer decoded with duplicate attribute '" + k + "'");
      }
      layer.attrs = std::move(pairs);
      nd.layers.push_back(std::move(layer));
    }
  }
  if (nd.layers.empty())
    throw GenotypeError(GenotypeErrorKind::InvalidGenotype, "individual decodes to no network layers");
  return nd;
}

// Individuals are value types, so copying already duplicates every record
// table; this exists to make the intent explicit at call sites.
inline Individual deep_copy(const Individual& ind) { return ind; }

// ---------------------------------------------------------------------------
// Audit: structural invariants, used by fuzz tests and optional per-generation
// sweeps. Throws GenotypeError on the first violation.
// ---------------------------------------------------------------------------

inline void audit_individual(const Grammar& g, const GaStructure& s, const Individual& ind) {
  if (ind.modules.size() != s.entries.size())
    throw GenotypeError(GenotypeErrorKind::InvalidGenotype, "module count does not match structure");
  for (std::size_t m = 0; m < ind.modules.size(); ++m) {
    const auto& module = ind.modules[m];
    const auto& entry = s.entries[m];
    if (module.structure_index != m)
      throw GenotypeError(GenotypeErrorKind::InvalidGenotype, "module structure_index out of order");
    int count = static_cast<int>(module.slots.size());
    if (count < entry.min_layers || count > entry.max_layers)
      throw GenotypeError(GenotypeErrorKind::InvalidGenotype,
                          "module <" + entry.nonterminal + "> has " + format_int(count) +
                              " slots, outside [" + format_int(entry.min_layers) + "," +
                              format_int(entry.max_layers) + "]");

    std::map<RecordId, int> used;
    for (RecordId slot : module.slots) {
      if (!module.records.count(slot))
        throw GenotypeError(GenotypeErrorKind::InvalidGenotype,
                            "slot references missing record " + format_int(slot));
      ++used[slot];
    }
    for (const auto& [id, rec_entry] : module.records) {
      auto it = used.find(id);
      int referrers = it == used.end() ? 0 : it->second;
      if (referrers == 0)
        throw GenotypeError(GenotypeErrorKind::InvalidGenotype, "orphan record " + format_int(id));
      if (rec_entry.refcount != referrers)
        throw GenotypeError(GenotypeErrorKind::InvalidGenotype,
                            "record " + format_int(id) + " refcount " + format_int(rec_entry.refcount) +
                                " != " + format_int(referrers) + " referrers");
      if (rec_entry.record.start_symbol != entry.nonterminal)
        throw GenotypeError(GenotypeErrorKind::InvalidGenotype,
                            "record " + format_int(id) + " start symbol does not match module");
      if (id >= module.next_record_id)
        throw GenotypeError(GenotypeErrorKind::InvalidGenotype,
                            "record id " + format_int(id) + " not below next_record_id");
      decode_layer(g, rec_entry.record);  // replay validity, ranges, integrality
    }
  }
}

// ---------------------------------------------------------------------------
// JSON serialization
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json individual_to_json(const Individual& ind) {
  nlohmann::ordered_json doc;
  doc["id"] = ind.id;
  doc["modules"] = nlohmann::ordered_json::array();
  for (const auto& module : ind.modules) {
    nlohmann::ordered_json mj;
    mj["structure_index"] = module.structure_index;
    mj["slots"] = module.slots;
    mj["next_record_id"] = module.next_record_id;
    nlohmann::ordered_json records = nlohmann::ordered_json::object();
    for (const auto& [id, entry] : module.records) {
      nlohmann::ordered_json rj;
      rj["start"] = entry.record.start_symbol;
      nlohmann::ordered_json choices = nlohmann::ordered_json::object();
      for (const auto& [nt, indices] : entry.record.choices) choices[nt] = indices;
      rj["choices"] = std::move(choices);
      nlohmann::ordered_json params = nlohmann::ordered_json::array();
      for (const auto& pv : entry.record.params) {
        nlohmann::ordered_json pj;
        pj["name"] = pv.name;
        pj["values"] = pv.values;
        params.push_back(std::move(pj));
      }
      rj["params"] = std::move(params);
      records[format_int(id)] = std::move(rj);
    }
    mj["records"] = std::move(records);
    doc["modules"].push_back(std::move(mj));
  }
  if (ind.fitness)
    doc["fitness"] = *ind.fitness;
  else
    doc["fitness"] = nullptr;
  if (ind.lineage) {
    nlohmann::ordered_json lj;
    lj["parents"] = ind.lineage->parents;
    lj["ops"] = ind.lineage->ops;
    doc["lineage"] = std::move(lj);
  } else {
    doc["lineage"] = nullptr;
  }
  return doc;
}

inline Individual individual_from_json(const nlohmann::ordered_json& doc) {
  try {
    Individual ind;
    ind.id = doc.at("id").get<std::uint64_t>();
    for (const auto& mj : doc.at("modules")) {
      ModuleGenotype module;
      module.structure_index = mj.at("structure_index").get<std::size_t>();
      module.slots = mj.at("slots").get<std::vector<RecordId>>();
      module.next_record_id = mj.at("next_record_id").get<RecordId>();
      for (auto it = mj.at("records").begin(); it != mj.at("records").end(); ++it) {
        long long id = 0;
        if (!parse_long(it.key(), id) || id < 0)
          throw GenotypeError(GenotypeErrorKind::InvalidGenotype, "bad record id '" + it.key() + "'");
        RecordEntry entry;
        entry.record.start_symbol = it.value().at("start").get<std::string>();
        for (auto c = it.value().at("choices").begin(); c != it.value().at("choices").end(); ++c)
          entry.record.choices[c.key()] = c.value().get<std::vector<int>>();
        for (const auto& pj : it.value().at("params")) {
          ParamValues pv;
          pv.name = pj.at("name").get<std::string>();
          pv.values = pj.at("values").get<std::vector<double>>();
          entry.record.params.push_back(std::move(pv));
        }
        module.records.emplace(static_cast<RecordId>(id), std::move(entry));
      }
      // Reference counts are derived, not trusted from the file.
      for (RecordId slot : module.slots) {
        auto rec = module.records.find(slot);
        if (rec == module.records.end())
          throw GenotypeError(GenotypeErrorKind::InvalidGenotype,
                              "slot references missing record " + format_int(slot));
        ++rec->second.refcount;
      }
      ind.modules.push_back(std::move(module));
    }
    if (doc.contains("fitness") && !doc.at("fitness").is_null())
      ind.fitness = doc.at("fitness").get<double>();
    if (doc.contains("lineage") && !doc.at("lineage").is_null()) {
      Lineage lineage;
      lineage.parents = doc.at("lineage").at("parents").get<std::vector<std::uint64_t>>();
      lineage.ops = doc.at("lineage").at("ops").get<std::vector<std::string>>();
      ind.lineage = std::move(lineage);
    }
    return ind;
  } catch (const nlohmann::json::exception& e) {
    throw GenotypeError(GenotypeErrorKind::InvalidGenotype,
                        std::string("malformed individual JSON: ") + e.what());
  }
}

}  // namespace gramevo
