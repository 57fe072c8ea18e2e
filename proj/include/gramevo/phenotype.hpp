#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "gramevo/format.hpp"

namespace gramevo {

// ---------------------------------------------------------------------------
// Network descriptors: the decoded, grammar-independent form of a genotype.
// A layer is an ordered list of (key, value) attribute pairs; for network
// layers the first pair is (layer, kind). Learning and augmentation entries
// decoded from the genotype are routed into their own sections.
// ---------------------------------------------------------------------------

using AttrList = std::vector<std::pair<std::string, std::string>>;

struct LayerDescriptor {
  std::string kind;  // conv, pool-avg, pool-max, fc, ... ; empty if the layer has no (layer, kind) pair
  AttrList attrs;    // all pairs in decode order, including the leading (layer, kind)

  const std::string* attr(const std::string& key) const {
    for (const auto& [k, v] : attrs)
      if (k == key) return &v;
    return nullptr;
  }

  friend bool operator==(const LayerDescriptor&, const LayerDescriptor&) = default;
};

struct NetworkDescriptor {
  std::vector<LayerDescriptor> layers;
  AttrList learning;      // e.g. (learning, gradient-descent), (lr, 0.01)
  AttrList augmentation;  // exported configuration only; never applied by the trainer
  std::optional<int> output_units_override;

  friend bool operator==(const NetworkDescriptor&, const NetworkDescriptor&) = default;
};

enum class PhenotypeErrorKind { MissingAttr, MalformedAttr, LastLayerNotDense };

class PhenotypeError : public std::runtime_error {
 public:
  PhenotypeError(PhenotypeErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  PhenotypeErrorKind kind() const { return kind_; }

 private:
  PhenotypeErrorKind kind_;
};

// Canonical text form: one line per layer of space-separated key:value
// pairs, then the learning and augmentation sections on their own lines.
inline std::string render(const NetworkDescriptor& nd) {
  std::string out;
  auto append_line = [&out](const AttrList& attrs) {
    for (std::size_t i = 0; i < attrs.size(); ++i) {
      if (i) out += " ";
      out += attrs[i].first + ":" + attrs[i].second;
    }
    out += "\n";
  };
  for (const auto& layer : nd.layers) append_line(layer.attrs);
  if (!nd.learning.empty()) append_line(nd.learning);
  if (!nd.augmentation.empty()) append_line(nd.augmentation);
  return out;
}

// ---------------------------------------------------------------------------
// Shape propagation
// ---------------------------------------------------------------------------

struct SpatialShape {
  long long h = 0, w = 0, c = 0;
  friend bool operator==(const SpatialShape&, const SpatialShape&) = default;
};

struct UnitsShape {
  long long units = 0;
  friend bool operator==(const UnitsShape&, const UnitsShape&) = default;
};

using LayerShape = std::variant<SpatialShape, UnitsShape>;

struct ShapeFailure {
  std::size_t layer_index = 0;
  std::string reason;
};

struct ShapeReport {
  bool valid = false;
  std::vector<LayerShape> per_layer_shapes;  // shape after each layer, up to the failure
  std::optional<ShapeFailure> failure;
};

namespace detail {

inline long long require_int_attr(const LayerDescriptor& layer, std::size_t index, const std::string& key) {
  const std::string* v = layer.attr(key);
  if (!v)
    throw PhenotypeError(PhenotypeErrorKind::MissingAttr,
                         "layer " + format_int(static_cast<long long>(index)) + " is missing attribute '" + key + "'");
  long long out = 0;
  if (!parse_long(*v, out))
    throw PhenotypeError(PhenotypeErrorKind::MalformedAttr,
                         "layer " + format_int(static_cast<long long>(index)) + " attribute '" + key +
                             "' is not an integer: " + *v);
  return out;
}

// Kernel size attribute: convolution layers name it filter-shape, pooling
// layers kernel-size; accept either spelling for both kinds.
inline long long kernel_attr(const LayerDescriptor& layer, std::size_t index) {
  if (layer.attr("kernel-size")) return require_int_attr(layer, index, "kernel-size");
  return require_int_attr(layer, index, "filter-shape");
}

// Output extent of one spatial dimension; 0 or negative means invalid.
// same:  ceil(in / stride)
// valid: floor((in - k) / stride) + 1
inline long long window_out(long long in, long long k, long long stride, bool same) {
  if (same) return (in + stride - 1) / stride;
  if (in < k) return 0;
  return (in - k) / stride + 1;
}

}  // namespace detail

// Propagates an input shape through the descriptor. Dense layers flatten
// whatever precedes them; a spatial layer after a dense layer is a failure,
// as is any dimension falling below 1. Unknown layer kinds pass the shape
// through unchanged.
inline ShapeReport check_shapes(const NetworkDescriptor& nd, const SpatialShape& input) {
  if (input.h < 1 || input.w < 1 || input.c < 1)
    throw std::invalid_argument("input shape dimensions must be positive");

  ShapeReport report;
  LayerShape current = input;

  for (std::size_t i = 0; i < nd.layers.size(); ++i) {
    const auto& layer = nd.layers[i];
    const std::string& kind = layer.kind;
    bool is_conv = kind == "conv";
    bool is_pool = kind == "pool-avg" || kind == "pool-max";

    if (is_conv || is_pool) {
      if (std::holds_alternative<UnitsShape>(current)) {
        report.failure = {i, "spatial layer after a dense layer"};
        break;
      }
      auto spatial = std::get<SpatialShape>(current);
      long long k = detail::kernel_attr(layer, i);
      long long stride = detail::require_int_attr(layer, i, "stride");
      if (k < 1 || stride < 1)
        throw PhenotypeError(PhenotypeErrorKind::MalformedAttr,
                             "layer " + format_int(static_cast<long long>(i)) + " has non-positive kernel or stride");
      const std::string* padding = layer.attr("padding");
      if (!padding)
        throw PhenotypeError(PhenotypeErrorKind::MissingAttr,
                             "layer " + format_int(static_cast<long long>(i)) + " is missing attribute 'padding'");
      if (*padding != "same" && *padding != "valid")
        throw PhenotypeError(PhenotypeErrorKind::MalformedAttr,
                             "layer " + format_int(static_cast<long long>(i)) + " has unknown padding '" + *padding + "'");
      bool same = *padding == "same";

      SpatialShape next;
      next.h = detail::window_out(spatial.h, k, stride, same);
      next.w = detail::window_out(spatial.w, k, stride, same);
      next.c = is_conv ? detail::require_int_attr(layer, i, "num-filters") : spatial.c;
      if (next.h < 1 || next.w < 1 || next.c < 1) {
        report.failure = {i, "non-positive dimension"};
        break;
      }
      current = next;
    } else if (kind == "fc") {
      long long units = detail::require_int_attr(layer, i, "num-units");
      if (units < 1) {
        report.failure = {i, "non-positive dimension"};
        break;
      }
      current = UnitsShape{units};  // flattening of any spatial input is implied
    } else {
      // Unknown kind: shape preserving.
    }
    report.per_layer_shapes.push_back(current);
  }

  report.valid = !report.failure.has_value();
  return report;
}

// Returns a copy whose final dense layer is rewritten to `units` outputs
// (used to retarget a fixed-output grammar at a dataset with a different
// class count). The last layer must be a dense layer.
inline NetworkDescriptor apply_output_override(const NetworkDescriptor& nd, int units) {
  if (units < 1) throw std::invalid_argument("output units must be positive");
  if (nd.layers.empty() || nd.layers.back().kind != "fc")
    throw PhenotypeError(PhenotypeErrorKind::LastLayerNotDense, "output override requires a final dense layer");
  NetworkDescriptor out = nd;
  auto& last = out.layers.back();
  for (auto& [k, v] : last.attrs) {
    if (k == "num-units") {
      v = format_int(units);
      return out;
    }
  }
  throw PhenotypeError(PhenotypeErrorKind::MissingAttr, "final dense layer has no num-units attribute");
}

// ---------------------------------------------------------------------------
// JSON import/export. Values are typed: True/False become booleans, numeric
// strings become numbers, comma-joined numeric tuples become arrays; key
// order is preserved. The leading (layer, kind) pair is emitted as "kind".
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::ordered_json typed_value(const std::string& s) {
  if (s == "True") return true;
  if (s == "False") return false;
  long long i = 0;
  if (parse_long(s, i)) return i;
  double d = 0;
  if (parse_double(s, d)) return d;
  if (s.find(',') != std::string::npos) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    bool all_numeric = true;
    for (auto part : split(s, ',')) {
      long long pi = 0;
      double pd = 0;
      if (parse_long(part, pi))
        arr.push_back(pi);
      else if (parse_double(part, pd))
        arr.push_back(pd);
      else {
        all_numeric = false;
        break;
      }
    }
    if (all_numeric) return arr;
  }
  return s;
}

inline std::string untyped_value(const nlohmann::ordered_json& v) {
  if (v.is_boolean()) return v.get<bool>() ? "True" : "False";
  if (v.is_number_integer()) return format_int(v.get<long long>());
  if (v.is_number_unsigned()) return format_int(static_cast<long long>(v.get<unsigned long long>()));
  if (v.is_number_float()) return format_double(v.get<double>());
  if (v.is_string()) return v.get<std::string>();
  if (v.is_array()) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out += ",";
      out += untyped_value(v[i]);
    }
    return out;
  }
  throw PhenotypeError(PhenotypeErrorKind::MalformedAttr, "unsupported JSON value in descriptor");
}

inline nlohmann::ordered_json attrs_to_json(const AttrList& attrs) {
  nlohmann::ordered_json obj = nlohmann::ordered_json::object();
  for (const auto& [k, v] : attrs) obj[k] = typed_value(v);
  return obj;
}

inline AttrList attrs_from_json(const nlohmann::ordered_json& obj) {
  AttrList attrs;
  for (auto it = obj.begin(); it != obj.end(); ++it) attrs.emplace_back(it.key(), untyped_value(it.value()));
  return attrs;
}

}  // namespace detail

inline nlohmann::ordered_json export_json(const NetworkDescriptor& nd) {
  nlohmann::ordered_json doc;
  doc["layers"] = nlohmann::ordered_json::array();
  for (const auto& layer : nd.layers) {
    nlohmann::ordered_json obj = nlohmann::ordered_json::object();
    obj["kind"] = layer.kind;
    for (const auto& [k, v] : layer.attrs) {
      if (k == "layer" && v == layer.kind) continue;  // folded into "kind"
      obj[k] = detail::typed_value(v);
    }
    doc["layers"].push_back(std::move(obj));
  }
  doc["learning"] = detail::attrs_to_json(nd.learning);
  doc["augmentation"] = detail::attrs_to_json(nd.augmentation);
  if (nd.output_units_override) doc["output-units-override"] = *nd.output_units_override;
  return doc;
}

inline NetworkDescriptor descriptor_from_json(const nlohmann::ordered_json& doc) {
  NetworkDescriptor nd;
  if (!doc.contains("layers") || !doc["layers"].is_array())
    throw PhenotypeError(PhenotypeErrorKind::MalformedAttr, "descriptor JSON needs a layers array");
  for (const auto& obj : doc["layers"]) {
    LayerDescriptor layer;
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (it.key() == "kind") {
        layer.kind = it.value().get<std::string>();
        if (!layer.kind.empty()) layer.attrs.emplace_back("layer", layer.kind);
      } else {
        layer.attrs.emplace_back(it.key(), detail::untyped_value(it.value()));
      }
    }
    nd.layers.push_back(std::move(layer));
  }
  if (doc.contains("learning")) nd.learning = detail::attrs_from_json(doc["learning"]);
  if (doc.contains("augmentation")) nd.augmentation = detail::attrs_from_json(doc["augmentation"]);
  if (doc.contains("output-units-override")) nd.output_units_override = doc["output-units-override"].get<int>();
  return nd;
}

}  // namespace gramevo
