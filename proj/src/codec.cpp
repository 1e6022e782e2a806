#include "tabsynth/codec.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "tabsynth/error.h"

namespace tabsynth {

std::optional<std::size_t> EncodingLayout::alpha_segment(std::size_t codec) const {
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (segments[i].codec == codec && segments[i].kind == SegmentKind::Alpha) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> EncodingLayout::one_hot_segment(std::size_t codec) const {
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (segments[i].codec == codec && segments[i].kind != SegmentKind::Alpha) return i;
  }
  return std::nullopt;
}

std::size_t CodecBundle::codec_index(std::string_view column) const {
  for (std::size_t i = 0; i < codecs.size(); ++i) {
    if (codecs[i].column == column) return i;
  }
  throw InputError("no codec for column '" + std::string(column) + "'");
}

void NumericCodec::index_slots() {
  slots.clear();
  // Location of each slot; long-tail columns compare in compressed units.
  std::vector<std::pair<double, ModeSlot>> located;
  for (std::size_t i = 0; i < categorical_values.size(); ++i) {
    double where = categorical_values[i];
    if (long_tail) {
      const double shifted = where - long_tail->lower + long_tail->epsilon;
      where = long_tail->lower > 0.0 ? (where > 0.0 ? std::log(where) : -std::numeric_limits<double>::infinity())
                                     : (shifted > 0.0 ? std::log(shifted) : -std::numeric_limits<double>::infinity());
    }
    located.push_back({where, {ModeSlot::Kind::Value, i}});
  }
  for (std::size_t k = 0; k < gmm.modes.size(); ++k) {
    located.push_back({gmm.modes[k].mean, {ModeSlot::Kind::Continuous, k}});
  }
  std::stable_sort(located.begin(), located.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  value_slot.assign(categorical_values.size(), 0);
  continuous_slot.assign(gmm.modes.size(), 0);
  for (const auto& [where, slot] : located) {
    if (slot.kind == ModeSlot::Kind::Value) value_slot[slot.index] = slots.size();
    else continuous_slot[slot.index] = slots.size();
    slots.push_back(slot);
  }
  missing_slot = slots.size();
  if (has_missing) slots.push_back({ModeSlot::Kind::Missing, 0});
}

NumericCodec fit_numeric_codec(const Column& column, const ColumnKind& kind, const CodecOptions& options) {
  if (!column.all_numeric()) throw InputError("column '" + column.name() + "' has non-numeric tokens");
  NumericCodec codec;
  codec.selection = options.selection;
  codec.has_missing = column.missing_count() > 0;
  bool log_transform = false;
  if (const auto* mixed = std::get_if<MixedKind>(&kind)) {
    codec.categorical_values = mixed->categorical_values;
    std::sort(codec.categorical_values.begin(), codec.categorical_values.end());
    log_transform = mixed->log_transform;
  } else if (const auto* cont = std::get_if<ContinuousKind>(&kind)) {
    log_transform = cont->log_transform;
  } else {
    throw InputError("column '" + column.name() + "' is not numeric");
  }
  codec.mixed = std::holds_alternative<MixedKind>(kind) || codec.has_missing;

  std::vector<double> bulk;
  bulk.reserve(column.size());
  for (std::size_t r = 0; r < column.size(); ++r) {
    const auto v = column.number(r);
    if (!v) continue;
    if (std::binary_search(codec.categorical_values.begin(), codec.categorical_values.end(), *v)) continue;
    bulk.push_back(*v);
  }
  if (bulk.empty() && !codec.mixed) throw InputError("column '" + column.name() + "' has no numeric values");

  if (log_transform && !bulk.empty()) {
    codec.long_tail = LongTailParams{*std::min_element(bulk.begin(), bulk.end()), options.long_tail_epsilon};
    for (double& v : bulk) v = log_compress(v, *codec.long_tail);
  }

  if (bulk.empty()) {
    codec.index_slots();
    return codec;
  }
  if (options.vgm_enabled) {
    codec.gmm = fit_vgm(bulk, options.vgm);
  } else {
    const auto [lo, hi] = std::minmax_element(bulk.begin(), bulk.end());
    double sigma = (*hi - *lo) / 8.0;
    if (sigma <= 0.0) sigma = options.vgm.sigma_floor_ratio * std::max(std::abs(*lo), 1.0);
    codec.gmm = GaussianMixtureModel{{GaussianMode{1.0, 0.5 * (*lo + *hi), sigma}}, {0}};
    codec.mode_vector = codec.mixed;
  }
  codec.index_slots();
  return codec;
}

CategoricalCodec fit_categorical_codec(const Column& column) {
  std::set<std::string> classes;
  CategoricalCodec codec;
  for (const auto& cell : column.cells()) {
    if (cell) classes.insert(*cell);
    else codec.has_missing = true;
  }
  codec.classes.assign(classes.begin(), classes.end());
  if (codec.width() == 0) throw InputError("column '" + column.name() + "' is empty");
  return codec;
}

EncodingLayout build_layout(const std::vector<ColumnCodec>& codecs, bool condition_on_modes) {
  EncodingLayout layout;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < codecs.size(); ++i) {
    if (codecs[i].is_numeric()) {
      layout.segments.push_back({i, SegmentKind::Alpha, offset, 1, false});
      offset += 1;
      const std::size_t width = codecs[i].numeric().mode_width();
      if (width > 0) {
        layout.segments.push_back({i, SegmentKind::Mode, offset, width, condition_on_modes});
        offset += width;
      }
    } else {
      const std::size_t width = codecs[i].categorical().width();
      layout.segments.push_back({i, SegmentKind::Class, offset, width, true});
      offset += width;
    }
  }
  layout.width = offset;
  return layout;
}

CodecBundle fit_codecs(const Table& table, const Schema& schema, const CodecOptions& options) {
  check_schema_matches(schema, table);
  CodecBundle bundle;
  bundle.vgm_enabled = options.vgm_enabled;
  for (const auto& spec : schema.columns()) {
    if (!spec.include) continue;
    bundle.column_order.push_back(spec.name);
    if (is_numeric_kind(spec.kind)) {
      bundle.codecs.push_back({spec.name, fit_numeric_codec(table.column(spec.name), spec.kind, options)});
    }
  }
  for (const auto& spec : schema.columns()) {
    if (spec.include && !is_numeric_kind(spec.kind)) {
      bundle.codecs.push_back({spec.name, fit_categorical_codec(table.column(spec.name))});
    }
  }
  bundle.layout = build_layout(bundle.codecs, options.vgm_enabled);
  return bundle;
}

std::size_t select_mode(double value, const GaussianMixtureModel& gmm, ModeSelection selection) {
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < gmm.modes.size(); ++k) {
    const auto& m = gmm.modes[k];
    const double z = (value - m.mean) / m.stddev;
    double score = -0.5 * z * z - std::log(m.stddev);
    if (selection == ModeSelection::WeightedDensity) score += std::log(m.weight);
    if (score > best_score) {
      best_score = score;
      best = k;
    }
  }
  return best;
}

NumericEncoding encode_continuous(double value, const NumericCodec& codec) {
  if (codec.gmm.empty()) throw InputError("codec has no continuous modes");
  const double t = codec.long_tail ? log_compress(value, *codec.long_tail) : value;
  const std::size_t k = codec.mode_vector ? select_mode(t, codec.gmm, codec.selection) : 0;
  const auto& mode = codec.gmm.modes[k];
  const double alpha = std::clamp((t - mode.mean) / (4.0 * mode.stddev), -1.0, 1.0);
  return {alpha, codec.mode_vector ? codec.continuous_slot[k] : 0};
}

NumericEncoding encode_mixed(const std::optional<double>& cell, const NumericCodec& codec) {
  if (!cell) {
    if (!codec.has_missing) throw InputError("missing value in a column fitted without missing cells");
    return {0.0, codec.missing_slot};
  }
  const auto& values = codec.categorical_values;
  const auto it = std::lower_bound(values.begin(), values.end(), *cell);
  if (it != values.end() && *it == *cell) return {0.0, codec.value_slot[static_cast<std::size_t>(it - values.begin())]};
  return encode_continuous(*cell, codec);
}

std::size_t encode_categorical(const Cell& cell, const CategoricalCodec& codec) {
  if (!cell) {
    if (!codec.has_missing) throw InputError("missing value in a column fitted without missing cells");
    return codec.classes.size();
  }
  const auto it = std::lower_bound(codec.classes.begin(), codec.classes.end(), *cell);
  if (it == codec.classes.end() || *it != *cell) throw InputError("unseen category '" + *cell + "'");
  return static_cast<std::size_t>(it - codec.classes.begin());
}

std::optional<double> decode_numeric(double alpha, std::size_t mode, const NumericCodec& codec) {
  std::size_t k = 0;
  if (codec.mode_vector) {
    if (mode >= codec.slots.size()) throw InputError("mode index out of range");
    const auto& slot = codec.slots[mode];
    if (slot.kind == ModeSlot::Kind::Value) return codec.categorical_values[slot.index];
    if (slot.kind == ModeSlot::Kind::Missing) return std::nullopt;
    k = slot.index;
  }
  const auto& m = codec.gmm.modes.at(k);
  const double t = m.mean + 4.0 * m.stddev * alpha;
  return codec.long_tail ? log_expand(t, *codec.long_tail) : t;
}

Cell decode_categorical(std::size_t index, const CategoricalCodec& codec) {
  if (index < codec.classes.size()) return codec.classes[index];
  if (codec.has_missing && index == codec.classes.size()) return std::nullopt;
  throw InputError("class index out of range");
}

Matrix encode_table(const Table& table, const CodecBundle& bundle) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(table.rows()), static_cast<Eigen::Index>(bundle.layout.width));
  for (std::size_t c = 0; c < bundle.codecs.size(); ++c) {
    const auto& codec = bundle.codecs[c];
    const auto& column = table.column(codec.column);
    if (codec.is_numeric()) {
      const auto& num = codec.numeric();
      const auto& alpha = bundle.layout.segments[*bundle.layout.alpha_segment(c)];
      const auto mode_seg = bundle.layout.one_hot_segment(c);
      for (std::size_t r = 0; r < table.rows(); ++r) {
        if (!column.is_missing(r) && !column.number(r)) {
          throw InputError("non-numeric token '" + column.token(r) + "' in column '" + codec.column + "'");
        }
        const auto enc = encode_mixed(column.number(r), num);
        const auto row = static_cast<Eigen::Index>(r);
        out(row, static_cast<Eigen::Index>(alpha.offset)) = enc.alpha;
        if (mode_seg) {
          out(row, static_cast<Eigen::Index>(bundle.layout.segments[*mode_seg].offset + enc.mode)) = 1.0;
        }
      }
    } else {
      const auto& seg = bundle.layout.segments[*bundle.layout.one_hot_segment(c)];
      for (std::size_t r = 0; r < table.rows(); ++r) {
        const std::size_t k = encode_categorical(column.cells()[r], codec.categorical());
        out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(seg.offset + k)) = 1.0;
      }
    }
  }
  return out;
}

namespace {

std::size_t hard_index(std::span<const double> row, const Segment& seg) {
  std::optional<std::size_t> hot;
  for (std::size_t i = 0; i < seg.width; ++i) {
    const double v = row[seg.offset + i];
    if (v == 1.0 && !hot) hot = i;
    else if (v != 0.0) throw InputError("segment at offset " + std::to_string(seg.offset) + " is not one-hot");
  }
  if (!hot) throw InputError("segment at offset " + std::to_string(seg.offset) + " is not one-hot");
  return *hot;
}

Cell decode_codec(std::span<const double> row, const CodecBundle& bundle, std::size_t c) {
  const auto& codec = bundle.codecs[c];
  const auto& layout = bundle.layout;
  if (codec.is_numeric()) {
    const double alpha = row[layout.segments[*layout.alpha_segment(c)].offset];
    const auto seg = layout.one_hot_segment(c);
    const std::size_t mode = seg ? hard_index(row, layout.segments[*seg]) : 0;
    const auto value = decode_numeric(alpha, mode, codec.numeric());
    if (!value) return std::nullopt;
    return format_number(*value);
  }
  return decode_categorical(hard_index(row, layout.segments[*layout.one_hot_segment(c)]), codec.categorical());
}

}  // namespace

std::vector<Cell> decode_row(std::span<const double> row, const CodecBundle& bundle) {
  if (row.size() != bundle.layout.width) throw InputError("encoded row width mismatch");
  std::vector<Cell> out;
  out.reserve(bundle.column_order.size());
  for (const auto& name : bundle.column_order) out.push_back(decode_codec(row, bundle, bundle.codec_index(name)));
  return out;
}

Table decode_table(const Matrix& encoded, const CodecBundle& bundle) {
  if (static_cast<std::size_t>(encoded.cols()) != bundle.layout.width) throw InputError("encoded width mismatch");
  std::vector<std::vector<Cell>> cells(bundle.column_order.size());
  std::vector<std::size_t> order;
  for (const auto& name : bundle.column_order) order.push_back(bundle.codec_index(name));
  for (Eigen::Index r = 0; r < encoded.rows(); ++r) {
    std::span<const double> row(encoded.row(r).data(), bundle.layout.width);
    for (std::size_t i = 0; i < order.size(); ++i) cells[i].push_back(decode_codec(row, bundle, order[i]));
  }
  std::vector<Column> columns;
  for (std::size_t i = 0; i < order.size(); ++i) columns.emplace_back(bundle.column_order[i], std::move(cells[i]));
  return Table(std::move(columns));
}

Matrix harden(const Matrix& soft, const EncodingLayout& layout) {
  Matrix out = soft;
  for (const auto& seg : layout.segments) {
    if (seg.kind == SegmentKind::Alpha) continue;
    const auto off = static_cast<Eigen::Index>(seg.offset);
    const auto w = static_cast<Eigen::Index>(seg.width);
    for (Eigen::Index r = 0; r < soft.rows(); ++r) {
      Eigen::Index best = 0;
      soft.row(r).segment(off, w).maxCoeff(&best);
      out.row(r).segment(off, w).setZero();
      out(r, off + best) = 1.0;
    }
  }
  return out;
}

namespace {

const char* selection_name(ModeSelection s) {
  return s == ModeSelection::WeightedDensity ? "weighted_density" : "density";
}

ModeSelection parse_selection(const std::string& s) {
  if (s == "weighted_density") return ModeSelection::WeightedDensity;
  if (s == "density") return ModeSelection::Density;
  throw InputError("unknown mode selection '" + s + "'");
}

const char* segment_kind_name(SegmentKind k) {
  switch (k) {
    case SegmentKind::Alpha: return "alpha";
    case SegmentKind::Mode: return "mode";
    case SegmentKind::Class: return "class";
  }
  return "alpha";
}

SegmentKind parse_segment_kind(const std::string& s) {
  if (s == "alpha") return SegmentKind::Alpha;
  if (s == "mode") return SegmentKind::Mode;
  if (s == "class") return SegmentKind::Class;
  throw InputError("unknown segment kind '" + s + "'");
}

}  // namespace

nlohmann::json to_json(const CodecBundle& bundle) {
  nlohmann::json codecs = nlohmann::json::array();
  for (const auto& c : bundle.codecs) {
    nlohmann::json j{{"column", c.column}};
    if (c.is_numeric()) {
      const auto& n = c.numeric();
      nlohmann::json modes = nlohmann::json::array();
      for (const auto& m : n.gmm.modes) modes.push_back({{"weight", m.weight}, {"mean", m.mean}, {"stddev", m.stddev}});
      j["type"] = n.mixed ? "mixed" : "continuous";
      j["modes"] = modes;
      j["retained"] = n.gmm.retained;
      j["categorical_values"] = n.categorical_values;
      j["has_missing"] = n.has_missing;
      j["selection"] = selection_name(n.selection);
      j["mode_vector"] = n.mode_vector;
      if (n.long_tail) j["long_tail"] = {{"lower", n.long_tail->lower}, {"epsilon", n.long_tail->epsilon}};
    } else {
      j["type"] = "categorical";
      j["classes"] = c.categorical().classes;
      j["has_missing"] = c.categorical().has_missing;
    }
    codecs.push_back(std::move(j));
  }
  nlohmann::json segments = nlohmann::json::array();
  for (const auto& s : bundle.layout.segments) {
    segments.push_back({{"codec", s.codec},
                        {"kind", segment_kind_name(s.kind)},
                        {"offset", s.offset},
                        {"width", s.width},
                        {"conditionable", s.conditionable}});
  }
  return {{"version", 1},
          {"vgm_enabled", bundle.vgm_enabled},
          {"column_order", bundle.column_order},
          {"codecs", codecs},
          {"layout", {{"width", bundle.layout.width}, {"segments", segments}}}};
}

CodecBundle codec_bundle_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != 1) throw InputError("unsupported codec bundle version");
    CodecBundle bundle;
    bundle.vgm_enabled = j.at("vgm_enabled").get<bool>();
    bundle.column_order = j.at("column_order").get<std::vector<std::string>>();
    for (const auto& c : j.at("codecs")) {
      const std::string type = c.at("type").get<std::string>();
      if (type == "categorical") {
        CategoricalCodec cat;
        cat.classes = c.at("classes").get<std::vector<std::string>>();
        cat.has_missing = c.at("has_missing").get<bool>();
        bundle.codecs.push_back({c.at("column").get<std::string>(), cat});
        continue;
      }
      NumericCodec n;
      n.mixed = type == "mixed";
      for (const auto& m : c.at("modes")) {
        n.gmm.modes.push_back({m.at("weight").get<double>(), m.at("mean").get<double>(), m.at("stddev").get<double>()});
      }
      n.gmm.retained = c.at("retained").get<std::vector<std::size_t>>();
      n.categorical_values = c.at("categorical_values").get<std::vector<double>>();
      n.has_missing = c.at("has_missing").get<bool>();
      n.selection = parse_selection(c.at("selection").get<std::string>());
      n.mode_vector = c.at("mode_vector").get<bool>();
      if (c.contains("long_tail")) {
        n.long_tail = LongTailParams{c["long_tail"].at("lower").get<double>(), c["long_tail"].at("epsilon").get<double>()};
      }
      n.index_slots();
      bundle.codecs.push_back({c.at("column").get<std::string>(), n});
    }
    const auto& layout = j.at("layout");
    bundle.layout.width = layout.at("width").get<std::size_t>();
    for (const auto& s : layout.at("segments")) {
      bundle.layout.segments.push_back({s.at("codec").get<std::size_t>(), parse_segment_kind(s.at("kind").get<std::string>()),
                                        s.at("offset").get<std::size_t>(), s.at("width").get<std::size_t>(),
                                        s.at("conditionable").get<bool>()});
    }
    return bundle;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad codec bundle: ") + e.what());
  }
}

}  // namespace tabsynth
