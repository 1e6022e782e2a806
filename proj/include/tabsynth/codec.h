#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "tabsynth/long_tail.h"
#include "tabsynth/matrix.h"
#include "tabsynth/schema.h"
#include "tabsynth/table.h"
#include "tabsynth/vgm.h"

namespace tabsynth {

enum class ModeSelection {
  WeightedDensity,  // argmax_k w_k N(x; mu_k, sigma_k)
  Density,  // argmax_k N(x; mu_k, sigma_k)
};

struct ModeSlot {
  enum class Kind { Value, Continuous, Missing };
  Kind kind = Kind::Continuous;
  std::size_t index = 0;  // into categorical_values or gmm.modes
};

// Continuous and mixed columns. The mode one-hot orders categorical value modes and
// continuous modes by location, with the missing mode (if any) last.
struct NumericCodec {
  bool mixed = false;
  GaussianMixtureModel gmm;
  std::vector<double> categorical_values;  // sorted ascending
  bool has_missing = false;
  std::optional<LongTailParams> long_tail;
  ModeSelection selection = ModeSelection::WeightedDensity;
  // False when the column is encoded by alpha alone (min-max ablation of a continuous column).
  bool mode_vector = true;

  std::vector<ModeSlot> slots;
  std::vector<std::size_t> value_slot;  // categorical value i -> slot
  std::vector<std::size_t> continuous_slot;  // gmm mode k -> slot
  std::size_t missing_slot = 0;

  // Rebuilds the slot tables from categorical_values, gmm and has_missing.
  void index_slots();
  std::size_t mode_width() const { return mode_vector ? slots.size() : 0; }
};

struct CategoricalCodec {
  std::vector<std::string> classes;  // gamma order; missing class appended when has_missing
  bool has_missing = false;

  std::size_t width() const { return classes.size() + (has_missing ? 1 : 0); }
};

struct ColumnCodec {
  std::string column;
  std::variant<NumericCodec, CategoricalCodec> codec;

  bool is_numeric() const { return std::holds_alternative<NumericCodec>(codec); }
  const NumericCodec& numeric() const { return std::get<NumericCodec>(codec); }
  const CategoricalCodec& categorical() const { return std::get<CategoricalCodec>(codec); }
};

enum class SegmentKind { Alpha, Mode, Class };

struct Segment {
  std::size_t codec = 0;  // index into CodecBundle::codecs
  SegmentKind kind = SegmentKind::Alpha;
  std::size_t offset = 0;
  std::size_t width = 0;
  bool conditionable = false;  // participates in the conditional vector
};

// Contiguous segments: every numeric column's alpha and mode one-hot, then every
// categorical column's class one-hot.
struct EncodingLayout {
  std::vector<Segment> segments;
  std::size_t width = 0;

  std::optional<std::size_t> alpha_segment(std::size_t codec) const;
  std::optional<std::size_t> one_hot_segment(std::size_t codec) const;
};

struct CodecOptions {
  VgmOptions vgm;
  ModeSelection selection = ModeSelection::WeightedDensity;
  // False: min-max normalization for continuous parts and class-only conditioning.
  bool vgm_enabled = true;
  double long_tail_epsilon = 1.0;
};

struct CodecBundle {
  std::vector<ColumnCodec> codecs;  // encoded order (numeric first)
  EncodingLayout layout;
  // Column names in the original schema order (decode output order).
  std::vector<std::string> column_order;
  bool vgm_enabled = true;

  std::size_t codec_index(std::string_view column) const;
};

CodecBundle fit_codecs(const Table& table, const Schema& schema, const CodecOptions& options = {});

NumericCodec fit_numeric_codec(const Column& column, const ColumnKind& kind, const CodecOptions& options);
CategoricalCodec fit_categorical_codec(const Column& column);

EncodingLayout build_layout(const std::vector<ColumnCodec>& codecs, bool condition_on_modes);

struct NumericEncoding {
  double alpha = 0.0;
  std::size_t mode = 0;  // local index in the mode one-hot
};

std::size_t select_mode(double value, const GaussianMixtureModel& gmm, ModeSelection selection);
NumericEncoding encode_continuous(double value, const NumericCodec& codec);
NumericEncoding encode_mixed(const std::optional<double>& cell, const NumericCodec& codec);
std::size_t encode_categorical(const Cell& cell, const CategoricalCodec& codec);

std::optional<double> decode_numeric(double alpha, std::size_t mode, const NumericCodec& codec);
Cell decode_categorical(std::size_t index, const CategoricalCodec& codec);

Matrix encode_table(const Table& table, const CodecBundle& bundle);

// Rows must carry hard one-hots; throws InputError otherwise.
std::vector<Cell> decode_row(std::span<const double> row, const CodecBundle& bundle);
Table decode_table(const Matrix& encoded, const CodecBundle& bundle);

// Replaces every one-hot segment of `soft` by the one-hot of its argmax.
Matrix harden(const Matrix& soft, const EncodingLayout& layout);

nlohmann::json to_json(const CodecBundle& bundle);
CodecBundle codec_bundle_from_json(const nlohmann::json& j);

}  // namespace tabsynth
