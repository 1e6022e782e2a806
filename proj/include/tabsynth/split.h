#pragma once

#include <cstdint>

#include "tabsynth/schema.h"
#include "tabsynth/table.h"

namespace tabsynth {

struct TrainTestSplit {
  Table train;
  Table test;
};

// Per-class test counts use largest-remainder allocation of round(rows * test_fraction),
// so every class lands within one row of its exact share. With ProblemKind::None the
// whole table is treated as a single class.
TrainTestSplit stratified_split(const Table& table, const TargetSpec& target, double test_fraction,
                                std::uint64_t seed);

}  // namespace tabsynth
