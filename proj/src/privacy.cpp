#include "tabsynth/privacy.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "tabsynth/error.h"

namespace tabsynth {

DistanceSpace::DistanceSpace(const Schema& schema, std::span<const Table* const> tables) {
  for (const auto& spec : schema.included()) {
    Part p;
    p.column = spec.name;
    p.categorical = std::holds_alternative<CategoricalKind>(spec.kind);
    p.offset = width_;
    if (p.categorical) {
      std::set<std::string> cats;
      for (const Table* t : tables) {
        for (const auto& c : t->column(spec.name).cells()) cats.insert(c ? *c : "");
      }
      p.categories.assign(cats.begin(), cats.end());
      width_ += p.categories.size();
    } else {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (const Table* t : tables) {
        const Column& c = t->column(spec.name);
        for (std::size_t r = 0; r < c.size(); ++r) {
          if (const auto v = c.number(r)) {
            lo = std::min(lo, *v);
            hi = std::max(hi, *v);
          } else {
            p.missing_indicator = true;
          }
        }
      }
      if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
      p.lower = lo;
      p.upper = hi;
      width_ += 1 + (p.missing_indicator ? 1 : 0);
    }
    parts_.push_back(std::move(p));
  }
}

Matrix DistanceSpace::embed(const Table& table) const {
  const double block = 1.0 / std::sqrt(2.0);
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(table.rows()), static_cast<Eigen::Index>(width_));
  for (const auto& p : parts_) {
    const Column& c = table.column(p.column);
    for (std::size_t r = 0; r < c.size(); ++r) {
      const auto row = static_cast<Eigen::Index>(r);
      if (p.categorical) {
        const std::string tok = c.cells()[r] ? *c.cells()[r] : "";
        const auto it = std::lower_bound(p.categories.begin(), p.categories.end(), tok);
        if (it == p.categories.end() || *it != tok) throw InputError("category '" + tok + "' outside the distance space");
        out(row, static_cast<Eigen::Index>(p.offset + static_cast<std::size_t>(it - p.categories.begin()))) = block;
        continue;
      }
      const auto v = c.number(r);
      const double range = p.upper - p.lower;
      if (v) out(row, static_cast<Eigen::Index>(p.offset)) = range > 0 ? (*v - p.lower) / range : 0.0;
      else out(row, static_cast<Eigen::Index>(p.offset + 1)) = 1.0;
    }
  }
  return out;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw InputError("percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const double rank = p / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (rank - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

NeighbourDistances nearest_neighbours(const Matrix& q, const Matrix& ref, bool exclude_self) {
  if (q.cols() != ref.cols()) throw InputError("distance sets differ in width");
  const Eigen::Index needed = exclude_self ? 2 : 1;
  if (ref.rows() < needed) throw InputError("reference set is too small for nearest-neighbour distances");
  NeighbourDistances out;
  out.first.resize(static_cast<std::size_t>(q.rows()));
  out.second.resize(static_cast<std::size_t>(q.rows()));
  const Eigen::Index d = q.cols();
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    double b1 = std::numeric_limits<double>::infinity(), b2 = b1;
    const double* qi = q.row(i).data();
    for (Eigen::Index j = 0; j < ref.rows(); ++j) {
      if (exclude_self && i == j) continue;
      const double* rj = ref.row(j).data();
      double s = 0.0;
      for (Eigen::Index k = 0; k < d; ++k) s += (qi[k] - rj[k]) * (qi[k] - rj[k]);
      if (s < b1) {
        b2 = b1;
        b1 = s;
      } else if (s < b2) {
        b2 = s;
      }
    }
    out.first[static_cast<std::size_t>(i)] = std::sqrt(b1);
    out.second[static_cast<std::size_t>(i)] = std::sqrt(b2);
  }
  return out;
}

std::vector<double> distance_ratios(const NeighbourDistances& d) {
  std::vector<double> out(d.first.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = d.second[i] > 0.0 ? d.first[i] / d.second[i] : 1.0;
  }
  return out;
}

namespace {

Table subsample(const Table& t, std::size_t max_rows, std::uint64_t seed) {
  if (max_rows == 0 || t.rows() <= max_rows) return t;
  std::vector<std::size_t> idx(t.rows());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(max_rows);
  std::sort(idx.begin(), idx.end());
  return t.select_rows(idx);
}

}  // namespace

PrivacyReport privacy(const Table& real_in, const Table& synth_in, const Schema& schema,
                      const PrivacyOptions& options) {
  const Table real = subsample(real_in, options.max_rows, options.seed);
  const Table synth = subsample(synth_in, options.max_rows, options.seed + 1);
  const Table* both[] = {&real, &synth};
  const Table* only_real[] = {&real};
  const DistanceSpace joint(schema, both), real_space(schema, only_real);
  const Matrix r = joint.embed(real), s = joint.embed(synth), r_alone = real_space.embed(real);

  PrivacyReport rep;
  rep.real_rows = real.rows();
  rep.synthetic_rows = synth.rows();
  const double p = options.percentile;
  const auto rs = nearest_neighbours(s, r, false);
  const auto rr = nearest_neighbours(r_alone, r_alone, true);
  const auto ss = nearest_neighbours(s, s, true);
  rep.dcr_real_synthetic = percentile(rs.first, p);
  rep.dcr_real = percentile(rr.first, p);
  rep.dcr_synthetic = percentile(ss.first, p);
  rep.nndr_real_synthetic = percentile(distance_ratios(rs), p);
  rep.nndr_real = percentile(distance_ratios(rr), p);
  rep.nndr_synthetic = percentile(distance_ratios(ss), p);
  return rep;
}

}  // namespace tabsynth
