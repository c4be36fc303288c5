#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "apbm/common.hpp"

namespace apbm {

/// Piecewise-linear surrogate families. All four are convex minorants of a
/// convex f that dominate the cut at the most recent sample point.
enum class ModelVariant {
  Polyak,              // max{cut(y^k), floor}
  CuttingPlane,        // max over the last m cuts
  PolyakCuttingPlane,  // max{floor, last m cuts}
  TwoCut,              // max{aggregate cut at x^{k-1}, cut(y^k)}
};

inline std::string_view to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::Polyak: return "polyak";
    case ModelVariant::CuttingPlane: return "cutting-plane";
    case ModelVariant::PolyakCuttingPlane: return "polyak-cutting-plane";
    case ModelVariant::TwoCut: return "two-cut";
  }
  return "unknown";
}

inline ModelVariant parse_model_variant(std::string_view tag) {
  if (tag == "polyak") return ModelVariant::Polyak;
  if (tag == "cutting-plane") return ModelVariant::CuttingPlane;
  if (tag == "polyak-cutting-plane") return ModelVariant::PolyakCuttingPlane;
  if (tag == "two-cut") return ModelVariant::TwoCut;
  throw InvalidArgument("unknown model variant '" + std::string(tag) + "'");
}

inline bool uses_floor(ModelVariant v) {
  return v == ModelVariant::Polyak || v == ModelVariant::PolyakCuttingPlane;
}

/// Affine function x -> <slope, x> + intercept.
struct Cut {
  Vector slope;
  double intercept = 0.0;
  std::uint64_t id = 0;  // unique within a bundle, used to carry dual weights across updates

  double operator()(const Vector& x) const { return slope.dot(x) + intercept; }

  /// Linearization of f at y; exact at y by construction.
  static Cut at(const Vector& y, double fy, const Vector& gy, std::uint64_t id) {
    return Cut{gy, fy - gy.dot(y), id};
  }
};

/// Result of the previous proximal step, needed by the two-cut model.
struct ProxStep {
  Vector center;  // y^{k-1} (APBM) or x^{k-1} (PBM)
  Vector point;   // minimizer x^{k-1} of the previous proximal model
  double step = 0.0;
};

/// Cut matrix (one row per cut) and intercepts of a bundle.
struct CutSystem {
  Matrix A;
  Vector b;
  std::vector<std::uint64_t> ids;
};

class Bundle {
 public:
  static constexpr std::uint64_t kFloorId = std::numeric_limits<std::uint64_t>::max();

  Bundle(ModelVariant variant, std::size_t capacity, std::optional<double> floor = std::nullopt)
      : variant_(variant), capacity_(capacity), floor_(floor) {
    detail::require(capacity_ >= 1, "bundle capacity m must be at least 1");
    if (uses_floor(variant_)) {
      detail::require(floor_.has_value(), std::string("model '") + std::string(to_string(variant_)) +
                                              "' requires a floor value");
      detail::require(std::isfinite(*floor_), "floor must be finite");
    } else {
      detail::require(!floor_.has_value(), std::string("model '") +
                                               std::string(to_string(variant_)) +
                                               "' does not take a floor value");
    }
  }

  ModelVariant variant() const { return variant_; }
  std::size_t capacity() const { return capacity_; }
  const std::optional<double>& floor() const { return floor_; }
  bool empty() const { return cuts_.empty(); }
  std::size_t updates() const { return updates_; }

  /// Number of affine pieces, counting the floor.
  std::size_t size() const { return cuts_.empty() ? 0 : cuts_.size() + (floor_ ? 1 : 0); }

  /// Non-floor cuts in insertion order; the last one is the most recent sample.
  const std::deque<Cut>& cuts() const { return cuts_; }

  /// True once the newest cut is the linearization at the last update point.
  bool newest_is_current() const { return !cuts_.empty(); }

  /// Adds oracle information at y. The two-cut model requires the previous
  /// proximal step from the second update on.
  void update(const Vector& y, double fy, const Vector& gy, const ProxStep* previous = nullptr) {
    detail::require(y.size() == gy.size(), "point and gradient lengths differ");
    if (!cuts_.empty()) {
      detail::require(cuts_.front().slope.size() == gy.size(), "gradient has wrong dimension");
    }
    Cut fresh = Cut::at(y, fy, gy, next_id_++);
    switch (variant_) {
      case ModelVariant::Polyak:
        cuts_.clear();
        cuts_.push_back(std::move(fresh));
        break;
      case ModelVariant::CuttingPlane:
      case ModelVariant::PolyakCuttingPlane:
        cuts_.push_back(std::move(fresh));
        while (cuts_.size() > capacity_) cuts_.pop_front();
        break;
      case ModelVariant::TwoCut:
        if (cuts_.empty()) {
          cuts_.push_back(std::move(fresh));
          break;
        }
        detail::require(previous != nullptr, "two-cut model update needs the previous proximal step");
        detail::require(previous->step > 0.0, "previous proximal step size must be positive");
        {
          // Subgradient of the previous model at its proximal point, from the
          // optimality condition of the proximal step.
          Vector g = (previous->center - previous->point) / previous->step;
          const double anchor = eval(previous->point);
          Cut aggregate{g, anchor - g.dot(previous->point), next_id_++};
          cuts_.clear();
          cuts_.push_back(std::move(aggregate));
          cuts_.push_back(std::move(fresh));
        }
        break;
    }
    ++updates_;
  }

  double eval(const Vector& x) const {
    if (cuts_.empty()) throw InvalidArgument("cannot evaluate an empty bundle");
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& c : cuts_) best = std::max(best, c(x));
    if (floor_) best = std::max(best, *floor_);
    return best;
  }

  /// Rows in bundle order with the floor (zero slope) last.
  CutSystem export_qp() const {
    if (cuts_.empty()) throw InvalidArgument("cannot export an empty bundle");
    const auto M = static_cast<Eigen::Index>(size());
    const auto n = cuts_.front().slope.size();
    CutSystem qp{Matrix(M, n), Vector(M), {}};
    qp.ids.reserve(static_cast<std::size_t>(M));
    Eigen::Index row = 0;
    for (const auto& c : cuts_) {
      qp.A.row(row) = c.slope.transpose();
      qp.b[row] = c.intercept;
      qp.ids.push_back(c.id);
      ++row;
    }
    if (floor_) {
      qp.A.row(row).setZero();
      qp.b[row] = *floor_;
      qp.ids.push_back(kFloorId);
    }
    return qp;
  }

 private:
  ModelVariant variant_;
  std::size_t capacity_;
  std::optional<double> floor_;
  std::deque<Cut> cuts_;
  std::uint64_t next_id_ = 0;
  std::size_t updates_ = 0;
};

inline Bundle model_init(ModelVariant variant, std::size_t capacity,
                         std::optional<double> floor = std::nullopt) {
  return Bundle(variant, capacity, floor);
}

}  // namespace apbm
