#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "rdeep/learning.hpp"
#include "rdeep/zonotope.hpp"

namespace rdeep {

/// Error reachable sets for offsets 0..N and their interval hulls.
struct ReachTube {
    std::vector<Zonotope<double>> sets;
    std::vector<Interval<double>> hulls;

    int horizon() const { return static_cast<int>(sets.size()) - 1; }
};

struct TightenedBounds {
    std::vector<Interval<double>> x_bounds;  // per step 0..N
    std::vector<Interval<double>> u_bounds;  // per step 0..N, scalar
};

inline constexpr int kDefaultReductionBudget = 20;

/// R_{i+1} = M (R_i x K R_i x Z_eps x Z_theta) + Z_omega, reduced to `budget` generators.
ReachTube propagate_error_tube(const SystemMatrixSet& mset, const Eigen::RowVectorXd& k, const NoiseSpec& spec,
                               const Zonotope<double>& r0, int horizon, int budget = kDefaultReductionBudget);

/// Boxes shrunk by |center| + radius of each error hull. `x_max` holds one bound per
/// state or a per-vehicle pattern (spacing, velocity) that is repeated.
TightenedBounds tighten_constraints(const ReachTube& tube, const Eigen::RowVectorXd& k, const Eigen::VectorXd& x_max,
                                    double u_max);

/// Expands a per-vehicle (spacing, velocity) bound to the full state.
Eigen::VectorXd expand_state_bound(const Eigen::VectorXd& x_max, Eigen::Index state_dim);

/// Memoizes the tube for a fixed initial set; recomputes when inputs change.
class TubeCache {
public:
    const ReachTube& get(const SystemMatrixSet& mset, const Eigen::RowVectorXd& k, const NoiseSpec& spec,
                         const Zonotope<double>& r0, int horizon, int budget = kDefaultReductionBudget);

private:
    bool valid_ = false;
    const SystemMatrixSet* mset_ = nullptr;
    Eigen::RowVectorXd k_;
    NoiseSpec spec_;
    Eigen::VectorXd r0_center_;
    Eigen::MatrixXd r0_generators_;
    int horizon_ = 0, budget_ = 0;
    ReachTube tube_;
};

/// Columns step, dim, hull_lo, hull_hi.
std::string tube_to_csv(const ReachTube& tube);

}  // namespace rdeep
