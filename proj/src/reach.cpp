#include "rdeep/reach.hpp"

#include <cmath>
#include <sstream>

#include "rdeep/errors.hpp"
#include "rdeep/format.hpp"

namespace rdeep {

ReachTube propagate_error_tube(const SystemMatrixSet& mset, const Eigen::RowVectorXd& k, const NoiseSpec& spec,
                               const Zonotope<double>& r0, int horizon, int budget) {
    spec.validate();
    const Eigen::Index nx = mset.state_dim();
    if (horizon < 1) throw ParameterError("propagate_error_tube: horizon must be at least 1");
    if (mset.mz.cols() != nx + 3) throw ShapeError("propagate_error_tube: matrix set must be [A B H J]");
    if (k.size() != nx || r0.dim() != nx) throw ShapeError("propagate_error_tube: gain or initial set dimension");

    const Zonotope<double> z_eps = spec.z_epsilon();
    const Zonotope<double> z_theta = spec.z_theta();
    const Zonotope<double> z_omega = spec.z_omega(static_cast<int>(nx));
    const Eigen::MatrixXd k_mat = k;

    ReachTube tube;
    tube.sets.reserve(static_cast<std::size_t>(horizon) + 1);
    tube.sets.push_back(r0);
    for (int i = 0; i < horizon; ++i) {
        const Zonotope<double>& r = tube.sets.back();
        const auto stacked = cartesian_product(r, linear_map(k_mat, r), z_eps, z_theta);
        tube.sets.push_back(reduce_order(minkowski_sum(matzono_map(mset.mz, stacked), z_omega), budget));
    }
    for (const auto& s : tube.sets) tube.hulls.push_back(interval_hull(s));
    return tube;
}

Eigen::VectorXd expand_state_bound(const Eigen::VectorXd& x_max, Eigen::Index state_dim) {
    if (x_max.size() == state_dim) return x_max;
    if (x_max.size() == 2 && state_dim % 2 == 0) return x_max.replicate(state_dim / 2, 1);
    throw ShapeError("state bound must have one entry per state or a (spacing, velocity) pair");
}

TightenedBounds tighten_constraints(const ReachTube& tube, const Eigen::RowVectorXd& k, const Eigen::VectorXd& x_max,
                                    double u_max) {
    if (tube.sets.empty()) throw ParameterError("tighten_constraints: empty tube");
    const Eigen::Index nx = tube.sets.front().dim();
    if (k.size() != nx) throw ShapeError("tighten_constraints: gain dimension");
    const Eigen::VectorXd xb = expand_state_bound(x_max, nx);
    if ((xb.array() <= 0.0).any() || !(u_max > 0.0)) throw ParameterError("tighten_constraints: bounds must be positive");
    const Eigen::MatrixXd k_mat = k;

    TightenedBounds out;
    for (std::size_t i = 0; i < tube.sets.size(); ++i) {
        const int step = static_cast<int>(i);
        const Interval<double>& h = tube.hulls[i];
        const Eigen::VectorXd reach = h.center().cwiseAbs() + h.radius();
        const Eigen::VectorXd half = xb - reach;
        for (Eigen::Index d = 0; d < nx; ++d) {
            if (half(d) <= 0.0) {
                throw InfeasibleTightening(step, static_cast<int>(d),
                                           "tightened state bound empty at step " + std::to_string(step) + ", dim " +
                                               std::to_string(d) + " (error reach " + format_double(reach(d)) +
                                               " >= bound " + format_double(xb(d)) + ")");
            }
        }
        out.x_bounds.emplace_back(-half, half);

        const Interval<double> ku = interval_hull(linear_map(k_mat, tube.sets[i]));
        const double u_reach = std::abs(ku.center()(0)) + ku.radius()(0);
        const double u_half = u_max - u_reach;
        if (u_half <= 0.0) {
            throw InfeasibleTightening(step, -1,
                                       "tightened input bound empty at step " + std::to_string(step) +
                                           " (feedback reach " + format_double(u_reach) + " >= " +
                                           format_double(u_max) + ")");
        }
        out.u_bounds.emplace_back(Eigen::VectorXd::Constant(1, -u_half), Eigen::VectorXd::Constant(1, u_half));
    }
    return out;
}

const ReachTube& TubeCache::get(const SystemMatrixSet& mset, const Eigen::RowVectorXd& k, const NoiseSpec& spec,
                                const Zonotope<double>& r0, int horizon, int budget) {
    const bool same = valid_ && mset_ == &mset && k_ == k && spec_.epsilon_max == spec.epsilon_max &&
                      spec_.theta_max == spec.theta_max && spec_.omega_max == spec.omega_max &&
                      r0_center_ == r0.center() && r0_generators_ == r0.generators() && horizon_ == horizon &&
                      budget_ == budget;
    if (!same) {
        tube_ = propagate_error_tube(mset, k, spec, r0, horizon, budget);
        mset_ = &mset;
        k_ = k;
        spec_ = spec;
        r0_center_ = r0.center();
        r0_generators_ = r0.generators();
        horizon_ = horizon;
        budget_ = budget;
        valid_ = true;
    }
    return tube_;
}

std::string tube_to_csv(const ReachTube& tube) {
    std::ostringstream os;
    os << "step,dim,hull_lo,hull_hi\n";
    for (std::size_t i = 0; i < tube.hulls.size(); ++i) {
        const auto& h = tube.hulls[i];
        for (Eigen::Index d = 0; d < h.dim(); ++d) {
            os << i << ',' << d << ',' << format_double(h.lower(d)) << ',' << format_double(h.upper(d)) << '\n';
        }
    }
    return os.str();
}

}  // namespace rdeep
