#pragma once

#include <Eigen/Dense>

#include <string>
#include <utility>
#include <vector>

#include "rdeep/datasets.hpp"
#include "rdeep/platoon.hpp"
#include "rdeep/zonotope.hpp"

namespace rdeep {

struct NoiseSpec {
    double epsilon_max = 0.5;
    double theta_max = 2.0;
    double omega_max = 0.02;

    void validate() const;
    Zonotope<double> z_epsilon() const;
    Zonotope<double> z_theta() const;
    Zonotope<double> z_omega(int state_dim) const;
};

/// Columns partitioned [A | B | H | J].
struct SystemMatrixSet {
    MatrixZonotope<double> mz;

    Eigen::Index state_dim() const { return mz.rows(); }
    Eigen::MatrixXd center_a() const { return mz.center().leftCols(mz.rows()); }
    Eigen::VectorXd center_b() const { return mz.center().col(mz.rows()); }
};

struct FeedbackGain {
    Eigen::RowVectorXd k;
    Eigen::MatrixXd p;
    double multiplier = 0.0;       // scalar multiplier of the robustness certificate
    double decay = 1.0;            // certified contraction rate
    double lmi_margin = 0.0;       // smallest eigenvalue over certificate blocks
    double center_radius = 0.0;    // spectral radius of the data-center closed loop
};

MatrixZonotope<double> build_noise_matrix_zonotope(const NoiseSpec& spec, int T, int n);

Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& m, double rel_tol = 1e-8);

/// M = (X+ - M_w) D^+, D = [X-; U-; E-; F-].
SystemMatrixSet build_system_matrix_set(const SequenceViews& views, const MatrixZonotope<double>& m_omega);
/// Same set, built without materializing the 2n x T noise generators.
SystemMatrixSet build_system_matrix_set(const SequenceViews& views, const NoiseSpec& spec);

struct GainOptions {
    double margin = 1e-9;
    double trace_cap = 1e3;
    // Certify (A + BK) P (A + BK)' < decay^2 P for every consistent model.
    double decay = 0.995;
    // Pick the smallest certified gain rather than the most central certificate;
    // gain_slack widens the bisected gain level to keep a usable margin.
    bool minimize_gain = true;
    double gain_slack = 1.5;
};

/// Certificate blocks of the data-based stabilization LMI evaluated at (P, L, multiplier).
/// Every block positive definite means K = L P^-1 gives (A + BK) P (A + BK)' < decay^2 P
/// for every [A B] consistent with the data under the noise energy bound w^2 T.
std::vector<Eigen::MatrixXd> gain_certificate_blocks(const SequenceViews& views, const NoiseSpec& spec,
                                                     const Eigen::MatrixXd& p, const Eigen::RowVectorXd& l,
                                                     double multiplier, double decay = 1.0);

FeedbackGain solve_feedback_gain(const SequenceViews& views, const NoiseSpec& spec, const GainOptions& opts = {});

double spectral_radius(const Eigen::MatrixXd& m);

/// Least-squares fit of the equilibrium curve; alpha/beta keep their defaults.
HdvParams fit_equilibrium_curve(const std::vector<std::pair<double, double>>& samples);

struct LearnedArtifacts {
    SystemMatrixSet mset;
    FeedbackGain gain;
    NoiseSpec spec;
    std::string general_hash;
    std::string gain_hash;
};

std::string artifacts_to_json(const LearnedArtifacts& a);
LearnedArtifacts artifacts_from_json(const std::string& text);
void save_artifacts(const LearnedArtifacts& a, const std::string& path);
LearnedArtifacts load_artifacts(const std::string& path);

}  // namespace rdeep
