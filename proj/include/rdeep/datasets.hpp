#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "rdeep/platoon.hpp"

namespace rdeep {

enum class PlantKind { linear, nonlinear };

struct DatasetMeta {
    int n = 0;
    double dt = 0.05;
    double v_star = 0.0;
    double noise_bound = 0.0;
    std::uint64_t seed = 0;
    std::string recipe = "general";  // "general" or "gain"
    std::string plant = "linear";
};

struct ExcitationDataset {
    Eigen::VectorXd u, e, f;  // length T+1
    Eigen::MatrixXd x;        // 2n x (T+1)
    DatasetMeta meta;

    Eigen::Index length() const { return u.size() - 1; }  // T
    void validate() const;
};

struct ExcitationRanges {
    double u = 0.2;
    double e = 0.5;
    double f = 0.3;
};

struct CollectOptions {
    PlantKind plant = PlantKind::linear;
    std::string recipe = "general";
};

ExcitationDataset collect_excitation(const PlatoonModel& model, int T, const ExcitationRanges& ranges,
                                     double noise_bound, std::uint64_t seed, const CollectOptions& opts = {});

/// Smallest T meeting the persistent-excitation length bound for (t_ini, N, n).
int min_excitation_length(int t_ini, int horizon, int n);

struct SequenceViews {
    Eigen::RowVectorXd u_minus, e_minus, f_minus;
    Eigen::MatrixXd x_minus, x_plus;

    Eigen::Index length() const { return x_minus.cols(); }
    // [X-; U-; E-; F-]
    Eigen::MatrixXd stacked() const;
};

SequenceViews build_sequences(const ExcitationDataset& ds);

/// Block Hankel matrix of a (dim x T) signal with L block rows and T-L+1 columns.
Eigen::MatrixXd build_hankel(const Eigen::MatrixXd& signal, int L);

struct HankelSet {
    Eigen::MatrixXd up, uf, ep, ef, fp, ff, xp, xf;
    int t_ini = 0;
    int horizon = 0;

    Eigen::Index columns() const { return up.cols(); }
};

/// Hankel blocks from the first T samples of the dataset.
HankelSet build_hankel_set(const ExcitationDataset& ds, int t_ini, int horizon);

struct RankReport {
    Eigen::Index rank_full = 0;  // [X-; U-; E-; F-]
    Eigen::Index rows_full = 0;
    Eigen::Index rank_xu = 0;  // [X-; U-]
    Eigen::Index rows_xu = 0;
    Eigen::VectorXd singular_full;
    bool lemma1_ok() const { return rank_full == rows_full; }
    bool lemma2_ok() const { return rank_xu == rows_xu; }
};

Eigen::Index numerical_rank(const Eigen::MatrixXd& m, double rel_tol = 1e-8);
RankReport check_persistent_excitation(const SequenceViews& views);

void save_dataset_json(const ExcitationDataset& ds, const std::string& path);
ExcitationDataset load_dataset_json(const std::string& path);
std::string dataset_to_json(const ExcitationDataset& ds);
ExcitationDataset dataset_from_json(const std::string& text);
void save_dataset_csv(const ExcitationDataset& ds, const std::string& path);

}  // namespace rdeep
