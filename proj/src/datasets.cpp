#include "rdeep/datasets.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

#include "rdeep/errors.hpp"
#include "rdeep/format.hpp"

namespace rdeep {

using nlohmann::json;

void ExcitationDataset::validate() const {
    const Eigen::Index len = u.size();
    if (len < 2 || e.size() != len || f.size() != len || x.cols() != len) {
        throw ShapeError("ExcitationDataset: sequences must share length T+1 >= 2");
    }
    if (meta.n > 0 && x.rows() != 2 * meta.n) throw ShapeError("ExcitationDataset: state dimension is not 2n");
}

int min_excitation_length(int t_ini, int horizon, int n) { return 2 * (t_ini + horizon + 2 * n) - 1; }

ExcitationDataset collect_excitation(const PlatoonModel& model, int T, const ExcitationRanges& ranges,
                                     double noise_bound, std::uint64_t seed, const CollectOptions& opts) {
    if (T < 1) throw ParameterError("collect_excitation: T must be positive");
    if (ranges.u < 0 || ranges.e < 0 || ranges.f < 0 || noise_bound < 0) {
        throw ParameterError("collect_excitation: bounds must be non-negative");
    }
    if (opts.recipe != "general" && opts.recipe != "gain") {
        throw ParameterError("collect_excitation: recipe must be 'general' or 'gain'");
    }
    // The gain recipe keeps the head vehicle at equilibrium and the channel clean.
    const bool gain = opts.recipe == "gain";
    const int d = model.state_dim();
    ExcitationDataset ds;
    ds.meta = {model.n, model.dt, model.v_star, noise_bound, seed, opts.recipe,
               opts.plant == PlantKind::linear ? "linear" : "nonlinear"};
    ds.u.resize(T + 1);
    ds.e.resize(T + 1);
    ds.f.resize(T + 1);
    ds.x.resize(d, T + 1);

    Rng excite(seed, kExcitationStream);
    Rng noise(seed, kNoiseStream);
    for (int k = 0; k <= T; ++k) {
        ds.u(k) = excite.symmetric(ranges.u);
        ds.e(k) = gain ? 0.0 : excite.symmetric(ranges.e);
        ds.f(k) = gain ? 0.0 : excite.symmetric(ranges.f);
    }

    if (opts.plant == PlantKind::linear) {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(d);
        for (int k = 0; k <= T; ++k) {
            ds.x.col(k) = x;
            Eigen::VectorXd w(d);
            for (int i = 0; i < d; ++i) w(i) = noise.symmetric(noise_bound);
            x = linear_step(model, x, ds.u(k), ds.e(k), ds.f(k), w);
        }
    } else {
        PlantState s = equilibrium_state(model, model.v_star);
        s.velocities(0) = model.v_star + ds.e(0);
        for (int k = 0; k <= T; ++k) {
            ds.x.col(k) = error_state(s, model.v_star, model.s_star);
            PlantInputs in;
            in.u_cav = ds.u(k);
            in.attack = ds.f(k);
            in.noise_bound = noise_bound;
            in.head_velocity = model.v_star + (k < T ? ds.e(k + 1) : 0.0);
            s = plant_step(model, s, in, noise);
        }
    }
    return ds;
}

Eigen::MatrixXd SequenceViews::stacked() const {
    const Eigen::Index d = x_minus.rows();
    Eigen::MatrixXd m(d + 3, length());
    m << x_minus, u_minus, e_minus, f_minus;
    return m;
}

SequenceViews build_sequences(const ExcitationDataset& ds) {
    ds.validate();
    const Eigen::Index T = ds.length();
    SequenceViews v;
    v.u_minus = ds.u.head(T).transpose();
    v.e_minus = ds.e.head(T).transpose();
    v.f_minus = ds.f.head(T).transpose();
    v.x_minus = ds.x.leftCols(T);
    v.x_plus = ds.x.rightCols(T);
    return v;
}

Eigen::MatrixXd build_hankel(const Eigen::MatrixXd& signal, int L) {
    const Eigen::Index dim = signal.rows();
    const Eigen::Index T = signal.cols();
    if (L < 1 || T < L) throw ShapeError("build_hankel: sequence shorter than depth");
    const Eigen::Index cols = T - L + 1;
    Eigen::MatrixXd h(dim * L, cols);
    for (int i = 0; i < L; ++i) h.middleRows(i * dim, dim) = signal.middleCols(i, cols);
    return h;
}

HankelSet build_hankel_set(const ExcitationDataset& ds, int t_ini, int horizon) {
    ds.validate();
    if (t_ini < 1 || horizon < 1) throw ParameterError("build_hankel_set: horizons must be positive");
    const Eigen::Index T = ds.length();
    const int L = t_ini + horizon;
    const Eigen::Index d = ds.x.rows();
    auto split = [&](const Eigen::MatrixXd& sig, Eigen::MatrixXd& past, Eigen::MatrixXd& fut) {
        const Eigen::MatrixXd h = build_hankel(sig, L);
        const Eigen::Index r = sig.rows();
        past = h.topRows(r * t_ini);
        fut = h.bottomRows(r * horizon);
    };
    HankelSet hs;
    hs.t_ini = t_ini;
    hs.horizon = horizon;
    split(ds.u.head(T).transpose(), hs.up, hs.uf);
    split(ds.e.head(T).transpose(), hs.ep, hs.ef);
    split(ds.f.head(T).transpose(), hs.fp, hs.ff);
    split(ds.x.leftCols(T), hs.xp, hs.xf);
    (void)d;
    return hs;
}

Eigen::Index numerical_rank(const Eigen::MatrixXd& m, double rel_tol) {
    if (m.size() == 0) return 0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const Eigen::VectorXd s = svd.singularValues();
    if (s.size() == 0 || s(0) == 0.0) return 0;
    return (s.array() > rel_tol * s(0)).count();
}

RankReport check_persistent_excitation(const SequenceViews& views) {
    RankReport r;
    const Eigen::MatrixXd full = views.stacked();
    r.rows_full = full.rows();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(full);
    r.singular_full = svd.singularValues();
    const double top = r.singular_full.size() ? r.singular_full(0) : 0.0;
    r.rank_full = top > 0.0 ? (r.singular_full.array() > 1e-8 * top).count() : 0;
    Eigen::MatrixXd xu(views.x_minus.rows() + 1, views.length());
    xu << views.x_minus, views.u_minus;
    r.rows_xu = xu.rows();
    r.rank_xu = numerical_rank(xu);
    return r;
}

std::string dataset_to_json(const ExcitationDataset& ds) {
    ds.validate();
    json j;
    j["meta"] = {{"n", ds.meta.n},
                 {"dt", ds.meta.dt},
                 {"v_star", ds.meta.v_star},
                 {"noise_bound", ds.meta.noise_bound},
                 {"seed", ds.meta.seed},
                 {"recipe", ds.meta.recipe},
                 {"plant", ds.meta.plant}};
    j["u"] = to_json_vector(ds.u);
    j["e"] = to_json_vector(ds.e);
    j["f"] = to_json_vector(ds.f);
    json xs = json::array();
    for (Eigen::Index k = 0; k < ds.x.cols(); ++k) xs.push_back(to_json_vector(ds.x.col(k)));
    j["x"] = std::move(xs);
    return j.dump();
}

ExcitationDataset dataset_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& ex) {
        throw FormatError(std::string("dataset: invalid JSON: ") + ex.what());
    }
    try {
        ExcitationDataset ds;
        const auto& m = j.at("meta");
        ds.meta.n = m.at("n").get<int>();
        ds.meta.dt = m.at("dt").get<double>();
        ds.meta.v_star = m.at("v_star").get<double>();
        ds.meta.noise_bound = m.at("noise_bound").get<double>();
        ds.meta.seed = m.at("seed").get<std::uint64_t>();
        ds.meta.recipe = m.value("recipe", std::string("general"));
        ds.meta.plant = m.value("plant", std::string("linear"));
        ds.u = from_json_vector(j.at("u"));
        ds.e = from_json_vector(j.at("e"));
        ds.f = from_json_vector(j.at("f"));
        const auto& xs = j.at("x");
        if (!xs.is_array() || xs.empty()) throw FormatError("dataset: x must be a non-empty array");
        const Eigen::Index d = static_cast<Eigen::Index>(xs.at(0).size());
        ds.x.resize(d, static_cast<Eigen::Index>(xs.size()));
        for (std::size_t k = 0; k < xs.size(); ++k) {
            const Eigen::VectorXd col = from_json_vector(xs[k]);
            if (col.size() != d) throw FormatError("dataset: ragged x entries");
            ds.x.col(static_cast<Eigen::Index>(k)) = col;
        }
        ds.validate();
        return ds;
    } catch (const json::exception& ex) {
        throw FormatError(std::string("dataset: ") + ex.what());
    }
}

void save_dataset_json(const ExcitationDataset& ds, const std::string& path) {
    write_text_file(path, dataset_to_json(ds));
}

ExcitationDataset load_dataset_json(const std::string& path) { return dataset_from_json(read_text_file(path)); }

void save_dataset_csv(const ExcitationDataset& ds, const std::string& path) {
    ds.validate();
    std::ostringstream os;
    os << "t,u,e,f";
    for (Eigen::Index i = 0; i < ds.x.rows() / 2; ++i) os << ",s" << i + 1 << ",v" << i + 1;
    os << '\n';
    for (Eigen::Index k = 0; k < ds.u.size(); ++k) {
        os << format_double(static_cast<double>(k) * ds.meta.dt) << ',' << format_double(ds.u(k)) << ','
           << format_double(ds.e(k)) << ',' << format_double(ds.f(k));
        for (Eigen::Index i = 0; i < ds.x.rows(); ++i) os << ',' << format_double(ds.x(i, k));
        os << '\n';
    }
    write_text_file(path, os.str());
}

}  // namespace rdeep
