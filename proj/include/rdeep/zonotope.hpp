#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "rdeep/errors.hpp"
#include "rdeep/lp.hpp"

namespace rdeep {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Axis-aligned box [lower, upper].
template <typename Scalar>
struct Interval {
    Vec<Scalar> lower;
    Vec<Scalar> upper;

    Interval() = default;
    Interval(Vec<Scalar> lo, Vec<Scalar> hi) : lower(std::move(lo)), upper(std::move(hi)) {
        if (lower.size() != upper.size()) throw ShapeError("Interval: bound sizes differ");
    }

    static Interval symmetric(const Vec<Scalar>& radius) { return Interval(-radius, radius); }

    Eigen::Index dim() const { return lower.size(); }
    Vec<Scalar> center() const { return (lower + upper) / Scalar(2); }
    Vec<Scalar> radius() const { return (upper - lower) / Scalar(2); }
    bool empty() const { return (lower.array() > upper.array()).any(); }

    bool contains(const Vec<Scalar>& x, Scalar tol = Scalar(1e-7)) const {
        if (x.size() != dim()) throw ShapeError("Interval::contains: dimension mismatch");
        return (x.array() >= lower.array() - tol).all() && (x.array() <= upper.array() + tol).all();
    }
};

/// Set { c + G beta : |beta|_inf <= 1 }.
template <typename Scalar>
class Zonotope {
public:
    Zonotope() = default;
    Zonotope(Vec<Scalar> center, Mat<Scalar> generators)
        : center_(std::move(center)), generators_(std::move(generators)) {
        if (generators_.rows() != center_.size()) {
            if (generators_.size() == 0) {
                generators_.resize(center_.size(), 0);
            } else {
                throw ShapeError("Zonotope: generator rows do not match center");
            }
        }
    }

    static Zonotope point(const Vec<Scalar>& c) { return Zonotope(c, Mat<Scalar>(c.size(), 0)); }

    static Zonotope from_interval(const Interval<Scalar>& box) {
        if (box.empty()) throw DomainError("Zonotope::from_interval: empty interval");
        Vec<Scalar> r = box.radius();
        Mat<Scalar> g = Mat<Scalar>::Zero(r.size(), r.size());
        g.diagonal() = r;
        return Zonotope(box.center(), std::move(g));
    }

    const Vec<Scalar>& center() const { return center_; }
    const Mat<Scalar>& generators() const { return generators_; }
    Eigen::Index dim() const { return center_.size(); }
    Eigen::Index num_generators() const { return generators_.cols(); }

private:
    Vec<Scalar> center_;
    Mat<Scalar> generators_;
};

/// Set { C + sum_i beta_i G_i : |beta|_inf <= 1 } of matrices.
template <typename Scalar>
class MatrixZonotope {
public:
    MatrixZonotope() = default;
    MatrixZonotope(Mat<Scalar> center, std::vector<Mat<Scalar>> generators)
        : center_(std::move(center)), generators_(std::move(generators)) {
        for (const auto& g : generators_) {
            if (g.rows() != center_.rows() || g.cols() != center_.cols()) {
                throw ShapeError("MatrixZonotope: generator shape does not match center");
            }
        }
    }

    const Mat<Scalar>& center() const { return center_; }
    const std::vector<Mat<Scalar>>& generators() const { return generators_; }
    Eigen::Index rows() const { return center_.rows(); }
    Eigen::Index cols() const { return center_.cols(); }
    std::size_t num_generators() const { return generators_.size(); }

    // Elementwise bounds of the set.
    Interval<Scalar> interval_hull() const {
        Mat<Scalar> rad = Mat<Scalar>::Zero(rows(), cols());
        for (const auto& g : generators_) rad += g.cwiseAbs();
        Eigen::Map<const Vec<Scalar>> c(center_.data(), center_.size());
        Eigen::Map<const Vec<Scalar>> r(rad.data(), rad.size());
        return Interval<Scalar>(c - r, c + r);
    }

private:
    Mat<Scalar> center_;
    std::vector<Mat<Scalar>> generators_;
};

template <typename Scalar>
Zonotope<Scalar> linear_map(const Mat<Scalar>& M, const Zonotope<Scalar>& Z) {
    if (M.cols() != Z.dim()) throw ShapeError("linear_map: matrix columns do not match dimension");
    return Zonotope<Scalar>(M * Z.center(), M * Z.generators());
}

template <typename Scalar>
Zonotope<Scalar> minkowski_sum(const Zonotope<Scalar>& a, const Zonotope<Scalar>& b) {
    if (a.dim() != b.dim()) throw ShapeError("minkowski_sum: dimension mismatch");
    Mat<Scalar> g(a.dim(), a.num_generators() + b.num_generators());
    g << a.generators(), b.generators();
    return Zonotope<Scalar>(a.center() + b.center(), std::move(g));
}

template <typename Scalar>
Zonotope<Scalar> cartesian_product(const Zonotope<Scalar>& a, const Zonotope<Scalar>& b) {
    const Eigen::Index n = a.dim() + b.dim();
    Vec<Scalar> c(n);
    c << a.center(), b.center();
    Mat<Scalar> g = Mat<Scalar>::Zero(n, a.num_generators() + b.num_generators());
    g.topLeftCorner(a.dim(), a.num_generators()) = a.generators();
    g.bottomRightCorner(b.dim(), b.num_generators()) = b.generators();
    return Zonotope<Scalar>(std::move(c), std::move(g));
}

template <typename Scalar, typename... Rest>
Zonotope<Scalar> cartesian_product(const Zonotope<Scalar>& a, const Zonotope<Scalar>& b,
                                   const Rest&... rest) {
    return cartesian_product(cartesian_product(a, b), rest...);
}

template <typename Scalar>
Interval<Scalar> interval_hull(const Zonotope<Scalar>& Z) {
    Vec<Scalar> r = Z.generators().cwiseAbs().rowwise().sum();
    if (Z.num_generators() == 0) r = Vec<Scalar>::Zero(Z.dim());
    return Interval<Scalar>(Z.center() - r, Z.center() + r);
}

/// Image of Z under every matrix in M, over-approximated by
/// < C c, [C G, G_1 c, ..., G_k c, G_1 G, ..., G_k G] >.
template <typename Scalar>
Zonotope<Scalar> matzono_map(const MatrixZonotope<Scalar>& M, const Zonotope<Scalar>& Z) {
    if (M.cols() != Z.dim()) throw ShapeError("matzono_map: matrix columns do not match dimension");
    const Eigen::Index gz = Z.num_generators();
    const Eigen::Index gm = static_cast<Eigen::Index>(M.num_generators());
    Mat<Scalar> g(M.rows(), gz + gm + gm * gz);
    g.leftCols(gz) = M.center() * Z.generators();
    Eigen::Index col = gz;
    for (const auto& Gi : M.generators()) g.col(col++) = Gi * Z.center();
    for (const auto& Gi : M.generators()) {
        g.middleCols(col, gz) = Gi * Z.generators();
        col += gz;
    }
    return Zonotope<Scalar>(M.center() * Z.center(), std::move(g));
}

/// Box reduction: keeps the (max_generators - dim) generators with the largest
/// 1-norm and encloses the rest in an axis-aligned box.
template <typename Scalar>
Zonotope<Scalar> reduce_order(const Zonotope<Scalar>& Z, Eigen::Index max_generators) {
    const Eigen::Index d = Z.dim();
    if (max_generators < d) throw ParameterError("reduce_order: budget smaller than dimension");
    if (Z.num_generators() <= max_generators) return Z;

    const Mat<Scalar>& G = Z.generators();
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(G.cols()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    Vec<Scalar> norms = G.cwiseAbs().colwise().sum().transpose();
    std::stable_sort(idx.begin(), idx.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return norms(a) > norms(b); });

    const Eigen::Index keep = max_generators - d;
    Mat<Scalar> out = Mat<Scalar>::Zero(d, max_generators);
    for (Eigen::Index k = 0; k < keep; ++k) out.col(k) = G.col(idx[static_cast<std::size_t>(k)]);
    Vec<Scalar> box = Vec<Scalar>::Zero(d);
    for (std::size_t k = static_cast<std::size_t>(keep); k < idx.size(); ++k) {
        box += G.col(idx[k]).cwiseAbs();
    }
    out.rightCols(d).diagonal() = box;
    return Zonotope<Scalar>(Z.center(), std::move(out));
}

/// Smallest t with x in c + G[-1,1]^m + t[-1,1]^d, solved as an LP.
template <typename Scalar>
double containment_slack(const Zonotope<Scalar>& Z, const Vec<Scalar>& x) {
    if (x.size() != Z.dim()) throw ShapeError("contains_point: dimension mismatch");
    const Eigen::Index d = Z.dim();
    const Eigen::Index m = Z.num_generators();
    const Eigen::MatrixXd G = Z.generators().template cast<double>();
    const Eigen::VectorXd r = (x - Z.center()).template cast<double>();
    if (m == 0) return r.cwiseAbs().maxCoeff();

    // Variables [beta (m), t, s+ (d), s- (d)]:
    //   G beta + s+ - t = r,  -G beta + s- - t = -r,  s+/s- >= 0.
    const Eigen::Index n = m + 1 + 2 * d;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2 * d, n);
    A.topLeftCorner(d, m) = G;
    A.bottomLeftCorner(d, m) = -G;
    A.col(m).setConstant(-1.0);
    A.block(0, m + 1, d, d).setIdentity();
    A.block(d, m + 1 + d, d, d).setIdentity();
    Eigen::VectorXd b(2 * d);
    b << r, -r;
    const double inf = std::numeric_limits<double>::infinity();
    Eigen::VectorXd lo = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd hi = Eigen::VectorXd::Constant(n, inf);
    lo.head(m).setConstant(-1.0);
    hi.head(m).setConstant(1.0);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
    c(m) = 1.0;
    const LpResult res = solve_lp(c, A, b, lo, hi);
    if (res.status != LpStatus::optimal) throw SolverError("contains_point: LP did not converge");
    return res.objective;
}

template <typename Scalar>
bool contains_point(const Zonotope<Scalar>& Z, const Vec<Scalar>& x, double tol = 1e-7) {
    return containment_slack(Z, x) <= tol;
}

/// Whether matrix X lies in the matrix zonotope, via the LP on vectorized entries.
template <typename Scalar>
bool contains_matrix(const MatrixZonotope<Scalar>& M, const Mat<Scalar>& X, double tol = 1e-7) {
    if (X.rows() != M.rows() || X.cols() != M.cols()) throw ShapeError("contains_matrix: shape mismatch");
    const Eigen::Index n = M.rows() * M.cols();
    Mat<Scalar> G(n, static_cast<Eigen::Index>(M.num_generators()));
    for (std::size_t i = 0; i < M.num_generators(); ++i) {
        G.col(static_cast<Eigen::Index>(i)) = M.generators()[i].reshaped();
    }
    Zonotope<Scalar> Z(M.center().reshaped(), std::move(G));
    return contains_point(Z, Vec<Scalar>(X.reshaped()), tol);
}

}  // namespace rdeep
