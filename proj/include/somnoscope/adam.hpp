#pragma once

#include <cmath>

#include "somnoscope/common.hpp"

namespace somnoscope {

struct AdamOptions {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adam over a flat parameter vector.
template <typename Scalar>
class Adam {
public:
    Adam(Eigen::Index n_params, AdamOptions options)
        : opt_(options), m_(Vec<Scalar>::Zero(n_params)), v_(Vec<Scalar>::Zero(n_params)) {}

    void step(Eigen::Ref<Vec<Scalar>> params, const Eigen::Ref<const Vec<Scalar>>& grad) {
        ++t_;
        const auto b1 = static_cast<Scalar>(opt_.beta1);
        const auto b2 = static_cast<Scalar>(opt_.beta2);
        m_ = b1 * m_ + (Scalar(1) - b1) * grad;
        v_ = b2 * v_ + (Scalar(1) - b2) * grad.cwiseProduct(grad);
        const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
        const auto lr = static_cast<Scalar>(opt_.learning_rate * std::sqrt(c2) / c1);
        const auto eps = static_cast<Scalar>(opt_.epsilon * std::sqrt(c2));
        params.array() -= lr * m_.array() / (v_.array().sqrt() + eps);
    }

    long steps() const { return t_; }

private:
    AdamOptions opt_;
    Vec<Scalar> m_;
    Vec<Scalar> v_;
    long t_ = 0;
};

} // namespace somnoscope
