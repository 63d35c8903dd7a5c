#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "dflow/field.hpp"
#include "dflow/prior.hpp"
#include "dflow/types.hpp"

namespace testing {

using dflow::Mat;
using dflow::Vec;

inline double rel_err(const Vec& a, const Vec& b)
{
    const double nb = b.norm();
    return nb > 0.0 ? (a - b).norm() / nb : a.norm();
}

inline double rel_err(const Mat& a, const Mat& b)
{
    const double nb = b.norm();
    return nb > 0.0 ? (a - b).norm() / nb : a.norm();
}

inline Vec randn(int d, std::mt19937_64& rng)
{
    std::normal_distribution<double> n(0.0, 1.0);
    Vec v(d);
    for (int i = 0; i < d; ++i) {
        v[i] = n(rng);
    }
    return v;
}

inline Vec fd_grad(const std::function<double(const Vec&)>& f, const Vec& x, double h)
{
    Vec g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Vec xp = x;
        Vec xm = x;
        xp[i] += h;
        xm[i] -= h;
        g[i] = (f(xp) - f(xm)) / (2.0 * h);
    }
    return g;
}

inline Vec v2(double a, double b)
{
    Vec v(2);
    v << a, b;
    return v;
}

inline dflow::TargetPrior two_gaussians(double sep = 4.0, double s = 0.5, int d = 2)
{
    Mat means = Mat::Zero(d, 2);
    means(0, 0) = -sep / 2.0;
    means(0, 1) = sep / 2.0;
    return dflow::TargetPrior::isotropic_mixture(means, Vec::Constant(2, s * s));
}

inline dflow::TargetPrior standard_gaussian(int d)
{
    return dflow::TargetPrior::isotropic_mixture(Mat::Zero(d, 1), Vec::Ones(1));
}

inline dflow::TargetPrior single_point(const Vec& x)
{
    return dflow::TargetPrior::empirical(Mat(x));
}

} // namespace testing
