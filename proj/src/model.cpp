#include "drshift/model.hpp"

#include <cmath>
#include <numbers>

#include "drshift/errors.hpp"

namespace drshift {

namespace {
constexpr double kTwoOverPi = 2.0 / std::numbers::pi;
// max_u |2u / (1+u^2)^2| is attained at u = 1/sqrt(3).
const double kArctanD2Sup = kTwoOverPi * 9.0 / (8.0 * std::sqrt(3.0));
// max_u |(6u^2 - 2) / (1+u^2)^3| is attained at u = 0.
constexpr double kArctanD3Sup = kTwoOverPi * 2.0;
} // namespace

Link parse_link(const std::string& name)
{
    if (name == "identity") {
        return Link::identity;
    }
    if (name == "bounded-arctan") {
        return Link::bounded_arctan;
    }
    throw ConfigError("unknown link '" + name + "' (expected identity or bounded-arctan)");
}

Features parse_features(const std::string& name)
{
    if (name == "linear") {
        return Features::linear;
    }
    if (name == "affine") {
        return Features::affine;
    }
    throw ConfigError("unknown feature map '" + name + "' (expected linear or affine)");
}

std::string to_string(Link link)
{
    return link == Link::identity ? "identity" : "bounded-arctan";
}

std::string to_string(Features features)
{
    return features == Features::linear ? "linear" : "affine";
}

double link_value(Link link, double u)
{
    return link == Link::identity ? u : kTwoOverPi * std::atan(u);
}

double link_d1(Link link, double u)
{
    return link == Link::identity ? 1.0 : kTwoOverPi / (1.0 + u * u);
}

double link_d2(Link link, double u)
{
    if (link == Link::identity) {
        return 0.0;
    }
    const double s = 1.0 + u * u;
    return -kTwoOverPi * 2.0 * u / (s * s);
}

double link_d3(Link link, double u)
{
    if (link == Link::identity) {
        return 0.0;
    }
    const double s = 1.0 + u * u;
    return kTwoOverPi * (6.0 * u * u - 2.0) / (s * s * s);
}

ParametricModel::ParametricModel(Link link, Features features, int input_dim, double input_radius,
                                 std::optional<double> theta_radius)
    : link_(link), features_(features), input_dim_(input_dim), theta_radius_(theta_radius)
{
    if (input_dim < 1) {
        throw ConfigError("model input dimension must be positive");
    }
    if (!(input_radius > 0.0)) {
        throw ConfigError("model input radius must be positive");
    }
    if (theta_radius && !(*theta_radius > 0.0)) {
        throw ConfigError("model theta radius must be positive");
    }
    feature_cap_ = features == Features::affine ? std::sqrt(1.0 + input_radius * input_radius)
                                                : input_radius;
}

Vector ParametricModel::phi(const PointRef& x) const
{
    if (features_ == Features::linear) {
        return x;
    }
    Vector out(input_dim_ + 1);
    out[0] = 1.0;
    out.tail(input_dim_) = x;
    return out;
}

Points ParametricModel::feature_matrix(const Points& x) const
{
    if (features_ == Features::linear) {
        return x;
    }
    Points out(x.rows(), x.cols() + 1);
    out.col(0).setOnes();
    out.rightCols(x.cols()) = x;
    return out;
}

double ParametricModel::value(const PointRef& x, const Vector& theta) const
{
    return link_value(link_, phi(x).dot(theta));
}

Vector ParametricModel::gradient(const PointRef& x, const Vector& theta) const
{
    const Vector p = phi(x);
    return link_d1(link_, p.dot(theta)) * p;
}

Matrix ParametricModel::hessian(const PointRef& x, const Vector& theta) const
{
    const Vector p = phi(x);
    return link_d2(link_, p.dot(theta)) * (p * p.transpose());
}

Smoothness ParametricModel::smoothness() const
{
    const double c = feature_cap_;
    if (link_ == Link::identity) {
        return {c, 0.0, 0.0};
    }
    return {kTwoOverPi * c, kArctanD2Sup * c * c, kArctanD3Sup * c * c * c};
}

Vector ParametricModel::embed(const Vector& input_theta) const
{
    if (input_theta.size() != input_dim_) {
        throw ConfigError("parameter dimension " + std::to_string(input_theta.size()) +
                          " does not match model input dimension " + std::to_string(input_dim_));
    }
    if (features_ == Features::linear) {
        return input_theta;
    }
    Vector out(input_dim_ + 1);
    out[0] = 0.0;
    out.tail(input_dim_) = input_theta;
    return out;
}

} // namespace drshift
