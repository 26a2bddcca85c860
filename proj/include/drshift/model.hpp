#pragma once

#include <optional>
#include <string>

#include "drshift/types.hpp"

namespace drshift {

/// Output link eta applied to theta^T phi(x).
enum class Link { identity, bounded_arctan };
/// phi(x) = x (linear) or (1, x) (affine).
enum class Features { linear, affine };

Link parse_link(const std::string& name);
Features parse_features(const std::string& name);
std::string to_string(Link link);
std::string to_string(Features features);

/// eta and its first three derivatives; bounded_arctan is (2/pi) * atan(u).
double link_value(Link link, double u);
double link_d1(Link link, double u);
double link_d2(Link link, double u);
double link_d3(Link link, double u);

/// Declared bounds on ||grad f||_2, ||hess f||_op and ||third f||_op.
struct Smoothness {
    double b1 = 0.0;
    double b2 = 0.0;
    double b3 = 0.0;
};

/// f(x; theta) = eta(theta^T phi(x)).
class ParametricModel {
public:
    ParametricModel(Link link, Features features, int input_dim, double input_radius,
                    std::optional<double> theta_radius = std::nullopt);

    Link link() const { return link_; }
    Features features() const { return features_; }
    int input_dim() const { return input_dim_; }
    int dim_theta() const { return features_ == Features::affine ? input_dim_ + 1 : input_dim_; }
    std::optional<double> theta_radius() const { return theta_radius_; }
    /// sup ||phi(x)||_2 over the ball of radius input_radius.
    double feature_cap() const { return feature_cap_; }

    Vector phi(const PointRef& x) const;
    Points feature_matrix(const Points& x) const;

    double value(const PointRef& x, const Vector& theta) const;
    Vector gradient(const PointRef& x, const Vector& theta) const;
    Matrix hessian(const PointRef& x, const Vector& theta) const;

    /// Analytic chain-rule bounds from the link and the feature cap.
    Smoothness smoothness() const;

    /// Lift an input-space coefficient vector into the model's parameterization
    /// (prepends a zero intercept for affine features).
    Vector embed(const Vector& input_theta) const;

private:
    Link link_;
    Features features_;
    int input_dim_;
    double feature_cap_;
    std::optional<double> theta_radius_;
};

/// Fisher information pair I_P(theta*), I_Q(theta*).
struct FisherPair {
    enum class Provenance { closed_form, monte_carlo };
    Matrix i_p;
    Matrix i_q;
    Provenance provenance = Provenance::closed_form;
    long long mc_draws = 0;
    unsigned long long mc_seed = 0;
};

} // namespace drshift
