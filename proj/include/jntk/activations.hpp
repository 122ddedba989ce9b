#pragma once

#include <string>
#include <string_view>

namespace jntk {

enum class ActivationKind { identity, erf, gelu, square };

// Parses "identity" | "erf" | "gelu" | "square"; throws DomainError otherwise.
ActivationKind parse_activation_kind(std::string_view name);
std::string to_string(ActivationKind kind);

struct ActivationValues {
  double value = 0.0;
  double first = 0.0;
  double second = 0.0;
};

/// A smooth activation together with its first two derivatives.
///
/// `scale` multiplies the raw activation (and therefore both derivatives).
/// With normalisation on, the scale is chosen so that E[phi(z)^2] = 1 for
/// z ~ N(0, 1). Immutable after construction.
class Activation {
 public:
  Activation() = default;

  static Activation make(ActivationKind kind, bool normalise);

  // Unnormalised activation with an explicit scale.
  static Activation with_scale(ActivationKind kind, double scale);

  ActivationKind kind() const { return kind_; }
  double scale() const { return scale_; }

  // The square activation breaks the Lipschitz requirement on phi; it is
  // kept only as an analytic oracle for shallow networks.
  bool oracle_only() const { return kind_ == ActivationKind::square; }

  ActivationValues eval(double z) const;
  double value(double z) const;
  double first(double z) const;
  double second(double z) const;

 private:
  Activation(ActivationKind kind, double scale) : kind_(kind), scale_(scale) {}

  ActivationKind kind_ = ActivationKind::identity;
  double scale_ = 1.0;
};

// E[phi_raw(z)^2] for z ~ N(0,1) by Gauss-Hermite quadrature of the given order.
double raw_second_moment(ActivationKind kind, int order);

}  // namespace jntk
