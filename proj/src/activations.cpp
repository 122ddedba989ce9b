#include "jntk/activations.hpp"

#include <cmath>
#include <numbers>

#include "jntk/errors.hpp"
#include "jntk/gaussian_expectations.hpp"

namespace jntk {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014326779399460599343819;
constexpr double kTwoOverSqrtPi = 1.1283791670955125738961589031215452;

double normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }
double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

ActivationValues raw_eval(ActivationKind kind, double z) {
  switch (kind) {
    case ActivationKind::identity:
      return {z, 1.0, 0.0};
    case ActivationKind::erf: {
      const double g = kTwoOverSqrtPi * std::exp(-z * z);
      return {std::erf(z), g, -2.0 * z * g};
    }
    case ActivationKind::gelu: {
      const double pdf = normal_pdf(z);
      const double cdf = normal_cdf(z);
      return {z * cdf, cdf + z * pdf, pdf * (2.0 - z * z)};
    }
    case ActivationKind::square:
      return {z * z, 2.0 * z, 2.0};
  }
  return {};
}

}  // namespace

ActivationKind parse_activation_kind(std::string_view name) {
  if (name == "identity") return ActivationKind::identity;
  if (name == "erf") return ActivationKind::erf;
  if (name == "gelu") return ActivationKind::gelu;
  if (name == "square") return ActivationKind::square;
  throw DomainError("unknown activation '" + std::string(name) +
                    "' (expected identity | erf | gelu | square)");
}

std::string to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::identity: return "identity";
    case ActivationKind::erf: return "erf";
    case ActivationKind::gelu: return "gelu";
    case ActivationKind::square: return "square";
  }
  return "unknown";
}

double raw_second_moment(ActivationKind kind, int order) {
  const QuadratureRule& rule = cached_gh_rule(order);
  double acc = 0.0;
  for (int k = 0; k < rule.order; ++k) {
    const double v = raw_eval(kind, rule.nodes[k]).value;
    acc += rule.weights[k] * v * v;
  }
  return acc;
}

Activation Activation::make(ActivationKind kind, bool normalise) {
  if (!normalise) return Activation(kind, 1.0);
  const double m64 = raw_second_moment(kind, 64);
  const double m128 = raw_second_moment(kind, 128);
  if (!(m64 > 0.0) || std::abs(m64 - m128) > 1e-12 * m128) {
    throw NumericError("normalisation quadrature for " + to_string(kind) +
                       " did not converge between 64 and 128 nodes");
  }
  return Activation(kind, 1.0 / std::sqrt(m128));
}

Activation Activation::with_scale(ActivationKind kind, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw DomainError("activation scale must be positive");
  return Activation(kind, scale);
}

ActivationValues Activation::eval(double z) const {
  ActivationValues r = raw_eval(kind_, z);
  r.value *= scale_;
  r.first *= scale_;
  r.second *= scale_;
  return r;
}

double Activation::value(double z) const { return eval(z).value; }
double Activation::first(double z) const { return eval(z).first; }
double Activation::second(double z) const { return eval(z).second; }

}  // namespace jntk
