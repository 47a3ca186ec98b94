#include "gapkit/decomp.hpp"

namespace gapkit {

std::string to_string(DecompositionMode mode) {
  switch (mode) {
    case DecompositionMode::TwoSided: return "two-sided";
    case DecompositionMode::OneSidedPrefix: return "one-sided-prefix";
    case DecompositionMode::OneSidedSuffix: return "one-sided-suffix";
  }
  return "unknown";
}

DecompositionMode parse_decomposition_mode(const std::string& name) {
  if (name == "two-sided") return DecompositionMode::TwoSided;
  if (name == "one-sided-prefix" || name == "prefix") return DecompositionMode::OneSidedPrefix;
  if (name == "one-sided-suffix" || name == "suffix") return DecompositionMode::OneSidedSuffix;
  throw InvalidArgument("unknown decomposition mode '" + name + "'");
}

std::vector<double> lambda_values(const DynSystem& system, const LambdaFunction& lambda,
                                  const OrbitSegment& seg) {
  std::vector<double> out;
  out.reserve(seg.n);
  TorusPoint x = seg.base;
  for (std::size_t i = 0; i < seg.n; ++i) {
    double v = lambda(x);
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument("lambda must be finite and non-negative");
    out.push_back(v);
    if (i + 1 < seg.n) x = system.forward(x);
  }
  return out;
}

BirkhoffStats birkhoff_stats(const DynSystem& system, const OrbitSegment& seg, const LambdaFunction& lambda,
                             const Potential* phi) {
  BirkhoffStats st;
  st.lambda_sums.assign(seg.n + 1, 0.0);
  st.phi_sums.assign(seg.n + 1, 0.0);
  TorusPoint x = seg.base;
  for (std::size_t i = 0; i < seg.n; ++i) {
    st.lambda_sums[i + 1] = st.lambda_sums[i] + lambda(x);
    st.phi_sums[i + 1] = st.phi_sums[i] + (phi ? (*phi)(x) : 0.0);
    if (i + 1 < seg.n) x = system.forward(x);
  }
  return st;
}

double birkhoff_average(std::span<const double> prefix_sums, std::size_t a, std::size_t b) {
  if (!(a < b)) throw InvalidArgument("empty averaging window");
  if (b >= prefix_sums.size()) throw InvalidArgument("window exceeds the segment");
  return (prefix_sums[b] - prefix_sums[a]) / static_cast<double>(b - a);
}

double birkhoff_average(const DynSystem& system, const Potential& phi, const OrbitSegment& seg,
                        std::size_t a, std::size_t b) {
  if (!(a < b)) throw InvalidArgument("empty averaging window");
  if (b > seg.n) throw InvalidArgument("window exceeds the segment");
  std::vector<double> sums(seg.n + 1, 0.0);
  TorusPoint x = seg.base;
  for (std::size_t i = 0; i < b; ++i) {
    sums[i + 1] = sums[i] + phi(x);
    if (i + 1 < b) x = system.forward(x);
  }
  return birkhoff_average(sums, a, b);
}

Classification classify_segment(const DynSystem& system, const LambdaFunction& lambda, double eta,
                                const OrbitSegment& seg) {
  if (!(eta > 0.0)) throw InvalidArgument("eta must be positive");
  auto values = lambda_values(system, lambda, seg);
  return classify_values<double>(values, eta);
}

DecompositionResult decompose(const DynSystem& system, const LambdaFunction& lambda, double eta,
                              const OrbitSegment& seg, DecompositionMode mode) {
  auto values = lambda_values(system, lambda, seg);
  return decompose_values<double>(values, eta, mode);
}

LambdaFunction product_lambda(const LambdaFunction& lambda, std::size_t split) {
  LambdaFunction out;
  auto f = lambda.evaluator;
  out.evaluator = [f, split](const TorusPoint& z) {
    return f(z.slice(0, split)) * f(z.slice(split, z.dim() - split));
  };
  out.sup_bound = lambda.sup_bound * lambda.sup_bound;
  out.label = lambda.label + "x" + lambda.label;
  return out;
}

}  // namespace gapkit
