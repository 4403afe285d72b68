#include "ttt/quadrature.hpp"

#include "ttt/errors.hpp"

namespace ttt::quad {

namespace {

GaussLegendreRule build_rule(int n) {
  auto wide = compute_gauss_legendre_rule<long double>(n);
  GaussLegendreRule rule;
  rule.nodes.assign(wide.nodes.begin(), wide.nodes.end());
  rule.weights.assign(wide.weights.begin(), wide.weights.end());
  return rule;
}

}  // namespace

const GaussLegendreRule& gauss_legendre_rule(int n) {
  if (n == 32) {
    static const GaussLegendreRule r32 = build_rule(32);
    return r32;
  }
  if (n == 64) {
    static const GaussLegendreRule r64 = build_rule(64);
    return r64;
  }
  if (n < 1 || n > 512) throw Error(ErrorKind::Domain, "Gauss-Legendre node count out of range");
  static std::mutex mutex;
  static std::map<int, GaussLegendreRule> cache;
  std::lock_guard lock(mutex);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, build_rule(n)).first;
  return it->second;
}

}  // namespace ttt::quad
