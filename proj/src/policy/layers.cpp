#include "cortical/policy/layers.hpp"

#include <cmath>

namespace cortical::policy {

Var conv(const Bound& p, const std::string& name, Var x, std::size_t stride) {
  Var w = p[name + ".w"];
  const std::size_t k = w.shape()[2];
  Var y = ops::conv2d(x, w, {stride, k / 2});
  return ops::add(y, ops::reshape(p[name + ".b"], {1, w.shape()[0], 1, 1}));
}

Var linear(const Bound& p, const std::string& name, Var x) {
  return ops::add(ops::matmul(x, p[name + ".w"]), p[name + ".b"]);
}

Var attention(const Bound& p, const std::string& name, Var tokens) {
  const double scale = 1.0 / std::sqrt(double(tokens.shape()[1]));
  Var q = linear(p, name + ".q", tokens);
  Var k = linear(p, name + ".k", tokens);
  Var v = linear(p, name + ".v", tokens);
  Var a = ops::softmax(ops::scale(ops::matmul(q, ops::transpose(k)), scale));
  return ops::add(tokens, linear(p, name + ".o", ops::matmul(a, v)));
}

void init_attention(ParameterStore& store, Rng& rng, const std::string& name, std::size_t width) {
  for (const char* part : {".q", ".k", ".v", ".o"}) init_linear(store, rng, name + part, width, width);
  // Start the residual branch small.
  auto o = store.get_mut(name + ".o.w").data<double>();
  for (double& x : o) x *= 0.1;
}

Var map_to_tokens(Var fm) {
  const Shape s = fm.shape();
  return ops::transpose(ops::reshape(fm, {s[0], s[1] * s[2]}));
}

Var tokens_to_map(Var tokens, std::size_t height, std::size_t width) {
  return ops::reshape(ops::transpose(tokens), {tokens.shape()[1], height, width});
}

}  // namespace cortical::policy
