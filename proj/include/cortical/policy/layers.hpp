#pragma once

#include <string>

#include "cortical/numcore/ops.hpp"
#include "cortical/policy/params.hpp"

namespace cortical::policy {

// x: B x C x H x W with parameters name.w (O x C x k x k) and name.b (O).
Var conv(const Bound& p, const std::string& name, Var x, std::size_t stride = 1);
// x: T x in with name.w (in x out) and name.b (out).
Var linear(const Bound& p, const std::string& name, Var x);
// Single-head self-attention with a residual connection. Parameters
// name.q, name.k, name.v, name.o are C x C linear layers.
Var attention(const Bound& p, const std::string& name, Var tokens);
void init_attention(ParameterStore& store, Rng& rng, const std::string& name, std::size_t width);

// C x H x W <-> (H*W) x C.
Var map_to_tokens(Var fm);
Var tokens_to_map(Var tokens, std::size_t height, std::size_t width);

}  // namespace cortical::policy
