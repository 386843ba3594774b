#pragma once

#include <vector>

#include "trajview/engine/tape.hpp"

namespace trajview::engine {

/// Single graph-attention layer. `adj_with_self` is the VxV attention mask
/// (nonzero = attend); pass adjacency plus identity for self-loops.
/// Scoring: e[v][u] = leaky_relu(a1 . h_v + a2 . h_u) over projected
/// features h = feats @ w, softmax over each row's enabled set, ELU output.
struct GatParams {
  Var w;         // d_in x d_out
  Var attn_src;  // d_out x 1  (query half of the scoring vector)
  Var attn_dst;  // d_out x 1  (key half)
};
Var gat_layer(Tape& tape, Var node_feats, const Tensor& adj_with_self, const GatParams& p);

struct AttentionParams {
  Var wq, bq;
  Var wk;  // no key bias: a shared key offset cancels inside the row softmax
  Var wv, bv;
  Var wo, bo;
};

/// Standard multi-head attention: softmax(Q K^T / sqrt(d_k)) V per head,
/// heads concatenated then output-projected. kv_seq must be non-empty.
Var multi_head_attention(Tape& tape, Var query_seq, Var kv_seq, const AttentionParams& p, int heads);

struct TransformerBlockParams {
  Var ln1_g, ln1_b;
  AttentionParams attn;
  Var ln2_g, ln2_b;
  Var ff_w1, ff_b1;  // d -> ff
  Var ff_w2, ff_b2;  // ff -> d
};

/// Pre-norm block: x + Attn(LN(x)), then + FFN(LN(.)).
Var transformer_block(Tape& tape, Var seq, const TransformerBlockParams& p, int heads);

/// One direction of a GRU. Gate weights are packed: wx (in x 3h) covers
/// update/reset/candidate inputs, u_zr (h x 2h) the recurrent update/reset
/// part, u_n (h x h) the recurrent candidate part.
struct GruParams {
  Var wx;    // in x 3h
  Var u_zr;  // h x 2h
  Var u_n;   // h x h
  Var b_zr;  // 1 x 2h
  Var b_n;   // 1 x h
};

/// h' = (1 - z) * h + z * n with
///   z = sigmoid(x Wz + h Uz + bz), r = sigmoid(x Wr + h Ur + br),
///   n = tanh(x Wn + (r * h) Un + bn)
Var gru_cell(Tape& tape, Var x_row, Var h_row, const GruParams& p, int hidden);

struct BiGruResult {
  Var states;   // L x 2h, forward and backward states concatenated per step
  Var summary;  // 1 x 2h, mean over steps
};

/// Bidirectional GRU over a LxD sequence (L >= 1).
BiGruResult bigru_encode(Tape& tape, Var seq, const GruParams& fw, const GruParams& bw, int hidden);

}  // namespace trajview::engine
