#include "trajview/engine/layers.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace trajview::engine {

Var gat_layer(Tape& tape, Var node_feats, const Tensor& adj_with_self, const GatParams& p) {
  const int n = tape.value(node_feats).rows();
  if (adj_with_self.rows() != n || adj_with_self.cols() != n)
    throw std::invalid_argument("gat_layer: adjacency " + adj_with_self.shape_str() + " for " +
                                std::to_string(n) + " nodes");
  for (int r = 0; r < n; ++r) {
    bool any = false;
    for (int c = 0; c < n; ++c)
      if (adj_with_self.at(r, c) != 0.0) {
        any = true;
        break;
      }
    if (!any)
      throw std::invalid_argument("gat_layer: node " + std::to_string(r) +
                                  " has no neighbors and no self-loop");
  }
  Var h = tape.matmul(node_feats, p.w);                    // n x d_out
  Var src = tape.matmul(h, p.attn_src);                    // n x 1
  Var dst = tape.matmul(h, p.attn_dst);                    // n x 1
  Var scores = tape.leaky_relu(tape.outer_sum(src, dst), 0.2);
  Var alpha = tape.masked_softmax_rows(scores, adj_with_self);
  return tape.elu(tape.matmul(alpha, h));
}

Var multi_head_attention(Tape& tape, Var query_seq, Var kv_seq, const AttentionParams& p, int heads) {
  const int d = tape.value(query_seq).cols();
  if (tape.value(kv_seq).rows() < 1) throw std::invalid_argument("multi_head_attention: empty kv sequence");
  if (heads < 1 || d % heads != 0)
    throw std::invalid_argument("multi_head_attention: dim " + std::to_string(d) + " not divisible by " +
                                std::to_string(heads) + " heads");
  const int dk = d / heads;
  Var q = tape.linear(query_seq, p.wq, p.bq);
  Var k = tape.matmul(kv_seq, p.wk);
  Var v = tape.linear(kv_seq, p.wv, p.bv);
  std::vector<Var> head_outs;
  head_outs.reserve(heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  for (int hh = 0; hh < heads; ++hh) {
    Var qh = tape.slice_cols(q, hh * dk, dk);
    Var kh = tape.slice_cols(k, hh * dk, dk);
    Var vh = tape.slice_cols(v, hh * dk, dk);
    Var attn = tape.softmax_rows(tape.scale(tape.matmul_nt(qh, kh), inv_sqrt));
    head_outs.push_back(tape.matmul(attn, vh));
  }
  Var merged = tape.concat_cols(head_outs);
  return tape.linear(merged, p.wo, p.bo);
}

Var transformer_block(Tape& tape, Var seq, const TransformerBlockParams& p, int heads) {
  Var a = tape.layer_norm(seq, p.ln1_g, p.ln1_b);
  Var x1 = tape.add(seq, multi_head_attention(tape, a, a, p.attn, heads));
  Var f = tape.layer_norm(x1, p.ln2_g, p.ln2_b);
  Var ff = tape.linear(tape.relu(tape.linear(f, p.ff_w1, p.ff_b1)), p.ff_w2, p.ff_b2);
  return tape.add(x1, ff);
}

Var gru_cell(Tape& tape, Var x_row, Var h_row, const GruParams& p, int hidden) {
  return tape.gru_cell_fused(x_row, h_row, p.wx, p.u_zr, p.u_n, p.b_zr, p.b_n, hidden);
}

BiGruResult bigru_encode(Tape& tape, Var seq, const GruParams& fw, const GruParams& bw, int hidden) {
  const int len = tape.value(seq).rows();
  if (len < 1) throw std::invalid_argument("bigru_encode: empty sequence");
  std::vector<Var> fwd(len), rev(len);
  Var h = tape.constant(Tensor(1, hidden));
  for (int t = 0; t < len; ++t) {
    h = gru_cell(tape, tape.slice_rows(seq, t, 1), h, fw, hidden);
    fwd[t] = h;
  }
  h = tape.constant(Tensor(1, hidden));
  for (int t = len - 1; t >= 0; --t) {
    h = gru_cell(tape, tape.slice_rows(seq, t, 1), h, bw, hidden);
    rev[t] = h;
  }
  std::vector<Var> steps(len);
  for (int t = 0; t < len; ++t) {
    std::vector<Var> pair{fwd[t], rev[t]};
    steps[t] = tape.concat_cols(pair);
  }
  BiGruResult out;
  out.states = tape.concat_rows(steps);
  out.summary = tape.mean_rows(out.states);
  return out;
}

}  // namespace trajview::engine
