#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ethseq/rng.hpp"
#include "ethseq/seqgen.hpp"

namespace ethseq::model {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

struct ModelConfig {
    std::int32_t vocab_size = 0;
    int hidden = 64;
    int layers = 8;
    int heads = 2;
    int max_seq_len = 100;
    double dropout = 0.2;
    bool in_out_separation = false;  // MH#1: three encoder stacks, shared embeddings
    bool erc20_gate = false;         // MH#2: gate-fused contract embeddings
    bool tranx_features = true;      // ablation: drop type/direction/amount/count/time

    int encoder_count() const { return in_out_separation ? 3 : 1; }
    int representation_dim() const { return in_out_separation ? 3 * hidden : hidden; }
    int head_dim() const { return hidden / heads; }
};

struct LayerParams {
    Matrix wq, wk, wv;  // d x d attention projections
    Matrix w1, w2;      // d x d feed-forward
    Matrix b1, b2;      // 1 x d
    Matrix ln1_scale, ln1_shift;  // 1 x d, attention sublayer norm
    Matrix ln2_scale, ln2_shift;  // 1 x d, feed-forward sublayer norm
};

struct EncoderParams {
    std::vector<LayerParams> layers;
};

// All trainable tensors. The address table doubles as the output embedding
// for the contrastive loss; row 0 ([PAD]) stays frozen at zero, row 1 is the
// [MASK] embedding. With in/out separation the three encoder stacks have
// their own transformer parameters while every embedding table is shared.
struct ModelParams {
    ModelConfig cfg;
    Matrix address_table;                         // V x d
    Matrix type_table, direction_table;           // 3 x d
    Matrix amount_table, count_table, time_table;
    Matrix position_table;                        // max_seq_len x d
    std::vector<EncoderParams> encoders;
    Matrix gate_w;  // d x 2d
    Matrix gate_b;  // 1 x d

    static ModelParams init(const ModelConfig& cfg, std::uint64_t seed);
    static ModelParams zeros(const ModelConfig& cfg);
};

// Visits every tensor in the fixed checkpoint order.
void for_each_tensor(ModelParams& params,
                     const std::function<void(const std::string&, Matrix&)>& fn);
void for_each_tensor(const ModelParams& params,
                     const std::function<void(const std::string&, const Matrix&)>& fn);

// --- forward ----------------------------------------------------------------

struct GateTrace {
    int record_index = 0;
    RowVector a_c, a_u, beta;
};

struct EmbedTrace {
    Matrix h0;
    std::vector<GateTrace> gates;
};

struct LayerTrace {
    Matrix x;                        // sublayer input H^(l)
    Matrix q, k, v;
    std::vector<Matrix> probs;       // per head, post-softmax, pre-dropout
    std::vector<Matrix> attn_keep;   // per head, dropout scale factors
    Matrix attn_concat;              // heads concatenated, pre-dropout
    Matrix attn_out_keep;            // N x d
    Matrix r1;                       // x + dropped attention
    Matrix ln1_xhat;
    Vector ln1_invstd;
    Matrix y1;
    Matrix z;                        // y1 w1 + b1
    Matrix gelu_z;
    Matrix f;                        // gelu_z w2 + b2
    Matrix ffn_keep;                 // N x d
    Matrix r2;                       // y1 + dropped ffn
    Matrix ln2_xhat;
    Vector ln2_invstd;
};

struct ForwardTrace {
    EmbedTrace embed;
    std::vector<LayerTrace> layers;
    Matrix hl;  // H^(L)
    std::vector<std::uint8_t> pad;
    int encoder_index = 0;
};

// ERC-20 gate fusion (MH#2): convex combination of the contract embedding and
// the mean recipient embedding, gated by a learned sigmoid.
RowVector gate_fuse(const RowVector& a_c, const Matrix& recipient_embeddings,
                    const ModelParams& params, GateTrace* trace = nullptr);

// Embedding-sum input representation. Masked records (counterparty ==
// kMaskId) use the [MASK] row directly; the gate is only applied to unmasked
// records with attached recipients.
EmbedTrace embed_sequence(const seqgen::TxSequence& seq, const ModelParams& params,
                          const std::vector<std::uint8_t>* pad = nullptr);

// L transformer layers with post-norm residuals. Dropout is applied to
// attention probabilities and both sublayer outputs when rng is non-null and
// dropout > 0; the drawn keep masks are recorded in the trace so the same
// stochastic function can be differentiated. Throws NumericError if the
// sequence exceeds max_seq_len.
ForwardTrace encoder_forward(const seqgen::TxSequence& seq, const ModelParams& params,
                             int encoder_index, double dropout, Rng* rng,
                             const std::vector<std::uint8_t>* pad = nullptr);

// --- gradients ----------------------------------------------------------------

// Per-shard gradient accumulator: dense for everything except the address
// table, which is accumulated sparsely by row.
struct ShardGrads {
    ModelParams dense;  // address_table left empty
    std::unordered_map<std::int32_t, RowVector> addr_rows;

    static ShardGrads zeros(const ModelConfig& cfg);
    void add_addr(std::int32_t id, const RowVector& g);
    void clear();
};

// Full-parameter gradient (address table dense), assembled from shards in a
// fixed order so reductions are schedule-independent.
struct GradSet {
    ModelParams g;
    static GradSet zeros(const ModelConfig& cfg);
    void add_shard(const ShardGrads& shard);
    void scale(double s);
};

// Exact reverse-mode gradients through the encoder and embedding layers for
// one sequence, reusing the recorded dropout masks. d_hl is dLoss/dH^(L).
void encoder_backward(const ForwardTrace& trace, const seqgen::TxSequence& seq,
                      const ModelParams& params, const Matrix& d_hl, ShardGrads& grads);

// --- contrastive loss ---------------------------------------------------------

struct MapLossResult {
    double loss_sum = 0.0;  // sum over positions of -log softmax
    std::size_t positions = 0;
    Matrix d_hm;    // M x d, gradient of (scale * loss_sum) w.r.t. the h rows
    Matrix logits;  // M x (1+P): column 0 is the positive logit
};

// Sampled-softmax contrastive loss over masked positions. hm holds the final
// hidden rows of the masked positions; pool is shared by every position.
// A pool element colliding with a position's own positive is excluded from
// that position's softmax. Gradients (scaled by `scale`) are accumulated into
// `grads` when non-null: both into d_hm and into the address rows of the
// positives and pool entries.
MapLossResult map_loss(const Matrix& hm, std::span<const std::int32_t> positives,
                       std::span<const std::int32_t> pool, const ModelParams& params,
                       double scale, ShardGrads* grads);

// Per-position pools (intra-batch sharing disabled).
MapLossResult map_loss_per_position(const Matrix& hm, std::span<const std::int32_t> positives,
                                    const std::vector<std::vector<std::int32_t>>& pools,
                                    const ModelParams& params, double scale, ShardGrads* grads);

// --- representations ----------------------------------------------------------

enum class ReprMode : std::uint8_t { SelfToken = 0, AddressEmbedding = 1 };

struct AccountRepresentation {
    std::int32_t owner = seqgen::kUnkId;
    Vector vector;
    ReprMode source = ReprMode::SelfToken;
};

// Pieces per view; in/out spans are ignored unless in_out_separation is on.
struct PieceSet {
    std::int32_t owner = seqgen::kUnkId;
    std::vector<const seqgen::TxSequence*> full;
    std::vector<const seqgen::TxSequence*> in;
    std::vector<const seqgen::TxSequence*> out;
};

// Self-token representation: H^(L) row 0 per piece, mean-pooled across
// pieces, concatenated across views (3d) with MH#1.
AccountRepresentation extract_representation(const PieceSet& pieces, const ModelParams& params,
                                             ReprMode mode);

// Forward with retained traces, for joint fine-tuning.
struct ReprTrace {
    std::vector<ForwardTrace> traces;
    std::vector<const seqgen::TxSequence*> seqs;
    std::vector<int> view_of_trace;          // encoder index per trace
    std::vector<int> pieces_per_view;        // for mean-pool backward
    Vector representation;
};

ReprTrace representation_forward(const PieceSet& pieces, const ModelParams& params,
                                 double dropout, Rng* rng);
void representation_backward(const ReprTrace& trace, const ModelParams& params,
                             const Vector& d_repr, ShardGrads& grads);

// GELU used by the feed-forward sublayers and classifier heads.
double gelu(double x);
double gelu_derivative(double x);

}  // namespace ethseq::model
