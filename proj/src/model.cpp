#include "ethseq/model.hpp"

#include <cmath>
#include <limits>

namespace ethseq::model {

namespace {

constexpr double kLnEps = 1e-12;
constexpr double kNegInfLogit = -1e30;

void check_id(std::int64_t id, std::int64_t size, const char* what) {
    if (id < 0 || id >= size) {
        throw NumericError(std::string("embedding id out of range for ") + what + ": " +
                           std::to_string(id) + " (table size " + std::to_string(size) + ")");
    }
}

}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_derivative(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    return cdf + x * pdf;
}

// --- parameters ---------------------------------------------------------------

ModelParams ModelParams::zeros(const ModelConfig& cfg) {
    if (cfg.hidden % cfg.heads != 0) {
        throw NumericError("hidden dimension must be divisible by head count");
    }
    if (cfg.vocab_size < seqgen::kFirstAddressId) {
        throw NumericError("vocab too small, specials missing");
    }
    ModelParams p;
    p.cfg = cfg;
    const int d = cfg.hidden;
    p.address_table = Matrix::Zero(cfg.vocab_size, d);
    p.type_table = Matrix::Zero(3, d);
    p.direction_table = Matrix::Zero(3, d);
    p.amount_table = Matrix::Zero(seqgen::kAmountBins, d);
    p.count_table = Matrix::Zero(seqgen::kCountBins, d);
    p.time_table = Matrix::Zero(seqgen::kTimeBins, d);
    p.position_table = Matrix::Zero(cfg.max_seq_len, d);
    p.encoders.resize(cfg.encoder_count());
    for (auto& enc : p.encoders) {
        enc.layers.resize(cfg.layers);
        for (auto& layer : enc.layers) {
            layer.wq = Matrix::Zero(d, d);
            layer.wk = Matrix::Zero(d, d);
            layer.wv = Matrix::Zero(d, d);
            layer.w1 = Matrix::Zero(d, d);
            layer.w2 = Matrix::Zero(d, d);
            layer.b1 = Matrix::Zero(1, d);
            layer.b2 = Matrix::Zero(1, d);
            layer.ln1_scale = Matrix::Zero(1, d);
            layer.ln1_shift = Matrix::Zero(1, d);
            layer.ln2_scale = Matrix::Zero(1, d);
            layer.ln2_shift = Matrix::Zero(1, d);
        }
    }
    p.gate_w = Matrix::Zero(d, 2 * d);
    p.gate_b = Matrix::Zero(1, d);
    return p;
}

ModelParams ModelParams::init(const ModelConfig& cfg, std::uint64_t seed) {
    ModelParams p = zeros(cfg);
    Rng rng(seed);
    for_each_tensor(p, [&](const std::string& name, Matrix& m) {
        const bool is_scale = name.find("ln1_scale") != std::string::npos ||
                              name.find("ln2_scale") != std::string::npos;
        const bool is_bias = name.find(".b") != std::string::npos ||
                             name.find("shift") != std::string::npos || name == "gate_b";
        if (is_scale) {
            m.setOnes();
        } else if (is_bias) {
            m.setZero();
        } else {
            for (Eigen::Index r = 0; r < m.rows(); ++r) {
                for (Eigen::Index c = 0; c < m.cols(); ++c) {
                    m(r, c) = rng.trunc_normal(0.02);
                }
            }
        }
    });
    p.address_table.row(seqgen::kPadId).setZero();  // frozen
    return p;
}

void for_each_tensor(ModelParams& params,
                     const std::function<void(const std::string&, Matrix&)>& fn) {
    fn("address_table", params.address_table);
    fn("type_table", params.type_table);
    fn("direction_table", params.direction_table);
    fn("amount_table", params.amount_table);
    fn("count_table", params.count_table);
    fn("time_table", params.time_table);
    fn("position_table", params.position_table);
    for (std::size_t e = 0; e < params.encoders.size(); ++e) {
        for (std::size_t l = 0; l < params.encoders[e].layers.size(); ++l) {
            auto& layer = params.encoders[e].layers[l];
            const std::string prefix = "enc" + std::to_string(e) + ".layer" + std::to_string(l) + ".";
            fn(prefix + "wq", layer.wq);
            fn(prefix + "wk", layer.wk);
            fn(prefix + "wv", layer.wv);
            fn(prefix + "w1", layer.w1);
            fn(prefix + "b1", layer.b1);
            fn(prefix + "w2", layer.w2);
            fn(prefix + "b2", layer.b2);
            fn(prefix + "ln1_scale", layer.ln1_scale);
            fn(prefix + "ln1_shift", layer.ln1_shift);
            fn(prefix + "ln2_scale", layer.ln2_scale);
            fn(prefix + "ln2_shift", layer.ln2_shift);
        }
    }
    fn("gate_w", params.gate_w);
    fn("gate_b", params.gate_b);
}

void for_each_tensor(const ModelParams& params,
                     const std::function<void(const std::string&, const Matrix&)>& fn) {
    for_each_tensor(const_cast<ModelParams&>(params),
                    [&](const std::string& name, Matrix& m) { fn(name, m); });
}

// --- embedding ---------------------------------------------------------------

RowVector gate_fuse(const RowVector& a_c, const Matrix& recipient_embeddings,
                    const ModelParams& params, GateTrace* trace) {
    if (recipient_embeddings.rows() == 0) {
        throw NumericError("gate_fuse: recipient embeddings must be non-empty");
    }
    const RowVector a_u = recipient_embeddings.colwise().mean();
    RowVector concat(2 * a_c.cols());
    concat << a_c, a_u;
    RowVector beta = concat * params.gate_w.transpose() + params.gate_b;
    for (Eigen::Index i = 0; i < beta.cols(); ++i) beta(i) = 1.0 / (1.0 + std::exp(-beta(i)));
    if (trace) {
        trace->a_c = a_c;
        trace->a_u = a_u;
        trace->beta = beta;
    }
    return beta.cwiseProduct(a_c) + (RowVector::Ones(beta.cols()) - beta).cwiseProduct(a_u);
}

EmbedTrace embed_sequence(const seqgen::TxSequence& seq, const ModelParams& params,
                          const std::vector<std::uint8_t>* pad) {
    const auto& cfg = params.cfg;
    const auto n = static_cast<Eigen::Index>(seq.records.size());
    EmbedTrace trace;
    trace.h0 = Matrix::Zero(n, cfg.hidden);

    for (Eigen::Index i = 0; i < n; ++i) {
        if (pad && (*pad)[static_cast<std::size_t>(i)]) continue;
        const auto& rec = seq.records[static_cast<std::size_t>(i)];
        check_id(rec.counterparty, cfg.vocab_size, "address");
        check_id(rec.position, cfg.max_seq_len, "position");

        RowVector addr_term;
        if (rec.counterparty == seqgen::kMaskId) {
            addr_term = params.address_table.row(seqgen::kMaskId);
        } else if (cfg.erc20_gate && !rec.token_recipients.empty() && !rec.is_self()) {
            Matrix recips(static_cast<Eigen::Index>(rec.token_recipients.size()), cfg.hidden);
            for (std::size_t r = 0; r < rec.token_recipients.size(); ++r) {
                check_id(rec.token_recipients[r], cfg.vocab_size, "token recipient");
                recips.row(static_cast<Eigen::Index>(r)) =
                    params.address_table.row(rec.token_recipients[r]);
            }
            GateTrace gate;
            gate.record_index = static_cast<int>(i);
            addr_term = gate_fuse(params.address_table.row(rec.counterparty), recips, params, &gate);
            trace.gates.push_back(std::move(gate));
        } else {
            addr_term = params.address_table.row(rec.counterparty);
        }

        RowVector h = addr_term + params.position_table.row(rec.position);
        if (cfg.tranx_features) {
            const auto type_id = static_cast<int>(rec.counterparty_kind);
            const auto dir_id = static_cast<int>(rec.direction);
            check_id(type_id, 3, "account type");
            check_id(dir_id, 3, "direction");
            check_id(rec.amount_bin, seqgen::kAmountBins, "amount bin");
            check_id(rec.count_bin, seqgen::kCountBins, "count bin");
            check_id(rec.time_bin, seqgen::kTimeBins, "time bin");
            h += params.type_table.row(type_id);
            h += params.direction_table.row(dir_id);
            h += params.amount_table.row(rec.amount_bin);
            h += params.count_table.row(rec.count_bin);
            h += params.time_table.row(rec.time_bin);
        }
        trace.h0.row(i) = h;
    }
    return trace;
}

// --- encoder forward -----------------------------------------------------------

namespace {

// Layer normalization over one row. Returns the normalized row and records
// xhat and 1/sigma for the backward pass.
void layer_norm_rows(const Matrix& x, const Matrix& scale, const Matrix& shift,
                     const std::vector<std::uint8_t>* pad, Matrix& out, Matrix& xhat,
                     Vector& invstd) {
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    out = Matrix::Zero(n, d);
    xhat = Matrix::Zero(n, d);
    invstd = Vector::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (pad && (*pad)[static_cast<std::size_t>(i)]) continue;
        const double mean = x.row(i).mean();
        const double var = (x.row(i).array() - mean).square().sum() / static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + kLnEps);
        invstd(i) = inv;
        xhat.row(i) = (x.row(i).array() - mean).matrix() * inv;
        out.row(i) = xhat.row(i).cwiseProduct(scale.row(0)) + shift.row(0);
    }
}

Matrix draw_keep_mask(Eigen::Index rows, Eigen::Index cols, double dropout, Rng* rng) {
    if (!rng || dropout <= 0.0) return Matrix::Ones(rows, cols);
    const double keep = 1.0 - dropout;
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            m(i, j) = rng->u01() < dropout ? 0.0 : 1.0 / keep;
        }
    }
    return m;
}

}  // namespace

ForwardTrace encoder_forward(const seqgen::TxSequence& seq, const ModelParams& params,
                             int encoder_index, double dropout, Rng* rng,
                             const std::vector<std::uint8_t>* pad) {
    const auto& cfg = params.cfg;
    const auto n = static_cast<Eigen::Index>(seq.records.size());
    if (n > cfg.max_seq_len) {
        throw NumericError("sequence length " + std::to_string(n) + " exceeds max_seq_len " +
                           std::to_string(cfg.max_seq_len) + "; split first");
    }
    if (encoder_index < 0 || encoder_index >= static_cast<int>(params.encoders.size())) {
        throw NumericError("encoder index out of range");
    }

    ForwardTrace trace;
    trace.encoder_index = encoder_index;
    if (pad) {
        trace.pad = *pad;
    } else {
        trace.pad.assign(static_cast<std::size_t>(n), 0);
    }
    trace.embed = embed_sequence(seq, params, &trace.pad);

    const int dh = cfg.head_dim();
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const auto& enc = params.encoders[static_cast<std::size_t>(encoder_index)];

    Matrix x = trace.embed.h0;
    trace.layers.resize(enc.layers.size());
    for (std::size_t l = 0; l < enc.layers.size(); ++l) {
        const auto& lp = enc.layers[l];
        LayerTrace& lt = trace.layers[l];
        lt.x = x;
        lt.q.noalias() = x * lp.wq;
        lt.k.noalias() = x * lp.wk;
        lt.v.noalias() = x * lp.wv;

        lt.attn_concat = Matrix::Zero(n, cfg.hidden);
        lt.probs.resize(cfg.heads);
        lt.attn_keep.resize(cfg.heads);
        for (int h = 0; h < cfg.heads; ++h) {
            const auto qh = lt.q.middleCols(h * dh, dh);
            const auto kh = lt.k.middleCols(h * dh, dh);
            const auto vh = lt.v.middleCols(h * dh, dh);
            Matrix scores = qh * kh.transpose() * inv_scale;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (trace.pad[static_cast<std::size_t>(j)]) scores.col(j).setConstant(kNegInfLogit);
            }
            Matrix probs = Matrix::Zero(n, n);
            for (Eigen::Index i = 0; i < n; ++i) {
                if (trace.pad[static_cast<std::size_t>(i)]) continue;
                const double mx = scores.row(i).maxCoeff();
                Eigen::ArrayXd e = (scores.row(i).array() - mx).exp();
                probs.row(i) = (e / e.sum()).matrix();
            }
            lt.attn_keep[h] = draw_keep_mask(n, n, dropout, rng);
            Matrix dropped = probs.cwiseProduct(lt.attn_keep[h]);
            lt.attn_concat.middleCols(h * dh, dh).noalias() = dropped * vh;
            lt.probs[h] = std::move(probs);
        }

        lt.attn_out_keep = draw_keep_mask(n, cfg.hidden, dropout, rng);
        lt.r1 = x + lt.attn_concat.cwiseProduct(lt.attn_out_keep);
        layer_norm_rows(lt.r1, lp.ln1_scale, lp.ln1_shift, &trace.pad, lt.y1, lt.ln1_xhat,
                        lt.ln1_invstd);

        lt.z = (lt.y1 * lp.w1).rowwise() + lp.b1.row(0);
        lt.gelu_z = lt.z.unaryExpr([](double v) { return gelu(v); });
        lt.f = (lt.gelu_z * lp.w2).rowwise() + lp.b2.row(0);
        lt.ffn_keep = draw_keep_mask(n, cfg.hidden, dropout, rng);
        lt.r2 = lt.y1 + lt.f.cwiseProduct(lt.ffn_keep);

        Matrix y2;
        Matrix xhat2;
        Vector invstd2;
        layer_norm_rows(lt.r2, lp.ln2_scale, lp.ln2_shift, &trace.pad, y2, xhat2, invstd2);
        lt.ln2_xhat = std::move(xhat2);
        lt.ln2_invstd = std::move(invstd2);
        x = std::move(y2);
    }
    trace.hl = std::move(x);
    return trace;
}

// --- gradients ------------------------------------------------------------------

ShardGrads ShardGrads::zeros(const ModelConfig& cfg) {
    ShardGrads g;
    // The address table is accumulated sparsely; keep the dense copy empty.
    ModelConfig small = cfg;
    small.vocab_size = seqgen::kFirstAddressId;
    g.dense = ModelParams::zeros(small);
    g.dense.cfg = cfg;
    g.dense.address_table.resize(0, 0);
    return g;
}

void ShardGrads::clear() {
    for_each_tensor(dense, [](const std::string&, Matrix& m) { m.setZero(); });
    addr_rows.clear();
}

void ShardGrads::add_addr(std::int32_t id, const RowVector& grad) {
    auto [it, inserted] = addr_rows.try_emplace(id, grad);
    if (!inserted) it->second += grad;
}

GradSet GradSet::zeros(const ModelConfig& cfg) {
    GradSet g;
    g.g = ModelParams::zeros(cfg);
    return g;
}

void GradSet::add_shard(const ShardGrads& shard) {
    g.type_table += shard.dense.type_table;
    g.direction_table += shard.dense.direction_table;
    g.amount_table += shard.dense.amount_table;
    g.count_table += shard.dense.count_table;
    g.time_table += shard.dense.time_table;
    g.position_table += shard.dense.position_table;
    for (std::size_t e = 0; e < g.encoders.size(); ++e) {
        for (std::size_t l = 0; l < g.encoders[e].layers.size(); ++l) {
            auto& dst = g.encoders[e].layers[l];
            const auto& src = shard.dense.encoders[e].layers[l];
            dst.wq += src.wq;
            dst.wk += src.wk;
            dst.wv += src.wv;
            dst.w1 += src.w1;
            dst.w2 += src.w2;
            dst.b1 += src.b1;
            dst.b2 += src.b2;
            dst.ln1_scale += src.ln1_scale;
            dst.ln1_shift += src.ln1_shift;
            dst.ln2_scale += src.ln2_scale;
            dst.ln2_shift += src.ln2_shift;
        }
    }
    g.gate_w += shard.dense.gate_w;
    g.gate_b += shard.dense.gate_b;

    // Sparse address rows merged in sorted order for a schedule-independent
    // reduction.
    std::vector<std::int32_t> ids;
    ids.reserve(shard.addr_rows.size());
    for (const auto& [id, _] : shard.addr_rows) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    for (std::int32_t id : ids) {
        g.address_table.row(id) += shard.addr_rows.at(id);
    }
}

void GradSet::scale(double s) {
    for_each_tensor(g, [&](const std::string&, Matrix& m) { m *= s; });
}

namespace {

// Backward through one layer-norm. dy is the upstream gradient, xhat/invstd
// come from the trace. Accumulates scale/shift grads and returns dx.
Matrix layer_norm_backward(const Matrix& dy, const Matrix& xhat, const Vector& invstd,
                           const Matrix& scale, const std::vector<std::uint8_t>& pad,
                           Matrix& dscale, Matrix& dshift) {
    const Eigen::Index n = dy.rows();
    const Eigen::Index d = dy.cols();
    Matrix dx = Matrix::Zero(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (pad[static_cast<std::size_t>(i)]) continue;
        const RowVector dxhat = dy.row(i).cwiseProduct(scale.row(0));
        const double m1 = dxhat.mean();
        const double m2 = dxhat.cwiseProduct(xhat.row(i)).mean();
        dx.row(i) = invstd(i) * (dxhat.array() - m1 - xhat.row(i).array() * m2).matrix();
        dscale.row(0) += dy.row(i).cwiseProduct(xhat.row(i));
        dshift.row(0) += dy.row(i);
    }
    return dx;
}

}  // namespace

void encoder_backward(const ForwardTrace& trace, const seqgen::TxSequence& seq,
                      const ModelParams& params, const Matrix& d_hl, ShardGrads& grads) {
    const auto& cfg = params.cfg;
    const int dh = cfg.head_dim();
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const auto& enc = params.encoders[static_cast<std::size_t>(trace.encoder_index)];
    auto& genc = grads.dense.encoders[static_cast<std::size_t>(trace.encoder_index)];

    Matrix dy = d_hl;
    for (std::size_t li = enc.layers.size(); li-- > 0;) {
        const auto& lp = enc.layers[li];
        const auto& lt = trace.layers[li];
        auto& gl = genc.layers[li];
        const Eigen::Index n = lt.x.rows();

        // ln2
        Matrix dr2 = layer_norm_backward(dy, lt.ln2_xhat, lt.ln2_invstd, lp.ln2_scale, trace.pad,
                                         gl.ln2_scale, gl.ln2_shift);
        Matrix dy1 = dr2;  // residual path
        Matrix df = dr2.cwiseProduct(lt.ffn_keep);

        // feed-forward
        Matrix dg = df * lp.w2.transpose();
        gl.w2.noalias() += lt.gelu_z.transpose() * df;
        gl.b2.row(0) += df.colwise().sum();
        Matrix dz = dg.cwiseProduct(lt.z.unaryExpr([](double v) { return gelu_derivative(v); }));
        dy1.noalias() += dz * lp.w1.transpose();
        gl.w1.noalias() += lt.y1.transpose() * dz;
        gl.b1.row(0) += dz.colwise().sum();

        // ln1
        Matrix dr1 = layer_norm_backward(dy1, lt.ln1_xhat, lt.ln1_invstd, lp.ln1_scale, trace.pad,
                                         gl.ln1_scale, gl.ln1_shift);
        Matrix dx = dr1;  // residual path
        Matrix da = dr1.cwiseProduct(lt.attn_out_keep);

        // attention heads
        Matrix dq = Matrix::Zero(n, cfg.hidden);
        Matrix dk = Matrix::Zero(n, cfg.hidden);
        Matrix dv = Matrix::Zero(n, cfg.hidden);
        for (int h = 0; h < cfg.heads; ++h) {
            const auto dch = da.middleCols(h * dh, dh);
            const auto vh = lt.v.middleCols(h * dh, dh);
            const auto qh = lt.q.middleCols(h * dh, dh);
            const auto kh = lt.k.middleCols(h * dh, dh);
            const Matrix dropped = lt.probs[h].cwiseProduct(lt.attn_keep[h]);
            Matrix dpd = dch * vh.transpose();
            dv.middleCols(h * dh, dh).noalias() = dropped.transpose() * dch;
            Matrix dp = dpd.cwiseProduct(lt.attn_keep[h]);
            // softmax backward per row
            Matrix ds(n, n);
            for (Eigen::Index i = 0; i < n; ++i) {
                const double dot = dp.row(i).cwiseProduct(lt.probs[h].row(i)).sum();
                ds.row(i) = lt.probs[h].row(i).cwiseProduct(
                    (dp.row(i).array() - dot).matrix());
            }
            dq.middleCols(h * dh, dh).noalias() = ds * kh * inv_scale;
            dk.middleCols(h * dh, dh).noalias() = ds.transpose() * qh * inv_scale;
        }
        dx.noalias() += dq * lp.wq.transpose();
        dx.noalias() += dk * lp.wk.transpose();
        dx.noalias() += dv * lp.wv.transpose();
        gl.wq.noalias() += lt.x.transpose() * dq;
        gl.wk.noalias() += lt.x.transpose() * dk;
        gl.wv.noalias() += lt.x.transpose() * dv;

        dy = std::move(dx);
    }

    // Embedding scatter. dy is now dLoss/dH0.
    std::size_t gate_cursor = 0;
    for (Eigen::Index i = 0; i < dy.rows(); ++i) {
        if (trace.pad[static_cast<std::size_t>(i)]) continue;
        const auto& rec = seq.records[static_cast<std::size_t>(i)];
        const RowVector dh0 = dy.row(i);

        grads.dense.position_table.row(rec.position) += dh0;
        if (cfg.tranx_features) {
            grads.dense.type_table.row(static_cast<int>(rec.counterparty_kind)) += dh0;
            grads.dense.direction_table.row(static_cast<int>(rec.direction)) += dh0;
            grads.dense.amount_table.row(rec.amount_bin) += dh0;
            grads.dense.count_table.row(rec.count_bin) += dh0;
            grads.dense.time_table.row(rec.time_bin) += dh0;
        }

        const bool gated = gate_cursor < trace.embed.gates.size() &&
                           trace.embed.gates[gate_cursor].record_index == static_cast<int>(i);
        if (rec.counterparty == seqgen::kMaskId) {
            grads.add_addr(seqgen::kMaskId, dh0);
        } else if (gated) {
            const GateTrace& gt = trace.embed.gates[gate_cursor++];
            const RowVector one_minus = RowVector::Ones(gt.beta.cols()) - gt.beta;
            RowVector da_c = dh0.cwiseProduct(gt.beta);
            RowVector da_u = dh0.cwiseProduct(one_minus);
            const RowVector dbeta = dh0.cwiseProduct(gt.a_c - gt.a_u);
            const RowVector dpre = dbeta.cwiseProduct(gt.beta).cwiseProduct(one_minus);
            RowVector concat(2 * cfg.hidden);
            concat << gt.a_c, gt.a_u;
            grads.dense.gate_w.noalias() += dpre.transpose() * concat;
            grads.dense.gate_b.row(0) += dpre;
            const RowVector dconcat = dpre * params.gate_w;
            da_c += dconcat.head(cfg.hidden);
            da_u += dconcat.tail(cfg.hidden);
            grads.add_addr(rec.counterparty, da_c);
            const double inv_n = 1.0 / static_cast<double>(rec.token_recipients.size());
            for (std::int32_t rid : rec.token_recipients) {
                grads.add_addr(rid, da_u * inv_n);
            }
        } else {
            grads.add_addr(rec.counterparty, dh0);
        }
    }
}

// --- contrastive loss -------------------------------------------------------------

namespace {

MapLossResult map_loss_impl(const Matrix& hm, std::span<const std::int32_t> positives,
                            const std::vector<std::vector<std::int32_t>>* per_position_pools,
                            std::span<const std::int32_t> shared_pool, const ModelParams& params,
                            double scale, ShardGrads* grads) {
    const auto m_count = static_cast<std::size_t>(hm.rows());
    if (m_count == 0) throw NumericError("map_loss: empty masked set");
    if (positives.size() != m_count) throw NumericError("map_loss: positives misaligned");

    const auto& table = params.address_table;
    MapLossResult res;
    res.positions = m_count;
    res.d_hm = Matrix::Zero(hm.rows(), hm.cols());

    const bool shared = per_position_pools == nullptr;
    std::size_t max_pool = shared ? shared_pool.size() : 0;
    if (!shared) {
        for (const auto& p : *per_position_pools) max_pool = std::max(max_pool, p.size());
    }
    res.logits = Matrix::Constant(hm.rows(), static_cast<Eigen::Index>(1 + max_pool),
                                  -std::numeric_limits<double>::infinity());

    Matrix pool_emb;
    Matrix pool_logits;
    if (shared) {
        pool_emb.resize(static_cast<Eigen::Index>(shared_pool.size()), hm.cols());
        for (std::size_t j = 0; j < shared_pool.size(); ++j) {
            check_id(shared_pool[j], params.cfg.vocab_size, "negative pool");
            pool_emb.row(static_cast<Eigen::Index>(j)) = table.row(shared_pool[j]);
        }
        pool_logits.noalias() = hm * pool_emb.transpose();
    }

    // Weight matrix for the shared-pool gradient GEMM.
    Matrix w;
    if (shared && grads) w = Matrix::Zero(hm.rows(), pool_emb.rows());

    for (std::size_t m = 0; m < m_count; ++m) {
        const auto row = static_cast<Eigen::Index>(m);
        check_id(positives[m], params.cfg.vocab_size, "positive");
        const std::span<const std::int32_t> pool =
            shared ? shared_pool : std::span<const std::int32_t>((*per_position_pools)[m]);

        const double z_pos = hm.row(row).dot(table.row(positives[m]));
        res.logits(row, 0) = z_pos;

        double mx = z_pos;
        for (std::size_t j = 0; j < pool.size(); ++j) {
            if (pool[j] == positives[m]) continue;  // collision excluded
            const double z = shared ? pool_logits(row, static_cast<Eigen::Index>(j))
                                    : hm.row(row).dot(table.row(pool[j]));
            res.logits(row, static_cast<Eigen::Index>(1 + j)) = z;
            mx = std::max(mx, z);
        }

        double denom = std::exp(z_pos - mx);
        for (std::size_t j = 0; j < pool.size(); ++j) {
            const double z = res.logits(row, static_cast<Eigen::Index>(1 + j));
            if (std::isinf(z)) continue;
            denom += std::exp(z - mx);
        }
        const double lse = mx + std::log(denom);
        res.loss_sum += lse - z_pos;

        if (grads) {
            const double p_pos = std::exp(z_pos - lse);
            res.d_hm.row(row) += scale * (p_pos - 1.0) * table.row(positives[m]);
            grads->add_addr(positives[m], scale * (p_pos - 1.0) * hm.row(row));
            for (std::size_t j = 0; j < pool.size(); ++j) {
                const double z = res.logits(row, static_cast<Eigen::Index>(1 + j));
                if (std::isinf(z)) continue;
                const double p = std::exp(z - lse);
                if (shared) {
                    w(row, static_cast<Eigen::Index>(j)) = p;
                } else {
                    res.d_hm.row(row) += scale * p * table.row(pool[j]);
                    grads->add_addr(pool[j], scale * p * hm.row(row));
                }
            }
        }
    }

    if (shared && grads && pool_emb.rows() > 0) {
        res.d_hm.noalias() += scale * (w * pool_emb);
        Matrix dpool = (w.transpose() * hm) * scale;
        for (std::size_t j = 0; j < shared_pool.size(); ++j) {
            grads->add_addr(shared_pool[j], dpool.row(static_cast<Eigen::Index>(j)));
        }
    }
    return res;
}

}  // namespace

MapLossResult map_loss(const Matrix& hm, std::span<const std::int32_t> positives,
                       std::span<const std::int32_t> pool, const ModelParams& params,
                       double scale, ShardGrads* grads) {
    return map_loss_impl(hm, positives, nullptr, pool, params, scale, grads);
}

MapLossResult map_loss_per_position(const Matrix& hm, std::span<const std::int32_t> positives,
                                    const std::vector<std::vector<std::int32_t>>& pools,
                                    const ModelParams& params, double scale, ShardGrads* grads) {
    if (pools.size() != static_cast<std::size_t>(hm.rows())) {
        throw NumericError("map_loss: per-position pools misaligned");
    }
    return map_loss_impl(hm, positives, &pools, {}, params, scale, grads);
}

// --- representations ----------------------------------------------------------------

ReprTrace representation_forward(const PieceSet& pieces, const ModelParams& params,
                                 double dropout, Rng* rng) {
    const auto& cfg = params.cfg;
    ReprTrace out;
    out.representation = Vector::Zero(cfg.representation_dim());
    out.pieces_per_view.assign(static_cast<std::size_t>(cfg.encoder_count()), 0);

    auto run_view = [&](const std::vector<const seqgen::TxSequence*>& view_pieces, int view) {
        if (view_pieces.empty()) {
            throw NumericError("representation: no pieces for enabled view");
        }
        Vector pooled = Vector::Zero(cfg.hidden);
        for (const auto* seq : view_pieces) {
            ForwardTrace trace = encoder_forward(*seq, params, view, dropout, rng);
            pooled += trace.hl.row(0).transpose();
            out.traces.push_back(std::move(trace));
            out.seqs.push_back(seq);
            out.view_of_trace.push_back(view);
        }
        pooled /= static_cast<double>(view_pieces.size());
        out.pieces_per_view[static_cast<std::size_t>(view)] = static_cast<int>(view_pieces.size());
        out.representation.segment(view * cfg.hidden, cfg.hidden) = pooled;
    };

    run_view(pieces.full, 0);
    if (cfg.in_out_separation) {
        run_view(pieces.in, 1);
        run_view(pieces.out, 2);
    }
    return out;
}

void representation_backward(const ReprTrace& trace, const ModelParams& params,
                             const Vector& d_repr, ShardGrads& grads) {
    const auto& cfg = params.cfg;
    for (std::size_t t = 0; t < trace.traces.size(); ++t) {
        const int view = trace.view_of_trace[t];
        const int n_pieces = trace.pieces_per_view[static_cast<std::size_t>(view)];
        Matrix d_hl = Matrix::Zero(trace.traces[t].hl.rows(), cfg.hidden);
        d_hl.row(0) = d_repr.segment(view * cfg.hidden, cfg.hidden).transpose() /
                      static_cast<double>(n_pieces);
        encoder_backward(trace.traces[t], *trace.seqs[t], params, d_hl, grads);
    }
}

AccountRepresentation extract_representation(const PieceSet& pieces, const ModelParams& params,
                                             ReprMode mode) {
    AccountRepresentation rep;
    rep.owner = pieces.owner;
    rep.source = mode;
    if (mode == ReprMode::AddressEmbedding) {
        check_id(pieces.owner, params.cfg.vocab_size, "owner address");
        rep.vector = params.address_table.row(pieces.owner).transpose();
        return rep;
    }
    ReprTrace trace = representation_forward(pieces, params, 0.0, nullptr);
    rep.vector = std::move(trace.representation);
    return rep;
}

}  // namespace ethseq::model
