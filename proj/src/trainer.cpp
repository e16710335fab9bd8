#include "ethseq/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <thread>

#include "ethseq/io.hpp"

namespace ethseq::trainer {

using nlohmann::json;

// --- config ---------------------------------------------------------------------

model::ModelConfig TrainConfig::model_config(std::int32_t vocab_size) const {
    model::ModelConfig cfg;
    cfg.vocab_size = vocab_size;
    cfg.hidden = hidden;
    cfg.layers = layers;
    cfg.heads = heads;
    cfg.max_seq_len = max_seq_len;
    cfg.dropout = dropout;
    cfg.in_out_separation = in_out_separation;
    cfg.erc20_gate = erc20_gate;
    cfg.tranx_features = tranx_features;
    return cfg;
}

namespace {

json config_to_json(const TrainConfig& c) {
    return json{
        {"mask_ratio", c.mask_ratio},
        {"dropout", c.dropout},
        {"neg_strategy", c.neg_strategy},
        {"pool_size", c.pool_size},
        {"batch_size", c.batch_size},
        {"max_seq_len", c.max_seq_len},
        {"layers", c.layers},
        {"heads", c.heads},
        {"hidden", c.hidden},
        {"epochs", c.epochs},
        {"learning_rate", c.learning_rate},
        {"clip_norm", c.clip_norm},
        {"seed", c.seed},
        {"dedup", c.dedup},
        {"batch_sharing", c.batch_sharing},
        {"tranx_features", c.tranx_features},
        {"in_out_separation", c.in_out_separation},
        {"erc20_gate", c.erc20_gate},
    };
}

TrainConfig config_from_json(const json& j) {
    TrainConfig c;
    c.mask_ratio = j.at("mask_ratio").get<double>();
    c.dropout = j.at("dropout").get<double>();
    c.neg_strategy = j.at("neg_strategy").get<std::string>();
    c.pool_size = j.at("pool_size").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.max_seq_len = j.at("max_seq_len").get<int>();
    c.layers = j.at("layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.hidden = j.at("hidden").get<int>();
    c.epochs = j.at("epochs").get<int>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.clip_norm = j.at("clip_norm").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.dedup = j.at("dedup").get<bool>();
    c.batch_sharing = j.at("batch_sharing").get<bool>();
    c.tranx_features = j.at("tranx_features").get<bool>();
    c.in_out_separation = j.at("in_out_separation").get<bool>();
    c.erc20_gate = j.at("erc20_gate").get<bool>();
    return c;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

std::string TrainConfig::canonical_string() const { return config_to_json(*this).dump(); }

std::uint64_t TrainConfig::config_hash() const { return fnv1a64(canonical_string()); }

std::string TrainConfig::config_hash_hex() const { return hex64(config_hash()); }

std::string TrainConfig::computation_description() const {
    json desc{
        {"data", {{"dedup", dedup}}},
        {"masking", {{"ratio", mask_ratio}, {"dynamic", true}}},
        {"regularization", {{"dropout", dropout}}},
        {"negative_sampling",
         {{"strategy", neg_strategy}, {"pool_size", pool_size}, {"batch_sharing", batch_sharing}}},
        {"features", {{"transaction_features", tranx_features}}},
        {"encoder",
         {{"stacks", in_out_separation ? 3 : 1},
          {"layers", layers},
          {"heads", heads},
          {"hidden", hidden},
          {"max_seq_len", max_seq_len}}},
        {"erc20_gate", {{"enabled", erc20_gate}}},
        {"optimizer",
         {{"adaptive_moments", true},
          {"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"clip_norm", clip_norm}}},
    };
    return desc.dump(2);
}

// --- checkpoint -------------------------------------------------------------------

void save_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
    json tensors = json::array();
    model::for_each_tensor(ckpt.params, [&](const std::string& name, const model::Matrix& m) {
        tensors.push_back(json{{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
    });
    json header{
        {"version", 1},
        {"config", config_to_json(ckpt.config)},
        {"config_hash", ckpt.config.config_hash_hex()},
        {"vocab_hash", ckpt.vocab_hash},
        {"vocab_size", ckpt.params.cfg.vocab_size},
        {"epoch", ckpt.epoch},
        {"loss_history", ckpt.loss_history},
        {"tensors", tensors},
    };
    out << header.dump() << '\n';
    model::for_each_tensor(ckpt.params, [&](const std::string&, const model::Matrix& m) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                io::put_f32(out, static_cast<float>(m(r, c)));
            }
        }
    });
    if (!out) throw DataError("checkpoint: write failed");
}

Checkpoint load_checkpoint(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("checkpoint: missing header");
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint: bad header: ") + e.what());
    }
    if (header.at("version").get<int>() != 1) throw DataError("checkpoint: unsupported version");

    Checkpoint ckpt;
    ckpt.config = config_from_json(header.at("config"));
    ckpt.vocab_hash = header.at("vocab_hash").get<std::string>();
    ckpt.epoch = header.at("epoch").get<int>();
    ckpt.loss_history = header.at("loss_history").get<std::vector<double>>();
    const auto vocab_size = header.at("vocab_size").get<std::int32_t>();
    ckpt.params = model::ModelParams::zeros(ckpt.config.model_config(vocab_size));

    auto tensor_it = header.at("tensors").begin();
    model::for_each_tensor(ckpt.params, [&](const std::string& name, model::Matrix& m) {
        if (tensor_it == header.at("tensors").end()) {
            throw DataError("checkpoint: tensor list shorter than model");
        }
        const auto& t = *tensor_it++;
        if (t.at("name").get<std::string>() != name ||
            t.at("rows").get<Eigen::Index>() != m.rows() ||
            t.at("cols").get<Eigen::Index>() != m.cols()) {
            throw DataError("checkpoint: tensor mismatch at '" + name + "'");
        }
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                m(r, c) = static_cast<double>(io::get_f32(in));
            }
        }
    });
    return ckpt;
}

void save_checkpoint_file(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path);
    save_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    return load_checkpoint(in);
}

// --- optimizer ---------------------------------------------------------------------

AdamOptimizer::AdamOptimizer(const model::ModelConfig& cfg, double lr, int total_steps,
                             double clip_norm)
    : m_(model::ModelParams::zeros(cfg)),
      v_(model::ModelParams::zeros(cfg)),
      lr_(lr),
      clip_norm_(clip_norm),
      warmup_(std::max(1, total_steps / 100)) {}

double AdamOptimizer::lr_at(int step) const {
    const double warm = std::min(1.0, static_cast<double>(step) / static_cast<double>(warmup_));
    return lr_ * warm;
}

void AdamOptimizer::step(model::ModelParams& params, model::GradSet& grads) {
    ++t_;
    grads.g.address_table.row(seqgen::kPadId).setZero();  // [PAD] frozen

    if (clip_norm_ > 0.0) {
        double sq = 0.0;
        model::for_each_tensor(grads.g, [&](const std::string&, const model::Matrix& m) {
            sq += m.squaredNorm();
        });
        const double norm = std::sqrt(sq);
        if (norm > clip_norm_) grads.scale(clip_norm_ / norm);
    }

    constexpr double kBeta1 = 0.9;
    constexpr double kBeta2 = 0.999;
    constexpr double kEps = 1e-8;
    const double lr_t = lr_at(t_);
    const double bc1 = 1.0 - std::pow(kBeta1, t_);
    const double bc2 = 1.0 - std::pow(kBeta2, t_);

    std::vector<model::Matrix*> ps, ms, vs, gs;
    model::for_each_tensor(params, [&](const std::string&, model::Matrix& m) { ps.push_back(&m); });
    model::for_each_tensor(m_, [&](const std::string&, model::Matrix& m) { ms.push_back(&m); });
    model::for_each_tensor(v_, [&](const std::string&, model::Matrix& m) { vs.push_back(&m); });
    model::for_each_tensor(grads.g, [&](const std::string&, model::Matrix& m) { gs.push_back(&m); });

    for (std::size_t i = 0; i < ps.size(); ++i) {
        auto& p = *ps[i];
        auto& m = *ms[i];
        auto& v = *vs[i];
        const auto& g = *gs[i];
        m = kBeta1 * m + (1.0 - kBeta1) * g;
        v = kBeta2 * v + (1.0 - kBeta2) * g.cwiseProduct(g);
        p.array() -= lr_t * (m.array() / bc1) / ((v.array() / bc2).sqrt() + kEps);
    }
}

// --- classification head --------------------------------------------------------------

MlpHead MlpHead::zeros(int input_dim, int hidden_dim) {
    MlpHead h;
    h.w1 = model::Matrix::Zero(input_dim, hidden_dim);
    h.b1 = model::Matrix::Zero(1, hidden_dim);
    h.w2 = model::Matrix::Zero(hidden_dim, 1);
    h.b2 = model::Matrix::Zero(1, 1);
    return h;
}

MlpHead MlpHead::init(int input_dim, int hidden_dim, std::uint64_t seed) {
    MlpHead h = zeros(input_dim, hidden_dim);
    Rng rng(seed);
    for (Eigen::Index r = 0; r < h.w1.rows(); ++r) {
        for (Eigen::Index c = 0; c < h.w1.cols(); ++c) h.w1(r, c) = rng.trunc_normal(0.05);
    }
    for (Eigen::Index r = 0; r < h.w2.rows(); ++r) h.w2(r, 0) = rng.trunc_normal(0.05);
    return h;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double bce_loss(double logit, int label) {
    const double y = label ? 1.0 : 0.0;
    return std::max(logit, 0.0) - logit * y + std::log1p(std::exp(-std::fabs(logit)));
}

double head_forward(const MlpHead& head, const model::RowVector& x, double dropout, Rng* rng,
                    HeadTrace* trace) {
    model::RowVector z1 = x * head.w1 + head.b1;
    model::RowVector act = z1.unaryExpr([](double v) { return model::gelu(v); });
    model::RowVector keep = model::RowVector::Ones(act.cols());
    if (rng && dropout > 0.0) {
        const double kp = 1.0 - dropout;
        for (Eigen::Index i = 0; i < keep.cols(); ++i) {
            keep(i) = rng->u01() < dropout ? 0.0 : 1.0 / kp;
        }
    }
    const model::RowVector dropped = act.cwiseProduct(keep);
    const double logit = (dropped * head.w2)(0, 0) + head.b2(0, 0);
    if (trace) {
        trace->x = x;
        trace->z1 = std::move(z1);
        trace->act = std::move(act);
        trace->keep = std::move(keep);
        trace->logit = logit;
    }
    return logit;
}

void head_backward(const MlpHead& head, const HeadTrace& trace, double d_logit, MlpHead& grads,
                   model::RowVector* dx) {
    const model::RowVector dropped = trace.act.cwiseProduct(trace.keep);
    grads.w2 += dropped.transpose() * d_logit;
    grads.b2(0, 0) += d_logit;
    model::RowVector dact = (head.w2.transpose() * d_logit).cwiseProduct(trace.keep);
    model::RowVector dz1 =
        dact.cwiseProduct(trace.z1.unaryExpr([](double v) { return model::gelu_derivative(v); }));
    grads.w1 += trace.x.transpose() * dz1;
    grads.b1 += dz1;
    if (dx) *dx = dz1 * head.w1.transpose();
}

// --- pre-training -----------------------------------------------------------------------

namespace {

constexpr int kShards = 8;  // fixed decomposition keeps reductions schedule-independent

struct TrainSeq {
    const seqgen::TxSequence* seq = nullptr;
    int encoder = 0;
    std::size_t uid = 0;
};

std::vector<TrainSeq> collect_trainable(const seqgen::SequenceFile& file, bool in_out) {
    std::vector<TrainSeq> out;
    for (std::size_t i = 0; i < file.sequences.size(); ++i) {
        const auto& stored = file.sequences[i];
        if (stored.seq.records.size() < 2) continue;  // head-only, nothing maskable
        int enc = 0;
        if (stored.view != seqgen::View::Full) {
            if (!in_out) continue;
            enc = static_cast<int>(stored.view);
        }
        out.push_back({&stored.seq, enc, i});
    }
    return out;
}

void seeded_shuffle(std::vector<std::size_t>& order, Rng& rng) {
    for (std::size_t i = order.size(); i > 1; --i) {
        const std::size_t j = rng.below(i);
        std::swap(order[i - 1], order[j]);
    }
}

}  // namespace

PretrainResult pretrain(const seqgen::SequenceFile& sequences, const seqgen::AddressVocab& vocab,
                        const negsample::FrequencyTable& freq, const TrainConfig& config,
                        const std::function<void(const Checkpoint&)>& on_divergence) {
    const auto mcfg = config.model_config(vocab.size());
    const auto trainable = collect_trainable(sequences, config.in_out_separation);
    if (trainable.empty()) throw DataError("pretrain: no maskable sequences");

    negsample::NegativeSampler sampler(freq, negsample::parse_strategy(config.neg_strategy));

    PretrainResult result;
    result.checkpoint.config = config;
    result.checkpoint.vocab_hash = hex64(vocab.hash());
    result.checkpoint.params = model::ModelParams::init(mcfg, derive_seed(config.seed, "init"));
    auto& params = result.checkpoint.params;

    const auto n_seqs = trainable.size();
    const auto batch_size = static_cast<std::size_t>(config.batch_size);
    const int steps_per_epoch = static_cast<int>((n_seqs + batch_size - 1) / batch_size);
    AdamOptimizer opt(mcfg, config.learning_rate, config.epochs * steps_per_epoch,
                      config.clip_norm);

    const int n_threads = std::max(1, config.threads);
    std::vector<model::ShardGrads> shard_grads;
    shard_grads.reserve(kShards);
    for (int s = 0; s < kShards; ++s) shard_grads.push_back(model::ShardGrads::zeros(mcfg));

    int global_step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<std::size_t> order(n_seqs);
        for (std::size_t i = 0; i < n_seqs; ++i) order[i] = i;
        Rng shuffle_rng(derive_seed(config.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
        seeded_shuffle(order, shuffle_rng);

        double epoch_loss = 0.0;
        int epoch_steps = 0;
        for (std::size_t start = 0; start < n_seqs; start += batch_size) {
            const std::size_t batch_n = std::min(batch_size, n_seqs - start);
            const auto batch_index = static_cast<std::uint64_t>(start / batch_size);

            // Dynamic re-masking, seeded per (sequence, epoch).
            std::vector<seqgen::MaskedSequence> masked(batch_n);
            std::size_t m_total = 0;
            for (std::size_t j = 0; j < batch_n; ++j) {
                const TrainSeq& ts = trainable[order[start + j]];
                Rng mask_rng(derive_seed(config.seed, "mask", static_cast<std::uint64_t>(epoch),
                                         ts.uid));
                masked[j] = seqgen::mask_sequence(*ts.seq, config.mask_ratio, mask_rng);
                m_total += masked[j].masked_positions.size();
            }

            Rng pool_rng(derive_seed(config.seed, "pool", static_cast<std::uint64_t>(epoch),
                                     batch_index));
            std::vector<std::int32_t> shared_pool;
            std::vector<std::vector<std::vector<std::int32_t>>> position_pools;  // per seq
            if (config.batch_sharing) {
                shared_pool =
                    sampler.sample_pool(static_cast<std::size_t>(config.pool_size), pool_rng).ids;
            } else {
                position_pools.resize(batch_n);
                for (std::size_t j = 0; j < batch_n; ++j) {
                    position_pools[j].resize(masked[j].masked_positions.size());
                    for (auto& pool : position_pools[j]) {
                        pool = sampler.sample_pool(static_cast<std::size_t>(config.pool_size),
                                                   pool_rng)
                                   .ids;
                    }
                }
            }

            const double scale = 1.0 / static_cast<double>(m_total);
            std::vector<double> shard_loss(kShards, 0.0);

            auto run_shard = [&](int s) {
                auto& grads = shard_grads[static_cast<std::size_t>(s)];
                grads.clear();
                const std::size_t lo = batch_n * static_cast<std::size_t>(s) / kShards;
                const std::size_t hi = batch_n * static_cast<std::size_t>(s + 1) / kShards;
                if (lo >= hi) return;

                // Forward every sequence in the shard, then one shared-pool
                // loss over the shard's masked rows.
                std::vector<model::ForwardTrace> traces;
                traces.reserve(hi - lo);
                std::vector<std::int32_t> positives;
                std::vector<std::pair<std::size_t, std::size_t>> row_range(hi - lo);
                std::size_t rows = 0;
                for (std::size_t j = lo; j < hi; ++j) {
                    row_range[j - lo].first = rows;
                    rows += masked[j].masked_positions.size();
                    row_range[j - lo].second = rows;
                }
                model::Matrix hm(rows, mcfg.hidden);
                for (std::size_t j = lo; j < hi; ++j) {
                    const TrainSeq& ts = trainable[order[start + j]];
                    Rng drop_rng(derive_seed(config.seed, "dropout",
                                             static_cast<std::uint64_t>(epoch), ts.uid));
                    auto trace = model::encoder_forward(masked[j].seq, params, ts.encoder,
                                                        config.dropout, &drop_rng);
                    std::size_t row = row_range[j - lo].first;
                    for (std::size_t p = 0; p < masked[j].masked_positions.size(); ++p) {
                        hm.row(static_cast<Eigen::Index>(row + p)) =
                            trace.hl.row(masked[j].masked_positions[p]);
                        positives.push_back(masked[j].positives[p]);
                    }
                    traces.push_back(std::move(trace));
                }

                model::MapLossResult loss_res;
                if (config.batch_sharing) {
                    loss_res = model::map_loss(hm, positives, shared_pool, params, scale, &grads);
                } else {
                    std::vector<std::vector<std::int32_t>> pools;
                    pools.reserve(rows);
                    for (std::size_t j = lo; j < hi; ++j) {
                        for (auto& p : position_pools[j]) pools.push_back(p);
                    }
                    loss_res =
                        model::map_loss_per_position(hm, positives, pools, params, scale, &grads);
                }
                shard_loss[static_cast<std::size_t>(s)] = loss_res.loss_sum;

                for (std::size_t j = lo; j < hi; ++j) {
                    const auto& trace = traces[j - lo];
                    model::Matrix d_hl =
                        model::Matrix::Zero(trace.hl.rows(), trace.hl.cols());
                    for (std::size_t p = 0; p < masked[j].masked_positions.size(); ++p) {
                        d_hl.row(masked[j].masked_positions[p]) =
                            loss_res.d_hm.row(static_cast<Eigen::Index>(row_range[j - lo].first + p));
                    }
                    model::encoder_backward(trace, masked[j].seq, params, d_hl, grads);
                }
            };

            if (n_threads == 1) {
                for (int s = 0; s < kShards; ++s) run_shard(s);
            } else {
                std::vector<std::thread> workers;
                for (int t = 1; t < n_threads; ++t) {
                    workers.emplace_back([&, t]() {
                        for (int s = t; s < kShards; s += n_threads) run_shard(s);
                    });
                }
                for (int s = 0; s < kShards; s += n_threads) run_shard(s);
                for (auto& w : workers) w.join();
            }

            auto grad_total = model::GradSet::zeros(mcfg);
            for (int s = 0; s < kShards; ++s) grad_total.add_shard(shard_grads[static_cast<std::size_t>(s)]);

            double loss = 0.0;
            for (double l : shard_loss) loss += l;
            loss *= scale;
            if (!std::isfinite(loss)) {
                result.checkpoint.epoch = epoch;
                if (on_divergence) on_divergence(result.checkpoint);
                throw NumericError("pretrain: non-finite loss at step " +
                                   std::to_string(global_step + 1));
            }

            opt.step(params, grad_total);
            ++global_step;
            result.steps.push_back({global_step, loss, opt.lr_at(global_step)});
            epoch_loss += loss;
            ++epoch_steps;
        }
        result.checkpoint.loss_history.push_back(epoch_loss / std::max(1, epoch_steps));
        result.checkpoint.epoch = epoch + 1;
    }
    return result;
}

// --- fine-tuning -----------------------------------------------------------------------

FinetuneResult finetune(const Checkpoint& start, const std::vector<LabeledAccount>& accounts,
                        const FinetuneConfig& config) {
    if (accounts.empty()) throw DataError("finetune: no labeled accounts");
    bool has_pos = false, has_neg = false;
    for (const auto& a : accounts) (a.label ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg) throw DataError("finetune: labels must contain both classes");

    FinetuneResult result;
    result.checkpoint = start;
    auto& params = result.checkpoint.params;
    if (config.from_scratch) {
        params = model::ModelParams::init(params.cfg, derive_seed(config.seed, "scratch-init"));
    }
    const int repr_dim = params.cfg.representation_dim();
    result.head = MlpHead::init(repr_dim, config.head_hidden, derive_seed(config.seed, "head-init"));

    const auto n = accounts.size();
    const auto batch_size = static_cast<std::size_t>(config.batch_size);
    const int steps_per_epoch = static_cast<int>((n + batch_size - 1) / batch_size);
    AdamOptimizer opt(params.cfg, config.learning_rate, config.epochs * steps_per_epoch,
                      config.clip_norm);

    // Small Adam for the head.
    MlpHead hm = MlpHead::zeros(repr_dim, config.head_hidden);
    MlpHead hv = MlpHead::zeros(repr_dim, config.head_hidden);
    int head_t = 0;
    auto head_step = [&](MlpHead& head, MlpHead& grads, double lr) {
        ++head_t;
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double bc1 = 1.0 - std::pow(b1, head_t);
        const double bc2 = 1.0 - std::pow(b2, head_t);
        model::Matrix* hp[] = {&head.w1, &head.b1, &head.w2, &head.b2};
        model::Matrix* hg[] = {&grads.w1, &grads.b1, &grads.w2, &grads.b2};
        model::Matrix* hmm[] = {&hm.w1, &hm.b1, &hm.w2, &hm.b2};
        model::Matrix* hvv[] = {&hv.w1, &hv.b1, &hv.w2, &hv.b2};
        for (int i = 0; i < 4; ++i) {
            *hmm[i] = b1 * *hmm[i] + (1.0 - b1) * *hg[i];
            *hvv[i] = b2 * *hvv[i] + (1.0 - b2) * hg[i]->cwiseProduct(*hg[i]);
            hp[i]->array() -= lr * (hmm[i]->array() / bc1) / ((hvv[i]->array() / bc2).sqrt() + eps);
        }
    };

    int global_step = 0;
    auto shard = model::ShardGrads::zeros(params.cfg);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        Rng shuffle_rng(derive_seed(config.seed, "ft-shuffle", static_cast<std::uint64_t>(epoch)));
        seeded_shuffle(order, shuffle_rng);

        for (std::size_t startb = 0; startb < n; startb += batch_size) {
            const std::size_t batch_n = std::min(batch_size, n - startb);
            shard.clear();
            MlpHead head_grads = MlpHead::zeros(repr_dim, config.head_hidden);
            double loss = 0.0;
            for (std::size_t j = 0; j < batch_n; ++j) {
                const auto& acct = accounts[order[startb + j]];
                Rng drop_rng(derive_seed(config.seed, "ft-dropout",
                                         static_cast<std::uint64_t>(epoch), order[startb + j]));
                auto rt = model::representation_forward(acct.pieces, params, config.dropout,
                                                        &drop_rng);
                HeadTrace ht;
                const double logit = head_forward(result.head, rt.representation.transpose(),
                                                  config.dropout, &drop_rng, &ht);
                loss += bce_loss(logit, acct.label);
                const double d_logit =
                    (sigmoid(logit) - (acct.label ? 1.0 : 0.0)) / static_cast<double>(batch_n);
                model::RowVector dx;
                head_backward(result.head, ht, d_logit, head_grads, &dx);
                model::representation_backward(rt, params, dx.transpose(), shard);
            }
            loss /= static_cast<double>(batch_n);
            if (!std::isfinite(loss)) {
                throw NumericError("finetune: non-finite loss at step " +
                                   std::to_string(global_step + 1));
            }
            auto grad_total = model::GradSet::zeros(params.cfg);
            grad_total.add_shard(shard);
            opt.step(params, grad_total);
            head_step(result.head, head_grads, opt.lr_at(opt.steps_done()));
            ++global_step;
            result.steps.push_back({global_step, loss, opt.lr_at(opt.steps_done())});
        }
    }
    return result;
}

// --- helpers -------------------------------------------------------------------------

std::map<std::int32_t, model::PieceSet> group_pieces(const seqgen::SequenceFile& file) {
    std::map<std::int32_t, model::PieceSet> out;
    for (const auto& stored : file.sequences) {
        auto& set = out[stored.owner];
        set.owner = stored.owner;
        switch (stored.view) {
            case seqgen::View::Full: set.full.push_back(&stored.seq); break;
            case seqgen::View::In: set.in.push_back(&stored.seq); break;
            case seqgen::View::Out: set.out.push_back(&stored.seq); break;
        }
    }
    return out;
}

void write_steps_csv(std::ostream& out, std::span<const StepLog> steps) {
    out << "step,loss,lr\n";
    for (const auto& s : steps) {
        out << s.step << ',' << s.loss << ',' << s.lr << '\n';
    }
}

}  // namespace ethseq::trainer
