#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "ethseq/model.hpp"
#include "ethseq/negsample.hpp"
#include "ethseq/seqgen.hpp"

namespace ethseq::trainer {

struct TrainConfig {
    double mask_ratio = 0.8;
    double dropout = 0.2;
    std::string neg_strategy = "zipfan";
    int pool_size = 5000;
    int batch_size = 256;
    int max_seq_len = 100;
    int layers = 8;
    int heads = 2;
    int hidden = 64;
    int epochs = 10;
    double learning_rate = 1e-4;
    double clip_norm = 5.0;
    std::uint64_t seed = 42;
    int threads = 1;

    // Feature flags; each maps to one ablation row.
    bool dedup = true;
    bool batch_sharing = true;
    bool tranx_features = true;
    bool in_out_separation = false;
    bool erc20_gate = false;

    model::ModelConfig model_config(std::int32_t vocab_size) const;
    std::string canonical_string() const;
    std::uint64_t config_hash() const;
    std::string config_hash_hex() const;

    // Canonical JSON describing the computation per component, used to verify
    // that each flag changes exactly the component it names.
    std::string computation_description() const;
};

struct Checkpoint {
    model::ModelParams params;
    TrainConfig config;
    std::string vocab_hash;
    int epoch = 0;
    std::vector<double> loss_history;  // mean loss per epoch
};

// JSON header line (version, config, shapes) followed by raw little-endian
// f32 blobs per tensor, in header order.
void save_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint load_checkpoint(std::istream& in);
void save_checkpoint_file(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint_file(const std::string& path);

struct StepLog {
    int step = 0;
    double loss = 0.0;
    double lr = 0.0;
};

struct PretrainResult {
    Checkpoint checkpoint;
    std::vector<StepLog> steps;
};

// Masked-address pre-training. Sequences are re-masked every epoch with
// per-(sequence, epoch) seeds; one negative pool is sampled per batch and
// shared across its masked positions (unless batch_sharing is off). Gradient
// reduction uses a fixed shard decomposition so results are bit-identical
// for any thread count. Throws NumericError on divergence after invoking
// on_divergence with a diagnostic checkpoint.
PretrainResult pretrain(const seqgen::SequenceFile& sequences, const seqgen::AddressVocab& vocab,
                        const negsample::FrequencyTable& freq, const TrainConfig& config,
                        const std::function<void(const Checkpoint&)>& on_divergence = {});

// Adam with linear warm-up over the first 1% of steps and global-norm
// clipping.
class AdamOptimizer {
public:
    AdamOptimizer(const model::ModelConfig& cfg, double lr, int total_steps, double clip_norm);
    void step(model::ModelParams& params, model::GradSet& grads);
    double lr_at(int step) const;
    int steps_done() const { return t_; }

private:
    model::ModelParams m_, v_;
    double lr_;
    double clip_norm_;
    int warmup_;
    int t_ = 0;
};

// --- classification head -----------------------------------------------------

// 2-layer head: input -> hidden (GELU, dropout) -> 1 logit.
struct MlpHead {
    model::Matrix w1;  // D x H
    model::Matrix b1;  // 1 x H
    model::Matrix w2;  // H x 1
    model::Matrix b2;  // 1 x 1

    static MlpHead init(int input_dim, int hidden_dim, std::uint64_t seed);
    static MlpHead zeros(int input_dim, int hidden_dim);
    int input_dim() const { return static_cast<int>(w1.rows()); }
};

struct HeadTrace {
    model::RowVector x, z1, act, keep;
    double logit = 0.0;
};

double head_forward(const MlpHead& head, const model::RowVector& x, double dropout, Rng* rng,
                    HeadTrace* trace);
// d_logit is dLoss/dlogit; accumulates into grads, optionally returns dLoss/dx.
void head_backward(const MlpHead& head, const HeadTrace& trace, double d_logit, MlpHead& grads,
                   model::RowVector* dx);

double sigmoid(double z);
// Numerically stable binary cross-entropy on a logit.
double bce_loss(double logit, int label);

// --- fine-tuning ---------------------------------------------------------------

struct LabeledAccount {
    std::int32_t owner = seqgen::kUnkId;
    model::PieceSet pieces;
    int label = 0;  // 1 = positive class
};

struct FinetuneConfig {
    int epochs = 20;
    int batch_size = 32;
    double learning_rate = 1e-4;
    double dropout = 0.2;
    double clip_norm = 5.0;
    int head_hidden = 128;
    std::uint64_t seed = 42;
    bool from_scratch = false;  // ablation: skip pre-trained weights
};

struct FinetuneResult {
    Checkpoint checkpoint;
    MlpHead head;
    std::vector<StepLog> steps;
};

// Joint training of the encoder and a cascaded MLP head with binary
// cross-entropy. Throws DataError when the label set has a single class.
FinetuneResult finetune(const Checkpoint& start, const std::vector<LabeledAccount>& accounts,
                        const FinetuneConfig& config);

// --- helpers --------------------------------------------------------------------

// Groups stored sequences into per-owner piece sets. Pointers reference the
// passed file, which must outlive the result.
std::map<std::int32_t, model::PieceSet> group_pieces(const seqgen::SequenceFile& file);

void write_steps_csv(std::ostream& out, std::span<const StepLog> steps);

}  // namespace ethseq::trainer
