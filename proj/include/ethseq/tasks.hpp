#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ethseq/model.hpp"
#include "ethseq/negsample.hpp"
#include "ethseq/trainer.hpp"

namespace ethseq::tasks {

// --- representations file ------------------------------------------------------

struct RepresentationSet {
    std::vector<Address> addresses;
    model::Matrix vectors;  // n x D, row-aligned with addresses
    model::ReprMode mode = model::ReprMode::SelfToken;

    std::optional<std::size_t> index_of(const Address& a) const;
};

inline constexpr char kReprMagic[] = "ETHREP1\n";

void save_representations(std::ostream& out, const RepresentationSet& reps);
RepresentationSet load_representations(std::istream& in);
void save_representations_file(const std::string& path, const RepresentationSet& reps);
RepresentationSet load_representations_file(const std::string& path);

// --- metrics ----------------------------------------------------------------------

struct MetricsReport {
    // classification section
    double precision = 0.0, recall = 0.0, f1 = 0.0;
    double threshold = 0.3;
    double f1_mean = 0.0, f1_std = 0.0;
    int repeats = 0;
    bool has_classification = false;

    // retrieval section
    std::vector<std::pair<int, double>> hr_at;  // (k, hit ratio), ascending k
    double mean_rank = 0.0;
    std::size_t pairs_evaluated = 0, pairs_skipped = 0;
    double mean_candidates = 0.0;
    bool has_retrieval = false;

    std::vector<std::string> notes;

    std::string to_csv() const;
    std::string to_json() const;
    std::string to_text() const;
};

struct ClassMetrics {
    double precision = 0.0, recall = 0.0, f1 = 0.0;
};

// Precision reported as 0 when nothing is predicted positive.
ClassMetrics classification_metrics(std::span<const int> labels, std::span<const double> scores,
                                    double threshold);

// --- fixed-training phishing evaluation ---------------------------------------------

struct FixedTrainOptions {
    double train_fraction = 0.7;
    double threshold = 0.3;
    int repeats = 5;  // best F1 reported over repeats, mean/std alongside
    int epochs = 60;
    int batch_size = 32;
    double learning_rate = 1e-3;
    int head_hidden = 128;
    double dropout = 0.2;
    std::uint64_t seed = 42;
};

// Trains the MLP head only, on frozen standardized representations, with a
// stratified split. Throws DataError on a degenerate split.
MetricsReport fixed_train_eval(const model::Matrix& representations, std::span<const int> labels,
                               const FixedTrainOptions& options);

// --- de-anonymization retrieval ------------------------------------------------------

struct EvalPair {
    Address query{};
    Address target{};
    std::optional<std::int64_t> cutoff_timestamp;
};

std::vector<EvalPair> load_pairs_csv(std::istream& in);

using FirstActivityMap = std::unordered_map<Address, std::int64_t, AddressHash>;

// Euclidean nearest-neighbour retrieval. Candidates are every representation
// except the query, restricted (when a cutoff and activity map are present)
// to accounts first active at or before the cutoff. Ranks are 1-based,
// distance ties broken by ascending address. Pairs whose target is missing
// or filtered out are skipped with a note.
MetricsReport deanon_eval(std::span<const EvalPair> pairs, const RepresentationSet& reps,
                          const FirstActivityMap* first_activity, std::span<const int> ks);

// --- attention diagnostic -------------------------------------------------------------

struct AttentionBucket {
    int bucket = 0;
    double mean_attention = 0.0;
    std::uint64_t count = 0;
};

// Mean attention received per frequency-rank bucket in the chosen layer
// (0 = first). Buckets partition ranks into n_buckets equal slices; bucket 0
// holds the most frequent addresses.
std::vector<AttentionBucket> attention_by_rank(const model::ModelParams& params,
                                               std::span<const seqgen::StoredSequence> sequences,
                                               const negsample::FrequencyTable& freq,
                                               int layer = 0, int n_buckets = 100,
                                               std::size_t max_sequences = 4000);

void write_attention_csv(std::ostream& out, std::span<const AttentionBucket> buckets);

// --- multi-hop probe -------------------------------------------------------------------

struct ProbeConfig {
    std::uint64_t seed = 42;
    int n_seeds = 5;
    int epochs = 400;
    int hidden = 16;
    int layers = 2;
    int heads = 2;
    int pool_size = 16;
    double learning_rate = 5e-3;
    double mask_ratio = 0.8;
    double dropout = 0.2;
};

struct ProbeReport {
    // Mean Euclidean distance from the probe node to its 1/2/3-hop
    // neighbours' address embeddings vs. the disconnected control node's.
    double rep_neighbor_mean = 0.0, rep_control_mean = 0.0;
    double emb_neighbor_mean = 0.0, emb_control_mean = 0.0;

    bool rep_separates() const { return rep_neighbor_mean < rep_control_mean; }
    bool emb_separates() const { return emb_neighbor_mean < emb_control_mean; }
    std::string to_text() const;
};

// The 5-node chain-plus-control topology: probe A, chain A-B-C-D, control E
// (kept active through a scaffold account F so its embedding trains).
ingest::Corpus three_hop_toy_corpus();

ProbeReport three_hop_probe(const ProbeConfig& config);

}  // namespace ethseq::tasks
