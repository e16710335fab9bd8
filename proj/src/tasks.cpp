#include "ethseq/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "ethseq/csv.hpp"
#include "ethseq/io.hpp"

namespace ethseq::tasks {

using nlohmann::json;

// --- representations file ----------------------------------------------------------

std::optional<std::size_t> RepresentationSet::index_of(const Address& a) const {
    for (std::size_t i = 0; i < addresses.size(); ++i) {
        if (addresses[i] == a) return i;
    }
    return std::nullopt;
}

void save_representations(std::ostream& out, const RepresentationSet& reps) {
    out.write(kReprMagic, 8);
    io::put<std::uint32_t>(out, 1);
    io::put<std::uint32_t>(out, static_cast<std::uint32_t>(reps.addresses.size()));
    io::put<std::uint32_t>(out, static_cast<std::uint32_t>(reps.vectors.cols()));
    io::put<std::uint8_t>(out, static_cast<std::uint8_t>(reps.mode));
    for (std::size_t i = 0; i < reps.addresses.size(); ++i) {
        io::put_bytes(out, reps.addresses[i]);
        for (Eigen::Index c = 0; c < reps.vectors.cols(); ++c) {
            io::put_f32(out, static_cast<float>(reps.vectors(static_cast<Eigen::Index>(i), c)));
        }
    }
    if (!out) throw DataError("representations: write failed");
}

RepresentationSet load_representations(std::istream& in) {
    io::expect_magic(in, std::string_view(kReprMagic, 8), "representations");
    if (io::get<std::uint32_t>(in) != 1) throw DataError("representations: unsupported version");
    const auto n = io::get<std::uint32_t>(in);
    const auto dim = io::get<std::uint32_t>(in);
    RepresentationSet reps;
    reps.mode = static_cast<model::ReprMode>(io::get<std::uint8_t>(in));
    reps.addresses.reserve(n);
    reps.vectors.resize(n, dim);
    for (std::uint32_t i = 0; i < n; ++i) {
        reps.addresses.push_back(io::get_bytes<20>(in));
        for (std::uint32_t c = 0; c < dim; ++c) {
            reps.vectors(i, c) = static_cast<double>(io::get_f32(in));
        }
    }
    return reps;
}

void save_representations_file(const std::string& path, const RepresentationSet& reps) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + path);
    save_representations(out, reps);
}

RepresentationSet load_representations_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open representations: " + path);
    return load_representations(in);
}

// --- metrics ------------------------------------------------------------------------

ClassMetrics classification_metrics(std::span<const int> labels, std::span<const double> scores,
                                    double threshold) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool pred = scores[i] >= threshold;
        if (pred && labels[i]) ++tp;
        if (pred && !labels[i]) ++fp;
        if (!pred && labels[i]) ++fn;
    }
    ClassMetrics m;
    m.precision = (tp + fp) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    m.recall = (tp + fn) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    m.f1 = (m.precision + m.recall) == 0.0 ? 0.0
                                           : 2.0 * m.precision * m.recall / (m.precision + m.recall);
    return m;
}

std::string MetricsReport::to_csv() const {
    std::ostringstream out;
    out << "metric,value\n";
    if (has_classification) {
        out << "precision," << precision << "\n";
        out << "recall," << recall << "\n";
        out << "f1," << f1 << "\n";
        out << "f1_mean," << f1_mean << "\n";
        out << "f1_std," << f1_std << "\n";
        out << "threshold," << threshold << "\n";
        out << "repeats," << repeats << "\n";
    }
    if (has_retrieval) {
        for (const auto& [k, hr] : hr_at) out << "hr@" << k << "," << hr << "\n";
        out << "mean_rank," << mean_rank << "\n";
        out << "pairs_evaluated," << pairs_evaluated << "\n";
        out << "pairs_skipped," << pairs_skipped << "\n";
        out << "mean_candidates," << mean_candidates << "\n";
    }
    return out.str();
}

std::string MetricsReport::to_json() const {
    json j;
    if (has_classification) {
        j["classification"] = {{"precision", precision}, {"recall", recall},   {"f1", f1},
                               {"f1_mean", f1_mean},     {"f1_std", f1_std},   {"threshold", threshold},
                               {"repeats", repeats}};
    }
    if (has_retrieval) {
        json hr = json::object();
        for (const auto& [k, v] : hr_at) hr["hr@" + std::to_string(k)] = v;
        j["retrieval"] = {{"hit_ratio", hr},
                          {"mean_rank", mean_rank},
                          {"pairs_evaluated", pairs_evaluated},
                          {"pairs_skipped", pairs_skipped},
                          {"mean_candidates", mean_candidates}};
    }
    if (!notes.empty()) j["notes"] = notes;
    return j.dump(2);
}

std::string MetricsReport::to_text() const {
    std::ostringstream out;
    if (has_classification) {
        out << "precision " << precision << "  recall " << recall << "  f1 " << f1
            << "  (threshold " << threshold << ")\n";
        out << "f1 over " << repeats << " repeats: best " << f1 << "  mean " << f1_mean << " +- "
            << f1_std << "\n";
    }
    if (has_retrieval) {
        out << "pairs " << pairs_evaluated << " (skipped " << pairs_skipped
            << "), mean candidates " << mean_candidates << "\n";
        for (const auto& [k, hr] : hr_at) out << "  HR@" << k << " = " << hr << "\n";
        out << "  mean rank = " << mean_rank << "\n";
    }
    for (const auto& n : notes) out << "note: " << n << "\n";
    return out.str();
}

// --- fixed-training evaluation ---------------------------------------------------------

namespace {

struct Split {
    std::vector<std::size_t> train, test;
};

Split stratified_split(std::span<const int> labels, double train_fraction, Rng& rng) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
    auto shuffle = [&](std::vector<std::size_t>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
    };
    shuffle(pos);
    shuffle(neg);
    Split split;
    auto cut = [&](std::vector<std::size_t>& v) {
        const auto k = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(v.size())));
        for (std::size_t i = 0; i < v.size(); ++i) (i < k ? split.train : split.test).push_back(v[i]);
    };
    cut(pos);
    cut(neg);
    auto has_both = [&](const std::vector<std::size_t>& v) {
        bool p = false, n = false;
        for (auto i : v) (labels[i] ? p : n) = true;
        return p && n;
    };
    if (!has_both(split.train) || !has_both(split.test)) {
        throw DataError("fixed_train_eval: degenerate split, both classes required on each side");
    }
    return split;
}

}  // namespace

MetricsReport fixed_train_eval(const model::Matrix& representations, std::span<const int> labels,
                               const FixedTrainOptions& options) {
    if (static_cast<std::size_t>(representations.rows()) != labels.size()) {
        throw DataError("fixed_train_eval: representation/label count mismatch");
    }
    Rng split_rng(derive_seed(options.seed, "split"));
    const Split split = stratified_split(labels, options.train_fraction, split_rng);

    // Standardize with train-split statistics.
    const auto dim = representations.cols();
    model::RowVector mean = model::RowVector::Zero(dim);
    for (auto i : split.train) mean += representations.row(static_cast<Eigen::Index>(i));
    mean /= static_cast<double>(split.train.size());
    model::RowVector var = model::RowVector::Zero(dim);
    for (auto i : split.train) {
        const model::RowVector d = representations.row(static_cast<Eigen::Index>(i)) - mean;
        var += d.cwiseProduct(d);
    }
    var /= static_cast<double>(split.train.size());
    model::RowVector inv_std(dim);
    for (Eigen::Index c = 0; c < dim; ++c) {
        inv_std(c) = var(c) > 1e-12 ? 1.0 / std::sqrt(var(c)) : 1.0;
    }
    auto standardized = [&](std::size_t i) -> model::RowVector {
        return (representations.row(static_cast<Eigen::Index>(i)) - mean).cwiseProduct(inv_std);
    };

    MetricsReport report;
    report.has_classification = true;
    report.threshold = options.threshold;
    report.repeats = options.repeats;

    std::vector<double> f1s;
    ClassMetrics best{};
    for (int rep = 0; rep < options.repeats; ++rep) {
        auto head = trainer::MlpHead::init(static_cast<int>(dim), options.head_hidden,
                                           derive_seed(options.seed, "head", rep));
        trainer::MlpHead hm = trainer::MlpHead::zeros(static_cast<int>(dim), options.head_hidden);
        trainer::MlpHead hv = trainer::MlpHead::zeros(static_cast<int>(dim), options.head_hidden);
        int t = 0;

        std::vector<std::size_t> order = split.train;
        for (int epoch = 0; epoch < options.epochs; ++epoch) {
            Rng shuffle_rng(derive_seed(options.seed, "head-shuffle", rep, epoch));
            for (std::size_t i = order.size(); i > 1; --i) {
                std::swap(order[i - 1], order[shuffle_rng.below(i)]);
            }
            Rng drop_rng(derive_seed(options.seed, "head-dropout", rep, epoch));
            for (std::size_t start = 0; start < order.size();
                 start += static_cast<std::size_t>(options.batch_size)) {
                const std::size_t end =
                    std::min(order.size(), start + static_cast<std::size_t>(options.batch_size));
                trainer::MlpHead grads =
                    trainer::MlpHead::zeros(static_cast<int>(dim), options.head_hidden);
                const double inv_b = 1.0 / static_cast<double>(end - start);
                for (std::size_t idx = start; idx < end; ++idx) {
                    const std::size_t i = order[idx];
                    trainer::HeadTrace trace;
                    const double logit = trainer::head_forward(head, standardized(i),
                                                               options.dropout, &drop_rng, &trace);
                    const double d_logit =
                        (trainer::sigmoid(logit) - (labels[i] ? 1.0 : 0.0)) * inv_b;
                    trainer::head_backward(head, trace, d_logit, grads, nullptr);
                }
                // Adam on the head only.
                ++t;
                constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
                const double bc1 = 1.0 - std::pow(b1, t);
                const double bc2 = 1.0 - std::pow(b2, t);
                model::Matrix* hp[] = {&head.w1, &head.b1, &head.w2, &head.b2};
                model::Matrix* hg[] = {&grads.w1, &grads.b1, &grads.w2, &grads.b2};
                model::Matrix* hmm[] = {&hm.w1, &hm.b1, &hm.w2, &hm.b2};
                model::Matrix* hvv[] = {&hv.w1, &hv.b1, &hv.w2, &hv.b2};
                for (int j = 0; j < 4; ++j) {
                    *hmm[j] = b1 * *hmm[j] + (1.0 - b1) * *hg[j];
                    *hvv[j] = b2 * *hvv[j] + (1.0 - b2) * hg[j]->cwiseProduct(*hg[j]);
                    hp[j]->array() -= options.learning_rate * (hmm[j]->array() / bc1) /
                                      ((hvv[j]->array() / bc2).sqrt() + eps);
                }
            }
        }

        std::vector<int> test_labels;
        std::vector<double> test_scores;
        for (auto i : split.test) {
            const double logit = trainer::head_forward(head, standardized(i), 0.0, nullptr, nullptr);
            test_labels.push_back(labels[i]);
            test_scores.push_back(trainer::sigmoid(logit));
        }
        const ClassMetrics m = classification_metrics(test_labels, test_scores, options.threshold);
        f1s.push_back(m.f1);
        if (m.f1 >= best.f1) best = m;
    }

    report.precision = best.precision;
    report.recall = best.recall;
    report.f1 = best.f1;
    double sum = 0.0;
    for (double f : f1s) sum += f;
    report.f1_mean = sum / static_cast<double>(f1s.size());
    double sq = 0.0;
    for (double f : f1s) sq += (f - report.f1_mean) * (f - report.f1_mean);
    report.f1_std = std::sqrt(sq / static_cast<double>(f1s.size()));
    return report;
}

// --- de-anonymization --------------------------------------------------------------------

std::vector<EvalPair> load_pairs_csv(std::istream& in) {
    CsvReader reader(in);
    reader.read_header();
    const int c_query = reader.require_column("query");
    const int c_target = reader.require_column("target");
    const int c_cutoff = reader.column("cutoff_timestamp");

    std::vector<EvalPair> pairs;
    std::vector<std::string> row;
    while (reader.next(row)) {
        EvalPair pair;
        auto q = parse_address(trim(row[c_query]));
        auto t = parse_address(trim(row[c_target]));
        if (!q || !t) throw DataError("pairs: bad address at line " + std::to_string(reader.line_number()));
        pair.query = *q;
        pair.target = *t;
        if (c_cutoff >= 0 && static_cast<int>(row.size()) > c_cutoff) {
            const auto field = trim(row[c_cutoff]);
            if (!field.empty()) pair.cutoff_timestamp = std::stoll(std::string(field));
        }
        pairs.push_back(pair);
    }
    return pairs;
}

MetricsReport deanon_eval(std::span<const EvalPair> pairs, const RepresentationSet& reps,
                          const FirstActivityMap* first_activity, std::span<const int> ks) {
    std::unordered_map<Address, std::size_t, AddressHash> row_of;
    for (std::size_t i = 0; i < reps.addresses.size(); ++i) row_of.emplace(reps.addresses[i], i);

    MetricsReport report;
    report.has_retrieval = true;
    std::vector<int> sorted_ks(ks.begin(), ks.end());
    std::sort(sorted_ks.begin(), sorted_ks.end());

    std::vector<std::uint64_t> hits(sorted_ks.size(), 0);
    double rank_sum = 0.0;
    double cand_sum = 0.0;

    for (const auto& pair : pairs) {
        auto qi = row_of.find(pair.query);
        auto ti = row_of.find(pair.target);
        if (qi == row_of.end() || ti == row_of.end()) {
            ++report.pairs_skipped;
            if (report.notes.size() < 16) {
                report.notes.push_back("pair skipped, representation missing: " +
                                       to_hex(qi == row_of.end() ? pair.query : pair.target));
            }
            continue;
        }
        auto passes_filter = [&](const Address& a) {
            if (!pair.cutoff_timestamp || !first_activity) return true;
            auto it = first_activity->find(a);
            if (it == first_activity->end()) return false;
            return it->second <= *pair.cutoff_timestamp;
        };
        if (!passes_filter(pair.target)) {
            ++report.pairs_skipped;
            if (report.notes.size() < 16) {
                report.notes.push_back("pair skipped, target outside candidate filter: " +
                                       to_hex(pair.target));
            }
            continue;
        }

        const auto q_row = static_cast<Eigen::Index>(qi->second);
        const auto t_row = static_cast<Eigen::Index>(ti->second);
        const double target_dist = (reps.vectors.row(t_row) - reps.vectors.row(q_row)).squaredNorm();

        std::uint64_t rank = 1;
        std::uint64_t candidates = 1;  // the target itself
        for (std::size_t c = 0; c < reps.addresses.size(); ++c) {
            if (c == qi->second || c == ti->second) continue;
            if (!passes_filter(reps.addresses[c])) continue;
            ++candidates;
            const double dist =
                (reps.vectors.row(static_cast<Eigen::Index>(c)) - reps.vectors.row(q_row))
                    .squaredNorm();
            if (dist < target_dist ||
                (dist == target_dist && reps.addresses[c] < pair.target)) {
                ++rank;
            }
        }

        ++report.pairs_evaluated;
        rank_sum += static_cast<double>(rank);
        cand_sum += static_cast<double>(candidates);
        for (std::size_t k = 0; k < sorted_ks.size(); ++k) {
            if (rank <= static_cast<std::uint64_t>(sorted_ks[k])) ++hits[k];
        }
    }

    if (report.pairs_evaluated > 0) {
        report.mean_rank = rank_sum / static_cast<double>(report.pairs_evaluated);
        report.mean_candidates = cand_sum / static_cast<double>(report.pairs_evaluated);
        for (std::size_t k = 0; k < sorted_ks.size(); ++k) {
            report.hr_at.emplace_back(sorted_ks[k],
                                      static_cast<double>(hits[k]) /
                                          static_cast<double>(report.pairs_evaluated));
        }
    }
    return report;
}

// --- attention diagnostic ---------------------------------------------------------------

std::vector<AttentionBucket> attention_by_rank(const model::ModelParams& params,
                                               std::span<const seqgen::StoredSequence> sequences,
                                               const negsample::FrequencyTable& freq, int layer,
                                               int n_buckets, std::size_t max_sequences) {
    if (layer < 0 || layer >= params.cfg.layers) throw NumericError("attention layer out of range");
    const int max_rank = freq.max_rank();
    n_buckets = std::min(n_buckets, max_rank);

    std::vector<double> sums(static_cast<std::size_t>(n_buckets), 0.0);
    std::vector<std::uint64_t> counts(static_cast<std::size_t>(n_buckets), 0);

    std::size_t used = 0;
    for (const auto& stored : sequences) {
        if (stored.view != seqgen::View::Full) continue;
        if (stored.seq.records.size() < 2) continue;
        if (used++ >= max_sequences) break;
        auto trace = model::encoder_forward(stored.seq, params, 0, 0.0, nullptr);
        const auto& lt = trace.layers[static_cast<std::size_t>(layer)];
        const auto n = lt.probs[0].rows();
        model::Matrix avg = model::Matrix::Zero(n, n);
        for (const auto& p : lt.probs) avg += p;
        avg /= static_cast<double>(lt.probs.size());

        for (Eigen::Index j = 0; j < n; ++j) {
            const auto& rec = stored.seq.records[static_cast<std::size_t>(j)];
            const std::int32_t rank = freq.rank_of(rec.counterparty);
            if (rank < 0) continue;
            const auto bucket = static_cast<std::size_t>(
                std::min<std::int64_t>(static_cast<std::int64_t>(rank) * n_buckets / max_rank,
                                       n_buckets - 1));
            sums[bucket] += avg.col(j).mean();
            ++counts[bucket];
        }
    }

    std::vector<AttentionBucket> out;
    for (int b = 0; b < n_buckets; ++b) {
        AttentionBucket bucket;
        bucket.bucket = b;
        bucket.count = counts[static_cast<std::size_t>(b)];
        bucket.mean_attention = bucket.count == 0
                                    ? 0.0
                                    : sums[static_cast<std::size_t>(b)] /
                                          static_cast<double>(bucket.count);
        out.push_back(bucket);
    }
    return out;
}

void write_attention_csv(std::ostream& out, std::span<const AttentionBucket> buckets) {
    out << "rank_bucket,mean_attention,count\n";
    for (const auto& b : buckets) {
        out << b.bucket << ',' << b.mean_attention << ',' << b.count << '\n';
    }
}

// --- multi-hop probe -----------------------------------------------------------------------

namespace {

Address probe_address(std::uint8_t k) {
    Address a{};
    a[0] = k;
    a[19] = k;
    return a;
}

Hash32 probe_hash(std::uint8_t k) {
    Hash32 h{};
    h[0] = k;
    h[31] = k;
    return h;
}

}  // namespace

ingest::Corpus three_hop_toy_corpus() {
    // Chain A-B-C-D plus disconnected pair E-F. F keeps the control node E
    // trained without linking it to the chain. Gaps exceed the 72h window so
    // nothing merges away.
    ingest::Corpus corpus;
    const Address a = probe_address(1), b = probe_address(2), c = probe_address(3),
                  d = probe_address(4), e = probe_address(5), f = probe_address(6);
    const std::int64_t t0 = 1700000000;
    const std::int64_t day = 86400;
    std::uint8_t hash_counter = 1;

    auto add_edge = [&](const Address& from, const Address& to, std::int64_t offset_days) {
        ingest::RawTransaction tx;
        tx.tx_hash = probe_hash(hash_counter++);
        tx.from_address = from;
        tx.to_address = to;
        tx.has_to = true;
        tx.value_wei = static_cast<u128>(1000000000000000000ULL);  // 1 ether
        tx.block_timestamp = t0 + offset_days * day;
        tx.status = ingest::TxStatus::Success;
        corpus.transactions.push_back(tx);
    };

    add_edge(a, b, 0);
    add_edge(b, a, 10);
    add_edge(a, b, 20);
    add_edge(b, a, 30);
    add_edge(b, c, 2);
    add_edge(c, b, 12);
    add_edge(b, c, 22);
    add_edge(c, b, 32);
    add_edge(c, d, 4);
    add_edge(d, c, 14);
    add_edge(c, d, 24);
    add_edge(d, c, 34);
    add_edge(e, f, 6);
    add_edge(f, e, 16);
    add_edge(e, f, 26);
    add_edge(f, e, 36);

    for (std::uint8_t k = 1; k <= 6; ++k) {
        ingest::AccountMeta meta;
        meta.address = probe_address(k);
        corpus.accounts.push_back(meta);
    }
    return corpus;
}

ProbeReport three_hop_probe(const ProbeConfig& config) {
    const auto corpus = three_hop_toy_corpus();

    ProbeReport report;
    for (int s = 0; s < config.n_seeds; ++s) {
        seqgen::BuildOptions build;
        build.emit_in_out_views = false;
        auto built = seqgen::build_sequences(corpus, build);
        seqgen::SequenceFile file;
        file.max_seq_len = build.max_seq_len;
        file.sequences = std::move(built.sequences);
        const auto freq = negsample::build_frequency_table(built.vocab);

        trainer::TrainConfig tc;
        tc.hidden = config.hidden;
        tc.layers = config.layers;
        tc.heads = config.heads;
        tc.pool_size = config.pool_size;
        tc.batch_size = 32;
        tc.epochs = config.epochs;
        tc.learning_rate = config.learning_rate;
        tc.mask_ratio = config.mask_ratio;
        tc.dropout = config.dropout;
        tc.seed = derive_seed(config.seed, "probe", static_cast<std::uint64_t>(s));

        auto trained = trainer::pretrain(file, built.vocab, freq, tc);
        const auto& params = trained.checkpoint.params;

        const auto id = [&](std::uint8_t k) { return built.vocab.id_of(probe_address(k)); };
        const std::int32_t id_a = id(1);

        auto pieces = trainer::group_pieces(file);
        const auto rep = model::extract_representation(pieces.at(id_a), params,
                                                       model::ReprMode::SelfToken);
        const model::RowVector emb_a = params.address_table.row(id_a);
        const model::RowVector rep_a = rep.vector.transpose();

        auto dist = [&](const model::RowVector& x, std::uint8_t k) {
            return (x - params.address_table.row(id(k))).norm();
        };
        report.rep_neighbor_mean += (dist(rep_a, 2) + dist(rep_a, 3) + dist(rep_a, 4)) / 3.0;
        report.rep_control_mean += dist(rep_a, 5);
        report.emb_neighbor_mean += (dist(emb_a, 2) + dist(emb_a, 3) + dist(emb_a, 4)) / 3.0;
        report.emb_control_mean += dist(emb_a, 5);
    }
    const double inv = 1.0 / static_cast<double>(config.n_seeds);
    report.rep_neighbor_mean *= inv;
    report.rep_control_mean *= inv;
    report.emb_neighbor_mean *= inv;
    report.emb_control_mean *= inv;
    return report;
}

std::string ProbeReport::to_text() const {
    std::ostringstream out;
    out << "representation mode: mean distance to <=3-hop neighbors " << rep_neighbor_mean
        << ", to control " << rep_control_mean << (rep_separates() ? "  [separated]" : "  [not separated]")
        << "\n";
    out << "address-embedding mode: mean distance to <=3-hop neighbors " << emb_neighbor_mean
        << ", to control " << emb_control_mean << (emb_separates() ? "  [separated]" : "  [not separated]")
        << "\n";
    return out.str();
}

}  // namespace ethseq::tasks
