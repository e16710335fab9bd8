// ethseq: synthetic-corpus generation, Ethereum-ETL ingestion, sequence
// building, masked-address pre-training, representation extraction and
// evaluation, wired as one binary.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "ethseq/ingest.hpp"
#include "ethseq/manifest.hpp"
#include "ethseq/model.hpp"
#include "ethseq/negsample.hpp"
#include "ethseq/seqgen.hpp"
#include "ethseq/synthgen.hpp"
#include "ethseq/tasks.hpp"
#include "ethseq/trainer.hpp"

namespace fs = std::filesystem;
using namespace ethseq;

namespace {

std::ifstream open_input(const std::string& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(std::string(what) + " not readable: " + path);
    return in;
}

std::ofstream open_output(const fs::path& path, const char* what) {
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(std::string(what) + " not writable: " + path.string());
    return out;
}

// Labels restricted to the phishing-vs-normal pool; paired and excluded
// accounts stay out of the classification sets.
std::optional<int> phishing_label(ingest::AccountLabel label) {
    switch (label) {
        case ingest::AccountLabel::Phishing: return 1;
        case ingest::AccountLabel::Normal: return 0;
        default: return std::nullopt;
    }
}

struct CommonOpts {
    std::uint64_t seed = 42;
    int threads = 1;
    std::string format = "csv";
};

void write_report(const tasks::MetricsReport& report, const fs::path& out_dir,
                  const std::string& name, const std::string& format) {
    auto out = open_output(out_dir / (name + (format == "json" ? ".json" : ".csv")), "report");
    out << (format == "json" ? report.to_json() : report.to_csv());
    std::cout << report.to_text();
}

// --- subcommands ------------------------------------------------------------

int cmd_synthgen(const synthgen::SynthConfig& cfg, const std::string& out_dir,
                 const std::string& preset) {
    auto output = synthgen::generate(cfg);
    synthgen::write_files(output, out_dir);

    RunManifest manifest;
    manifest.subcommand = "synthgen";
    manifest.seed = cfg.seed;
    manifest.config = {
        {"preset", preset},
        {"n_accounts", std::to_string(cfg.n_accounts)},
        {"n_tx", std::to_string(cfg.n_tx)},
        {"powerlaw_exponent", std::to_string(cfg.powerlaw_exponent)},
        {"burst_rate", std::to_string(cfg.burst_rate)},
        {"phisher_fraction", std::to_string(cfg.phisher_fraction)},
        {"n_pairs", std::to_string(cfg.n_pairs)},
        {"pair_shared_counterparties", std::to_string(cfg.pair_shared_counterparties)},
        {"token_event_rate", std::to_string(cfg.token_event_rate)},
    };
    manifest.outputs = {"transactions.csv", "token_transfers.csv", "labels.csv", "kinds.csv",
                        "pairs.csv"};
    manifest.save(out_dir);
    std::cout << "synthgen: wrote corpus to " << out_dir << "\n";
    return 0;
}

int cmd_ingest(const std::string& transactions, const std::string& token_transfers,
               const std::string& labels, const std::string& kinds, const std::string& out_dir,
               std::uint64_t seed) {
    auto tx_in = open_input(transactions, "transactions csv");
    std::optional<std::ifstream> ev_in, label_in, kind_in;
    if (!token_transfers.empty()) ev_in = open_input(token_transfers, "token transfers csv");
    if (!labels.empty()) label_in = open_input(labels, "labels csv");
    if (!kinds.empty()) kind_in = open_input(kinds, "kinds csv");

    ingest::IngestStats stats;
    ingest::ParseDiagnostics diag;
    auto corpus = ingest::build_corpus(tx_in, ev_in ? &*ev_in : nullptr,
                                       label_in ? &*label_in : nullptr,
                                       kind_in ? &*kind_in : nullptr, &stats, &diag);
    fs::create_directories(out_dir);
    ingest::save_corpus_file((fs::path(out_dir) / "corpus.bin").string(), corpus);

    for (const auto& msg : diag.messages) std::cerr << "ingest: " << msg << "\n";
    std::cout << "ingest: " << stats.transactions << " transactions, " << stats.token_events
              << " token events, " << stats.accounts << " accounts ("
              << stats.dropped_contract_creation << " contract creations dropped, "
              << stats.dropped_contract_recipient << " contract-recipient events dropped, "
              << diag.rows_bad << " malformed rows)\n";

    RunManifest manifest;
    manifest.subcommand = "ingest";
    manifest.seed = seed;
    manifest.inputs = {transactions};
    if (!token_transfers.empty()) manifest.inputs.push_back(token_transfers);
    if (!labels.empty()) manifest.inputs.push_back(labels);
    if (!kinds.empty()) manifest.inputs.push_back(kinds);
    manifest.outputs = {"corpus.bin"};
    manifest.save(out_dir);
    return 0;
}

int cmd_build_seqs(const std::string& corpus_path, const std::string& out_dir,
                   const seqgen::BuildOptions& options, std::uint64_t seed) {
    auto corpus = ingest::load_corpus_file(corpus_path);
    auto result = seqgen::build_sequences(corpus, options);

    seqgen::SequenceFile file;
    file.max_seq_len = static_cast<std::uint32_t>(options.max_seq_len);
    file.dedup_applied = options.dedup;
    file.sequences = std::move(result.sequences);

    fs::create_directories(out_dir);
    seqgen::save_sequences_file((fs::path(out_dir) / "sequences.bin").string(), file);
    {
        auto out = open_output(fs::path(out_dir) / "vocab.csv", "vocab");
        seqgen::save_vocab_csv(out, result.vocab);
    }
    {
        auto out = open_output(fs::path(out_dir) / "activity.csv", "activity");
        seqgen::save_activity_csv(out, result.activity);
    }

    std::cout << "build-seqs: " << result.accounts_kept << " accounts, " << file.sequences.size()
              << " stored sequences, vocab " << result.vocab.size() << "\n";
    std::cout << "repetitiveness ratio: raw " << result.raw_repetitiveness << " -> deduplicated "
              << result.final_repetitiveness << "\n";
    if (result.unmatched_token_events > 0) {
        std::cerr << "build-seqs: " << result.unmatched_token_events
                  << " token events never matched an out-transaction\n";
    }

    RunManifest manifest;
    manifest.subcommand = "build-seqs";
    manifest.seed = seed;
    manifest.inputs = {corpus_path};
    manifest.config = {
        {"min_tx", std::to_string(options.min_tx)},
        {"max_tx", std::to_string(options.max_tx)},
        {"dedup", options.dedup ? "true" : "false"},
        {"dedup_window_hours", std::to_string(options.dedup_window_hours)},
        {"max_seq_len", std::to_string(options.max_seq_len)},
    };
    manifest.outputs = {"sequences.bin", "vocab.csv", "activity.csv"};
    manifest.save(out_dir);
    return 0;
}

int cmd_pretrain(const std::string& sequences_path, const std::string& vocab_path,
                 const std::string& out_dir, trainer::TrainConfig config) {
    auto file = seqgen::load_sequences_file(sequences_path);
    auto vocab_in = open_input(vocab_path, "vocab");
    auto vocab = seqgen::load_vocab_csv(vocab_in);
    config.max_seq_len = static_cast<int>(file.max_seq_len);
    config.dedup = file.dedup_applied;
    const auto freq = negsample::build_frequency_table(vocab);

    fs::create_directories(out_dir);
    const auto ckpt_path = (fs::path(out_dir) / "checkpoint.bin").string();
    auto on_divergence = [&](const trainer::Checkpoint& ckpt) {
        trainer::save_checkpoint_file((fs::path(out_dir) / "checkpoint.diverged.bin").string(),
                                      ckpt);
        std::cerr << "pretrain: diverged; diagnostic checkpoint written\n";
    };

    auto result = trainer::pretrain(file, vocab, freq, config, on_divergence);
    trainer::save_checkpoint_file(ckpt_path, result.checkpoint);
    {
        auto out = open_output(fs::path(out_dir) / "steps.csv", "step log");
        trainer::write_steps_csv(out, result.steps);
    }

    std::cout << "pretrain: " << config.epochs << " epochs, final epoch mean loss "
              << (result.checkpoint.loss_history.empty() ? 0.0
                                                         : result.checkpoint.loss_history.back())
              << "\n";

    RunManifest manifest;
    manifest.subcommand = "pretrain";
    manifest.seed = config.seed;
    manifest.inputs = {sequences_path, vocab_path};
    manifest.config["train_config"] = config.canonical_string();
    manifest.outputs = {"checkpoint.bin", "steps.csv"};
    manifest.save(out_dir);
    return 0;
}

int cmd_extract(const std::string& checkpoint_path, const std::string& sequences_path,
                const std::string& vocab_path, const std::string& out_dir,
                const std::string& mode_name, bool also_csv, std::uint64_t seed) {
    auto ckpt = trainer::load_checkpoint_file(checkpoint_path);
    auto file = seqgen::load_sequences_file(sequences_path);
    auto vocab_in = open_input(vocab_path, "vocab");
    auto vocab = seqgen::load_vocab_csv(vocab_in);
    {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(vocab.hash()));
        if (ckpt.vocab_hash != buf) {
            throw DataError("extract: vocab does not match checkpoint (hash mismatch)");
        }
    }

    const auto mode = mode_name == "address" ? model::ReprMode::AddressEmbedding
                                             : model::ReprMode::SelfToken;
    auto pieces = trainer::group_pieces(file);

    tasks::RepresentationSet reps;
    reps.mode = mode;
    const int dim = mode == model::ReprMode::AddressEmbedding
                        ? ckpt.params.cfg.hidden
                        : ckpt.params.cfg.representation_dim();
    reps.vectors.resize(static_cast<Eigen::Index>(pieces.size()), dim);
    Eigen::Index row = 0;
    for (const auto& [owner, set] : pieces) {
        auto rep = model::extract_representation(set, ckpt.params, mode);
        reps.addresses.push_back(vocab.id_to_address[static_cast<std::size_t>(owner)]);
        reps.vectors.row(row++) = rep.vector.transpose();
    }

    fs::create_directories(out_dir);
    tasks::save_representations_file((fs::path(out_dir) / "representations.bin").string(), reps);
    if (also_csv) {
        auto out = open_output(fs::path(out_dir) / "representations.csv", "representations csv");
        out << "address";
        for (int c = 0; c < dim; ++c) out << ",v" << c;
        out << "\n";
        for (std::size_t i = 0; i < reps.addresses.size(); ++i) {
            out << to_hex(reps.addresses[i]);
            for (Eigen::Index c = 0; c < reps.vectors.cols(); ++c) {
                out << ',' << reps.vectors(static_cast<Eigen::Index>(i), c);
            }
            out << "\n";
        }
    }
    std::cout << "extract: " << reps.addresses.size() << " account representations (dim " << dim
              << ", mode " << mode_name << ")\n";

    RunManifest manifest;
    manifest.subcommand = "extract";
    manifest.seed = seed;
    manifest.inputs = {checkpoint_path, sequences_path, vocab_path};
    manifest.config = {{"mode", mode_name}};
    manifest.outputs = {"representations.bin"};
    manifest.save(out_dir);
    return 0;
}

int cmd_eval_phish(const std::string& reps_path, const std::string& labels_path,
                   const std::string& out_dir, const tasks::FixedTrainOptions& options,
                   const std::string& format) {
    auto reps = tasks::load_representations_file(reps_path);
    auto labels_in = open_input(labels_path, "labels csv");
    auto labels = ingest::parse_labels(labels_in);

    std::vector<Eigen::Index> rows;
    std::vector<int> y;
    for (std::size_t i = 0; i < reps.addresses.size(); ++i) {
        auto it = labels.find(reps.addresses[i]);
        if (it == labels.end()) continue;
        auto label = phishing_label(it->second);
        if (!label) continue;
        rows.push_back(static_cast<Eigen::Index>(i));
        y.push_back(*label);
    }
    if (rows.empty()) throw DataError("eval-phish: no labeled accounts intersect representations");

    model::Matrix x(static_cast<Eigen::Index>(rows.size()), reps.vectors.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = reps.vectors.row(rows[i]);

    auto report = tasks::fixed_train_eval(x, y, options);
    fs::create_directories(out_dir);
    write_report(report, out_dir, "phish_report", format);

    RunManifest manifest;
    manifest.subcommand = "eval-phish";
    manifest.seed = options.seed;
    manifest.inputs = {reps_path, labels_path};
    manifest.config = {{"threshold", std::to_string(options.threshold)},
                       {"repeats", std::to_string(options.repeats)},
                       {"train_fraction", std::to_string(options.train_fraction)}};
    manifest.outputs = {format == "json" ? "phish_report.json" : "phish_report.csv"};
    manifest.save(out_dir);
    return 0;
}

int cmd_eval_deanon(const std::string& reps_path, const std::string& pairs_path,
                    const std::string& activity_path, const std::string& out_dir,
                    const std::vector<int>& ks, const std::string& format, std::uint64_t seed) {
    auto reps = tasks::load_representations_file(reps_path);
    auto pairs_in = open_input(pairs_path, "pairs csv");
    auto pairs = tasks::load_pairs_csv(pairs_in);

    tasks::FirstActivityMap first_activity;
    const tasks::FirstActivityMap* filter = nullptr;
    if (!activity_path.empty()) {
        auto act_in = open_input(activity_path, "activity csv");
        for (const auto& act : seqgen::load_activity_csv(act_in)) {
            first_activity.emplace(act.address, act.first_timestamp);
        }
        filter = &first_activity;
    }

    auto report = tasks::deanon_eval(pairs, reps, filter, ks);
    fs::create_directories(out_dir);
    write_report(report, out_dir, "deanon_report", format);

    RunManifest manifest;
    manifest.subcommand = "eval-deanon";
    manifest.seed = seed;
    manifest.inputs = {reps_path, pairs_path};
    if (!activity_path.empty()) manifest.inputs.push_back(activity_path);
    std::string ks_str;
    for (int k : ks) ks_str += (ks_str.empty() ? "" : ",") + std::to_string(k);
    manifest.config = {{"ks", ks_str}};
    manifest.outputs = {format == "json" ? "deanon_report.json" : "deanon_report.csv"};
    manifest.save(out_dir);
    return 0;
}

int cmd_diag_attention(const std::string& checkpoint_path, const std::string& sequences_path,
                       const std::string& vocab_path, const std::string& out_dir, int layer,
                       int buckets, std::size_t max_sequences, std::uint64_t seed) {
    auto ckpt = trainer::load_checkpoint_file(checkpoint_path);
    auto file = seqgen::load_sequences_file(sequences_path);
    auto vocab_in = open_input(vocab_path, "vocab");
    auto vocab = seqgen::load_vocab_csv(vocab_in);
    const auto freq = negsample::build_frequency_table(vocab);

    auto table = tasks::attention_by_rank(ckpt.params, file.sequences, freq, layer - 1, buckets,
                                          max_sequences);
    fs::create_directories(out_dir);
    {
        auto out = open_output(fs::path(out_dir) / "attention.csv", "attention csv");
        tasks::write_attention_csv(out, table);
    }
    std::cout << "diag-attention: " << table.size() << " rank buckets written\n";

    RunManifest manifest;
    manifest.subcommand = "diag-attention";
    manifest.seed = seed;
    manifest.inputs = {checkpoint_path, sequences_path, vocab_path};
    manifest.config = {{"layer", std::to_string(layer)}, {"buckets", std::to_string(buckets)}};
    manifest.outputs = {"attention.csv"};
    manifest.save(out_dir);
    return 0;
}

int cmd_probe(const tasks::ProbeConfig& config, const std::string& out_dir) {
    auto report = tasks::three_hop_probe(config);
    std::cout << report.to_text();
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        auto out = open_output(fs::path(out_dir) / "probe.txt", "probe report");
        out << report.to_text();
        RunManifest manifest;
        manifest.subcommand = "probe-3hop";
        manifest.seed = config.seed;
        manifest.config = {{"seeds", std::to_string(config.n_seeds)},
                           {"epochs", std::to_string(config.epochs)}};
        manifest.outputs = {"probe.txt"};
        manifest.save(out_dir);
    }
    return report.rep_separates() && report.emb_separates() ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ethseq: transaction-sequence pre-training and account-representation evaluation"};
    app.require_subcommand(1);

    CommonOpts common;
    app.add_option("--seed", common.seed, "root seed; per-stage seeds are derived from it");
    app.add_option("--threads", common.threads, "worker threads for training")
        ->check(CLI::Range(1, 64));
    app.add_option("--format", common.format, "report format")->check(CLI::IsMember({"csv", "json"}));
    app.set_config("--config", "", "read options from an ini-style key=value file");

    // synthgen
    auto* sg = app.add_subcommand("synthgen", "generate a synthetic corpus");
    std::string sg_out = "out/synth";
    std::string sg_preset = "tiny";
    synthgen::SynthConfig sg_cfg = synthgen::SynthConfig::tiny();
    bool sg_have_accounts = false;
    sg->add_option("--out", sg_out, "output directory");
    sg->add_option("--preset", sg_preset, "tiny (200 accounts) or desk (10k accounts)")
        ->check(CLI::IsMember({"tiny", "desk"}));
    auto* sg_acc = sg->add_option("--accounts", sg_cfg.n_accounts, "account count override");
    sg->add_option("--tx", sg_cfg.n_tx, "approximate transaction count override");
    sg->add_option("--pairs", sg_cfg.n_pairs, "planted de-anonymization pairs");
    sg->add_option("--burst-rate", sg_cfg.burst_rate, "continuous-repetition rate");
    sg->add_option("--exponent", sg_cfg.powerlaw_exponent, "popularity power-law exponent");
    sg->add_option("--phisher-fraction", sg_cfg.phisher_fraction, "fraction of phishing accounts");
    sg->add_option("--token-event-rate", sg_cfg.token_event_rate, "ERC-20 event rate");
    sg_have_accounts = sg_acc->count() > 0;

    // ingest
    auto* ig = app.add_subcommand("ingest", "parse Ethereum-ETL CSVs into a corpus file");
    std::string ig_tx, ig_ev, ig_labels, ig_kinds, ig_out = "out/ingest";
    ig->add_option("--transactions", ig_tx, "transactions.csv")->required();
    ig->add_option("--token-transfers", ig_ev, "token_transfers.csv");
    ig->add_option("--labels", ig_labels, "labels csv (address,label)");
    ig->add_option("--kinds", ig_kinds, "address-kind csv (address,kind)");
    ig->add_option("--out", ig_out, "output directory");

    // build-seqs
    auto* bs = app.add_subcommand("build-seqs", "build per-account transaction sequences");
    std::string bs_corpus, bs_out = "out/seqs";
    seqgen::BuildOptions bs_opts;
    bool bs_no_dedup = false;
    bs->add_option("--corpus", bs_corpus, "corpus.bin from ingest")->required();
    bs->add_option("--out", bs_out, "output directory");
    bs->add_option("--max-seq-len", bs_opts.max_seq_len, "split limit (default 100)");
    bs->add_option("--dedup-window-hours", bs_opts.dedup_window_hours, "RR#1 merge window");
    bs->add_option("--min-tx", bs_opts.min_tx, "minimum involved transactions");
    bs->add_option("--max-tx", bs_opts.max_tx, "maximum involved transactions");
    bs->add_flag("--no-dedup", bs_no_dedup, "disable RR#1 de-duplication (ablation)");

    // pretrain
    auto* pt = app.add_subcommand("pretrain", "masked address prediction pre-training");
    std::string pt_seqs, pt_vocab, pt_out = "out/pretrain";
    trainer::TrainConfig pt_cfg;
    bool pt_no_sharing = false, pt_no_tranx = false, pt_inout = false, pt_erc20 = false;
    pt->add_option("--sequences", pt_seqs, "sequences.bin")->required();
    pt->add_option("--vocab", pt_vocab, "vocab.csv")->required();
    pt->add_option("--out", pt_out, "output directory");
    pt->add_option("--mask-ratio", pt_cfg.mask_ratio, "masking ratio (default 0.8)");
    pt->add_option("--dropout", pt_cfg.dropout, "dropout ratio (default 0.2)");
    pt->add_option("--neg-strategy", pt_cfg.neg_strategy, "uniform | freq0.5 | freq1.0 | zipfan");
    pt->add_option("--neg-pool-size", pt_cfg.pool_size, "negative pool size (default 5000)");
    pt->add_flag("--no-batch-sharing", pt_no_sharing, "per-position pools (ablation)");
    pt->add_option("--batch-size", pt_cfg.batch_size, "sequences per batch");
    pt->add_option("--epochs", pt_cfg.epochs, "pre-training epochs");
    pt->add_option("--lr", pt_cfg.learning_rate, "learning rate");
    pt->add_option("--layers", pt_cfg.layers, "transformer layers (default 8)");
    pt->add_option("--heads", pt_cfg.heads, "attention heads (default 2)");
    pt->add_option("--hidden", pt_cfg.hidden, "hidden dimension (default 64)");
    pt->add_flag("--no-tranx-features", pt_no_tranx, "drop transaction features (ablation)");
    pt->add_flag("--inout", pt_inout, "in/out sequence separation (MH#1)");
    pt->add_flag("--erc20", pt_erc20, "ERC-20 transfer gate encoder (MH#2)");

    // extract
    auto* ex = app.add_subcommand("extract", "extract account representations");
    std::string ex_ckpt, ex_seqs, ex_vocab, ex_out = "out/reps", ex_mode = "self";
    bool ex_csv = false;
    ex->add_option("--checkpoint", ex_ckpt, "checkpoint.bin")->required();
    ex->add_option("--sequences", ex_seqs, "sequences.bin")->required();
    ex->add_option("--vocab", ex_vocab, "vocab.csv")->required();
    ex->add_option("--out", ex_out, "output directory");
    ex->add_option("--mode", ex_mode, "self (encoder output) or address (embedding row)")
        ->check(CLI::IsMember({"self", "address"}));
    ex->add_flag("--csv", ex_csv, "also write representations.csv");

    // eval-phish
    auto* ep = app.add_subcommand("eval-phish", "fixed-training phishing classification");
    std::string ep_reps, ep_labels, ep_out = "out/eval-phish";
    tasks::FixedTrainOptions ep_opts;
    ep->add_option("--representations", ep_reps, "representations.bin")->required();
    ep->add_option("--labels", ep_labels, "labels csv")->required();
    ep->add_option("--out", ep_out, "output directory");
    ep->add_option("--threshold", ep_opts.threshold, "decision threshold (default 0.3)");
    ep->add_option("--repeats", ep_opts.repeats, "repeats, best F1 reported (default 5)");
    ep->add_option("--train-fraction", ep_opts.train_fraction, "train split fraction");
    ep->add_option("--head-epochs", ep_opts.epochs, "MLP head training epochs");

    // eval-deanon
    auto* ed = app.add_subcommand("eval-deanon", "de-anonymization retrieval evaluation");
    std::string ed_reps, ed_pairs, ed_activity, ed_out = "out/eval-deanon";
    std::vector<int> ed_ks = {1, 3, 5, 10, 100, 1000};
    ed->add_option("--representations", ed_reps, "representations.bin")->required();
    ed->add_option("--pairs", ed_pairs, "pairs csv (query,target,cutoff_timestamp)")->required();
    ed->add_option("--activity", ed_activity, "activity.csv for candidate time filters");
    ed->add_option("--out", ed_out, "output directory");
    ed->add_option("--ks", ed_ks, "HR@k cut-offs")->delimiter(',');

    // diag-attention
    auto* da = app.add_subcommand("diag-attention", "attention-by-frequency-rank diagnostic");
    std::string da_ckpt, da_seqs, da_vocab, da_out = "out/diag";
    int da_layer = 1, da_buckets = 100;
    std::size_t da_max = 4000;
    da->add_option("--checkpoint", da_ckpt, "checkpoint.bin")->required();
    da->add_option("--sequences", da_seqs, "sequences.bin")->required();
    da->add_option("--vocab", da_vocab, "vocab.csv")->required();
    da->add_option("--out", da_out, "output directory");
    da->add_option("--layer", da_layer, "1-based transformer layer (default 1)")
        ->check(CLI::PositiveNumber);
    da->add_option("--buckets", da_buckets, "rank buckets (default 100)");
    da->add_option("--max-sequences", da_max, "sequence sample cap");

    // probe-3hop
    auto* pr = app.add_subcommand("probe-3hop", "five-node multi-hop proximity probe");
    std::string pr_out;
    tasks::ProbeConfig pr_cfg;
    pr->add_option("--out", pr_out, "output directory (optional)");
    pr->add_option("--seeds", pr_cfg.n_seeds, "number of seeds (default 5)");
    pr->add_option("--epochs", pr_cfg.epochs, "pre-training epochs per seed");

    for (auto* sub : {sg, ig, bs, pt, ex, ep, ed, da, pr}) sub->fallthrough();

    CLI11_PARSE(app, argc, argv);

    try {
        if (sg->parsed()) {
            if (sg_preset == "desk") {
                auto desk = synthgen::SynthConfig::desk();
                if (!sg_have_accounts) {
                    // preset values unless explicitly overridden
                    const auto keep = sg_cfg;
                    sg_cfg = desk;
                    if (sg->count("--tx")) sg_cfg.n_tx = keep.n_tx;
                    if (sg->count("--pairs")) sg_cfg.n_pairs = keep.n_pairs;
                    if (sg->count("--burst-rate")) sg_cfg.burst_rate = keep.burst_rate;
                    if (sg->count("--exponent")) sg_cfg.powerlaw_exponent = keep.powerlaw_exponent;
                    if (sg->count("--phisher-fraction")) sg_cfg.phisher_fraction = keep.phisher_fraction;
                    if (sg->count("--token-event-rate")) sg_cfg.token_event_rate = keep.token_event_rate;
                }
            }
            sg_cfg.seed = derive_seed(common.seed, "synthgen");
            return cmd_synthgen(sg_cfg, sg_out, sg_preset);
        }
        if (ig->parsed()) return cmd_ingest(ig_tx, ig_ev, ig_labels, ig_kinds, ig_out, common.seed);
        if (bs->parsed()) {
            bs_opts.dedup = !bs_no_dedup;
            return cmd_build_seqs(bs_corpus, bs_out, bs_opts, common.seed);
        }
        if (pt->parsed()) {
            pt_cfg.batch_sharing = !pt_no_sharing;
            pt_cfg.tranx_features = !pt_no_tranx;
            pt_cfg.in_out_separation = pt_inout;
            pt_cfg.erc20_gate = pt_erc20;
            pt_cfg.threads = common.threads;
            pt_cfg.seed = derive_seed(common.seed, "pretrain");
            if (pt_no_sharing && !pt->count("--neg-pool-size")) pt_cfg.pool_size = 20;
            return cmd_pretrain(pt_seqs, pt_vocab, pt_out, pt_cfg);
        }
        if (ex->parsed()) {
            return cmd_extract(ex_ckpt, ex_seqs, ex_vocab, ex_out, ex_mode, ex_csv, common.seed);
        }
        if (ep->parsed()) {
            ep_opts.seed = derive_seed(common.seed, "eval-phish");
            return cmd_eval_phish(ep_reps, ep_labels, ep_out, ep_opts, common.format);
        }
        if (ed->parsed()) {
            return cmd_eval_deanon(ed_reps, ed_pairs, ed_activity, ed_out, ed_ks, common.format,
                                   common.seed);
        }
        if (da->parsed()) {
            return cmd_diag_attention(da_ckpt, da_seqs, da_vocab, da_out, da_layer, da_buckets,
                                      da_max, common.seed);
        }
        if (pr->parsed()) {
            pr_cfg.seed = derive_seed(common.seed, "probe-3hop");
            return cmd_probe(pr_cfg, pr_out);
        }
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
