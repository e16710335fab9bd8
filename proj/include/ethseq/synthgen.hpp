#pragma once

#include <cstdint>
#include <string>

namespace ethseq::synthgen {

// Knobs for the synthetic corpus. Counterparty popularity follows a Pareto
// law (rank-frequency slope about -1/(exponent-1)); bursts of repeated
// (sender, receiver) transactions inside short windows set the raw
// repetitiveness ratio; phishing-pattern accounts receive from many victims
// and cash out to a small set of excluded-label accounts; planted pairs
// share an exclusive counterparty group.
struct SynthConfig {
    int n_accounts = 200;
    int n_tx = 1800;
    double powerlaw_exponent = 2.0;
    double burst_rate = 0.48;
    double phisher_fraction = 0.06;
    double phisher_in_out_ratio = 1.25;
    double normal_in_out_ratio = 0.385;
    int n_pairs = 8;
    int pair_shared_counterparties = 3;
    double token_event_rate = 0.15;
    double excluded_fraction = 0.01;
    double failed_rate = 0.02;
    std::uint64_t seed = 42;

    static SynthConfig tiny();
    static SynthConfig desk();

    void validate() const;  // throws DataError when infeasible
};

struct SynthOutput {
    std::string transactions_csv;
    std::string token_transfers_csv;
    std::string labels_csv;
    std::string kinds_csv;
    std::string pairs_csv;
};

// Deterministic under config.seed: the same config yields byte-identical
// output.
SynthOutput generate(const SynthConfig& config);

// Writes transactions.csv, token_transfers.csv, labels.csv, kinds.csv and
// pairs.csv into dir (created if missing).
void write_files(const SynthOutput& output, const std::string& dir);

}  // namespace ethseq::synthgen
