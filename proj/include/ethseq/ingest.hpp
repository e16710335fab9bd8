#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ethseq/common.hpp"

namespace ethseq::ingest {

enum class TxStatus : std::uint8_t { Failed = 0, Success = 1 };

struct RawTransaction {
    Hash32 tx_hash{};
    Address from_address{};
    Address to_address{};
    bool has_to = false;  // false for contract-creation rows
    u128 value_wei = 0;
    std::int64_t block_timestamp = 0;
    TxStatus status = TxStatus::Success;

    bool operator==(const RawTransaction&) const = default;
};

struct TokenTransferEvent {
    Hash32 tx_hash{};
    Address contract_address{};
    Address recipient_eoa{};
    u128 value_raw = 0;

    bool operator==(const TokenTransferEvent&) const = default;
};

enum class AccountKind : std::uint8_t { EOA = 0, Contract = 1 };
enum class AccountLabel : std::uint8_t {
    Normal = 0,
    Phishing = 1,
    PairedA = 2,
    PairedB = 3,
    Excluded = 4,
};

struct AccountMeta {
    Address address{};
    AccountKind kind = AccountKind::EOA;
    AccountLabel label = AccountLabel::Normal;

    bool operator==(const AccountMeta&) const = default;
};

const char* label_name(AccountLabel label);
AccountLabel parse_label(std::string_view name);  // throws DataError on unknown

using AddressSet = std::unordered_set<Address, AddressHash>;

// Per-row parse problems are collected here; parsing continues past them.
struct ParseDiagnostics {
    std::size_t rows_ok = 0;
    std::size_t rows_bad = 0;
    std::vector<std::string> messages;  // capped at kMaxMessages

    static constexpr std::size_t kMaxMessages = 64;
    void warn(std::size_t line, const std::string& what);
};

// Streaming parse of an Ethereum-ETL style transactions.csv. Requires columns
// hash, from_address, to_address, value, block_timestamp, receipt_status;
// extra columns are ignored. Missing required column throws DataError.
void parse_transactions(std::istream& in,
                        const std::function<void(const RawTransaction&)>& sink,
                        ParseDiagnostics* diag = nullptr);

std::vector<RawTransaction> parse_transactions(std::istream& in, ParseDiagnostics* diag = nullptr);

// token_transfers.csv. Events whose recipient is in `contracts` are dropped;
// unlisted recipients are treated as EOAs.
void parse_token_transfers(std::istream& in, const AddressSet& contracts,
                           const std::function<void(const TokenTransferEvent&)>& sink,
                           ParseDiagnostics* diag = nullptr);

std::vector<TokenTransferEvent> parse_token_transfers(std::istream& in, const AddressSet& contracts,
                                                      ParseDiagnostics* diag = nullptr);

// labels file: CSV address,label.
std::unordered_map<Address, AccountLabel, AddressHash> parse_labels(std::istream& in,
                                                                    ParseDiagnostics* diag = nullptr);

// address-kind file: CSV address,kind. Only listed addresses are returned;
// everything else defaults to EOA.
AddressSet parse_contract_set(std::istream& in, ParseDiagnostics* diag = nullptr);

using TxCountMap = std::unordered_map<Address, std::uint64_t, AddressHash>;

// Keeps accounts with min_tx <= involved-transaction count <= max_tx whose
// label is not excluded.
AddressSet filter_accounts(const std::vector<AccountMeta>& accounts, const TxCountMap& tx_counts,
                           std::uint64_t min_tx, std::uint64_t max_tx,
                           const std::unordered_set<AccountLabel>& excluded_labels);

// Validated in-memory corpus persisted as the ETHSEQ1 intermediate file.
struct Corpus {
    std::vector<RawTransaction> transactions;
    std::vector<TokenTransferEvent> token_events;
    std::vector<AccountMeta> accounts;

    TxCountMap involved_tx_counts() const;
    const AccountMeta* find_account(const Address& a) const;
};

inline constexpr char kCorpusMagic[] = "ETHSEQ1\n";

void save_corpus(std::ostream& out, const Corpus& corpus);
Corpus load_corpus(std::istream& in);

void save_corpus_file(const std::string& path, const Corpus& corpus);
Corpus load_corpus_file(const std::string& path);

struct IngestOptions {
    std::uint64_t min_tx = 3;
    std::uint64_t max_tx = 10000;
};

struct IngestStats {
    std::size_t transactions = 0;
    std::size_t dropped_contract_creation = 0;
    std::size_t token_events = 0;
    std::size_t dropped_contract_recipient = 0;
    std::size_t accounts = 0;
};

// Full ingest over opened streams: parse, drop contract creations, filter
// token events to EOA recipients, merge labels/kinds into account metas.
Corpus build_corpus(std::istream& transactions_csv, std::istream* token_transfers_csv,
                    std::istream* labels_csv, std::istream* kinds_csv, IngestStats* stats = nullptr,
                    ParseDiagnostics* diag = nullptr);

}  // namespace ethseq::ingest
