#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ethseq/common.hpp"
#include "ethseq/ingest.hpp"
#include "ethseq/rng.hpp"

namespace ethseq::seqgen {

// Address vocabulary ids. Ids 0..2 are specials; real addresses start at 3
// and are assigned by descending counterparty frequency, ties by ascending
// address bytes.
constexpr std::int32_t kPadId = 0;
constexpr std::int32_t kMaskId = 1;
constexpr std::int32_t kUnkId = 2;
constexpr std::int32_t kFirstAddressId = 3;

enum class Direction : std::uint8_t { In = 0, Out = 1, Self = 2 };
enum class PartyKind : std::uint8_t { EOA = 0, Contract = 1, Null = 2 };

// Feature bin vocabularies. The last slot of each table is the Null bin used
// by the dummy self-transaction head.
constexpr std::int16_t kAmountBins = 22;  // 0..20 real, 21 = Null
constexpr std::int16_t kCountBins = 12;   // 0..10 real, 11 = Null
constexpr std::int16_t kTimeBins = 17;    // 0..15 real, 16 = Null
constexpr std::int16_t kAmountNullBin = kAmountBins - 1;
constexpr std::int16_t kCountNullBin = kCountBins - 1;
constexpr std::int16_t kTimeNullBin = kTimeBins - 1;

struct TxRecord {
    std::int32_t counterparty = kUnkId;
    Direction direction = Direction::In;
    PartyKind counterparty_kind = PartyKind::EOA;
    std::int16_t amount_bin = kAmountNullBin;
    std::int16_t count_bin = kCountNullBin;
    std::int16_t time_bin = kTimeNullBin;
    std::int32_t position = 0;
    std::int64_t raw_timestamp = 0;
    u128 raw_amount_wei = 0;
    std::uint32_t agg_count = 1;
    std::vector<std::int32_t> token_recipients;

    // Build-time only; not persisted. Failed records are removed by
    // deduplicate; source hashes drive ERC-20 event attachment.
    bool failed = false;
    std::vector<Hash32> source_hashes;

    bool is_self() const { return direction == Direction::Self; }
};

struct TxSequence {
    std::int32_t owner = kUnkId;
    std::vector<TxRecord> records;

    std::size_t size() const { return records.size(); }
};

struct MaskedSequence {
    TxSequence seq;  // counterparty replaced by kMaskId at masked positions
    std::vector<std::int32_t> masked_positions;
    std::vector<std::int32_t> positives;  // pre-mask counterparty per masked position
};

// One transaction as seen from a given owner account.
struct InvolvedTx {
    Hash32 tx_hash{};
    std::int32_t counterparty = kUnkId;
    Direction direction = Direction::In;
    PartyKind counterparty_kind = PartyKind::EOA;
    u128 amount_wei = 0;
    std::int64_t timestamp = 0;
    bool failed = false;
};

// Dummy self-transaction head + records sorted by descending timestamp,
// ties by ascending tx hash.
TxSequence build_sequence(std::int32_t owner, std::vector<InvolvedTx> involved);

// RR#1: drop failed records, then merge maximal runs of consecutive records
// with identical (counterparty, direction) spanning at most the window.
// Greedy from the oldest record; a run closes when the next candidate is
// more than the window after the run's first timestamp.
TxSequence deduplicate(const TxSequence& seq, std::int64_t window_hours = 72);

// Fraction of non-head records whose counterparty equals the preceding
// record's counterparty, over all sequences.
double repetitiveness_ratio(std::span<const TxSequence> corpus);

std::int16_t amount_bin_of(u128 wei);
std::int16_t count_bin_of(std::uint32_t agg_count);
std::int16_t time_bin_of(std::int64_t days_before_newest);

// Fills amount/count/time bins for every non-head record. The recency anchor
// is the newest raw_timestamp in the sequence.
void apply_bins(TxSequence& seq);

using EventsByHash = std::unordered_map<Hash32, std::vector<std::int32_t>, Hash32Hash>;

// MH#2: Out records whose source transactions emitted ERC-20 transfers gain
// the recipient EOA vocab ids. Returns the number of records that gained
// recipients.
std::size_t attach_token_recipients(TxSequence& seq, const EventsByHash& events_by_hash);

// MH#1: partition non-head records by direction; each side gets its own head
// and re-indexed positions.
std::pair<TxSequence, TxSequence> separate_in_out(const TxSequence& seq);

// Chunks non-head records into pieces of at most max_len-1, each with a
// fresh head and re-indexed positions.
std::vector<TxSequence> split_long(const TxSequence& seq, std::size_t max_len = 100);

// RR#2 masking: max(1, round(ratio*(len-1))) distinct non-head positions,
// uniform without replacement. Throws NumericError on a head-only sequence.
MaskedSequence mask_sequence(const TxSequence& seq, double ratio, Rng& rng);

// --- vocabulary ------------------------------------------------------------

struct AddressVocab {
    std::vector<Address> id_to_address;          // index = vocab id; specials hold zero bytes
    std::vector<std::uint64_t> counterparty_freq;  // aligned with ids
    std::unordered_map<Address, std::int32_t, AddressHash> address_to_id;

    std::int32_t size() const { return static_cast<std::int32_t>(id_to_address.size()); }
    std::int32_t id_of(const Address& a) const;  // kUnkId when unseen
    std::string token_of(std::int32_t id) const;
    std::uint64_t hash() const;
};

void save_vocab_csv(std::ostream& out, const AddressVocab& vocab);
AddressVocab load_vocab_csv(std::istream& in);

// --- corpus-level build ----------------------------------------------------

enum class View : std::uint8_t { Full = 0, In = 1, Out = 2 };

struct StoredSequence {
    std::int32_t owner = kUnkId;
    View view = View::Full;
    std::uint16_t piece = 0;
    TxSequence seq;
};

struct AccountActivity {
    Address address{};
    std::uint64_t involved_tx = 0;
    std::int64_t first_timestamp = 0;
    std::int64_t last_timestamp = 0;
};

struct BuildOptions {
    std::uint64_t min_tx = 3;
    std::uint64_t max_tx = 10000;
    bool dedup = true;
    std::int64_t dedup_window_hours = 72;
    std::size_t max_seq_len = 100;
    bool emit_in_out_views = true;
};

struct BuildResult {
    std::vector<StoredSequence> sequences;
    AddressVocab vocab;
    std::vector<AccountActivity> activity;  // kept accounts, ordered by address
    double raw_repetitiveness = 0.0;
    double final_repetitiveness = 0.0;
    std::size_t accounts_kept = 0;
    std::size_t unmatched_token_events = 0;
};

BuildResult build_sequences(const ingest::Corpus& corpus, const BuildOptions& options);

inline constexpr char kSequenceMagic[] = "ETHSEQ-SQ1";

struct SequenceFile {
    std::uint32_t max_seq_len = 100;
    bool dedup_applied = true;
    std::vector<StoredSequence> sequences;
};

void save_sequences(std::ostream& out, const SequenceFile& file);
SequenceFile load_sequences(std::istream& in);
void save_sequences_file(const std::string& path, const SequenceFile& file);
SequenceFile load_sequences_file(const std::string& path);

void save_activity_csv(std::ostream& out, std::span<const AccountActivity> activity);
std::vector<AccountActivity> load_activity_csv(std::istream& in);

}  // namespace ethseq::seqgen
