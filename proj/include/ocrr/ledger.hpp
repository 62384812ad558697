#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ocrr/embedding.hpp"
#include "ocrr/errors.hpp"
#include "ocrr/sha256.hpp"

namespace ocrr {

struct LedgerEntry {
    std::uint64_t index = 0;
    EmbeddingVector embedding;
    ClassLabel label;
    Digest prev_hash{};
    Digest content_hash{};
};

/// u64 index | prev_hash | u32 label length | label | u32 dim | dim x f32, all little-endian.
std::vector<std::uint8_t> canonical_bytes(std::uint64_t index, const Digest& prev_hash, std::string_view label,
                                          std::span<const float> embedding);

Digest entry_hash(std::uint64_t index, const Digest& prev_hash, std::string_view label,
                  std::span<const float> embedding);

inline Digest entry_hash(const LedgerEntry& e) {
    return entry_hash(e.index, e.prev_hash, e.label, e.embedding.components());
}

struct VerifyResult {
    bool ok = true;
    std::uint64_t first_bad_index = 0;

    static VerifyResult valid() { return {}; }
    static VerifyResult bad_at(std::uint64_t i) { return {false, i}; }
    explicit operator bool() const noexcept { return ok; }
};

/// Walks a chain of entries as stored. Position i must carry index i, link to
/// entry i-1's content hash (or the genesis sentinel), and hash to its stored
/// content_hash; the last content hash must equal `head_hash`. A head mismatch
/// (e.g. a truncated tail) reports the first missing position.
VerifyResult verify_chain(std::span<const LedgerEntry> entries, const Digest& head_hash);

// Eviction records written by bounded stores when chain recording is on.
inline constexpr std::string_view kTombstonePrefix = "__evicted__:";
bool is_tombstone(const LedgerEntry& e);

/// Append-only, hash-chained record of (embedding, label). Entries are never
/// mutated or removed once appended.
class Ledger {
public:
    const LedgerEntry& append(EmbeddingVector embedding, ClassLabel label);
    /// Records that entry `evicted_index` left a bounded live set.
    const LedgerEntry& append_tombstone(std::uint64_t evicted_index);

    std::span<const LedgerEntry> entries() const noexcept { return entries_; }
    const LedgerEntry& operator[](std::size_t i) const { return entries_[i]; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    const Digest& head_hash() const noexcept { return head_; }

    /// Rebuilds a ledger from stored entries. Throws Error if the chain does not verify.
    static Ledger from_entries(std::vector<LedgerEntry> entries);

private:
    std::vector<LedgerEntry> entries_;
    Digest head_ = kGenesisHash;
};

VerifyResult verify_integrity(const Ledger& ledger);

// --- persistence ---
//   "OCRRLDG1" | records | optional footer
//   record: 0x01 | u32 byte length | canonical bytes | content_hash
//   footer: 0x02 | head_hash
// A file with no records and no footer is a valid empty ledger.

inline constexpr char kLedgerMagic[8] = {'O', 'C', 'R', 'R', 'L', 'D', 'G', '1'};

void save_ledger(const std::filesystem::path& path, const Ledger& ledger);

/// Parses a ledger file without trusting it. `parse_failed_at` is set when a
/// record could not be decoded; entries before it are returned.
struct LedgerFile {
    std::vector<LedgerEntry> entries;
    bool has_footer = false;
    Digest footer_head{};
    bool parse_failed = false;
    std::uint64_t parse_failed_at = 0;
};

LedgerFile read_ledger_file(const std::filesystem::path& path);

/// Replays a persisted ledger and checks every link and the footer.
VerifyResult verify_ledger_file(const std::filesystem::path& path);

Ledger load_ledger(const std::filesystem::path& path);

}  // namespace ocrr
