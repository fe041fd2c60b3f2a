#pragma once

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <unordered_map>
#include <vector>

#include "cop/ledger/entry.hpp"

namespace cop {

// Per-law append-only record of every event and operation of the
// controllers serving that law's community.
//
// Appends are atomic; readers never observe a partial entry. The ledger
// enforces only that a controller's ctrl_seq is gapless; keeping one writer
// per controller is the interceptor's job.
class Ledger {
 public:
  virtual ~Ledger() = default;

  virtual const LawId& law() const = 0;

  // Assigns and returns the entry's global_seq (0-based, strictly
  // increasing). Durable before return. Throws SequenceGap, LawMismatch,
  // LedgerUnavailable.
  virtual std::uint64_t append(LedgerEntry e) = 0;

  // Entries with global_seq in [from, from + max). Never blocks.
  virtual std::vector<LedgerEntry> read(std::uint64_t from, std::size_t max) const = 0;

  // Long-poll: waits until an entry with global_seq >= from exists. Returns
  // false on timeout.
  virtual bool wait_for(std::uint64_t from, std::chrono::milliseconds timeout) const = 0;

  // Number of entries, i.e. the next global_seq.
  virtual std::uint64_t size() const = 0;

  // One controller's entries with ctrl_seq >= from_ctrl_seq, in ctrl_seq order.
  virtual std::vector<LedgerEntry> controller_view(ControllerId c, std::uint64_t from_ctrl_seq = 1) const = 0;

  // 0 when the controller has no entries.
  virtual std::uint64_t last_ctrl_seq(ControllerId c) const = 0;
};

// Ordered cursor over a ledger, starting at a global_seq.
class LedgerStream {
 public:
  LedgerStream(const Ledger& ledger, std::uint64_t from) : ledger_(&ledger), next_(from) {}

  // Next entry, waiting up to `timeout` at the head.
  std::optional<LedgerEntry> next(std::chrono::milliseconds timeout = std::chrono::milliseconds{0});
  // Everything currently available (up to max) without waiting.
  std::vector<LedgerEntry> drain(std::size_t max = SIZE_MAX);

  std::uint64_t position() const { return next_; }

 private:
  const Ledger* ledger_;
  std::uint64_t next_;
  std::vector<LedgerEntry> buffer_;
  std::size_t buffer_pos_ = 0;
};

inline LedgerStream stream(const Ledger& ledger, std::uint64_t from) { return LedgerStream(ledger, from); }

struct LedgerOptions {
  bool hash_chain = true;
  // fsync after every append; otherwise records reach the kernel before
  // append returns, which survives process restarts.
  bool fsync = false;
};

// In-memory state shared by both backends: entries, the per-controller
// index and the running record hash.
class IndexedLedger : public Ledger {
 public:
  IndexedLedger(LawId law, LedgerOptions options);

  const LawId& law() const override { return law_; }
  std::uint64_t append(LedgerEntry e) override;
  std::vector<LedgerEntry> read(std::uint64_t from, std::size_t max) const override;
  bool wait_for(std::uint64_t from, std::chrono::milliseconds timeout) const override;
  std::uint64_t size() const override;
  std::vector<LedgerEntry> controller_view(ControllerId c, std::uint64_t from_ctrl_seq = 1) const override;
  std::uint64_t last_ctrl_seq(ControllerId c) const override;

  // Hash of the last record (zeros when empty).
  Digest head_hash() const;
  const LedgerOptions& options() const { return options_; }

 protected:
  // Called with the write lock held, after validation and before the entry
  // becomes visible. Throwing aborts the append.
  virtual void persist(ByteView record, const Digest& record_hash, std::uint64_t count);

  // Loads an already-validated entry (used when reopening a file).
  void load(LedgerEntry e, const Digest& record_hash);

 private:
  LawId law_;
  LedgerOptions options_;
  mutable std::shared_mutex mu_;
  mutable std::condition_variable_any appended_;
  std::vector<LedgerEntry> entries_;
  std::unordered_map<ControllerId, std::vector<std::size_t>> by_controller_;
  Digest head_{};
};

class MemoryLedger final : public IndexedLedger {
 public:
  explicit MemoryLedger(LawId law, LedgerOptions options = {}) : IndexedLedger(std::move(law), options) {}
};

// Append-only file of length-prefixed, hash-chained records, plus a small
// "<path>.head" sidecar holding the record count and the hash of the last
// record so that truncation and tampering with the tail are detectable.
class FileLedger final : public IndexedLedger {
 public:
  // Opens or creates. An existing file is verified and loaded; throws
  // CorruptLedger when verification fails.
  FileLedger(LawId law, std::filesystem::path path, LedgerOptions options = {});
  ~FileLedger() override;

  const std::filesystem::path& path() const { return path_; }

 protected:
  void persist(ByteView record, const Digest& record_hash, std::uint64_t count) override;

 private:
  std::filesystem::path path_;
  int fd_ = -1;
  int head_fd_ = -1;
};

std::filesystem::path head_path(const std::filesystem::path& ledger_path);

struct VerifiedLedger {
  std::vector<LedgerEntry> entries;
  bool chained = true;
  Digest head{};
};

// Parses and verifies a ledger file: framing, entry decoding, dense
// global_seq, hash chain and the head sidecar. Throws CorruptLedger.
VerifiedLedger verify_ledger_file(const std::filesystem::path& path);

// Verifies the hash chain over an in-memory sequence of records.
bool verify_chain(const std::vector<Bytes>& records);

// Ledger clients by law, shared by the CPnodes of a deployment.
class LedgerDirectory {
 public:
  void add(std::shared_ptr<Ledger> ledger);
  // Throws LedgerUnavailable when no ledger serves `law`.
  std::shared_ptr<Ledger> get(const LawId& law) const;
  std::vector<LawId> laws() const;

 private:
  mutable std::mutex mu_;
  std::unordered_map<LawId, std::shared_ptr<Ledger>> ledgers_;
};

}  // namespace cop
