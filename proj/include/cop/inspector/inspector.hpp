#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "cop/core/clock.hpp"
#include "cop/cpnode/control.hpp"
#include "cop/law/law.hpp"
#include "cop/ledger/ledger.hpp"

namespace cop {

enum class InspectionStatus : std::uint8_t { Healthy = 0, FailedPendingRecovery = 1, Recovered = 2 };

std::string_view to_string(InspectionStatus s);

// Operations logged after an event and not yet closed by a RulingEnd marker.
struct OpenGroup {
  LedgerEntry event_entry;
  std::vector<Operation> observed;
  // Set when an operation entry could not be decoded.
  bool malformed = false;
  // Ops of this group are consumed but not judged (a verdict was already
  // issued for its event).
  bool skip = false;
  // Inspector clock reading when the event entry was read.
  Timestamp opened_at = 0;

  bool operator==(const OpenGroup&) const = default;
};

// What the inspector knows about one controller of its law.
struct InspectionRecord {
  ControllerId controller;
  CPNodeId node;
  LawId law;
  // The controller's correct state for its next event.
  ControllerState csv;
  // Last ledger entry of this controller accounted for.
  std::uint64_t last_ctrl_seq = 0;
  // Events inspected, i.e. the seq of the last one.
  std::uint64_t events = 0;
  InspectionStatus status = InspectionStatus::Healthy;
  bool quit = false;
  // Obligations the law imposed that have not come due yet.
  PendingObligations obligations;
  std::optional<OpenGroup> open;

  struct Recovery {
    std::uint64_t request_id = 0;
    // Operations to carry out once the controller has been reconstructed.
    std::vector<std::pair<std::uint64_t, Operation>> deferred;
    std::uint64_t attempts = 0;

    bool operator==(const Recovery&) const = default;
  };
  std::optional<Recovery> recovery;

  bool operator==(const InspectionRecord&) const = default;
};

enum class VerdictKind : std::uint8_t { Compliant = 0, Failed = 1 };

enum class FailureReason : std::uint8_t {
  None = 0,
  // Observed operations differ from the ruling.
  Divergence = 1,
  // Same operations as the ruling, in another order.
  Reordered = 2,
  // Entries that do not form an event/ruling group.
  Malformed = 3,
  DuplicateAdoption = 4,
  // Adopted event that is not the controller's first entry.
  BadAdoption = 5,
  // ObligationDue with no pending imposition (or before its due time).
  UnmatchedObligation = 6,
  // An event consumed after the law quit the controller.
  EventAfterQuit = 7,
};

std::string_view to_string(VerdictKind k);
std::string_view to_string(FailureReason r);

struct Verdict {
  VerdictKind kind = VerdictKind::Compliant;
  FailureReason reason = FailureReason::None;
  LawId law;
  ControllerId controller;
  CPNodeId node;
  // ctrl_seq of the offending event entry (of the stray entry when there is
  // no event).
  std::uint64_t at_ctrl_seq = 0;
  std::uint64_t event_seq = 0;
  // global_seq of the entry that let the inspector decide.
  std::uint64_t decided_at = 0;
  // Expected, not observed.
  std::vector<Operation> inactions;
  // Observed, not expected.
  std::vector<Operation> actions;

  bool failed() const { return kind == VerdictKind::Failed; }
  bool operator==(const Verdict&) const = default;
};

// Illegal action report for the community's manager.
struct Notification {
  LawId law;
  ControllerId controller;
  CPNodeId node;
  Operation operation;
  std::uint64_t at_ctrl_seq = 0;

  bool operator==(const Notification&) const = default;
};

std::string describe(const Verdict& v);
std::string describe(const Notification& n);

// Canonical order for comparing verdict sets.
bool verdict_less(const Verdict& a, const Verdict& b);

namespace codec {
Bytes encode(const Verdict& v);
Verdict decode_verdict(ByteView b);
Bytes encode(const Notification& n);
Notification decode_notification(ByteView b);
}  // namespace codec

// Partition of the controller-id space into shards.
class ShardPlan {
 public:
  using Predicate = std::function<bool(ControllerId)>;

  // Hash partition into k shards.
  static ShardPlan hashed(std::size_t k);
  // Caller-supplied predicates; they must form a partition.
  static ShardPlan custom(std::vector<Predicate> predicates);

  std::size_t size() const { return predicates_.size(); }
  bool owns(std::size_t shard, ControllerId c) const { return predicates_.at(shard)(c); }
  // Throws ConfigError when `c` matches no shard or more than one.
  std::size_t shard_of(ControllerId c) const;

 private:
  std::vector<Predicate> predicates_;
};

struct InspectorConfig {
  // Judge an open group after this long without its RulingEnd marker.
  // Zero disables the timeout.
  std::chrono::milliseconds quiescence_timeout{2000};
  // Slack allowed between an obligation's due time and the ObligationDue event.
  Timestamp obligation_tolerance = millis(50);
  // Retry policy for control requests.
  int control_attempts = 5;
  std::chrono::milliseconds control_backoff{20};
};

using VerdictSink = std::function<void(const Verdict&)>;
using NotificationSink = std::function<void(const Notification&)>;

// Drives recovery of failed controllers through the CPnode control protocol.
// Request ids are derived from the failing ctrl_seq, so reissuing the
// commands for one verdict is a no-op at the CPnode.
class Recoverer {
 public:
  Recoverer(ControlClient& client, NotificationSink notify, InspectorConfig config = {});

  // Repairs illegal inactions, reports illegal actions, and requests
  // reconstruction with the record's csv. Returns true once the controller
  // has been reconstructed; false leaves the record pending (the CPnode had
  // processed events past the csv).
  bool recover(InspectionRecord& rec, const Verdict& v);
  // Reissues a pending reconstruction. Call when the record has caught up.
  bool resume(InspectionRecord& rec);

  // Processed-event count reported by the last Stale reply, per controller.
  std::optional<std::uint64_t> stale_target(ControllerId c) const;

 private:
  ControlReply send(CPNodeId node, const ControlRequest& req);

  ControlClient& client_;
  NotificationSink notify_;
  InspectorConfig config_;
  mutable std::mutex mu_;
  std::map<ControllerId, std::uint64_t> stale_;
};

// One shard of a law's inspector: a sequential replay of the controllers
// matching its predicate.
class ShardInspector {
 public:
  ShardInspector(std::shared_ptr<const LawDefinition> law, ShardPlan plan, std::size_t shard,
                 InspectorConfig config = {}, VerdictSink sink = {}, Recoverer* recoverer = nullptr,
                 const Clock* clock = nullptr);

  const LawId& law() const { return law_->law_id; }
  std::size_t shard() const { return shard_; }
  bool owns(ControllerId c) const { return plan_.owns(shard_, c); }

  // Feeds one ledger entry (entries must arrive in global_seq order).
  void consume(const LedgerEntry& e);
  // Consumes everything currently in the ledger past the shard's position.
  std::size_t poll(const Ledger& ledger);
  // Follows the ledger until `stop` is set.
  void run(const Ledger& ledger, const std::atomic<bool>& stop);
  // Judges groups that have been open longer than the quiescence timeout.
  std::size_t check_quiescence();
  // End of input: judges every open group.
  void finish();

  // Safe to read while the shard runs on its own thread.
  std::uint64_t position() const { return position_.load(); }
  void set_position(std::uint64_t p) { position_.store(p); }

  // Creates the record for a controller's Adopted entry.
  InspectionRecord& on_adopted(const LedgerEntry& entry);
  // Evaluates the law for the event against rec.csv, advances rec.csv and
  // compares the ruling with the observed operations.
  Verdict inspect_step(InspectionRecord& rec, const LedgerEntry& event_entry,
                       const std::vector<Operation>& observed);

  const std::map<ControllerId, InspectionRecord>& records() const { return records_; }
  const InspectionRecord* record(ControllerId c) const;
  // Hands records over at a repartition barrier.
  std::vector<InspectionRecord> export_records();
  void import_record(InspectionRecord rec);

  std::uint64_t verdict_count() const { return verdicts_; }
  std::uint64_t failed_count() const { return failed_; }
  std::uint64_t entries_inspected() const { return inspected_; }

 private:
  void open_group(InspectionRecord& rec, const LedgerEntry& e, bool skip);
  void close_group(InspectionRecord& rec, std::uint64_t decided_at);
  void on_event(const LedgerEntry& e);
  void on_operation(const LedgerEntry& e);
  void on_reconstructed(const LedgerEntry& e);
  void stray(const LedgerEntry& e, FailureReason reason, std::vector<Operation> actions);
  void emit(InspectionRecord* rec, Verdict v);
  void maybe_resume(InspectionRecord& rec);
  Timestamp now() const { return clock_ ? clock_->now() : 0; }

  std::shared_ptr<const LawDefinition> law_;
  ShardPlan plan_;
  std::size_t shard_;
  InspectorConfig config_;
  VerdictSink sink_;
  Recoverer* recoverer_;
  const Clock* clock_;
  std::map<ControllerId, InspectionRecord> records_;
  std::atomic<std::uint64_t> position_{0};
  std::uint64_t last_global_ = 0;
  std::uint64_t verdicts_ = 0;
  std::uint64_t failed_ = 0;
  std::uint64_t inspected_ = 0;
};

// A law's inspector: k shards over the same ledger.
class Inspector {
 public:
  Inspector(std::shared_ptr<const LawDefinition> law, std::size_t shards, InspectorConfig config = {},
            VerdictSink sink = {}, Recoverer* recoverer = nullptr, const Clock* clock = nullptr);
  ~Inspector();

  const LawId& law() const { return law_->law_id; }
  std::size_t shard_count() const { return shards_.size(); }
  ShardInspector& shard(std::size_t i) { return *shards_.at(i); }

  // Deterministic stepping: polls every shard in turn.
  std::size_t poll(const Ledger& ledger);
  std::size_t check_quiescence();
  void finish();

  // One thread per shard following the ledger.
  void start(std::shared_ptr<const Ledger> ledger);
  void stop();
  bool running() const { return !threads_.empty(); }

  // Offline replay of recorded entries, one thread per shard when
  // `parallel`. Ends with finish().
  void replay(std::span<const LedgerEntry> entries, bool parallel);

  // Moves to a hash partition of `shards` shards. Requires the inspector to
  // be stopped; shards are first brought to a common ledger position.
  void repartition(std::size_t shards, const Ledger& ledger);

  std::optional<InspectionRecord> record(ControllerId c) const;
  std::uint64_t verdict_count() const;
  std::uint64_t failed_count() const;

 private:
  void build(std::size_t shards);

  std::shared_ptr<const LawDefinition> law_;
  InspectorConfig config_;
  VerdictSink sink_;
  Recoverer* recoverer_;
  const Clock* clock_;
  std::vector<std::unique_ptr<ShardInspector>> shards_;
  std::atomic<bool> stop_{false};
  std::vector<std::thread> threads_;
  std::shared_ptr<const Ledger> followed_;
};

// Append-only verdict/notification output: length-prefixed canonical records
// in `<dir>/verdicts.bin` and one line per record in `<dir>/verdicts.txt`.
class ReportStream {
 public:
  explicit ReportStream(const std::filesystem::path& dir);

  void write(const Verdict& v);
  void write(const Notification& n);
  void flush();

 private:
  std::mutex mu_;
  std::ofstream bin_;
  std::ofstream txt_;
};

struct ReportContents {
  std::vector<Verdict> verdicts;
  std::vector<Notification> notifications;
};

// Throws DecodeError, IoError.
ReportContents read_report_stream(const std::filesystem::path& verdicts_bin);

}  // namespace cop
