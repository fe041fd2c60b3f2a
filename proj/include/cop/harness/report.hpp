#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cop/faults/faults.hpp"
#include "cop/inspector/inspector.hpp"

namespace cop {

struct FaultReport {
  std::size_t agent = 0;
  ControllerId controller;
  FaultMode mode = FaultMode::ExtraOp;
  std::uint64_t fired = 0;
  std::optional<std::uint64_t> first_divergent_ctrl_seq;
  // First Failed verdict for the controller.
  std::optional<std::uint64_t> verdict_ctrl_seq;
  bool detected = false;
  // Detected at exactly the first divergent event.
  bool exact = false;
  std::optional<double> detection_latency_ms;
  // Entries between the divergent event entry and the entry that decided
  // the verdict, and the faulty controller's events in that span.
  std::optional<std::uint64_t> ledger_distance_entries;
  std::optional<std::uint64_t> ledger_distance_groups;
  bool recovered = false;
  std::optional<double> recovery_latency_ms;
};

struct LawReport {
  LawId law;
  std::uint64_t entries = 0;
  std::uint64_t verdicts = 0;
  std::uint64_t failed = 0;
};

struct Report {
  std::string scenario;
  std::uint64_t seed = 0;
  std::string transport = "inproc";
  std::size_t shards = 1;
  std::vector<LawReport> laws;
  std::vector<FaultReport> faults;
  std::uint64_t false_positives = 0;
  std::uint64_t false_negatives = 0;
  // Money-transfer communities only.
  std::optional<bool> conservation_ok;
  std::int64_t conservation_expected = 0;
  std::int64_t conservation_actual = 0;
  std::uint64_t messages = 0;
  std::uint64_t events = 0;
  std::uint64_t operations = 0;
  double wall_seconds = 0;
  double events_per_second = 0;
  std::uint64_t monitor_births = 0;
  std::uint64_t monitor_copies = 0;
  std::uint64_t notifications = 0;
  std::uint64_t repairs = 0;
  std::uint64_t reconstructions = 0;
  std::vector<Verdict> failed_verdicts;

  std::string to_json() const;
  // Throws ConfigError on malformed input.
  static Report from_json(const std::string& text);
  // Plain-text tables.
  std::string render() const;
};

}  // namespace cop
