#include "cop/harness/report.hpp"

#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "cop/core/errors.hpp"

namespace cop {

using nlohmann::json;

namespace {

template <typename T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> get_opt(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

std::string fmt(double v, int precision = 1) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

template <typename T>
std::string fmt_opt(const std::optional<T>& v) {
  if (!v) return "-";
  if constexpr (std::is_floating_point_v<T>) {
    return fmt(*v);
  } else {
    return std::to_string(*v);
  }
}

}  // namespace

std::string Report::to_json() const {
  json j;
  j["scenario"] = scenario;
  j["seed"] = seed;
  j["transport"] = transport;
  j["shards"] = shards;
  j["laws"] = json::array();
  for (const auto& l : laws) {
    j["laws"].push_back({{"law", l.law}, {"entries", l.entries}, {"verdicts", l.verdicts}, {"failed", l.failed}});
  }
  j["faults"] = json::array();
  for (const auto& f : faults) {
    j["faults"].push_back({{"agent", f.agent},
                           {"controller", f.controller.value},
                           {"mode", std::string(to_string(f.mode))},
                           {"fired", f.fired},
                           {"first_divergent_ctrl_seq", opt(f.first_divergent_ctrl_seq)},
                           {"verdict_ctrl_seq", opt(f.verdict_ctrl_seq)},
                           {"detected", f.detected},
                           {"exact", f.exact},
                           {"detection_latency_ms", opt(f.detection_latency_ms)},
                           {"ledger_distance_entries", opt(f.ledger_distance_entries)},
                           {"ledger_distance_groups", opt(f.ledger_distance_groups)},
                           {"recovered", f.recovered},
                           {"recovery_latency_ms", opt(f.recovery_latency_ms)}});
  }
  j["false_positives"] = false_positives;
  j["false_negatives"] = false_negatives;
  j["conservation_ok"] = opt(conservation_ok);
  j["conservation_expected"] = conservation_expected;
  j["conservation_actual"] = conservation_actual;
  j["messages"] = messages;
  j["events"] = events;
  j["operations"] = operations;
  j["wall_seconds"] = wall_seconds;
  j["events_per_second"] = events_per_second;
  j["monitor_births"] = monitor_births;
  j["monitor_copies"] = monitor_copies;
  j["notifications"] = notifications;
  j["repairs"] = repairs;
  j["reconstructions"] = reconstructions;
  j["failed_verdicts"] = json::array();
  for (const auto& v : failed_verdicts) {
    j["failed_verdicts"].push_back({{"law", v.law},
                                    {"controller", v.controller.value},
                                    {"at_ctrl_seq", v.at_ctrl_seq},
                                    {"event_seq", v.event_seq},
                                    {"reason", std::string(to_string(v.reason))},
                                    {"text", describe(v)},
                                    {"encoded", to_hex(codec::encode(v))}});
  }
  return j.dump(2);
}

Report Report::from_json(const std::string& text) {
  Report r;
  try {
    const auto j = json::parse(text);
    r.scenario = j.at("scenario").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.transport = j.at("transport").get<std::string>();
    r.shards = j.at("shards").get<std::size_t>();
    for (const auto& l : j.at("laws")) {
      r.laws.push_back(LawReport{l.at("law").get<std::string>(), l.at("entries").get<std::uint64_t>(),
                                 l.at("verdicts").get<std::uint64_t>(), l.at("failed").get<std::uint64_t>()});
    }
    for (const auto& f : j.at("faults")) {
      FaultReport fr;
      fr.agent = f.at("agent").get<std::size_t>();
      fr.controller = ControllerId{f.at("controller").get<std::uint64_t>()};
      fr.mode = parse_fault_mode(f.at("mode").get<std::string>());
      fr.fired = f.at("fired").get<std::uint64_t>();
      fr.first_divergent_ctrl_seq = get_opt<std::uint64_t>(f, "first_divergent_ctrl_seq");
      fr.verdict_ctrl_seq = get_opt<std::uint64_t>(f, "verdict_ctrl_seq");
      fr.detected = f.at("detected").get<bool>();
      fr.exact = f.at("exact").get<bool>();
      fr.detection_latency_ms = get_opt<double>(f, "detection_latency_ms");
      fr.ledger_distance_entries = get_opt<std::uint64_t>(f, "ledger_distance_entries");
      fr.ledger_distance_groups = get_opt<std::uint64_t>(f, "ledger_distance_groups");
      fr.recovered = f.at("recovered").get<bool>();
      fr.recovery_latency_ms = get_opt<double>(f, "recovery_latency_ms");
      r.faults.push_back(fr);
    }
    r.false_positives = j.at("false_positives").get<std::uint64_t>();
    r.false_negatives = j.at("false_negatives").get<std::uint64_t>();
    r.conservation_ok = get_opt<bool>(j, "conservation_ok");
    r.conservation_expected = j.at("conservation_expected").get<std::int64_t>();
    r.conservation_actual = j.at("conservation_actual").get<std::int64_t>();
    r.messages = j.at("messages").get<std::uint64_t>();
    r.events = j.at("events").get<std::uint64_t>();
    r.operations = j.at("operations").get<std::uint64_t>();
    r.wall_seconds = j.at("wall_seconds").get<double>();
    r.events_per_second = j.at("events_per_second").get<double>();
    r.monitor_births = j.at("monitor_births").get<std::uint64_t>();
    r.monitor_copies = j.at("monitor_copies").get<std::uint64_t>();
    r.notifications = j.at("notifications").get<std::uint64_t>();
    r.repairs = j.at("repairs").get<std::uint64_t>();
    r.reconstructions = j.at("reconstructions").get<std::uint64_t>();
    for (const auto& v : j.at("failed_verdicts")) {
      r.failed_verdicts.push_back(codec::decode_verdict(from_hex(v.at("encoded").get<std::string>())));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("report: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, std::string("report: ") + e.what());
  }
  return r;
}

std::string Report::render() const {
  std::ostringstream os;
  os << "scenario " << scenario << " (seed " << seed << ", " << transport << ", " << shards << " shard"
     << (shards == 1 ? "" : "s") << ")\n\n";
  os << std::left << std::setw(12) << "law" << std::right << std::setw(10) << "entries" << std::setw(10) << "verdicts"
     << std::setw(8) << "failed" << "\n";
  for (const auto& l : laws) {
    os << std::left << std::setw(12) << l.law << std::right << std::setw(10) << l.entries << std::setw(10)
       << l.verdicts << std::setw(8) << l.failed << "\n";
  }
  if (!faults.empty()) {
    os << "\n"
       << std::left << std::setw(7) << "agent" << std::setw(15) << "mode" << std::right << std::setw(7) << "fired"
       << std::setw(10) << "diverged" << std::setw(9) << "verdict" << std::setw(8) << "exact" << std::setw(12)
       << "latency_ms" << std::setw(10) << "distance" << std::setw(12) << "recovery_ms" << "\n";
    for (const auto& f : faults) {
      os << std::left << std::setw(7) << f.agent << std::setw(15) << to_string(f.mode) << std::right << std::setw(7)
         << f.fired << std::setw(10) << fmt_opt(f.first_divergent_ctrl_seq) << std::setw(9)
         << fmt_opt(f.verdict_ctrl_seq) << std::setw(8) << (f.exact ? "yes" : "no") << std::setw(12)
         << fmt_opt(f.detection_latency_ms) << std::setw(10) << fmt_opt(f.ledger_distance_groups) << std::setw(12)
         << fmt_opt(f.recovery_latency_ms) << "\n";
    }
  }
  os << "\nfalse positives " << false_positives << ", false negatives " << false_negatives << "\n";
  if (conservation_ok) {
    os << "money conserved: " << (*conservation_ok ? "yes" : "no") << " (expected " << conservation_expected
       << ", actual " << conservation_actual << ")\n";
  }
  os << "messages " << messages << ", events " << events << ", operations " << operations << "\n";
  os << "repairs " << repairs << ", notifications " << notifications << ", reconstructions " << reconstructions
     << "\n";
  if (monitor_births || monitor_copies) {
    os << "monitor births " << monitor_births << ", copies " << monitor_copies << "\n";
  }
  os << "wall " << fmt(wall_seconds, 3) << " s, " << fmt(events_per_second, 0) << " events/s\n";
  if (!failed_verdicts.empty()) {
    os << "\nfailed verdicts:\n";
    for (const auto& v : failed_verdicts) os << "  " << describe(v) << "\n";
  }
  return os.str();
}

}  // namespace cop
