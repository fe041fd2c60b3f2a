#include <sstream>
#include <tuple>

#include "cop/core/errors.hpp"
#include "cop/inspector/inspector.hpp"
#include "cop/law/codec.hpp"

namespace cop {

std::string_view to_string(VerdictKind k) { return k == VerdictKind::Compliant ? "compliant" : "failed"; }

std::string_view to_string(FailureReason r) {
  switch (r) {
    case FailureReason::None: return "none";
    case FailureReason::Divergence: return "divergence";
    case FailureReason::Reordered: return "reordered";
    case FailureReason::Malformed: return "malformed";
    case FailureReason::DuplicateAdoption: return "duplicate-adoption";
    case FailureReason::BadAdoption: return "bad-adoption";
    case FailureReason::UnmatchedObligation: return "unmatched-obligation";
    case FailureReason::EventAfterQuit: return "event-after-quit";
  }
  return "?";
}

namespace {

std::string describe_ops(const std::vector<Operation>& ops) {
  std::string out = "[";
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (i) out += ", ";
    out += describe(ops[i]);
  }
  return out + "]";
}

void write_ops(ByteWriter& w, const std::vector<Operation>& ops) {
  w.u32(static_cast<std::uint32_t>(ops.size()));
  for (const auto& op : ops) codec::write_operation(w, op);
}

std::vector<Operation> read_ops(ByteReader& r) {
  const auto n = r.u32();
  std::vector<Operation> ops;
  for (std::uint32_t i = 0; i < n; ++i) ops.push_back(codec::read_operation(r));
  return ops;
}

}  // namespace

std::string describe(const Verdict& v) {
  std::ostringstream os;
  os << v.law << " " << to_string(v.controller) << " ctrl_seq=" << v.at_ctrl_seq << " event=" << v.event_seq << " "
     << to_string(v.kind);
  if (v.failed()) {
    os << " (" << to_string(v.reason) << ")";
    if (!v.inactions.empty()) os << " inactions=" << describe_ops(v.inactions);
    if (!v.actions.empty()) os << " actions=" << describe_ops(v.actions);
  }
  return os.str();
}

std::string describe(const Notification& n) {
  return "notify " + n.law + " " + to_string(n.controller) + " ctrl_seq=" + std::to_string(n.at_ctrl_seq) +
         " illegal " + describe(n.operation);
}

bool verdict_less(const Verdict& a, const Verdict& b) {
  auto key = [](const Verdict& v) {
    return std::tie(v.law, v.controller, v.at_ctrl_seq, v.decided_at, v.kind, v.reason);
  };
  if (key(a) != key(b)) return key(a) < key(b);
  return codec::encode(a) < codec::encode(b);
}

namespace codec {

Bytes encode(const Verdict& v) {
  ByteWriter w;
  w.u8('V');
  w.u8(static_cast<std::uint8_t>(v.kind));
  w.u8(static_cast<std::uint8_t>(v.reason));
  w.str(v.law);
  w.u64(v.controller.value);
  w.u32(v.node.value);
  w.u64(v.at_ctrl_seq);
  w.u64(v.event_seq);
  w.u64(v.decided_at);
  write_ops(w, v.inactions);
  write_ops(w, v.actions);
  return std::move(w).take();
}

Verdict decode_verdict(ByteView b) {
  ByteReader r(b);
  if (r.u8() != 'V') throw Error(ErrorCode::DecodeError, "not a verdict");
  Verdict v;
  const auto kind = r.u8();
  const auto reason = r.u8();
  if (kind > 1 || reason > static_cast<std::uint8_t>(FailureReason::EventAfterQuit)) {
    throw Error(ErrorCode::DecodeError, "bad verdict kind or reason");
  }
  v.kind = static_cast<VerdictKind>(kind);
  v.reason = static_cast<FailureReason>(reason);
  v.law = r.str();
  v.controller.value = r.u64();
  v.node.value = r.u32();
  v.at_ctrl_seq = r.u64();
  v.event_seq = r.u64();
  v.decided_at = r.u64();
  v.inactions = read_ops(r);
  v.actions = read_ops(r);
  r.expect_end();
  return v;
}

Bytes encode(const Notification& n) {
  ByteWriter w;
  w.u8('N');
  w.str(n.law);
  w.u64(n.controller.value);
  w.u32(n.node.value);
  w.u64(n.at_ctrl_seq);
  write_operation(w, n.operation);
  return std::move(w).take();
}

Notification decode_notification(ByteView b) {
  ByteReader r(b);
  if (r.u8() != 'N') throw Error(ErrorCode::DecodeError, "not a notification");
  Notification n;
  n.law = r.str();
  n.controller.value = r.u64();
  n.node.value = r.u32();
  n.at_ctrl_seq = r.u64();
  n.operation = read_operation(r);
  r.expect_end();
  return n;
}

}  // namespace codec

ReportStream::ReportStream(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  bin_.open(dir / "verdicts.bin", std::ios::binary | std::ios::app);
  txt_.open(dir / "verdicts.txt", std::ios::app);
  if (!bin_ || !txt_) throw Error(ErrorCode::IoError, "cannot open report stream in " + dir.string());
}

namespace {
void write_frame(std::ofstream& out, const Bytes& body) {
  ByteWriter w;
  w.bytes(body);
  const auto& data = w.data();
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}
}  // namespace

void ReportStream::write(const Verdict& v) {
  std::lock_guard lock(mu_);
  write_frame(bin_, codec::encode(v));
  txt_ << describe(v) << "\n";
}

void ReportStream::write(const Notification& n) {
  std::lock_guard lock(mu_);
  write_frame(bin_, codec::encode(n));
  txt_ << describe(n) << "\n";
}

void ReportStream::flush() {
  std::lock_guard lock(mu_);
  bin_.flush();
  txt_.flush();
}

ReportContents read_report_stream(const std::filesystem::path& verdicts_bin) {
  std::ifstream in(verdicts_bin, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + verdicts_bin.string());
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ReportContents out;
  ByteReader r(data);
  while (!r.at_end()) {
    auto body = r.bytes();
    if (body.empty()) throw Error(ErrorCode::DecodeError, "empty report record");
    if (body[0] == 'V') {
      out.verdicts.push_back(codec::decode_verdict(body));
    } else if (body[0] == 'N') {
      out.notifications.push_back(codec::decode_notification(body));
    } else {
      throw Error(ErrorCode::DecodeError, "unknown report record tag");
    }
  }
  return out;
}

}  // namespace cop
