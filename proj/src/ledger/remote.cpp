#include "cop/ledger/remote.hpp"

#include <algorithm>

#include "cop/core/errors.hpp"
#include "cop/net/server.hpp"

namespace cop {

namespace {

enum Verb : std::uint8_t { kAppend = 1, kRead = 2, kWait = 3, kSize = 4, kView = 5, kLast = 6, kLaw = 7 };

void write_entries(ByteWriter& w, const std::vector<LedgerEntry>& entries) {
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) w.bytes(codec::encode(e));
}

std::vector<LedgerEntry> read_entries(ByteReader& r) {
  const auto n = r.u32();
  std::vector<LedgerEntry> out;
  out.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) out.push_back(codec::decode_entry(r.bytes()));
  return out;
}

// Error messages carry a "Code: " prefix; strip it before rethrowing.
std::string detail(const std::string& what) {
  auto pos = what.find(": ");
  return pos == std::string::npos ? what : what.substr(pos + 2);
}

}  // namespace

LedgerServer::LedgerServer(std::shared_ptr<Ledger> ledger, std::uint16_t port)
    : ledger_(std::move(ledger)),
      server_(std::make_unique<net::FrameServer>(
          [this](ByteView req) -> std::optional<Bytes> { return handle(req); }, port)) {}

LedgerServer::~LedgerServer() { stop(); }

std::uint16_t LedgerServer::port() const { return server_->port(); }

void LedgerServer::stop() { server_->stop(); }

Bytes LedgerServer::handle(ByteView request) {
  ByteWriter w;
  try {
    ByteReader r(request);
    const auto verb = r.u8();
    ByteWriter out;
    switch (verb) {
      case kAppend: {
        auto e = codec::decode_entry(r.bytes());
        r.expect_end();
        out.u64(ledger_->append(std::move(e)));
        break;
      }
      case kRead: {
        const auto from = r.u64();
        const auto max = r.u32();
        r.expect_end();
        write_entries(out, ledger_->read(from, max));
        break;
      }
      case kWait: {
        const auto from = r.u64();
        const auto ms = r.u32();
        r.expect_end();
        out.u8(ledger_->wait_for(from, std::chrono::milliseconds(ms)) ? 1 : 0);
        break;
      }
      case kSize:
        r.expect_end();
        out.u64(ledger_->size());
        break;
      case kView: {
        ControllerId c{r.u64()};
        const auto from = r.u64();
        r.expect_end();
        write_entries(out, ledger_->controller_view(c, from));
        break;
      }
      case kLast: {
        ControllerId c{r.u64()};
        r.expect_end();
        out.u64(ledger_->last_ctrl_seq(c));
        break;
      }
      case kLaw:
        r.expect_end();
        out.str(ledger_->law());
        break;
      default:
        throw Error(ErrorCode::DecodeError, "unknown ledger verb " + std::to_string(verb));
    }
    w.u8(0);
    w.raw(out.data());
  } catch (const Error& e) {
    w = ByteWriter();
    w.u8(1);
    w.u8(static_cast<std::uint8_t>(e.code()));
    w.str(detail(e.what()));
  }
  return std::move(w).take();
}

RemoteLedger::RemoteLedger(std::uint16_t port) : port_(port) {
  ByteWriter w;
  w.u8(kLaw);
  auto reply = call(std::move(w).take());
  ByteReader r(reply);
  law_ = r.str();
  r.expect_end();
}

RemoteLedger::~RemoteLedger() = default;

Bytes RemoteLedger::call(const Bytes& request) const {
  std::unique_ptr<net::FramedStream> conn;
  {
    std::lock_guard lock(mu_);
    if (!idle_.empty()) {
      conn = std::move(idle_.back());
      idle_.pop_back();
    }
  }
  std::optional<Bytes> reply;
  try {
    if (!conn) conn = std::make_unique<net::FramedStream>(net::FramedStream::connect("127.0.0.1", port_));
    conn->send_frame(request);
    reply = conn->recv_frame();
  } catch (const Error& e) {
    if (e.code() != ErrorCode::TransportFailure) throw;
    throw Error(ErrorCode::LedgerUnavailable, detail(e.what()));
  }
  if (!reply) throw Error(ErrorCode::LedgerUnavailable, "ledger server closed the connection");
  {
    std::lock_guard lock(mu_);
    idle_.push_back(std::move(conn));
  }
  ByteReader r(*reply);
  if (r.u8() == 0) {
    return Bytes(reply->begin() + 1, reply->end());
  }
  const auto code = r.u8();
  auto message = r.str();
  if (code > static_cast<std::uint8_t>(ErrorCode::IoError)) throw Error(ErrorCode::DecodeError, message);
  throw Error(static_cast<ErrorCode>(code), message);
}

std::uint64_t RemoteLedger::append(LedgerEntry e) {
  ByteWriter w;
  w.u8(kAppend);
  w.bytes(codec::encode(e));
  auto reply = call(std::move(w).take());
  ByteReader r(reply);
  auto seq = r.u64();
  r.expect_end();
  return seq;
}

std::vector<LedgerEntry> RemoteLedger::read(std::uint64_t from, std::size_t max) const {
  ByteWriter w;
  w.u8(kRead);
  w.u64(from);
  w.u32(static_cast<std::uint32_t>(std::min<std::size_t>(max, 65536)));
  auto reply = call(std::move(w).take());
  ByteReader r(reply);
  auto out = read_entries(r);
  r.expect_end();
  return out;
}

bool RemoteLedger::wait_for(std::uint64_t from, std::chrono::milliseconds timeout) const {
  ByteWriter w;
  w.u8(kWait);
  w.u64(from);
  w.u32(static_cast<std::uint32_t>(std::clamp<std::int64_t>(timeout.count(), 0, 60'000)));
  auto reply = call(std::move(w).take());
  ByteReader r(reply);
  auto ok = r.u8();
  r.expect_end();
  return ok != 0;
}

std::uint64_t RemoteLedger::size() const {
  ByteWriter w;
  w.u8(kSize);
  auto reply = call(std::move(w).take());
  ByteReader r(reply);
  auto n = r.u64();
  r.expect_end();
  return n;
}

std::vector<LedgerEntry> RemoteLedger::controller_view(ControllerId c, std::uint64_t from_ctrl_seq) const {
  ByteWriter w;
  w.u8(kView);
  w.u64(c.value);
  w.u64(from_ctrl_seq);
  auto reply = call(std::move(w).take());
  ByteReader r(reply);
  auto out = read_entries(r);
  r.expect_end();
  return out;
}

std::uint64_t RemoteLedger::last_ctrl_seq(ControllerId c) const {
  ByteWriter w;
  w.u8(kLast);
  w.u64(c.value);
  auto reply = call(std::move(w).take());
  ByteReader r(reply);
  auto n = r.u64();
  r.expect_end();
  return n;
}

}  // namespace cop
