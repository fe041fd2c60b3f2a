#pragma once

#include <memory>
#include <mutex>
#include <vector>

#include "cop/ledger/ledger.hpp"

namespace cop {

namespace net {
class FrameServer;
class FramedStream;
}  // namespace net

// Ledger access over loopback TCP. One frame per request and per reply.
//
//   request = u8 verb || args
//     1 APPEND  entry            -> u64 global_seq
//     2 READ    u64 from, u32 max -> u32 n || (bytes entry)*
//     3 WAIT    u64 from, u32 ms  -> u8 available
//     4 SIZE                      -> u64
//     5 VIEW    u64 c, u64 from   -> u32 n || (bytes entry)*
//     6 LAST    u64 c             -> u64
//     7 LAW                       -> str
//   reply   = u8 0 || result, or u8 1 || u8 error code || str message
class LedgerServer {
 public:
  explicit LedgerServer(std::shared_ptr<Ledger> ledger, std::uint16_t port = 0);
  ~LedgerServer();
  std::uint16_t port() const;
  void stop();

 private:
  Bytes handle(ByteView request);

  std::shared_ptr<Ledger> ledger_;
  std::unique_ptr<net::FrameServer> server_;
};

// Client side. Connection failures surface as LedgerUnavailable; errors
// raised by the remote ledger are rethrown with their original code.
class RemoteLedger final : public Ledger {
 public:
  // Fetches the law id from the server. Throws LedgerUnavailable.
  explicit RemoteLedger(std::uint16_t port);
  ~RemoteLedger() override;

  const LawId& law() const override { return law_; }
  std::uint64_t append(LedgerEntry e) override;
  std::vector<LedgerEntry> read(std::uint64_t from, std::size_t max) const override;
  bool wait_for(std::uint64_t from, std::chrono::milliseconds timeout) const override;
  std::uint64_t size() const override;
  std::vector<LedgerEntry> controller_view(ControllerId c, std::uint64_t from_ctrl_seq = 1) const override;
  std::uint64_t last_ctrl_seq(ControllerId c) const override;

 private:
  Bytes call(const Bytes& request) const;

  std::uint16_t port_;
  LawId law_;
  mutable std::mutex mu_;
  mutable std::vector<std::unique_ptr<net::FramedStream>> idle_;
};

}  // namespace cop
