#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include "support/support.hpp"

namespace cop {
namespace {

namespace fs = std::filesystem;

const ControllerId kA = ControllerId::make(CPNodeId{1}, 1);
const ControllerId kB = ControllerId::make(CPNodeId{1}, 2);

LedgerEntry entry(ControllerId c, std::uint64_t seq, EntryKind kind = EntryKind::Event, LawId law = "MT") {
  LedgerEntry e;
  e.law = std::move(law);
  e.controller = c;
  e.ctrl_seq = seq;
  e.kind = kind;
  e.body = kind == EntryKind::Event ? codec::encode(Event::adopted(c, 1, {}))
                                    : codec::encode(Operation::set_term("budget", std::int64_t(seq)));
  e.timestamp = static_cast<Timestamp>(seq * 10);
  e.node = c.node();
  return e;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::IoError;
}

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("cop-ledger-" + std::to_string(::getpid()) + "-" + std::to_string(counter_++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  static inline int counter_ = 0;
  fs::path path_;
};

TEST(Ledger, FirstEntryIsAdoptedAtSeqOne) {
  test::Bench b;
  auto mt = b.add_law(std::make_shared<laws::MoneyTransferLaw>());
  auto& n = b.add_node();
  auto x = b.adopt(n, "MT");
  auto view = mt->controller_view(x.address.controller);
  ASSERT_EQ(view.size(), 3u);
  EXPECT_EQ(view[0].ctrl_seq, 1u);
  EXPECT_EQ(view[0].kind, EntryKind::Event);
  EXPECT_EQ(codec::decode_event(view[0].body).kind, EventKind::Adopted);
  EXPECT_EQ(codec::decode_operation(view[1].body), Operation::set_term("budget", std::int64_t{1000}));
}

TEST(Ledger, AppendAssignsIncreasingGlobalSeq) {
  MemoryLedger l("MT");
  EXPECT_EQ(l.append(entry(kA, 1)), 0u);
  EXPECT_EQ(l.append(entry(kB, 1)), 1u);
  EXPECT_EQ(l.append(entry(kA, 2, EntryKind::Operation)), 2u);
  EXPECT_EQ(l.size(), 3u);
  EXPECT_EQ(l.last_ctrl_seq(kA), 2u);
  EXPECT_EQ(l.last_ctrl_seq(ControllerId::make(CPNodeId{5}, 5)), 0u);
}

TEST(Ledger, GapRejected) {
  MemoryLedger l("MT");
  l.append(entry(kA, 1));
  EXPECT_EQ(code_of([&] { l.append(entry(kA, 3)); }), ErrorCode::SequenceGap);
  EXPECT_EQ(code_of([&] { l.append(entry(kB, 2)); }), ErrorCode::SequenceGap);
  EXPECT_EQ(code_of([&] { l.append(entry(kA, 2, EntryKind::Operation, "MO")); }), ErrorCode::LawMismatch);
  EXPECT_EQ(l.size(), 1u);
}

TEST(Ledger, StreamWaitsOnEmptyLedger) {
  MemoryLedger l("MT");
  LedgerStream s(l, 0);
  EXPECT_FALSE(s.next(std::chrono::milliseconds(20)).has_value());
  std::thread writer([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    l.append(entry(kA, 1));
  });
  auto got = s.next(std::chrono::milliseconds(2000));
  writer.join();
  ASSERT_TRUE(got.has_value());
  EXPECT_EQ(got->global_seq, 0u);
}

TEST(Ledger, StreamFromKAndIndependentStreamsAgree) {
  MemoryLedger l("MT");
  for (std::uint64_t i = 1; i <= 3; ++i) l.append(entry(kA, i, i == 1 ? EntryKind::Event : EntryKind::Operation));
  auto s = stream(l, 1);
  auto rest = s.drain();
  ASSERT_EQ(rest.size(), 2u);
  EXPECT_EQ(rest[0].global_seq, 1u);
  EXPECT_EQ(stream(l, 0).drain(), stream(l, 0).drain());
}

TEST(Ledger, ControllerViewEqualsFilteredStream) {
  MemoryLedger l("MT");
  std::mt19937 rng(3);
  std::map<ControllerId, std::uint64_t> seq;
  std::vector<ControllerId> ids;
  for (std::uint32_t i = 1; i <= 5; ++i) ids.push_back(ControllerId::make(CPNodeId{i % 2 + 1}, i));
  for (int i = 0; i < 300; ++i) {
    auto c = ids[rng() % ids.size()];
    auto s = ++seq[c];
    l.append(entry(c, s, s == 1 || rng() % 3 == 0 ? EntryKind::Event : EntryKind::Operation));
  }
  auto all = stream(l, 0).drain();
  for (auto c : ids) {
    std::vector<LedgerEntry> filtered;
    for (const auto& e : all) {
      if (e.controller == c) filtered.push_back(e);
    }
    EXPECT_EQ(l.controller_view(c), filtered);
    std::vector<LedgerEntry> tail(filtered.begin() + 2, filtered.end());
    EXPECT_EQ(l.controller_view(c, 3), tail);
  }
  EXPECT_TRUE(l.controller_view(ControllerId::make(CPNodeId{9}, 9)).empty());
}

TEST(Ledger, ConcurrentAppendersKeepViewsOrdered) {
  MemoryLedger l("MT");
  std::vector<std::thread> ts;
  for (std::uint32_t t = 1; t <= 4; ++t) {
    ts.emplace_back([&l, t] {
      const auto c = ControllerId::make(CPNodeId{t}, 1);
      for (std::uint64_t s = 1; s <= 250; ++s) l.append(entry(c, s, s == 1 ? EntryKind::Event : EntryKind::Operation));
    });
  }
  for (auto& t : ts) t.join();
  EXPECT_EQ(l.size(), 1000u);
  auto all = l.read(0, SIZE_MAX);
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i].global_seq, i);
  for (std::uint32_t t = 1; t <= 4; ++t) {
    auto view = l.controller_view(ControllerId::make(CPNodeId{t}, 1));
    ASSERT_EQ(view.size(), 250u);
    for (std::size_t i = 0; i < view.size(); ++i) EXPECT_EQ(view[i].ctrl_seq, i + 1);
  }
}

// Same operations against both backends.
TEST(Ledger, MemoryAndFileBackendsAgree) {
  TempDir dir;
  MemoryLedger mem("MT");
  FileLedger file("MT", dir.path() / "mt.ledger");
  std::mt19937 rng(11);
  std::map<ControllerId, std::uint64_t> seq;
  for (int i = 0; i < 400; ++i) {
    auto c = ControllerId::make(CPNodeId{1}, 1 + rng() % 6);
    auto s = ++seq[c];
    if (rng() % 17 == 0) ++s;  // occasionally try a gap
    auto e = entry(c, s, s == 1 ? EntryKind::Event : EntryKind::Operation);
    std::optional<ErrorCode> em;
    std::optional<ErrorCode> ef;
    std::uint64_t gm = 0;
    std::uint64_t gf = 0;
    try {
      gm = mem.append(e);
    } catch (const Error& err) {
      em = err.code();
    }
    try {
      gf = file.append(e);
    } catch (const Error& err) {
      ef = err.code();
    }
    ASSERT_EQ(em, ef);
    ASSERT_EQ(gm, gf);
    if (em) --seq[c];
  }
  EXPECT_EQ(mem.read(0, SIZE_MAX), file.read(0, SIZE_MAX));
  EXPECT_EQ(mem.head_hash(), file.head_hash());
  for (std::uint32_t i = 1; i <= 6; ++i) {
    auto c = ControllerId::make(CPNodeId{1}, i);
    EXPECT_EQ(mem.controller_view(c, 2), file.controller_view(c, 2));
    EXPECT_EQ(mem.last_ctrl_seq(c), file.last_ctrl_seq(c));
  }
}

TEST(Ledger, FileSurvivesReopen) {
  TempDir dir;
  const auto path = dir.path() / "mt.ledger";
  std::vector<LedgerEntry> written;
  {
    FileLedger l("MT", path);
    for (std::uint64_t s = 1; s <= 50; ++s) l.append(entry(kA, s, s == 1 ? EntryKind::Event : EntryKind::Operation));
    written = l.read(0, SIZE_MAX);
  }
  FileLedger reopened("MT", path);
  EXPECT_EQ(reopened.read(0, SIZE_MAX), written);
  EXPECT_EQ(reopened.append(entry(kA, 51, EntryKind::Operation)), 50u);
  EXPECT_EQ(verify_ledger_file(path).entries.size(), 51u);
}

Bytes read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return Bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const fs::path& p, const Bytes& b) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

TEST(Ledger, FileFormatIsLengthEntryPrevHash) {
  TempDir dir;
  const auto path = dir.path() / "mt.ledger";
  auto e1 = entry(kA, 1);
  auto e2 = entry(kA, 2, EntryKind::Operation);
  {
    FileLedger l("MT", path);
    l.append(e1);
    l.append(e2);
  }
  e1.global_seq = 0;
  e2.global_seq = 1;
  const auto b1 = codec::encode(e1);
  const auto b2 = codec::encode(e2);
  Bytes want;
  auto put_len = [&](std::size_t n) {
    for (int s = 24; s >= 0; s -= 8) want.push_back(static_cast<std::uint8_t>(n >> s));
  };
  put_len(b1.size());
  want.insert(want.end(), b1.begin(), b1.end());
  want.insert(want.end(), 32, 0);
  const Bytes rec1(want.begin(), want.end());
  const auto h1 = sha256(rec1);
  put_len(b2.size());
  want.insert(want.end(), b2.begin(), b2.end());
  want.insert(want.end(), h1.begin(), h1.end());
  EXPECT_EQ(read_file(path), want);
}

TEST(Ledger, ByteFlipAnywhereIsDetected) {
  TempDir dir;
  const auto path = dir.path() / "mt.ledger";
  {
    FileLedger l("MT", path);
    for (std::uint64_t s = 1; s <= 6; ++s) l.append(entry(kA, s, s == 1 ? EntryKind::Event : EntryKind::Operation));
  }
  EXPECT_NO_THROW(verify_ledger_file(path));
  const auto original = read_file(path);
  for (std::size_t i = 0; i < original.size(); ++i) {
    auto flipped = original;
    flipped[i] ^= 0x20;
    write_file(path, flipped);
    EXPECT_EQ(code_of([&] { verify_ledger_file(path); }), ErrorCode::CorruptLedger) << "byte " << i;
    EXPECT_EQ(code_of([&] { FileLedger reopen("MT", path); }), ErrorCode::CorruptLedger) << "byte " << i;
  }
  write_file(path, original);
  EXPECT_NO_THROW(verify_ledger_file(path));
}

TEST(Ledger, TruncationAndHeadTamperingDetected) {
  TempDir dir;
  const auto path = dir.path() / "mt.ledger";
  {
    FileLedger l("MT", path);
    for (std::uint64_t s = 1; s <= 4; ++s) l.append(entry(kA, s, s == 1 ? EntryKind::Event : EntryKind::Operation));
  }
  const auto original = read_file(path);
  for (std::size_t cut : {original.size() - 1, original.size() - 40, std::size_t{10}}) {
    write_file(path, Bytes(original.begin(), original.begin() + static_cast<std::ptrdiff_t>(cut)));
    EXPECT_EQ(code_of([&] { verify_ledger_file(path); }), ErrorCode::CorruptLedger);
  }
  // Dropping whole trailing records is caught by the head sidecar.
  const auto last_len = [&] {
    auto entries = verify_ledger_file([&] {
      write_file(path, original);
      return path;
    }());
    return codec::encode(entries.entries.back()).size() + 4 + 32;
  }();
  write_file(path, Bytes(original.begin(), original.end() - static_cast<std::ptrdiff_t>(last_len)));
  EXPECT_EQ(code_of([&] { verify_ledger_file(path); }), ErrorCode::CorruptLedger);
  write_file(path, original);
  auto head = read_file(head_path(path));
  head.back() ^= 1;
  write_file(head_path(path), head);
  EXPECT_EQ(code_of([&] { verify_ledger_file(path); }), ErrorCode::CorruptLedger);
}

TEST(Ledger, VerifyChainOverRecords) {
  std::vector<Bytes> records;
  Digest prev{};
  for (std::uint64_t s = 1; s <= 5; ++s) {
    auto e = entry(kA, s, s == 1 ? EntryKind::Event : EntryKind::Operation);
    e.global_seq = s - 1;
    records.push_back(codec::encode_record(codec::encode(e), prev));
    prev = codec::record_hash(records.back());
  }
  EXPECT_TRUE(verify_chain(records));
  for (std::size_t n = 1; n <= records.size(); ++n) {
    EXPECT_TRUE(verify_chain(std::vector<Bytes>(records.begin(), records.begin() + static_cast<std::ptrdiff_t>(n))));
  }
  records[2][7] ^= 1;
  EXPECT_FALSE(verify_chain(records));
}

TEST(RemoteLedger, BehavesLikeTheServedLedger) {
  auto inner = std::make_shared<MemoryLedger>("MT");
  LedgerServer server(inner);
  RemoteLedger remote(server.port());
  EXPECT_EQ(remote.law(), "MT");
  EXPECT_EQ(remote.append(entry(kA, 1)), 0u);
  EXPECT_EQ(remote.append(entry(kA, 2, EntryKind::Operation)), 1u);
  EXPECT_EQ(remote.append(entry(kB, 1)), 2u);
  EXPECT_EQ(code_of([&] { remote.append(entry(kA, 9)); }), ErrorCode::SequenceGap);
  EXPECT_EQ(code_of([&] { remote.append(entry(kB, 2, EntryKind::Operation, "MO")); }), ErrorCode::LawMismatch);
  EXPECT_EQ(remote.size(), 3u);
  EXPECT_EQ(remote.read(0, 10), inner->read(0, 10));
  EXPECT_EQ(remote.controller_view(kA, 2), inner->controller_view(kA, 2));
  EXPECT_EQ(remote.last_ctrl_seq(kA), 2u);
  EXPECT_TRUE(remote.wait_for(2, std::chrono::milliseconds(10)));
  EXPECT_FALSE(remote.wait_for(3, std::chrono::milliseconds(10)));
  server.stop();
  EXPECT_EQ(code_of([&] { remote.size(); }), ErrorCode::LedgerUnavailable);
}

}  // namespace
}  // namespace cop
