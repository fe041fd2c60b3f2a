#include "cop/ledger/ledger.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <iterator>

#include "cop/core/errors.hpp"

namespace cop {

namespace {

constexpr std::size_t kHeadSize = 1 + 8 + 32 + 1;

Bytes encode_head(std::uint64_t count, const Digest& last, bool chained) {
  ByteWriter w;
  w.u8('H');
  w.u64(count);
  w.raw(last);
  w.u8(chained ? 1 : 0);
  return std::move(w).take();
}

void write_fully(int fd, ByteView data, const std::string& what) {
  std::size_t off = 0;
  while (off < data.size()) {
    auto n = ::write(fd, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::LedgerUnavailable, what + ": " + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

Bytes read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::CorruptLedger, "cannot open " + p.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

std::optional<LedgerEntry> LedgerStream::next(std::chrono::milliseconds timeout) {
  if (buffer_pos_ == buffer_.size()) {
    buffer_.clear();
    buffer_pos_ = 0;
    if (!ledger_->wait_for(next_, timeout)) return std::nullopt;
    buffer_ = ledger_->read(next_, 1024);
    if (buffer_.empty()) return std::nullopt;
  }
  ++next_;
  return std::move(buffer_[buffer_pos_++]);
}

std::vector<LedgerEntry> LedgerStream::drain(std::size_t max) {
  std::vector<LedgerEntry> out;
  while (buffer_pos_ < buffer_.size() && out.size() < max) {
    out.push_back(std::move(buffer_[buffer_pos_++]));
    ++next_;
  }
  if (out.size() < max) {
    auto more = ledger_->read(next_, max - out.size());
    next_ += more.size();
    if (out.empty()) return more;
    out.insert(out.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
  }
  return out;
}

IndexedLedger::IndexedLedger(LawId law, LedgerOptions options) : law_(std::move(law)), options_(options) {}

std::uint64_t IndexedLedger::append(LedgerEntry e) {
  std::unique_lock lock(mu_);
  if (e.law != law_) {
    throw Error(ErrorCode::LawMismatch, "entry for law '" + e.law + "' appended to ledger of '" + law_ + "'");
  }
  auto& index = by_controller_[e.controller];
  const std::uint64_t expected = index.empty() ? 1 : entries_[index.back()].ctrl_seq + 1;
  if (e.ctrl_seq != expected) {
    if (index.empty()) by_controller_.erase(e.controller);
    throw Error(ErrorCode::SequenceGap, to_string(e.controller) + " ctrl_seq " + std::to_string(e.ctrl_seq) +
                                            ", expected " + std::to_string(expected));
  }
  e.global_seq = entries_.size();
  const Digest prev = options_.hash_chain ? head_ : Digest{};
  const Bytes record = codec::encode_record(codec::encode(e), prev);
  const Digest hash = codec::record_hash(record);
  try {
    persist(record, hash, entries_.size() + 1);
  } catch (...) {
    if (index.empty()) by_controller_.erase(e.controller);
    throw;
  }
  head_ = hash;
  index.push_back(entries_.size());
  entries_.push_back(std::move(e));
  const auto seq = entries_.back().global_seq;
  lock.unlock();
  appended_.notify_all();
  return seq;
}

void IndexedLedger::persist(ByteView, const Digest&, std::uint64_t) {}

void IndexedLedger::load(LedgerEntry e, const Digest& record_hash) {
  std::unique_lock lock(mu_);
  by_controller_[e.controller].push_back(entries_.size());
  entries_.push_back(std::move(e));
  head_ = record_hash;
}

std::vector<LedgerEntry> IndexedLedger::read(std::uint64_t from, std::size_t max) const {
  std::shared_lock lock(mu_);
  std::vector<LedgerEntry> out;
  if (from >= entries_.size()) return out;
  auto n = std::min<std::uint64_t>(max, entries_.size() - from);
  out.assign(entries_.begin() + static_cast<std::ptrdiff_t>(from),
             entries_.begin() + static_cast<std::ptrdiff_t>(from + n));
  return out;
}

bool IndexedLedger::wait_for(std::uint64_t from, std::chrono::milliseconds timeout) const {
  std::shared_lock lock(mu_);
  return appended_.wait_for(lock, timeout, [&] { return entries_.size() > from; });
}

std::uint64_t IndexedLedger::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

std::vector<LedgerEntry> IndexedLedger::controller_view(ControllerId c, std::uint64_t from_ctrl_seq) const {
  std::shared_lock lock(mu_);
  std::vector<LedgerEntry> out;
  auto it = by_controller_.find(c);
  if (it == by_controller_.end()) return out;
  // ctrl_seq is dense from 1, so it maps straight onto the index.
  const auto& idx = it->second;
  for (std::size_t i = from_ctrl_seq == 0 ? 0 : from_ctrl_seq - 1; i < idx.size(); ++i) {
    out.push_back(entries_[idx[i]]);
  }
  return out;
}

std::uint64_t IndexedLedger::last_ctrl_seq(ControllerId c) const {
  std::shared_lock lock(mu_);
  auto it = by_controller_.find(c);
  if (it == by_controller_.end() || it->second.empty()) return 0;
  return entries_[it->second.back()].ctrl_seq;
}

Digest IndexedLedger::head_hash() const {
  std::shared_lock lock(mu_);
  return head_;
}

std::filesystem::path head_path(const std::filesystem::path& ledger_path) {
  auto p = ledger_path;
  p += ".head";
  return p;
}

FileLedger::FileLedger(LawId law, std::filesystem::path path, LedgerOptions options)
    : IndexedLedger(std::move(law), options), path_(std::move(path)) {
  const bool exists = std::filesystem::exists(path_) && std::filesystem::file_size(path_) > 0;
  if (exists) {
    auto verified = verify_ledger_file(path_);
    if (verified.chained != options.hash_chain && !verified.entries.empty()) {
      throw Error(ErrorCode::ConfigError, path_.string() + ": hash-chain setting differs from the existing file");
    }
    for (auto& e : verified.entries) {
      if (e.law != this->law()) {
        throw Error(ErrorCode::CorruptLedger, path_.string() + " holds entries of law '" + e.law + "'");
      }
      load(std::move(e), verified.head);
    }
  }
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error(ErrorCode::IoError, "open " + path_.string() + ": " + std::strerror(errno));
  head_fd_ = ::open(head_path(path_).c_str(), O_WRONLY | O_CREAT | O_CLOEXEC, 0644);
  if (head_fd_ < 0) {
    ::close(fd_);
    throw Error(ErrorCode::IoError, "open head for " + path_.string() + ": " + std::strerror(errno));
  }
  if (!exists) {
    auto head = encode_head(0, Digest{}, options.hash_chain);
    if (::pwrite(head_fd_, head.data(), head.size(), 0) != static_cast<ssize_t>(head.size())) {
      throw Error(ErrorCode::IoError, "write head for " + path_.string());
    }
  }
}

FileLedger::~FileLedger() {
  if (fd_ >= 0) ::close(fd_);
  if (head_fd_ >= 0) ::close(head_fd_);
}

void FileLedger::persist(ByteView record, const Digest& record_hash, std::uint64_t count) {
  write_fully(fd_, record, "append to " + path_.string());
  auto head = encode_head(count, record_hash, options().hash_chain);
  if (::pwrite(head_fd_, head.data(), head.size(), 0) != static_cast<ssize_t>(head.size())) {
    throw Error(ErrorCode::LedgerUnavailable, "update head of " + path_.string());
  }
  if (options().fsync) {
    ::fdatasync(fd_);
    ::fdatasync(head_fd_);
  }
}

VerifiedLedger verify_ledger_file(const std::filesystem::path& path) {
  const Bytes raw = read_file(path);
  const auto hp = head_path(path);
  if (!std::filesystem::exists(hp)) throw Error(ErrorCode::CorruptLedger, "missing " + hp.string());
  const Bytes head = read_file(hp);
  if (head.size() != kHeadSize || head[0] != 'H') throw Error(ErrorCode::CorruptLedger, "malformed head file");

  ByteReader hr(head);
  hr.u8();
  const auto count = hr.u64();
  Digest head_hash{};
  auto hv = hr.raw(32);
  std::copy(hv.begin(), hv.end(), head_hash.begin());
  const auto chained_flag = hr.u8();
  if (chained_flag > 1) throw Error(ErrorCode::CorruptLedger, "malformed head file");

  VerifiedLedger out;
  out.chained = chained_flag == 1;
  Digest prev{};
  std::unordered_map<ControllerId, std::uint64_t> last_ctrl;
  std::size_t pos = 0;
  try {
    ByteReader r(raw);
    while (!r.at_end()) {
      const auto len = r.u32();
      auto entry_bytes = r.raw(len);
      auto stored_prev = r.raw(32);
      const Digest expected_prev = out.chained ? prev : Digest{};
      if (!std::equal(stored_prev.begin(), stored_prev.end(), expected_prev.begin())) {
        throw Error(ErrorCode::CorruptLedger, "hash chain broken at record " + std::to_string(out.entries.size()));
      }
      auto entry = codec::decode_entry(entry_bytes);
      if (entry.global_seq != out.entries.size()) {
        throw Error(ErrorCode::CorruptLedger, "global_seq " + std::to_string(entry.global_seq) + " at record " +
                                                  std::to_string(out.entries.size()));
      }
      auto& last = last_ctrl[entry.controller];
      if (entry.ctrl_seq != last + 1) {
        throw Error(ErrorCode::CorruptLedger, "ctrl_seq gap for " + to_string(entry.controller));
      }
      last = entry.ctrl_seq;
      prev = codec::record_hash(ByteView(raw).subspan(pos, 4 + len + 32));
      pos += 4 + len + 32;
      out.entries.push_back(std::move(entry));
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::CorruptLedger) throw;
    throw Error(ErrorCode::CorruptLedger, std::string(e.what()) + " at byte " + std::to_string(pos));
  }
  out.head = prev;
  if (out.entries.size() != count || prev != head_hash) {
    throw Error(ErrorCode::CorruptLedger, "file holds " + std::to_string(out.entries.size()) +
                                              " records not matching the head (" + std::to_string(count) + ")");
  }
  return out;
}

bool verify_chain(const std::vector<Bytes>& records) {
  Digest prev{};
  for (const auto& rec : records) {
    if (rec.size() < 36) return false;
    ByteReader r(rec);
    auto len = r.u32();
    if (r.remaining() != std::size_t{len} + 32) return false;
    r.raw(len);
    auto stored = r.raw(32);
    if (!std::equal(stored.begin(), stored.end(), prev.begin())) return false;
    prev = codec::record_hash(rec);
  }
  return true;
}

void LedgerDirectory::add(std::shared_ptr<Ledger> ledger) {
  std::lock_guard lock(mu_);
  auto law = ledger->law();
  ledgers_[law] = std::move(ledger);
}

std::shared_ptr<Ledger> LedgerDirectory::get(const LawId& law) const {
  std::lock_guard lock(mu_);
  auto it = ledgers_.find(law);
  if (it == ledgers_.end()) throw Error(ErrorCode::LedgerUnavailable, "no ledger for law '" + law + "'");
  return it->second;
}

std::vector<LawId> LedgerDirectory::laws() const {
  std::lock_guard lock(mu_);
  std::vector<LawId> out;
  for (const auto& [law, _] : ledgers_) out.push_back(law);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace cop
