#include "emem/store.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cerrno>
#include <cstring>
#include <filesystem>
#include <numeric>

#include <json.hpp>

#include "emem/byte_io.hpp"
#include "emem/error.hpp"

namespace emem {

static_assert(std::endian::native == std::endian::little,
              "the hot slot arena maps little-endian floats directly");

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint32_t kStoreVersion = 1;
constexpr char kHotMagic[4] = {'E', 'M', 'H', 'S'};
constexpr char kSpillMagic[4] = {'E', 'M', 'S', 'P'};
constexpr char kRepsMagic[4] = {'E', 'M', 'R', 'P'};
constexpr std::size_t kHotHeaderBytes = 64;
constexpr std::size_t kSlotHeaderBytes = 32;
constexpr std::size_t kSpillHeaderBytes = 48;
constexpr std::size_t kRepsHeaderBytes = 16;

Error io_error(const std::string& what) {
  return Error(ErrorCode::kIo, what + ": " + std::strerror(errno));
}

std::uint32_t payload_crc(std::span<const float> keys, std::span<const float> values) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32(crc, reinterpret_cast<const Bytef*>(keys.data()),
                static_cast<uInt>(keys.size_bytes()));
  crc = ::crc32(crc, reinterpret_cast<const Bytef*>(values.data()),
                static_cast<uInt>(values.size_bytes()));
  return static_cast<std::uint32_t>(crc);
}

template <typename T>
void store_le(unsigned char* dst, T v) {
  std::memcpy(dst, &v, sizeof(T));
}

template <typename T>
T load_le(const unsigned char* src) {
  T v;
  std::memcpy(&v, src, sizeof(T));
  return v;
}

std::vector<std::size_t> top_by_sum(const std::vector<double>& sums, std::size_t r) {
  std::vector<std::size_t> idx(sums.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (sums.size() <= r) return idx;
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(r),
                    idx.end(), [&](std::size_t a, std::size_t b) {
                      if (sums[a] != sums[b]) return sums[a] > sums[b];
                      return a < b;
                    });
  idx.resize(r);
  return idx;
}

}  // namespace

// Read/write shared mapping of a whole file.
class MappedFile {
 public:
  MappedFile(const std::string& path, std::size_t size, bool create) {
    fd_ = ::open(path.c_str(), create ? (O_RDWR | O_CREAT | O_TRUNC) : O_RDWR, 0644);
    if (fd_ < 0) throw io_error("open " + path);
    if (create) {
      if (::ftruncate(fd_, static_cast<off_t>(size)) != 0) {
        ::close(fd_);
        throw io_error("ftruncate " + path);
      }
    } else {
      struct stat st {};
      if (::fstat(fd_, &st) != 0) {
        ::close(fd_);
        throw io_error("stat " + path);
      }
      if (static_cast<std::size_t>(st.st_size) != size) {
        ::close(fd_);
        throw Error(ErrorCode::kFormat, path + " has unexpected size " +
                                            std::to_string(st.st_size));
      }
    }
    size_ = size;
    void* p = ::mmap(nullptr, size_, PROT_READ | PROT_WRITE, MAP_SHARED, fd_, 0);
    if (p == MAP_FAILED) {
      ::close(fd_);
      throw io_error("mmap " + path);
    }
    data_ = static_cast<unsigned char*>(p);
  }
  MappedFile(const MappedFile&) = delete;
  MappedFile& operator=(const MappedFile&) = delete;
  ~MappedFile() {
    if (data_) ::munmap(data_, size_);
    if (fd_ >= 0) ::close(fd_);
  }

  unsigned char* data() { return data_; }
  const unsigned char* data() const { return data_; }
  std::size_t size() const { return size_; }
  void sync() { ::msync(data_, size_, MS_ASYNC); }

 private:
  int fd_ = -1;
  unsigned char* data_ = nullptr;
  std::size_t size_ = 0;
};

void RepresentativeIndex::add(std::span<const float> vectors,
                              std::span<const std::uint32_t> positions,
                              std::size_t count) {
  offsets_.push_back(vectors_.size());
  counts_.push_back(count);
  vectors_.insert(vectors_.end(), vectors.begin(), vectors.end());
  positions_.insert(positions_.end(), positions.begin(), positions.end());
}

void RepresentativeIndex::add_offloaded(int fd, std::uint64_t offset,
                                        std::size_t count) {
  fd_ = fd;
  offsets_.push_back(offset);
  counts_.push_back(count);
}

RepView RepresentativeIndex::view(std::size_t event) const {
  const std::size_t count = counts_.at(event);
  const std::size_t off = offsets_[event];
  if (fd_ >= 0) {
    scratch_positions_.resize(heads_ * count);
    scratch_vectors_.resize(heads_ * count * dim_);
    const std::size_t pos_bytes = scratch_positions_.size() * 4;
    const std::size_t vec_bytes = scratch_vectors_.size() * 4;
    if (::pread(fd_, scratch_positions_.data(), pos_bytes, static_cast<off_t>(off)) !=
            static_cast<ssize_t>(pos_bytes) ||
        ::pread(fd_, scratch_vectors_.data(), vec_bytes,
                static_cast<off_t>(off + pos_bytes)) != static_cast<ssize_t>(vec_bytes)) {
      throw io_error("read reps.bin");
    }
    return RepView{scratch_vectors_, scratch_positions_, count, heads_, dim_};
  }
  const std::size_t pos_off = off / dim_;
  return RepView{std::span<const float>(vectors_).subspan(off, heads_ * count * dim_),
                 std::span<const std::uint32_t>(positions_).subspan(pos_off,
                                                                    heads_ * count),
                 count, heads_, dim_};
}

std::vector<std::size_t> select_representatives(const SimilarityGraph& event_graph,
                                                std::size_t r) {
  std::vector<double> sums(event_graph.size(), 0.0);
  for (std::size_t i = 0; i < event_graph.size(); ++i) {
    for (double w : event_graph.row(i)) sums[i] += w;
  }
  return top_by_sum(sums, r);
}

std::vector<std::size_t> select_representatives(const KeyRows& event_keys,
                                                std::size_t r) {
  const std::size_t n = event_keys.size();
  std::vector<double> sums(n, 0.0);
  // Each row still accumulates in ascending column order, matching the
  // graph-based selection bit for bit.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double w = event_keys.weight(i, j);
      sums[i] += w;
      sums[j] += w;
    }
  }
  return top_by_sum(sums, r);
}

std::uint64_t kv_cache_bytes(std::uint64_t tokens, std::uint64_t heads,
                             std::uint64_t dim, std::uint64_t element_bytes) {
  return tokens * heads * 2 * dim * element_bytes;
}

struct MemoryStore::State {
  StoreConfig cfg;
  std::size_t heads = 0;
  std::size_t dim = 0;
  std::size_t token_count = 0;
  std::uint64_t clock = 0;
  std::size_t slot_bytes = 0;
  std::vector<EventSegment> events;
  std::list<std::uint64_t> lru;  // least recent at the front
  std::vector<std::list<std::uint64_t>::iterator> lru_pos;
  std::vector<std::size_t> free_slots;  // stack, lowest index on top
  std::unique_ptr<MappedFile> arena;
  RepresentativeIndex reps;
  int reps_fd = -1;
  std::uint64_t reps_bytes = 0;
  std::size_t spills = 0;
  bool closed = false;

  ~State() {
    if (reps_fd >= 0) ::close(reps_fd);
  }

  std::size_t token_floats() const { return heads * dim; }
  std::string path(const std::string& name) const {
    return (fs::path(cfg.directory) / name).string();
  }
  std::string spill_path(std::uint64_t id) const {
    return (fs::path(cfg.directory) / "spill" / (std::to_string(id) + ".bin")).string();
  }

  unsigned char* slot_base(std::size_t slot) {
    return arena->data() + kHotHeaderBytes + slot * slot_bytes;
  }
  const unsigned char* slot_base(std::size_t slot) const {
    return arena->data() + kHotHeaderBytes + slot * slot_bytes;
  }
  std::span<float> slot_keys(std::size_t slot, std::size_t len) {
    auto* p = reinterpret_cast<float*>(slot_base(slot) + kSlotHeaderBytes);
    return {p, len * token_floats()};
  }
  std::span<float> slot_values(std::size_t slot, std::size_t len) {
    auto* p = reinterpret_cast<float*>(slot_base(slot) + kSlotHeaderBytes) +
              cfg.slot_tokens * token_floats();
    return {p, len * token_floats()};
  }
  std::span<const float> slot_keys(std::size_t slot, std::size_t len) const {
    auto* p = reinterpret_cast<const float*>(slot_base(slot) + kSlotHeaderBytes);
    return {p, len * token_floats()};
  }
  std::span<const float> slot_values(std::size_t slot, std::size_t len) const {
    auto* p = reinterpret_cast<const float*>(slot_base(slot) + kSlotHeaderBytes) +
              cfg.slot_tokens * token_floats();
    return {p, len * token_floats()};
  }
  std::uint64_t payload_offset(const EventSegment& e) const {
    if (e.slot) return kHotHeaderBytes + *e.slot * slot_bytes + kSlotHeaderBytes;
    return kSpillHeaderBytes;
  }

  void write_slot_header(std::size_t slot, const EventSegment& e) {
    unsigned char* h = slot_base(slot);
    store_le<std::uint64_t>(h, e.event_id);
    store_le<std::uint64_t>(h + 8, e.start);
    store_le<std::uint64_t>(h + 16, e.end);
    store_le<std::uint32_t>(h + 24, e.crc);
    store_le<std::uint32_t>(h + 28, 1);
  }

  void init_arena(bool create) {
    slot_bytes = kSlotHeaderBytes + 2 * cfg.slot_tokens * token_floats() * sizeof(float);
    const std::size_t size = kHotHeaderBytes + cfg.hot_slots * slot_bytes;
    arena = std::make_unique<MappedFile>(path("hot.bin"), size, create);
    unsigned char* h = arena->data();
    if (create) {
      std::memset(h, 0, kHotHeaderBytes);
      std::memcpy(h, kHotMagic, 4);
      store_le<std::uint32_t>(h + 4, kStoreVersion);
      store_le<std::uint32_t>(h + 8, static_cast<std::uint32_t>(heads));
      store_le<std::uint32_t>(h + 12, static_cast<std::uint32_t>(dim));
      store_le<std::uint64_t>(h + 16, cfg.hot_slots);
      store_le<std::uint64_t>(h + 24, cfg.slot_tokens);
      store_le<std::uint64_t>(h + 32, slot_bytes);
      for (std::size_t s = 0; s < cfg.hot_slots; ++s) {
        std::memset(slot_base(s), 0, kSlotHeaderBytes);
      }
    } else if (std::memcmp(h, kHotMagic, 4) != 0 ||
               load_le<std::uint64_t>(h + 32) != slot_bytes) {
      throw Error(ErrorCode::kFormat, "hot.bin header does not match manifest");
    }
  }

  void touch(EventSegment& e) {
    e.last_access = ++clock;
    if (e.tier == Tier::kHot) lru.splice(lru.end(), lru, lru_pos[e.event_id]);
  }

  void write_spill_file(const EventSegment& e) {
    const std::size_t len = e.length();
    auto keys = slot_keys(*e.slot, len);
    auto values = slot_values(*e.slot, len);
    std::vector<unsigned char> out;
    out.reserve(kSpillHeaderBytes + keys.size_bytes() + values.size_bytes());
    out.insert(out.end(), kSpillMagic, kSpillMagic + 4);
    bytes::put_u32(out, kStoreVersion);
    bytes::put_u64(out, e.event_id);
    bytes::put_u64(out, e.start);
    bytes::put_u64(out, e.end);
    bytes::put_u32(out, static_cast<std::uint32_t>(heads));
    bytes::put_u32(out, static_cast<std::uint32_t>(dim));
    bytes::put_u32(out, e.crc);
    bytes::put_u32(out, 0);
    bytes::put_f32s(out, keys);
    bytes::put_f32s(out, values);
    bytes::write_file_atomic(spill_path(e.event_id), out);
  }

  // Loads and verifies a spill file; returns keys followed by values.
  std::vector<float> read_spill_file(const EventSegment& e) const {
    const std::string p = spill_path(e.event_id);
    if (!fs::exists(p)) {
      throw Error(ErrorCode::kNotFound,
                  "missing spill file for event " + std::to_string(e.event_id));
    }
    const auto data = bytes::read_file(p);
    bytes::Reader in(data);
    auto magic = in.raw(4, "spill magic");
    if (std::memcmp(magic.data(), kSpillMagic, 4) != 0) {
      throw Error(ErrorCode::kFormat, p + ": bad spill magic");
    }
    in.u32("spill version");
    const std::uint64_t id = in.u64("event id");
    const std::uint64_t start = in.u64("start");
    const std::uint64_t end = in.u64("end");
    const std::uint32_t h = in.u32("heads");
    const std::uint32_t d = in.u32("dim");
    const std::uint32_t crc = in.u32("crc");
    in.u32("reserved");
    if (id != e.event_id || start != e.start || end != e.end || h != heads ||
        d != dim) {
      throw Error(ErrorCode::kFormat, p + ": spill header does not match manifest");
    }
    const std::size_t n = e.length() * token_floats();
    std::vector<float> payload(2 * n);
    in.f32s(payload, "spill payload");
    const std::span<const float> all(payload);
    if (crc != e.crc || payload_crc(all.first(n), all.last(n)) != e.crc) {
      throw Error(ErrorCode::kChecksum,
                  "checksum mismatch in spill file for event " +
                      std::to_string(e.event_id));
    }
    return payload;
  }

  std::size_t acquire_slot(MemoryStore& self) {
    if (free_slots.empty()) {
      const std::uint64_t victim = self.spill_lru();
      (void)victim;
    }
    const std::size_t slot = free_slots.back();
    free_slots.pop_back();
    return slot;
  }

  void release_slot(std::size_t slot) {
    std::memset(slot_base(slot), 0, kSlotHeaderBytes);
    free_slots.push_back(slot);
  }

  void append_reps(const EventSegment& e, std::span<const float> keys,
                   EventSegment& out) {
    const std::size_t len = e.length();
    const std::size_t r = std::min(cfg.reps_per_event, len);
    std::vector<float> vectors;
    std::vector<std::uint32_t> positions;
    vectors.reserve(heads * r * dim);
    positions.reserve(heads * r);
    for (std::size_t h = 0; h < heads; ++h) {
      const auto picked = select_representatives(KeyRows{keys, heads, dim, h}, r);
      for (std::size_t i : picked) {
        positions.push_back(static_cast<std::uint32_t>(e.start + i));
        auto k = keys.subspan((i * heads + h) * dim, dim);
        vectors.insert(vectors.end(), k.begin(), k.end());
      }
    }
    std::vector<unsigned char> rec;
    bytes::put_u64(rec, e.event_id);
    bytes::put_u32(rec, static_cast<std::uint32_t>(r));
    std::vector<unsigned char> body;
    for (auto p : positions) bytes::put_u32(body, p);
    bytes::put_f32s(body, vectors);
    bytes::put_u32(rec, bytes::crc32(body));
    rec.insert(rec.end(), body.begin(), body.end());
    out.reps_offset = reps_bytes;
    out.rep_count = r;
    if (::pwrite(reps_fd, rec.data(), rec.size(), static_cast<off_t>(reps_bytes)) !=
        static_cast<ssize_t>(rec.size())) {
      throw io_error("write reps.bin");
    }
    if (cfg.offload_reps) {
      reps.add_offloaded(reps_fd, reps_bytes + 16, r);
    } else {
      reps.add(vectors, positions, r);
    }
    reps_bytes += rec.size();
  }

  void load_reps() {
    const auto data = bytes::read_file(path("reps.bin"));
    if (data.size() < reps_bytes) {
      throw Error(ErrorCode::kTruncated, "reps.bin shorter than manifest records");
    }
    reps = RepresentativeIndex(heads, dim);
    for (const EventSegment& e : events) {
      bytes::Reader in(std::span<const unsigned char>(data).subspan(e.reps_offset));
      if (in.u64("reps event id") != e.event_id ||
          in.u32("reps count") != e.rep_count) {
        throw Error(ErrorCode::kFormat, "reps.bin record does not match manifest");
      }
      const std::uint32_t crc = in.u32("reps crc");
      const std::size_t body_bytes = heads * e.rep_count * (4 + dim * 4);
      auto body = in.raw(body_bytes, "reps body");
      if (bytes::crc32(body) != crc) {
        throw Error(ErrorCode::kChecksum, "checksum mismatch in reps for event " +
                                              std::to_string(e.event_id));
      }
      bytes::Reader br(body);
      std::vector<std::uint32_t> positions(heads * e.rep_count);
      for (auto& p : positions) p = br.u32("rep position");
      std::vector<float> vectors(heads * e.rep_count * dim);
      br.f32s(vectors, "rep vectors");
      if (cfg.offload_reps) {
        reps.add_offloaded(reps_fd, e.reps_offset + 16, e.rep_count);
      } else {
        reps.add(vectors, positions, e.rep_count);
      }
    }
  }

  json manifest() const {
    json ev = json::array();
    for (const EventSegment& e : events) {
      ev.push_back(json::array(
          {e.event_id, e.start, e.end, e.tier == Tier::kHot ? "hot" : "spilled",
           e.slot ? static_cast<std::int64_t>(*e.slot) : -1, e.last_access, e.crc,
           e.spill_written, e.reps_offset, e.rep_count, payload_offset(e)}));
    }
    std::vector<std::size_t> starts;
    for (const EventSegment& e : events) starts.push_back(e.start);
    return json{
        {"format", "emem-store"},
        {"version", kStoreVersion},
        {"header",
         {{"head_count", heads}, {"dim", dim}, {"token_count", token_count}}},
        {"config",
         {{"hot_slots", cfg.hot_slots},
          {"reps_per_event", cfg.reps_per_event},
          {"slot_tokens", cfg.slot_tokens},
          {"offload_reps", cfg.offload_reps},
          {"flush_every_spill", cfg.flush_every_spill}}},
        {"clock", clock},
        {"spills", spills},
        {"hot_file",
         {{"path", "hot.bin"},
          {"header_bytes", kHotHeaderBytes},
          {"slot_header_bytes", kSlotHeaderBytes},
          {"slot_bytes", slot_bytes}}},
        {"reps_file", {{"path", "reps.bin"}, {"bytes", reps_bytes}}},
        {"boundaries", starts},
        {"event_fields",
         {"id", "start", "end", "tier", "slot", "last_access", "crc", "spill_written",
          "reps_offset", "rep_count", "payload_offset"}},
        {"events", std::move(ev)}};
  }

  void write_manifest() {
    arena->sync();
    ::fdatasync(reps_fd);
    bytes::write_text_atomic(path("manifest.json"), manifest().dump());
  }
};

MemoryStore::MemoryStore(std::unique_ptr<State> state) : s_(std::move(state)) {}
MemoryStore::MemoryStore(MemoryStore&&) noexcept = default;
MemoryStore& MemoryStore::operator=(MemoryStore&&) noexcept = default;

MemoryStore::~MemoryStore() {
  if (s_ && !s_->closed) {
    try {
      s_->write_manifest();
    } catch (...) {
    }
  }
}

MemoryStore MemoryStore::create(const StoreConfig& cfg, std::uint32_t head_count,
                                std::uint32_t dim) {
  if (cfg.hot_slots < 1) {
    throw Error(ErrorCode::kInvalidArgument, "hot slot capacity must be >= 1");
  }
  if (cfg.slot_tokens < 1) {
    throw Error(ErrorCode::kInvalidArgument, "slot_tokens must be >= 1");
  }
  if (cfg.reps_per_event < 1) {
    throw Error(ErrorCode::kInvalidArgument, "reps_per_event must be >= 1");
  }
  if (head_count == 0 || dim == 0) {
    throw Error(ErrorCode::kInvalidArgument, "head_count and dim must be positive");
  }
  auto s = std::make_unique<State>();
  s->cfg = cfg;
  s->heads = head_count;
  s->dim = dim;
  std::error_code ec;
  fs::create_directories(fs::path(cfg.directory) / "spill", ec);
  if (ec) {
    throw Error(ErrorCode::kIo, "cannot create store directory " + cfg.directory +
                                    ": " + ec.message());
  }
  for (const auto& entry : fs::directory_iterator(fs::path(cfg.directory) / "spill")) {
    fs::remove(entry.path(), ec);
  }
  s->init_arena(true);
  s->free_slots.resize(cfg.hot_slots);
  for (std::size_t i = 0; i < cfg.hot_slots; ++i) {
    s->free_slots[i] = cfg.hot_slots - 1 - i;
  }
  s->reps = RepresentativeIndex(head_count, dim);
  s->reps_fd = ::open(s->path("reps.bin").c_str(), O_RDWR | O_CREAT | O_TRUNC, 0644);
  if (s->reps_fd < 0) throw io_error("open reps.bin");
  std::vector<unsigned char> hdr(kRepsMagic, kRepsMagic + 4);
  bytes::put_u32(hdr, kStoreVersion);
  bytes::put_u32(hdr, head_count);
  bytes::put_u32(hdr, dim);
  if (::pwrite(s->reps_fd, hdr.data(), hdr.size(), 0) != static_cast<ssize_t>(hdr.size())) {
    throw io_error("write reps.bin");
  }
  s->reps_bytes = kRepsHeaderBytes;
  MemoryStore store(std::move(s));
  store.flush();
  return store;
}

MemoryStore MemoryStore::open(const std::string& directory) {
  const auto text = bytes::read_file((fs::path(directory) / "manifest.json").string());
  json m;
  try {
    m = json::parse(text.begin(), text.end());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("manifest.json: ") + e.what());
  }
  auto s = std::make_unique<State>();
  try {
    if (m.at("format") != "emem-store" || m.at("version") != kStoreVersion) {
      throw Error(ErrorCode::kFormat, "manifest.json is not an emem store v1");
    }
    s->cfg.directory = directory;
    const auto& c = m.at("config");
    s->cfg.hot_slots = c.at("hot_slots");
    s->cfg.reps_per_event = c.at("reps_per_event");
    s->cfg.slot_tokens = c.at("slot_tokens");
    s->cfg.offload_reps = c.at("offload_reps");
    s->cfg.flush_every_spill = c.at("flush_every_spill");
    s->heads = m.at("header").at("head_count");
    s->dim = m.at("header").at("dim");
    s->token_count = m.at("header").at("token_count");
    s->clock = m.at("clock");
    s->spills = m.at("spills");
    s->reps_bytes = m.at("reps_file").at("bytes");
    for (const auto& row : m.at("events")) {
      EventSegment e;
      e.event_id = row.at(0);
      e.start = row.at(1);
      e.end = row.at(2);
      e.tier = row.at(3) == "hot" ? Tier::kHot : Tier::kSpilled;
      const std::int64_t slot = row.at(4);
      if (slot >= 0) e.slot = static_cast<std::size_t>(slot);
      e.last_access = row.at(5);
      e.crc = row.at(6);
      e.spill_written = row.at(7);
      e.reps_offset = row.at(8);
      e.rep_count = row.at(9);
      if (e.event_id != s->events.size()) {
        throw Error(ErrorCode::kFormat, "manifest event ids are not dense");
      }
      s->events.push_back(e);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("manifest.json: ") + e.what());
  }
  s->init_arena(false);
  s->reps_fd = ::open(s->path("reps.bin").c_str(), O_RDWR);
  if (s->reps_fd < 0) throw io_error("open reps.bin");
  s->load_reps();

  std::vector<bool> used(s->cfg.hot_slots, false);
  std::vector<std::uint64_t> hot;
  s->lru_pos.resize(s->events.size());
  for (EventSegment& e : s->events) {
    if (e.tier != Tier::kHot) continue;
    if (!e.slot || *e.slot >= s->cfg.hot_slots || used[*e.slot]) {
      throw Error(ErrorCode::kFormat, "manifest slot table is inconsistent");
    }
    used[*e.slot] = true;
    const unsigned char* h = s->slot_base(*e.slot);
    if (load_le<std::uint64_t>(h) != e.event_id || load_le<std::uint32_t>(h + 24) != e.crc ||
        load_le<std::uint32_t>(h + 28) != 1) {
      throw Error(ErrorCode::kChecksum,
                  "hot slot " + std::to_string(*e.slot) + " does not hold event " +
                      std::to_string(e.event_id));
    }
    const std::size_t len = e.length();
    if (payload_crc(s->slot_keys(*e.slot, len), s->slot_values(*e.slot, len)) != e.crc) {
      throw Error(ErrorCode::kChecksum,
                  "checksum mismatch in hot slot for event " + std::to_string(e.event_id));
    }
    hot.push_back(e.event_id);
  }
  std::sort(hot.begin(), hot.end(), [&](std::uint64_t a, std::uint64_t b) {
    return s->events[a].last_access < s->events[b].last_access;
  });
  for (std::uint64_t id : hot) s->lru_pos[id] = s->lru.insert(s->lru.end(), id);
  for (std::size_t slot = s->cfg.hot_slots; slot-- > 0;) {
    if (!used[slot]) {
      std::memset(s->slot_base(slot), 0, kSlotHeaderBytes);
      s->free_slots.push_back(slot);
    }
  }
  return MemoryStore(std::move(s));
}

std::uint64_t MemoryStore::append_event(std::size_t start, std::size_t end,
                                        std::span<const float> keys,
                                        std::span<const float> values) {
  State& s = *s_;
  if (start != s.token_count || end <= start) {
    throw Error(ErrorCode::kInvalidArgument,
                "event [" + std::to_string(start) + ", " + std::to_string(end) +
                    ") does not extend the stored prefix of " +
                    std::to_string(s.token_count) + " tokens");
  }
  const std::size_t len = end - start;
  if (len > s.cfg.slot_tokens) {
    throw Error(ErrorCode::kInvalidArgument,
                "event of " + std::to_string(len) + " tokens exceeds slot capacity " +
                    std::to_string(s.cfg.slot_tokens));
  }
  if (keys.size() != len * s.token_floats() || values.size() != keys.size()) {
    throw Error(ErrorCode::kInvalidArgument, "event payload has the wrong size");
  }
  EventSegment e;
  e.event_id = s.events.size();
  e.start = start;
  e.end = end;
  e.crc = payload_crc(keys, values);
  s.append_reps(e, keys, e);

  const std::size_t slot = s.acquire_slot(*this);
  std::memcpy(s.slot_keys(slot, len).data(), keys.data(), keys.size_bytes());
  std::memcpy(s.slot_values(slot, len).data(), values.data(), values.size_bytes());
  e.slot = slot;
  e.tier = Tier::kHot;
  s.write_slot_header(slot, e);
  s.events.push_back(e);
  s.lru_pos.push_back(s.lru.insert(s.lru.end(), e.event_id));
  s.token_count = end;
  s.touch(s.events.back());
  return e.event_id;
}

std::uint64_t MemoryStore::spill_lru() {
  State& s = *s_;
  if (s.lru.empty()) throw Error(ErrorCode::kInvalidArgument, "no hot event to spill");
  const std::uint64_t victim = s.lru.front();
  EventSegment& e = s.events[victim];
  if (!e.spill_written) {
    s.write_spill_file(e);
    e.spill_written = true;
  }
  s.lru.erase(s.lru_pos[victim]);
  const std::size_t slot = *e.slot;
  e.slot.reset();
  e.tier = Tier::kSpilled;
  s.release_slot(slot);
  ++s.spills;
  if (s.cfg.flush_every_spill) s.write_manifest();
  return victim;
}

void MemoryStore::restore(std::uint64_t id) {
  State& s = *s_;
  if (id >= s.events.size()) {
    throw Error(ErrorCode::kNotFound, "no event " + std::to_string(id));
  }
  if (s.events[id].tier == Tier::kSpilled) {
    const std::vector<float> payload = s.read_spill_file(s.events[id]);
    const std::size_t slot = s.acquire_slot(*this);
    EventSegment& e = s.events[id];
    const std::size_t n = e.length() * s.token_floats();
    std::memcpy(s.slot_keys(slot, e.length()).data(), payload.data(), n * sizeof(float));
    std::memcpy(s.slot_values(slot, e.length()).data(), payload.data() + n,
                n * sizeof(float));
    e.slot = slot;
    e.tier = Tier::kHot;
    s.write_slot_header(slot, e);
    s.lru_pos[id] = s.lru.insert(s.lru.end(), id);
  }
  s.touch(s.events[id]);
}

EventView MemoryStore::access_event(std::uint64_t id) {
  restore(id);
  const State& s = *s_;
  const EventSegment& e = s.events[id];
  return EventView{e.event_id, e.start, e.end, s.slot_keys(*e.slot, e.length()),
                   s.slot_values(*e.slot, e.length())};
}

std::pair<std::vector<float>, std::vector<float>> MemoryStore::read_event(
    std::uint64_t id) const {
  const State& s = *s_;
  const EventSegment& e = event(id);
  const std::size_t n = e.length() * s.token_floats();
  if (e.tier == Tier::kHot) {
    auto k = s.slot_keys(*e.slot, e.length());
    auto v = s.slot_values(*e.slot, e.length());
    return {std::vector<float>(k.begin(), k.end()), std::vector<float>(v.begin(), v.end())};
  }
  std::vector<float> payload = s.read_spill_file(e);
  std::vector<float> values(payload.begin() + static_cast<std::ptrdiff_t>(n), payload.end());
  payload.resize(n);
  return {std::move(payload), std::move(values)};
}

const EventSegment& MemoryStore::event(std::uint64_t id) const {
  if (id >= s_->events.size()) {
    throw Error(ErrorCode::kNotFound, "no event " + std::to_string(id));
  }
  return s_->events[id];
}

std::size_t MemoryStore::event_count() const { return s_->events.size(); }
std::size_t MemoryStore::token_count() const { return s_->token_count; }
std::size_t MemoryStore::head_count() const { return s_->heads; }
std::size_t MemoryStore::dim() const { return s_->dim; }
std::size_t MemoryStore::hot_count() const { return s_->lru.size(); }
std::size_t MemoryStore::spill_count() const { return s_->spills; }
const StoreConfig& MemoryStore::config() const { return s_->cfg; }

const RepresentativeIndex& MemoryStore::representatives() const { return s_->reps; }

std::vector<std::uint64_t> MemoryStore::hot_ids_lru_order() const {
  return {s_->lru.begin(), s_->lru.end()};
}

BoundarySet MemoryStore::boundaries() const {
  std::vector<std::size_t> starts;
  for (const EventSegment& e : s_->events) starts.push_back(e.start);
  return BoundarySet(std::move(starts));
}

MemoryAccounting MemoryStore::memory_accounting() const {
  const State& s = *s_;
  MemoryAccounting a;
  a.kv_bytes = kv_cache_bytes(s.token_count, s.heads, s.dim, 4);
  a.kv_bytes_half = kv_cache_bytes(s.token_count, s.heads, s.dim, 2);
  for (const EventSegment& e : s.events) {
    const std::uint64_t payload = 2ull * e.length() * s.token_floats() * 4;
    a.rep_bytes += e.rep_count * s.heads * s.dim * 4;
    if (e.tier == Tier::kHot) {
      a.hot_payload_bytes += payload;
    } else {
      a.spilled_payload_bytes += payload;
    }
    if (e.spill_written) a.disk_bytes += payload + kSpillHeaderBytes;
  }
  a.rep_bytes_half = a.rep_bytes / 2;
  a.rep_bytes_max = s.events.size() * s.cfg.reps_per_event * s.heads * s.dim * 4;
  a.hot_arena_bytes = s.token_count == 0 && s.events.empty()
                          ? 0
                          : kHotHeaderBytes + s.cfg.hot_slots * s.slot_bytes;
  a.disk_bytes += a.hot_arena_bytes + s.reps_bytes;
  return a;
}

void MemoryStore::flush() { s_->write_manifest(); }

void MemoryStore::close() {
  if (s_ && !s_->closed) {
    s_->write_manifest();
    s_->closed = true;
  }
}

MemoryStore form_events(const Stream& stream, const BoundarySet& boundaries,
                        StoreConfig cfg) {
  boundaries.check_within(stream.size());
  std::size_t longest = 0;
  for (std::size_t i = 0; i < boundaries.size(); ++i) {
    longest = std::max(longest, boundaries.event_end(i, stream.size()) - boundaries[i]);
  }
  if (cfg.slot_tokens == 0) cfg.slot_tokens = longest;
  MemoryStore store = MemoryStore::create(cfg, stream.header().head_count,
                                          stream.header().dim);
  for (std::size_t i = 0; i < boundaries.size(); ++i) {
    const std::size_t begin = boundaries[i];
    const std::size_t end = boundaries.event_end(i, stream.size());
    store.append_event(begin, end, stream.key_rows(begin, end),
                       stream.value_rows(begin, end));
  }
  store.flush();
  return store;
}

}  // namespace emem
