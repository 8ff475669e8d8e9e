#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <memory>
#include <mutex>
#include <queue>
#include <random>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "elemrag/embedding.hpp"
#include "elemrag/error.hpp"
#include "elemrag/hash.hpp"
#include "elemrag/io.hpp"

namespace elemrag {

inline constexpr std::size_t kDefaultTopK = 10;

struct RetrievalResult {
  std::string chunk_id;
  double score = 0.0;  // cosine similarity
  std::size_t rank = 0;  // 1-based

  bool operator==(const RetrievalResult&) const = default;
};

/// Best first; equal scores ordered by chunk id.
inline bool ranks_before(const RetrievalResult& a, const RetrievalResult& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.chunk_id < b.chunk_id;
}

enum class IndexMode : std::uint8_t { Exact = 0, Approximate = 1 };

struct HnswParams {
  std::uint32_t m = 16;
  std::uint32_t ef_construction = 128;
  std::uint32_t ef_search = 64;
  std::uint64_t seed = 42;

  bool operator==(const HnswParams&) const = default;
};

/// Cosine-similarity index over unit vectors. Exact mode scans every entry;
/// approximate mode navigates a hierarchical small-world graph. Searches may
/// run concurrently; adds take an exclusive lock.
class VectorIndex {
 public:
  explicit VectorIndex(std::size_t dim, IndexMode mode = IndexMode::Exact, HnswParams params = {})
      : dim_(dim), mode_(mode), params_(params), rng_(params.seed),
        mu_(std::make_unique<std::shared_mutex>()) {
    if (dim_ == 0) throw Error(ErrorCode::Config, "index dim must be >= 1");
    if (params_.m < 2) throw Error(ErrorCode::Config, "graph degree M must be >= 2");
  }

  VectorIndex(VectorIndex&&) noexcept = default;
  VectorIndex& operator=(VectorIndex&&) noexcept = default;

  std::size_t dim() const { return dim_; }
  IndexMode mode() const { return mode_; }
  const HnswParams& params() const { return params_; }

  std::size_t size() const {
    std::shared_lock lock(*mu_);
    return ids_.size();
  }

  std::vector<std::string> ids() const {
    std::shared_lock lock(*mu_);
    return ids_;
  }

  bool contains(const std::string& id) const {
    std::shared_lock lock(*mu_);
    return slot_of_.contains(id);
  }

  /// Stored (normalized) vector of an entry.
  EmbeddingVector vector_of(const std::string& id) const {
    std::shared_lock lock(*mu_);
    auto it = slot_of_.find(id);
    if (it == slot_of_.end()) throw Error(ErrorCode::MalformedInput, "unknown id " + id);
    auto v = row(it->second);
    return EmbeddingVector{{v.begin(), v.end()}};
  }

  /// Adds a batch atomically: either every item is inserted or none is.
  void add(const std::vector<std::pair<std::string, EmbeddingVector>>& items) {
    std::unique_lock lock(*mu_);
    std::unordered_set<std::string> batch_ids;
    for (const auto& [id, vec] : items) {
      if (vec.dim() != dim_) {
        throw Error(ErrorCode::DimensionMismatch, "vector for '" + id + "' has dim " +
                                                      std::to_string(vec.dim()) + ", index dim " +
                                                      std::to_string(dim_));
      }
      if (slot_of_.contains(id) || !batch_ids.insert(id).second) {
        throw Error(ErrorCode::DuplicateId, "id '" + id + "' already indexed");
      }
      if (l2_norm(vec.values) == 0.0) {
        throw Error(ErrorCode::EmptyText, "zero vector for '" + id + "'");
      }
    }
    for (const auto& [id, vec] : items) {
      std::vector<double> raw(vec.values.begin(), vec.values.end());
      auto unit = normalize(raw);
      const auto slot = static_cast<std::uint32_t>(ids_.size());
      ids_.push_back(id);
      slot_of_.emplace(id, slot);
      data_.insert(data_.end(), unit.values.begin(), unit.values.end());
      norms_.push_back(l2_norm(row(slot)));
      if (mode_ == IndexMode::Approximate) graph_insert(slot);
    }
    if (mode_ == IndexMode::Approximate && !items.empty()) repair_reachability();
  }

  std::vector<RetrievalResult> search(const EmbeddingVector& query, std::size_t k = kDefaultTopK) const {
    std::shared_lock lock(*mu_);
    if (ids_.empty()) throw Error(ErrorCode::EmptyIndex, "search on an empty index");
    if (query.dim() != dim_) {
      throw Error(ErrorCode::DimensionMismatch, "query dim " + std::to_string(query.dim()) +
                                                    " vs index dim " + std::to_string(dim_));
    }
    if (k == 0) throw Error(ErrorCode::Config, "k must be >= 1");
    const double qnorm = l2_norm(query.values);
    if (qnorm == 0.0) throw Error(ErrorCode::EmptyText, "zero query vector");

    std::vector<RetrievalResult> out;
    if (mode_ == IndexMode::Exact) {
      out.reserve(ids_.size());
      for (std::uint32_t i = 0; i < ids_.size(); ++i) {
        out.push_back({ids_[i], score(query.values, qnorm, i), 0});
      }
    } else {
      auto found = graph_search(query.values, qnorm, std::max<std::size_t>(params_.ef_search, k));
      out.reserve(found.size());
      for (auto [s, slot] : found) out.push_back({ids_[slot], s, 0});
    }
    const std::size_t keep = std::min(k, out.size());
    std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(keep), out.end(),
                      ranks_before);
    out.resize(keep);
    for (std::size_t r = 0; r < out.size(); ++r) out[r].rank = r + 1;
    return out;
  }

  /// Number of entries reachable from the entry point over layer-0 links.
  /// Equals size() for a healthy graph; exact indexes report size().
  std::size_t reachable_from_entry() const {
    std::shared_lock lock(*mu_);
    if (mode_ == IndexMode::Exact || ids_.empty()) return ids_.size();
    std::vector<char> seen(ids_.size(), 0);
    return flood(entry_, seen);
  }

  void save(const std::filesystem::path& path) const;
  static VectorIndex load(const std::filesystem::path& path);

 private:
  using Scored = std::pair<double, std::uint32_t>;

  std::span<const float> row(std::uint32_t slot) const {
    return {data_.data() + static_cast<std::size_t>(slot) * dim_, dim_};
  }

  double score(std::span<const float> q, double qnorm, std::uint32_t slot) const {
    return std::clamp(dot(q, row(slot)) / (qnorm * norms_[slot]), -1.0, 1.0);
  }

  double pair_score(std::uint32_t a, std::uint32_t b) const {
    return dot(row(a), row(b)) / (norms_[a] * norms_[b]);
  }

  std::size_t max_links(int level) const { return level == 0 ? 2 * params_.m : params_.m; }

  int draw_level() {
    const double ml = 1.0 / std::log(static_cast<double>(params_.m));
    std::uniform_real_distribution<double> u(std::nextafter(0.0, 1.0), 1.0);
    return static_cast<int>(std::floor(-std::log(u(rng_)) * ml));
  }

  // Beam search on one layer. Returns up to `ef` entries, best first.
  std::vector<Scored> search_layer(std::span<const float> q, double qnorm,
                                   const std::vector<std::uint32_t>& entry_points, std::size_t ef,
                                   int level) const {
    std::vector<char> visited(ids_.size(), 0);
    std::priority_queue<Scored> frontier;  // best candidate on top
    std::priority_queue<Scored, std::vector<Scored>, std::greater<>> best;  // worst on top
    for (auto ep : entry_points) {
      if (visited[ep]) continue;
      visited[ep] = 1;
      double s = score(q, qnorm, ep);
      frontier.emplace(s, ep);
      best.emplace(s, ep);
      if (best.size() > ef) best.pop();
    }
    while (!frontier.empty()) {
      auto [s, node] = frontier.top();
      if (best.size() >= ef && s < best.top().first) break;
      frontier.pop();
      for (auto nb : links_[node][static_cast<std::size_t>(level)]) {
        if (visited[nb]) continue;
        visited[nb] = 1;
        double ns = score(q, qnorm, nb);
        if (best.size() < ef || ns > best.top().first) {
          frontier.emplace(ns, nb);
          best.emplace(ns, nb);
          if (best.size() > ef) best.pop();
        }
      }
    }
    std::vector<Scored> out;
    out.reserve(best.size());
    while (!best.empty()) {
      out.push_back(best.top());
      best.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

  // Keeps a candidate only if it is closer to the base than to every
  // neighbour already kept, which spreads links across directions.
  std::vector<std::uint32_t> select_neighbors(const std::vector<Scored>& candidates,
                                              std::size_t limit) const {
    std::vector<std::uint32_t> kept;
    for (const auto& [s, c] : candidates) {
      if (kept.size() >= limit) break;
      bool diverse = true;
      for (auto k : kept) {
        if (pair_score(c, k) > s) {
          diverse = false;
          break;
        }
      }
      if (diverse) kept.push_back(c);
    }
    return kept;
  }

  void graph_insert(std::uint32_t slot) {
    const int level = draw_level();
    links_.emplace_back(static_cast<std::size_t>(level) + 1);
    levels_.push_back(level);
    if (slot == 0) {
      entry_ = 0;
      max_level_ = level;
      return;
    }
    const auto q = row(slot);
    const double qnorm = norms_[slot];
    std::vector<std::uint32_t> eps{entry_};
    for (int l = max_level_; l > level; --l) {
      auto found = search_layer(q, qnorm, eps, 1, l);
      eps = {found.front().second};
    }
    for (int l = std::min(level, max_level_); l >= 0; --l) {
      auto candidates = search_layer(q, qnorm, eps, params_.ef_construction, l);
      auto neighbours = select_neighbors(candidates, params_.m);
      auto& mine = links_[slot][static_cast<std::size_t>(l)];
      mine = neighbours;
      for (auto nb : neighbours) {
        auto& theirs = links_[nb][static_cast<std::size_t>(l)];
        theirs.push_back(slot);
        if (theirs.size() > max_links(l)) {
          std::vector<Scored> scored;
          scored.reserve(theirs.size());
          for (auto t : theirs) scored.emplace_back(pair_score(nb, t), t);
          std::sort(scored.begin(), scored.end(), std::greater<>());
          theirs = select_neighbors(scored, max_links(l));
        }
      }
      eps.clear();
      for (const auto& c : candidates) eps.push_back(c.second);
    }
    if (level > max_level_) {
      max_level_ = level;
      entry_ = slot;
    }
  }

  std::size_t flood(std::uint32_t from, std::vector<char>& seen) const {
    std::size_t count = 0;
    std::vector<std::uint32_t> stack;
    if (!seen[from]) {
      seen[from] = 1;
      stack.push_back(from);
    }
    while (!stack.empty()) {
      auto n = stack.back();
      stack.pop_back();
      ++count;
      for (auto nb : links_[n][0]) {
        if (!seen[nb]) {
          seen[nb] = 1;
          stack.push_back(nb);
        }
      }
    }
    return count;
  }

  // Pruning can strand a node with no inbound layer-0 link. Each stranded
  // node gets a link from its nearest reachable neighbour.
  void repair_reachability() {
    std::vector<char> seen(ids_.size(), 0);
    flood(entry_, seen);
    for (std::uint32_t u = 0; u < ids_.size(); ++u) {
      if (seen[u]) continue;
      auto found = search_layer(row(u), norms_[u], {entry_}, params_.ef_construction, 0);
      std::uint32_t host = entry_;
      for (const auto& [s, c] : found) {
        if (seen[c]) {
          host = c;
          break;
        }
      }
      links_[host][0].push_back(u);
      flood(u, seen);
    }
  }

  std::vector<Scored> graph_search(std::span<const float> q, double qnorm, std::size_t ef) const {
    std::vector<std::uint32_t> eps{entry_};
    for (int l = max_level_; l > 0; --l) {
      auto found = search_layer(q, qnorm, eps, 1, l);
      eps = {found.front().second};
    }
    return search_layer(q, qnorm, eps, ef, 0);
  }

  std::size_t dim_;
  IndexMode mode_;
  HnswParams params_;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::uint32_t> slot_of_;
  std::vector<float> data_;
  std::vector<double> norms_;

  std::vector<int> levels_;
  std::vector<std::vector<std::vector<std::uint32_t>>> links_;  // [node][level] -> neighbours
  std::uint32_t entry_ = 0;
  int max_level_ = -1;
  std::mt19937_64 rng_;

  std::unique_ptr<std::shared_mutex> mu_;
};

/// Merges per-index result lists by raw score, keeping the best score per
/// chunk id, and returns the global top-k re-ranked from 1.
inline std::vector<RetrievalResult> merge_results(const std::vector<std::vector<RetrievalResult>>& lists,
                                                  std::size_t k = kDefaultTopK) {
  std::unordered_map<std::string, double> best;
  for (const auto& list : lists) {
    for (const auto& r : list) {
      auto [it, inserted] = best.emplace(r.chunk_id, r.score);
      if (!inserted) it->second = std::max(it->second, r.score);
    }
  }
  std::vector<RetrievalResult> out;
  out.reserve(best.size());
  for (const auto& [id, s] : best) out.push_back({id, s, 0});
  std::sort(out.begin(), out.end(), ranks_before);
  if (out.size() > k) out.resize(k);
  for (std::size_t r = 0; r < out.size(); ++r) out[r].rank = r + 1;
  return out;
}

// ---- persistence ----------------------------------------------------------
//
// Layout, all integers little-endian:
//   magic "ERIX" | u32 version | u32 dim | u64 count | u8 mode |
//   u32 M | u32 ef_construction | u32 ef_search | u64 seed | u64 checksum
//   payload: count x (u32 len, id bytes) | count*dim f32 |
//            [approximate only] u32 entry | i32 max_level |
//            per node: u32 levels, per level: u32 n, n x u32 neighbour
// The checksum is FNV-1a 64 over the payload.

namespace detail {

inline constexpr char kIndexMagic[4] = {'E', 'R', 'I', 'X'};
inline constexpr std::uint32_t kIndexVersion = 1;
inline constexpr std::size_t kIndexHeaderSize = 4 + 4 + 4 + 8 + 1 + 4 + 4 + 4 + 8 + 8;

class ByteWriter {
 public:
  template <class T>
  void put(T v) {
    static_assert(std::is_integral_v<T>);
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
  }
  void put_f32(float f) { put(std::bit_cast<std::uint32_t>(f)); }
  void put_bytes(std::string_view s) { bytes.insert(bytes.end(), s.begin(), s.end()); }

  std::vector<std::uint8_t> bytes;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  template <class T>
  T get() {
    static_assert(std::is_integral_v<T>);
    need(sizeof(T));
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<std::make_unsigned_t<T>>(data_[pos_ + i]) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }
  float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw Error(ErrorCode::CorruptIndex, "index file truncated");
  }
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline void VectorIndex::save(const std::filesystem::path& path) const {
  std::shared_lock lock(*mu_);
  detail::ByteWriter payload;
  for (const auto& id : ids_) {
    payload.put(static_cast<std::uint32_t>(id.size()));
    payload.put_bytes(id);
  }
  for (float f : data_) payload.put_f32(f);
  if (mode_ == IndexMode::Approximate && !ids_.empty()) {
    payload.put(entry_);
    payload.put(static_cast<std::int32_t>(max_level_));
    for (const auto& node : links_) {
      payload.put(static_cast<std::uint32_t>(node.size()));
      for (const auto& level : node) {
        payload.put(static_cast<std::uint32_t>(level.size()));
        for (auto nb : level) payload.put(nb);
      }
    }
  }

  detail::ByteWriter header;
  header.put_bytes(std::string_view(detail::kIndexMagic, 4));
  header.put(detail::kIndexVersion);
  header.put(static_cast<std::uint32_t>(dim_));
  header.put(static_cast<std::uint64_t>(ids_.size()));
  header.put(static_cast<std::uint8_t>(mode_));
  header.put(params_.m);
  header.put(params_.ef_construction);
  header.put(params_.ef_search);
  header.put(params_.seed);
  header.put(fnv1a64(std::span<const std::uint8_t>(payload.bytes)));

  std::string file(header.bytes.begin(), header.bytes.end());
  file.append(payload.bytes.begin(), payload.bytes.end());
  io::write_file_atomic(path, file);
}

inline VectorIndex VectorIndex::load(const std::filesystem::path& path) {
  const auto raw = io::read_file(path);
  std::span<const std::uint8_t> bytes(reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size());
  if (bytes.size() < detail::kIndexHeaderSize) {
    throw Error(ErrorCode::CorruptIndex, path.string() + ": shorter than the header");
  }
  detail::ByteReader hdr(bytes.first(detail::kIndexHeaderSize));
  if (hdr.get_bytes(4) != std::string_view(detail::kIndexMagic, 4)) {
    throw Error(ErrorCode::CorruptIndex, path.string() + ": bad magic");
  }
  if (hdr.get<std::uint32_t>() != detail::kIndexVersion) {
    throw Error(ErrorCode::CorruptIndex, path.string() + ": unsupported version");
  }
  const auto dim = hdr.get<std::uint32_t>();
  const auto count = hdr.get<std::uint64_t>();
  const auto mode_byte = hdr.get<std::uint8_t>();
  HnswParams params;
  params.m = hdr.get<std::uint32_t>();
  params.ef_construction = hdr.get<std::uint32_t>();
  params.ef_search = hdr.get<std::uint32_t>();
  params.seed = hdr.get<std::uint64_t>();
  const auto checksum = hdr.get<std::uint64_t>();

  auto body = bytes.subspan(detail::kIndexHeaderSize);
  if (fnv1a64(body) != checksum) throw Error(ErrorCode::CorruptIndex, path.string() + ": checksum mismatch");
  if (dim == 0 || mode_byte > 1 || params.m < 2) {
    throw Error(ErrorCode::CorruptIndex, path.string() + ": invalid header fields");
  }

  VectorIndex index(dim, static_cast<IndexMode>(mode_byte), params);
  detail::ByteReader in(body);
  if (count > body.size()) throw Error(ErrorCode::CorruptIndex, "entry count exceeds file size");
  index.ids_.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    auto len = in.get<std::uint32_t>();
    auto id = in.get_bytes(len);
    if (!index.slot_of_.emplace(id, static_cast<std::uint32_t>(i)).second) {
      throw Error(ErrorCode::CorruptIndex, "duplicate id in index file");
    }
    index.ids_.push_back(std::move(id));
  }
  if (in.remaining() / 4 < count * dim) throw Error(ErrorCode::CorruptIndex, "index file truncated");
  index.data_.resize(count * dim);
  for (auto& f : index.data_) f = in.get_f32();
  index.norms_.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) index.norms_[i] = l2_norm(index.row(i));

  if (index.mode_ == IndexMode::Approximate && count > 0) {
    index.entry_ = in.get<std::uint32_t>();
    index.max_level_ = in.get<std::int32_t>();
    if (index.entry_ >= count || index.max_level_ < 0) throw Error(ErrorCode::CorruptIndex, "bad graph header");
    index.links_.resize(count);
    index.levels_.resize(count);
    for (std::uint64_t n = 0; n < count; ++n) {
      auto levels = in.get<std::uint32_t>();
      if (levels == 0 || levels > static_cast<std::uint32_t>(index.max_level_) + 1) {
        throw Error(ErrorCode::CorruptIndex, "bad node level count");
      }
      index.levels_[n] = static_cast<int>(levels) - 1;
      index.links_[n].resize(levels);
      for (auto& level : index.links_[n]) {
        auto deg = in.get<std::uint32_t>();
        if (deg > in.remaining() / 4) throw Error(ErrorCode::CorruptIndex, "index file truncated");
        level.resize(deg);
        for (auto& nb : level) {
          nb = in.get<std::uint32_t>();
          if (nb >= count) throw Error(ErrorCode::CorruptIndex, "neighbour out of range");
        }
      }
    }
    if (index.levels_[index.entry_] != index.max_level_) throw Error(ErrorCode::CorruptIndex, "bad entry level");
    index.rng_.seed(params.seed ^ count);
  }
  if (in.remaining() != 0) throw Error(ErrorCode::CorruptIndex, "trailing bytes in index file");
  return index;
}

}  // namespace elemrag
