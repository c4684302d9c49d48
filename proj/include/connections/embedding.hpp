// Copyright 2026 The Connections Workbench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "connections/error.hpp"
#include "connections/word.hpp"

namespace connections {

/// Fixed-dimension real vector for one word. Never empty, never all-zero.
class EmbeddingVector {
 public:
  explicit EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw Error(ErrorCode::DimensionMismatch, "embedding has dimension 0");
    bool nonzero = false;
    for (double v : values_) {
      if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "non-finite embedding component");
      nonzero = nonzero || v != 0.0;
    }
    if (!nonzero) throw Error(ErrorCode::ZeroVector, "embedding is the zero vector");
  }

  std::size_t dim() const noexcept { return values_.size(); }
  const std::vector<double>& values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

 private:
  std::vector<double> values_;
};

using EmbeddingMap = std::map<std::string, EmbeddingVector>;

/// Identifies the vector space a cache belongs to.
struct EmbeddingFingerprint {
  std::string model_name;
  std::size_t dim = 0;
  std::string pooling;

  friend bool operator==(const EmbeddingFingerprint&, const EmbeddingFingerprint&) = default;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual EmbeddingFingerprint fingerprint() const = 0;
  /// One vector per input key, same order.
  virtual std::vector<std::vector<double>> embed_batch(const std::vector<std::string>& keys) = 0;

  std::size_t dim() const { return fingerprint().dim; }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/**
 * Seeded hash embedding. Each key maps to a unit vector whose components come
 * from a SplitMix64 stream seeded with FNV-1a(key) mixed with the seed, so
 * output depends only on integer arithmetic and is identical on every
 * platform.
 */
class DeterministicTestProvider final : public EmbeddingProvider {
 public:
  DeterministicTestProvider(std::uint64_t seed, std::size_t dim) : seed_(seed), dim_(dim) {
    if (dim_ < 2) throw Error(ErrorCode::InvalidArgument, "test provider needs dim >= 2");
  }

  EmbeddingFingerprint fingerprint() const override {
    return {"deterministic-test/seed=" + std::to_string(seed_), dim_, "hash"};
  }

  std::vector<std::vector<double>> embed_batch(const std::vector<std::string>& keys) override {
    std::vector<std::vector<double>> out;
    out.reserve(keys.size());
    for (const auto& k : keys) out.push_back(vector_for(k));
    return out;
  }

  std::vector<double> vector_for(const std::string& key) const {
    std::uint64_t state = detail::fnv1a64(key) ^ (seed_ * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL);
    std::vector<double> v(dim_);
    double norm2 = 0.0;
    do {
      norm2 = 0.0;
      for (auto& x : v) {
        // 53 random bits -> [-1, 1)
        x = static_cast<double>(detail::splitmix64(state) >> 11) * 0x1.0p-52 - 1.0;
        norm2 += x * x;
      }
    } while (norm2 == 0.0);
    double norm = std::sqrt(norm2);
    for (auto& x : v) x /= norm;
    return v;
  }

 private:
  std::uint64_t seed_;
  std::size_t dim_;
};

enum class ProviderKind { RemoteService, DeterministicTest };

struct EmbeddingProviderConfig {
  ProviderKind provider_kind = ProviderKind::DeterministicTest;
  std::optional<std::string> endpoint;
  std::string model_name = "GroNLP/hateBERT";
  std::size_t dim = 768;
  std::string pooling = "mean-last-layer";
  std::uint64_t seed = 7;
  std::string token_env = "EMBEDDING_API_TOKEN";

  void check() const {
    if (dim == 0) throw Error(ErrorCode::InvalidArgument, "embedding dim must be > 0");
    if (provider_kind == ProviderKind::RemoteService && (!endpoint || endpoint->empty())) {
      throw Error(ErrorCode::InvalidArgument, "remote embedding provider needs an endpoint");
    }
  }

  /// Reads `key = value` lines; `#` starts a comment. Recognised keys:
  /// provider (remote|test), endpoint, model_name, dim, pooling, seed, token_env.
  static EmbeddingProviderConfig parse(std::string_view text) {
    EmbeddingProviderConfig cfg;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw Error(ErrorCode::InvalidArgument, "config line " + std::to_string(lineno) + " has no '='");
      }
      std::string key = trim(line.substr(0, eq));
      std::string value = trim(line.substr(eq + 1));
      try {
        if (key == "provider") {
          if (value == "remote") cfg.provider_kind = ProviderKind::RemoteService;
          else if (value == "test") cfg.provider_kind = ProviderKind::DeterministicTest;
          else throw Error(ErrorCode::InvalidArgument, "unknown provider '" + value + "'");
        } else if (key == "endpoint") {
          cfg.endpoint = value;
        } else if (key == "model_name") {
          cfg.model_name = value;
        } else if (key == "dim") {
          cfg.dim = std::stoul(value);
        } else if (key == "pooling") {
          cfg.pooling = value;
        } else if (key == "seed") {
          cfg.seed = std::stoull(value);
        } else if (key == "token_env") {
          cfg.token_env = value;
        } else {
          throw Error(ErrorCode::InvalidArgument, "unknown config key '" + key + "'");
        }
      } catch (const std::logic_error&) {
        throw Error(ErrorCode::InvalidArgument, "bad value for '" + key + "': " + value);
      }
    }
    cfg.check();
    return cfg;
  }
};

/**
 * HTTP embedding service: POST a JSON array of strings, receive a JSON array
 * of float arrays in the same order. The service owns tokenization and
 * pooling; `pooling` is only recorded in the fingerprint.
 */
class RemoteEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit RemoteEmbeddingProvider(EmbeddingProviderConfig config) : config_(std::move(config)) {
    config_.check();
    auto url = *config_.endpoint;
    auto scheme_end = url.find("://");
    auto path_start = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    host_ = path_start == std::string::npos ? url : url.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
  }

  EmbeddingFingerprint fingerprint() const override {
    return {config_.model_name, config_.dim, config_.pooling};
  }

  std::vector<std::vector<double>> embed_batch(const std::vector<std::string>& keys) override {
    httplib::Client cli(host_);
    cli.set_read_timeout(120, 0);
    httplib::Headers headers;
    if (const char* tok = std::getenv(config_.token_env.c_str()); tok && *tok) {
      headers.emplace("Authorization", std::string("Bearer ") + tok);
    }
    auto res = cli.Post(path_, headers, nlohmann::json(keys).dump(), "application/json");
    if (!res || res->status < 200 || res->status >= 300) {
      throw Error(ErrorCode::ProviderUnavailable,
                  res ? "embedding service answered HTTP " + std::to_string(res->status)
                      : "embedding service unreachable: " + httplib::to_string(res.error()));
    }
    try {
      auto body = nlohmann::json::parse(res->body);
      auto out = body.get<std::vector<std::vector<double>>>();
      if (out.size() != keys.size()) {
        throw Error(ErrorCode::ProviderUnavailable, "embedding service returned wrong vector count");
      }
      return out;
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorCode::ProviderUnavailable, std::string("bad embedding response: ") + ex.what());
    }
  }

 private:
  EmbeddingProviderConfig config_;
  std::string host_;
  std::string path_;
};

inline std::unique_ptr<EmbeddingProvider> make_provider(const EmbeddingProviderConfig& cfg) {
  cfg.check();
  if (cfg.provider_kind == ProviderKind::RemoteService) {
    return std::make_unique<RemoteEmbeddingProvider>(cfg);
  }
  return std::make_unique<DeterministicTestProvider>(cfg.seed, cfg.dim);
}

/// Thread-safe key -> vector store tagged with the fingerprint of the space it
/// belongs to.
class EmbeddingCache {
 public:
  EmbeddingCache() = default;
  explicit EmbeddingCache(EmbeddingFingerprint fp) : fingerprint_(std::move(fp)) {}
  EmbeddingCache(const EmbeddingCache& other)
      : fingerprint_(other.fingerprint()), entries_(other.entries()) {}
  EmbeddingCache& operator=(const EmbeddingCache& other) {
    if (this == &other) return *this;
    auto fp = other.fingerprint();
    auto entries = other.entries();
    std::unique_lock lock(mu_);
    fingerprint_ = std::move(fp);
    entries_ = std::move(entries);
    return *this;
  }

  EmbeddingFingerprint fingerprint() const {
    std::shared_lock lock(mu_);
    return fingerprint_;
  }
  void set_fingerprint(EmbeddingFingerprint fp) {
    std::unique_lock lock(mu_);
    fingerprint_ = std::move(fp);
  }

  std::optional<EmbeddingVector> find(const std::string& key) const {
    std::shared_lock lock(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }
  void insert(const std::string& key, EmbeddingVector v) {
    std::unique_lock lock(mu_);
    entries_.insert_or_assign(key, std::move(v));
  }
  std::size_t size() const {
    std::shared_lock lock(mu_);
    return entries_.size();
  }
  EmbeddingMap entries() const {
    std::shared_lock lock(mu_);
    return entries_;
  }
  void clear() {
    std::unique_lock lock(mu_);
    entries_.clear();
  }

 private:
  mutable std::shared_mutex mu_;
  EmbeddingFingerprint fingerprint_;
  EmbeddingMap entries_;
};

inline constexpr std::string_view kCacheFormat = "connections-embedding-cache";
inline constexpr int kCacheVersion = 1;

/**
 * Loads a cache file. An empty file yields an empty cache. When `expected`
 * is given and the stored fingerprint differs, the stored entries are
 * discarded and an empty cache for `expected` is returned.
 */
inline EmbeddingCache cache_load(const std::filesystem::path& path,
                                 const std::optional<EmbeddingFingerprint>& expected = std::nullopt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open cache " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();

  EmbeddingCache cache(expected.value_or(EmbeddingFingerprint{}));
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return cache;

  try {
    auto j = nlohmann::json::parse(text);
    if (j.at("format").get<std::string>() != kCacheFormat || j.at("version").get<int>() != kCacheVersion) {
      throw Error(ErrorCode::CorruptCache, "unrecognised cache header in " + path.string());
    }
    const auto& f = j.at("fingerprint");
    EmbeddingFingerprint stored{f.at("model_name").get<std::string>(), f.at("dim").get<std::size_t>(),
                                f.at("pooling").get<std::string>()};
    if (expected && stored != *expected) return cache;
    cache.set_fingerprint(stored);
    for (const auto& [key, arr] : j.at("entries").items()) {
      auto values = arr.get<std::vector<double>>();
      if (values.size() != stored.dim) {
        throw Error(ErrorCode::CorruptCache, "entry '" + key + "' has wrong dimension");
      }
      cache.insert(key, EmbeddingVector(std::move(values)));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::CorruptCache, std::string("cannot read ") + path.string() + ": " + ex.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::CorruptCache) throw;
    throw Error(ErrorCode::CorruptCache, e.what());
  }
  return cache;
}

/// Writes through a temporary file and renames, so readers never see a
/// partially written cache.
inline void cache_store(const EmbeddingCache& cache, const std::filesystem::path& path) {
  auto fp = cache.fingerprint();
  nlohmann::json j;
  j["format"] = kCacheFormat;
  j["version"] = kCacheVersion;
  j["fingerprint"] = {{"model_name", fp.model_name}, {"dim", fp.dim}, {"pooling", fp.pooling}};
  nlohmann::json entries = nlohmann::json::object();
  for (const auto& [key, vec] : cache.entries()) entries[key] = vec.values();
  j["entries"] = std::move(entries);

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out << j.dump() << '\n';
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot replace " + path.string() + ": " + ec.message());
}

/**
 * Embeds each distinct key once. Cached keys are served from `cache`; the
 * rest go to the provider in one batch and are then added to the cache.
 * Result order is the key order of the map, independent of input order.
 */
inline EmbeddingMap embed_words(EmbeddingProvider& provider, const std::vector<Word>& words,
                                EmbeddingCache* cache = nullptr) {
  if (words.empty()) throw Error(ErrorCode::InvalidArgument, "no words to embed");
  const auto fp = provider.fingerprint();
  if (cache && cache->size() == 0 && cache->fingerprint() == EmbeddingFingerprint{}) {
    cache->set_fingerprint(fp);
  }
  if (cache && cache->fingerprint() != fp) {
    throw Error(ErrorCode::DimensionMismatch, "cache fingerprint does not match provider");
  }

  std::set<std::string> keys;
  for (const auto& w : words) keys.insert(w.key());

  EmbeddingMap out;
  std::vector<std::string> missing;
  for (const auto& k : keys) {
    if (cache) {
      if (auto hit = cache->find(k)) {
        out.emplace(k, std::move(*hit));
        continue;
      }
    }
    missing.push_back(k);
  }

  if (!missing.empty()) {
    auto vectors = provider.embed_batch(missing);
    if (vectors.size() != missing.size()) {
      throw Error(ErrorCode::ProviderUnavailable, "provider returned wrong vector count");
    }
    for (std::size_t i = 0; i < missing.size(); ++i) {
      if (vectors[i].size() != fp.dim) {
        throw Error(ErrorCode::DimensionMismatch,
                    "provider returned dim " + std::to_string(vectors[i].size()) + " for '" +
                        missing[i] + "', expected " + std::to_string(fp.dim),
                    missing[i]);
      }
      EmbeddingVector v(std::move(vectors[i]));
      if (cache) cache->insert(missing[i], v);
      out.emplace(missing[i], std::move(v));
    }
  }
  return out;
}

}  // namespace connections
