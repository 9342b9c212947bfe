#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "mtrx/error.hpp"
#include "mtrx/meta_action.hpp"
#include "mtrx/reasoning.hpp"
#include "mtrx/semantic_encoding.hpp"

namespace mtrx {

/// One stored experience: description, reasoning process, decision, tools, metadata.
struct ScenarioDocument {
  std::string doc_id;
  std::string scenario_description;
  std::vector<ReasoningStep> reasoning_process;
  MetaAction high_level_decision;
  std::vector<std::string> tools_used;
  Json metadata = Json::object();  // requires "source" and "created_at"
  EmbeddingVector embedding;
  EncoderDescriptor encoder;

  friend bool operator==(const ScenarioDocument&, const ScenarioDocument&) = default;
};

struct RetrievalResult {
  std::string doc_id;
  double score = 0.0;
  std::size_t rank = 0;

  friend bool operator==(const RetrievalResult&, const RetrievalResult&) = default;
};

inline constexpr std::size_t kDefaultTopK = 3;
inline constexpr double kDefaultRelevanceThreshold = 0.35;

/// Throws InvariantViolation naming the first clause `doc` breaks.
inline void validate_document(const ScenarioDocument& doc) {
  auto violated = [&doc](const std::string& clause) {
    fail(ErrorCode::InvariantViolation, "document '" + doc.doc_id + "': " + clause);
  };
  if (doc.doc_id.empty()) violated("doc_id must be non-empty");
  if (doc.embedding.dims() != doc.encoder.dims) violated("embedding.dims == encoder.dims");
  if (doc.reasoning_process.empty()) violated("reasoning_process non-empty");
  const auto* decision = doc.reasoning_process.back().as<DecisionStep>();
  if (!decision) violated("reasoning_process ends with a decision step");
  if (decision->action != doc.high_level_decision)
    violated("final decision step equals high_level_decision");
  std::set<std::string> called;
  for (const auto& step : doc.reasoning_process)
    if (const auto* call = step.as<ToolCallStep>()) called.insert(call->invocation.tool_name);
  for (const auto& tool : doc.tools_used)
    if (!called.count(tool)) violated("tools_used contains '" + tool + "' with no matching tool call");
  if (!doc.metadata.is_object() || !doc.metadata.contains("source"))
    violated("metadata requires key 'source'");
  if (!doc.metadata.contains("created_at")) violated("metadata requires key 'created_at'");
}

/// Orders retrieval candidates: score descending, then doc_id ascending.
struct RankBefore {
  bool operator()(const RetrievalResult& a, const RetrievalResult& b) const noexcept {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
  }
};

/// Keeps results with score >= threshold, order preserved.
inline std::vector<RetrievalResult> relevance_gate(std::span<const RetrievalResult> results,
                                                   double threshold) {
  std::vector<RetrievalResult> kept;
  for (const auto& r : results)
    if (r.score >= threshold) kept.push_back(r);
  return kept;
}

/// Immutable view of the base at one point in time.
class BaseSnapshot {
 public:
  BaseSnapshot(EncoderDescriptor encoder, std::vector<ScenarioDocument> docs)
      : encoder_(std::move(encoder)), docs_(std::move(docs)) {}

  const EncoderDescriptor& encoder() const noexcept { return encoder_; }
  std::span<const ScenarioDocument> documents() const noexcept { return docs_; }
  std::size_t size() const noexcept { return docs_.size(); }

  const ScenarioDocument* find(std::string_view doc_id) const noexcept {
    for (const auto& d : docs_)
      if (d.doc_id == doc_id) return &d;
    return nullptr;
  }

  /// Exact linear-scan top-k by cosine similarity.
  std::vector<RetrievalResult> retrieve_top_k(const EmbeddingVector& query, std::size_t k) const {
    if (query.dims() != encoder_.dims)
      fail(ErrorCode::DimensionMismatch, "query dims " + std::to_string(query.dims()) +
                                             " vs base dims " + std::to_string(encoder_.dims));
    if (k == 0) fail(ErrorCode::InvariantViolation, "k must be >= 1");
    const std::size_t n = std::min(k, docs_.size());
    if (n == 0) return {};
    // Bounded heap whose front is the worst retained candidate.
    std::vector<RetrievalResult> heap;
    heap.reserve(n);
    const RankBefore before;
    for (const auto& d : docs_) {
      RetrievalResult candidate{d.doc_id, cosine_similarity(query, d.embedding), 0};
      if (heap.size() < n) {
        heap.push_back(std::move(candidate));
        std::push_heap(heap.begin(), heap.end(), before);
      } else if (before(candidate, heap.front())) {
        std::pop_heap(heap.begin(), heap.end(), before);
        heap.back() = std::move(candidate);
        std::push_heap(heap.begin(), heap.end(), before);
      }
    }
    std::sort_heap(heap.begin(), heap.end(), before);
    for (std::size_t i = 0; i < heap.size(); ++i) heap[i].rank = i + 1;
    return heap;
  }

  friend bool operator==(const BaseSnapshot&, const BaseSnapshot&) = default;

 private:
  friend class ExperienceBase;

  void append(std::vector<ScenarioDocument> docs) {
    for (auto& d : docs) docs_.push_back(std::move(d));
  }

  EncoderDescriptor encoder_;
  std::vector<ScenarioDocument> docs_;
};

/// Driving experience base. Readers take immutable snapshots; writers are serialized and
/// publish a new snapshot, so a reader never sees a partially applied add.
class ExperienceBase {
 public:
  explicit ExperienceBase(EncoderDescriptor encoder)
      : encoder_(encoder),
        current_(std::make_shared<BaseSnapshot>(std::move(encoder), std::vector<ScenarioDocument>{})) {}

  explicit ExperienceBase(BaseSnapshot snapshot)
      : encoder_(snapshot.encoder()), current_(std::make_shared<BaseSnapshot>(std::move(snapshot))) {
    for (const auto& d : current_->documents()) ids_.insert(d.doc_id);
  }

  std::shared_ptr<const BaseSnapshot> snapshot() const {
    std::lock_guard lock(publish_mutex_);
    return current_;
  }

  // The descriptor never changes after construction.
  const EncoderDescriptor& encoder() const noexcept { return encoder_; }
  std::size_t size() const { return snapshot()->size(); }

  std::string add_document(ScenarioDocument doc) {
    std::vector<ScenarioDocument> batch;
    batch.push_back(std::move(doc));
    return add_documents(std::move(batch)).front();
  }

  /// All-or-nothing: either every document is added or none is.
  std::vector<std::string> add_documents(std::vector<ScenarioDocument> docs) {
    std::lock_guard writer(write_mutex_);
    const EncoderDescriptor enc = encoder();
    std::unordered_set<std::string> pending;
    for (const auto& doc : docs) {
      if (doc.encoder != enc)
        fail(ErrorCode::EncoderMismatch, "document '" + doc.doc_id + "' encoded by '" +
                                             doc.encoder.encoder_id + "' v" + doc.encoder.version +
                                             ", base uses '" + enc.encoder_id + "' v" + enc.version);
      if (doc.embedding.dims() != enc.dims)
        fail(ErrorCode::EncoderMismatch, "document '" + doc.doc_id + "' has " +
                                             std::to_string(doc.embedding.dims()) +
                                             " dims, base has " + std::to_string(enc.dims));
      validate_document(doc);
      if (ids_.count(doc.doc_id) || !pending.insert(doc.doc_id).second)
        fail(ErrorCode::DuplicateId, "doc_id '" + doc.doc_id + "' already present");
    }
    std::vector<std::string> added;
    added.reserve(docs.size());
    for (const auto& d : docs) added.push_back(d.doc_id);

    // Append in place when no reader holds the current snapshot; otherwise publish a copy.
    std::shared_ptr<BaseSnapshot> shared;
    {
      std::lock_guard lock(publish_mutex_);
      if (current_.use_count() == 1)
        current_->append(std::move(docs));
      else
        shared = current_;
    }
    if (shared) {
      auto next = std::make_shared<BaseSnapshot>(*shared);
      shared.reset();
      next->append(std::move(docs));
      std::lock_guard lock(publish_mutex_);
      current_ = std::move(next);
    }
    for (const auto& id : added) ids_.insert(id);
    return added;
  }

  std::vector<RetrievalResult> retrieve_top_k(const EmbeddingVector& query, std::size_t k) const {
    return snapshot()->retrieve_top_k(query, k);
  }

 private:
  EncoderDescriptor encoder_;
  mutable std::mutex publish_mutex_;
  std::mutex write_mutex_;
  std::shared_ptr<BaseSnapshot> current_;
  std::unordered_set<std::string> ids_;
};

}  // namespace mtrx
