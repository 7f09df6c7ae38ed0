#pragma once

// Annotation service: the corpus on disk plus a version counter per document, exposed as JSON
// request/response endpoints. Every mutation applies the matching annotation operation to the
// stored document and writes it back atomically.
//
//   GET  /docs                          document ids, versions and record counts
//   GET  /docs/{id}                     text, records ("names") and version
//   GET  /docs/{id}/mask                masked text
//   GET  /docs/{id}/validate            violations of the stored annotations
//   POST /docs/{id}/validate            violations of {"names": [...]} against the stored text
//   GET  /docs/{id}/index?text=..&case_insensitive=1  positions of a name string
//   GET  /docs/{id}/suggest             model spans not overlapping existing records
//   POST /docs/{id}/group-label         {"template", "labels", "version"}
//   POST /docs/{id}/save                {"names", "version"}; 409 when the version is stale
//   POST /compare                       {"doc": id, "a": {"names"}, "b": {"names"}}
//                                       or {"text": ..., "a": ..., "b": ...}
//
// Errors carry {"error": message} with 400 (bad payload), 404 (unknown document or path) or 409
// (version conflict).

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <vector>

#include "json.hpp"
#include "namerec/corpus.hpp"

namespace namerec {

/// Per-token labels for a document; used for pre-annotation suggestions.
using Tagger = std::function<std::vector<TokenLabel>(const LabeledDocument&)>;

/// Loads a CogNN or IsBERT checkpoint as a tagger, dispatching on the header's model field.
Tagger load_tagger(const std::filesystem::path& checkpoint);

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
};

class AnnotationService {
 public:
  /// Reads every document under `corpus_dir` (without position checks, so broken documents can
  /// still be validated). Versions start at 1.
  explicit AnnotationService(std::filesystem::path corpus_dir, Tagger tagger = {});

  /// Transport-independent dispatch. `query` holds decoded query parameters.
  ServiceResponse handle(const std::string& method, const std::string& path, const std::string& body,
                         const std::map<std::string, std::string>& query = {});

  /// Current stored copy of a document; throws std::out_of_range for unknown ids.
  AnnotatedDocument document(const std::string& id) const;
  long version(const std::string& id) const;

 private:
  struct Entry {
    AnnotatedDocument doc;
    long version = 1;
    mutable std::shared_mutex lock;
  };

  Entry* find(const std::string& id) const;
  ServiceResponse get_doc(Entry& e) const;
  ServiceResponse validate_doc(Entry& e, const std::string& method, const std::string& body) const;
  ServiceResponse index_doc(Entry& e, const std::map<std::string, std::string>& query) const;
  ServiceResponse suggest(Entry& e);
  ServiceResponse group_label_doc(Entry& e, const std::string& body);
  ServiceResponse save(Entry& e, const std::string& body);
  ServiceResponse compare_docs(const std::string& body) const;
  /// Swaps in `doc` when `expected` matches, writing it to disk first.
  ServiceResponse commit(Entry& e, AnnotatedDocument doc, long expected, nlohmann::json extra);

  std::filesystem::path dir_;
  std::map<std::string, std::unique_ptr<Entry>> docs_;
  Tagger tagger_;
  std::mutex tagger_lock_;  // one inference at a time
};

/// HTTP binding of a service: every GET and POST is routed to handle().
class HttpServer {
 public:
  explicit HttpServer(AnnotationService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Port 0 picks a free port. Returns the bound port, or -1 on failure.
  int bind(const std::string& host, int port);
  /// Blocks until stop() is called from another thread.
  bool run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace namerec
