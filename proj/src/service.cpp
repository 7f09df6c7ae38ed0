#include "namerec/service.hpp"

#include <algorithm>
#include <stdexcept>
#include <utility>

#include "namerec/annotate.hpp"
#include "namerec/checkpoint.hpp"
#include "namerec/cognn.hpp"
#include "namerec/isbert.hpp"
#include "namerec/utf8.hpp"

// After Eigen: a system header pulled in here defines a macro that collides with Eigen names.
#include "httplib.h"

namespace namerec {

using nlohmann::json;

namespace {

ServiceResponse error(int status, const std::string& message) { return {status, json{{"error", message}}}; }

json records_json(const AnnotatedDocument& doc) { return json::parse(sidecar_json(doc))["names"]; }

/// Sidecar records from a request field; CorpusError on a schema violation.
std::vector<AnnotationRecord> records_from(const json& names, const std::string& doc_id) {
  if (!names.is_array()) throw CorpusError(doc_id, -1, "\"names\" must be an array");
  return parse_sidecar(json{{"names", names}}.dump(), doc_id);
}

json parse_body(const std::string& body) {
  json j = json::parse(body.empty() ? std::string("{}") : body);
  if (!j.is_object()) throw std::invalid_argument("request body must be an object");
  return j;
}

json span_json(const CharSpan& s) { return json{{"begin", s.begin}, {"end", s.end}}; }

json report_json(const ValidationReport& r) {
  json v = json::array();
  for (const auto& x : r.violations)
    v.push_back({{"kind", to_string(x.kind)}, {"record", x.record}, {"position", x.position}, {"message", x.message}});
  return json{{"ok", r.ok()}, {"violations", v}};
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::size_t i = 0;
  while (i < path.size()) {
    std::size_t j = path.find('/', i);
    if (j == std::string::npos) j = path.size();
    if (j > i) parts.push_back(path.substr(i, j - i));
    i = j + 1;
  }
  return parts;
}

/// Code point ranges of every annotated occurrence.
std::vector<CharSpan> occupied(const AnnotatedDocument& doc) {
  std::vector<CharSpan> out;
  for (const auto& r : doc.records) {
    std::size_t len = utf8::length(r.text);
    for (std::size_t p : r.positions) out.push_back({p, p + len});
  }
  return out;
}

long version_field(const json& body) {
  if (!body.contains("version") || !body["version"].is_number_integer())
    throw std::invalid_argument("\"version\" must be an integer");
  return body["version"].get<long>();
}

}  // namespace

Tagger load_tagger(const std::filesystem::path& checkpoint) {
  std::string kind = load_checkpoint(checkpoint).header.value("model", "");
  if (kind == "cognn") {
    auto model = std::make_shared<CogNN>(CogNN::load(checkpoint));
    return [model](const LabeledDocument& doc) {
      std::vector<TokenLabel> out(doc.tokens.size());
      std::size_t begin = 0;
      for (std::size_t end : doc.sentence_ends) {
        if (end > begin) {
          std::vector<std::string> words;
          for (std::size_t i = begin; i < end; ++i) words.push_back(doc.tokens[i].text);
          auto pred = model->predict(words);
          std::copy(pred.labels.begin(), pred.labels.end(), out.begin() + static_cast<std::ptrdiff_t>(begin));
        }
        begin = end;
      }
      return out;
    };
  }
  if (kind == "isbert") {
    auto model = std::make_shared<IsBert>(IsBert::load(checkpoint));
    return [model](const LabeledDocument& doc) { return model->predict(doc).labels; };
  }
  throw std::runtime_error(checkpoint.string() + ": unknown model type \"" + kind + "\"");
}

AnnotationService::AnnotationService(std::filesystem::path corpus_dir, Tagger tagger)
    : dir_(std::move(corpus_dir)), tagger_(std::move(tagger)) {
  for (auto& d : read_corpus(dir_, false)) {
    auto e = std::make_unique<Entry>();
    std::string id = d.doc_id;
    e->doc = std::move(d);
    docs_.emplace(id, std::move(e));
  }
}

AnnotationService::Entry* AnnotationService::find(const std::string& id) const {
  auto it = docs_.find(id);
  return it == docs_.end() ? nullptr : it->second.get();
}

AnnotatedDocument AnnotationService::document(const std::string& id) const {
  Entry* e = find(id);
  if (!e) throw std::out_of_range("unknown document " + id);
  std::shared_lock lock(e->lock);
  return e->doc;
}

long AnnotationService::version(const std::string& id) const {
  Entry* e = find(id);
  if (!e) throw std::out_of_range("unknown document " + id);
  std::shared_lock lock(e->lock);
  return e->version;
}

ServiceResponse AnnotationService::handle(const std::string& method, const std::string& path, const std::string& body,
                                          const std::map<std::string, std::string>& query) {
  auto parts = split_path(path);
  try {
    if (parts.size() == 1 && parts[0] == "compare") {
      if (method != "POST") return error(405, "use POST");
      return compare_docs(body);
    }
    if (parts.empty() || parts[0] != "docs" || parts.size() > 3) return error(404, "no such endpoint " + path);
    if (parts.size() == 1) {
      if (method != "GET") return error(405, "use GET");
      json list = json::array();
      for (const auto& [id, e] : docs_) {
        std::shared_lock lock(e->lock);
        list.push_back({{"id", id}, {"version", e->version}, {"records", e->doc.records.size()}});
      }
      return {200, json{{"docs", list}}};
    }
    Entry* e = find(parts[1]);
    if (!e) return error(404, "unknown document " + parts[1]);
    std::string action = parts.size() == 3 ? parts[2] : "";
    if (action.empty() && method == "GET") return get_doc(*e);
    if (action == "mask" && method == "GET") {
      std::shared_lock lock(e->lock);
      return {200, json{{"text", mask(e->doc)}}};
    }
    if (action == "validate") return validate_doc(*e, method, body);
    if (action == "index" && method == "GET") return index_doc(*e, query);
    if (action == "suggest" && method == "GET") return suggest(*e);
    if (action == "group-label" && method == "POST") return group_label_doc(*e, body);
    if (action == "save" && method == "POST") return save(*e, body);
    return error(404, "no such endpoint " + method + " " + path);
  } catch (const json::exception& ex) {
    return error(400, ex.what());
  } catch (const CorpusError& ex) {
    return error(400, ex.what());
  } catch (const std::invalid_argument& ex) {
    return error(400, ex.what());
  }
}

ServiceResponse AnnotationService::get_doc(Entry& e) const {
  std::shared_lock lock(e.lock);
  return {200, json{{"id", e.doc.doc_id}, {"text", e.doc.text}, {"names", records_json(e.doc)}, {"version", e.version}}};
}

ServiceResponse AnnotationService::validate_doc(Entry& e, const std::string& method, const std::string& body) const {
  if (method == "GET") {
    std::shared_lock lock(e.lock);
    return {200, report_json(validate(e.doc))};
  }
  if (method != "POST") return error(405, "use GET or POST");
  json req = parse_body(body);
  AnnotatedDocument doc;
  {
    std::shared_lock lock(e.lock);
    doc.doc_id = e.doc.doc_id;
    doc.text = e.doc.text;
  }
  doc.records = records_from(req.value("names", json()), doc.doc_id);
  return {200, report_json(validate(doc))};
}

ServiceResponse AnnotationService::index_doc(Entry& e, const std::map<std::string, std::string>& query) const {
  auto t = query.find("text");
  if (t == query.end() || t->second.empty()) return error(400, "missing text parameter");
  bool ci = false;
  if (auto c = query.find("case_insensitive"); c != query.end()) ci = c->second == "1" || c->second == "true";
  std::shared_lock lock(e.lock);
  return {200, json{{"positions", index_positions(e.doc, t->second, ci)}}};
}

ServiceResponse AnnotationService::suggest(Entry& e) {
  AnnotatedDocument doc;
  {
    std::shared_lock lock(e.lock);
    doc = e.doc;
  }
  json out = json::array();
  if (!tagger_) return {200, json{{"suggestions", out}}};

  LabeledDocument plain = materialize(AnnotatedDocument{doc.doc_id, doc.text, {}});
  std::vector<TokenLabel> labels;
  {
    std::lock_guard lock(tagger_lock_);
    labels = tagger_(plain);
  }
  if (labels.size() != plain.tokens.size()) throw std::runtime_error("tagger returned a wrong label count");

  auto taken = occupied(doc);
  AnnotatedDocument predicted = to_annotated(doc.doc_id, doc.text, plain.tokens, labels);
  for (const auto& r : predicted.records) {
    std::size_t len = utf8::length(r.text);
    for (std::size_t p : r.positions) {
      bool clash = std::any_of(taken.begin(), taken.end(), [&](const CharSpan& s) { return p < s.end && s.begin < p + len; });
      if (!clash) out.push_back({{"text", r.text}, {"positions", {p}}, {"labels", r.labels}});
    }
  }
  return {200, json{{"suggestions", out}}};
}

ServiceResponse AnnotationService::commit(Entry& e, AnnotatedDocument doc, long expected, json extra) {
  std::unique_lock lock(e.lock);
  if (expected != e.version)
    return {409, json{{"error", "version conflict"}, {"version", e.version}}};
  write_document(doc, dir_);
  e.doc = std::move(doc);
  ++e.version;
  extra["version"] = e.version;
  extra["names"] = records_json(e.doc);
  return {200, extra};
}

ServiceResponse AnnotationService::group_label_doc(Entry& e, const std::string& body) {
  json req = parse_body(body);
  long expected = version_field(req);
  if (!req.contains("template") || !req["template"].is_string()) return error(400, "\"template\" must be a string");
  auto labels = req.value("labels", std::vector<std::string>{});
  // Computed under the write lock so the result is the pure operation applied to the stored copy.
  std::unique_lock lock(e.lock);
  if (expected != e.version) return {409, json{{"error", "version conflict"}, {"version", e.version}}};
  GroupLabelResult r = group_label(e.doc, req["template"].get<std::string>(), labels);
  json extra{{"applied", json::array()}, {"skipped", json::array()}};
  for (const auto& s : r.applied) extra["applied"].push_back(span_json(s));
  for (const auto& s : r.skipped) extra["skipped"].push_back(span_json(s));
  lock.unlock();
  return commit(e, std::move(r.doc), expected, std::move(extra));
}

ServiceResponse AnnotationService::save(Entry& e, const std::string& body) {
  json req = parse_body(body);
  long expected = version_field(req);
  AnnotatedDocument doc;
  {
    std::shared_lock lock(e.lock);
    doc.doc_id = e.doc.doc_id;
    doc.text = e.doc.text;
  }
  doc.records = records_from(req.value("names", json()), doc.doc_id);
  if (auto report = validate(doc); !report.ok()) {
    json j = report_json(report);
    j["error"] = "annotations fail validation";
    return {400, j};
  }
  return commit(e, std::move(doc), expected, json::object());
}

ServiceResponse AnnotationService::compare_docs(const std::string& body) const {
  json req = parse_body(body);
  AnnotatedDocument a, b;
  if (req.contains("doc")) {
    std::string id = req["doc"].get<std::string>();
    Entry* e = find(id);
    if (!e) return error(404, "unknown document " + id);
    std::shared_lock lock(e->lock);
    a.doc_id = b.doc_id = id;
    a.text = b.text = e->doc.text;
  } else if (req.contains("text")) {
    a.doc_id = b.doc_id = req.value("id", std::string("inline"));
    a.text = b.text = req["text"].get<std::string>();
  } else {
    return error(400, "need \"doc\" or \"text\"");
  }
  if (!req.contains("a") || !req.contains("b")) return error(400, "need \"a\" and \"b\"");
  a.records = records_from(req["a"].value("names", json()), a.doc_id);
  b.records = records_from(req["b"].value("names", json()), b.doc_id);
  json out = json::array();
  for (const auto& d : compare(a, b))
    out.push_back({{"kind", to_string(d.kind)},
                   {"span", span_json(d.span)},
                   {"text", d.text},
                   {"labels_a", d.labels_a},
                   {"labels_b", d.labels_b},
                   {"details", d.details}});
  return {200, json{{"disagreements", out}, {"agreement", token_agreement(a, b)}}};
}

struct HttpServer::Impl {
  httplib::Server server;
};

HttpServer::HttpServer(AnnotationService& service) : impl_(std::make_unique<Impl>()) {
  auto route = [&service](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query.emplace(k, v);
    ServiceResponse r;
    try {
      r = service.handle(req.method, req.path, req.body, query);
    } catch (const std::exception& ex) {
      r = {500, json{{"error", ex.what()}}};
    }
    res.status = r.status;
    res.set_content(r.body.dump(2) + "\n", "application/json; charset=utf-8");
  };
  impl_->server.Get(".*", route);
  impl_->server.Post(".*", route);
}

HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool HttpServer::run() { return impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

}  // namespace namerec
