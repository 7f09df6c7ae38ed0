#include "cli.hpp"

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "namerec/annotate.hpp"
#include "namerec/chunker.hpp"
#include "namerec/cognn.hpp"
#include "namerec/isbert.hpp"
#include "namerec/metrics.hpp"
#include "namerec/service.hpp"
#include "namerec/synth.hpp"

namespace namerec {

namespace fs = std::filesystem;

namespace {

/// A failed check that is the user's answer rather than a crash (exit 1).
struct ValidationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

std::vector<LabeledDocument> labeled_corpus(const fs::path& dir) {
  std::vector<LabeledDocument> out;
  for (const auto& d : read_corpus(dir)) out.push_back(materialize(d));
  if (out.empty()) throw std::runtime_error(dir.string() + " holds no documents");
  return out;
}

std::vector<Sequence> sentence_corpus(const fs::path& dir) {
  std::vector<Sequence> out;
  for (const auto& d : labeled_corpus(dir))
    for (auto& s : sentences_of(d)) out.push_back(std::move(s));
  return out;
}

OverlapPolicy parse_overlap(const std::string& s, std::size_t capacity) {
  if (s == "adaptive") return OverlapPolicy::adaptive_default(capacity);
  std::size_t used = 0;
  double r = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument("overlap must be a number or \"adaptive\"");
  return OverlapPolicy::fixed(r);
}

std::vector<std::string> split_labels(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Subcommand options.

struct TrainOpts {
  std::string train, dev, out, config, metrics, overlap, owner, axis;
  std::uint64_t seed = 1;
  int epochs = 0, hops = 0;
  bool baseline = false;
};

struct PredictOpts {
  std::string model, corpus, out;
};

struct EvalOpts {
  std::string pred, gold, level = "token", mode = "fine";
  bool strict = false;
};

struct SynthOpts {
  std::string out;
  std::uint64_t seed = 1;
  std::size_t docs = 20, sentences = 0;
  SynthParams params;
};

struct ChunkOpts {
  std::string doc, model, overlap = "0.5";
  std::size_t capacity = 512;
};

struct AnnotateOpts {
  std::string doc, corpus, templ, labels, text, a, b;
  bool ci = false, dry_run = false;
};

struct ServeOpts {
  std::string corpus, model, host = "127.0.0.1";
  int port = 8080;
};

void emit_progress(std::ostream& err, int epoch, const std::string& split, double f, double acc, double loss) {
  err << "epoch " << epoch << ' ' << split << " tokenF " << f << " acc " << acc << " loss " << loss << '\n';
}

int train_cognn_cmd(const TrainOpts& o, std::ostream& out, std::ostream& err) {
  CogNNConfig mc;
  TrainConfig tc;
  if (!o.config.empty()) parse_config_text(read_file(o.config), mc, tc);
  tc.seed = o.seed;
  if (o.epochs > 0) tc.max_epochs = o.epochs;
  if (o.baseline) mc.in_network = false;
  if (!o.axis.empty()) {
    auto a = parse_axis(o.axis);
    if (!a || (*a != Axis::Fml && *a != Axis::Fi)) throw std::invalid_argument("--axis must be FML or FI");
    mc.form_axis = *a;
  }
  auto train = sentence_corpus(o.train);
  auto dev = sentence_corpus(o.dev);
  CogNN model(mc, build_word_vocab(train, tc.min_word_count), tc.seed);
  auto result = train_cognn(model, train, dev, tc, [&](const EpochMetrics& m) {
    emit_progress(err, m.epoch, m.split, m.token_f, m.accuracy, m.loss);
  });
  model.save(o.out);
  if (!o.metrics.empty()) write_file(o.metrics, metrics_csv(result.log));
  out << "best_epoch " << result.best_epoch << " dev_accuracy " << result.best_accuracy << '\n';
  return kExitOk;
}

int train_isbert_cmd(const TrainOpts& o, std::ostream& out, std::ostream& err) {
  IsConfig mc;
  IsTrainConfig tc;
  if (!o.config.empty()) parse_isbert_config(read_file(o.config), mc, tc);
  tc.seed = o.seed;
  if (o.epochs > 0) tc.max_epochs = o.epochs;
  if (o.hops > 0) mc.hops = o.hops;
  if (!o.overlap.empty()) mc.policy = parse_overlap(o.overlap, mc.capacity);
  if (!o.owner.empty()) {
    auto w = parse_owner(o.owner);
    if (!w) throw std::invalid_argument("--owner must be first, last or average");
    mc.owner = *w;
  }
  auto train = labeled_corpus(o.train);
  auto dev = labeled_corpus(o.dev);
  IsBert model(mc, build_piece_vocab(train, tc.max_words, tc.min_word_count), tc.seed);
  auto result = train_isbert(model, train, dev, tc, [&](const IsMetrics& m) {
    emit_progress(err, m.epoch, m.split, m.token_f, m.accuracy, m.loss);
  });
  model.save(o.out);
  if (!o.metrics.empty()) write_file(o.metrics, metrics_csv(result.log));
  out << "best_epoch " << result.best_epoch << " dev_accuracy " << result.best_accuracy << '\n';
  return kExitOk;
}

int predict_cmd(const PredictOpts& o, std::ostream& out) {
  Tagger tagger = load_tagger(o.model);
  std::size_t names = 0;
  auto docs = read_corpus(o.corpus, false);
  for (const auto& d : docs) {
    LabeledDocument plain = materialize(AnnotatedDocument{d.doc_id, d.text, {}});
    auto labels = tagger(plain);
    auto pred = to_annotated(d.doc_id, d.text, plain.tokens, labels);
    names += decode_spans(labels).size();
    write_document(pred, o.out);
  }
  out << "documents " << docs.size() << " names " << names << '\n';
  return kExitOk;
}

int eval_cmd(const EvalOpts& o, std::ostream& out) {
  std::map<std::string, LabeledDocument> gold;
  for (auto& d : labeled_corpus(o.gold)) gold.emplace(d.doc_id, std::move(d));
  PrfReport total;
  for (const auto& p : labeled_corpus(o.pred)) {
    auto it = gold.find(p.doc_id);
    if (it == gold.end()) throw ValidationFailure("document " + p.doc_id + " has no gold counterpart");
    if (it->second.text != p.text) throw ValidationFailure("document " + p.doc_id + " has a different text in gold");
    if (o.level == "token") {
      total += token_prf(p.labels, it->second.labels, o.mode == "span" ? TokenMode::SpanOnly : TokenMode::FineGrained);
    } else {
      total += name_prf(decode_spans(p.labels), decode_spans(it->second.labels), o.strict);
    }
    gold.erase(it);
  }
  if (!gold.empty()) throw ValidationFailure("gold document " + gold.begin()->first + " has no prediction");
  out << "level,mode,precision,recall,f1,tp,fp,fn\n"
      << o.level << ',' << (o.level == "token" ? o.mode : (o.strict ? "strict" : "span")) << ',' << total.precision
      << ',' << total.recall << ',' << total.f1 << ',' << total.tp << ',' << total.fp << ',' << total.fn << '\n';
  return kExitOk;
}

int synth_cmd(SynthOpts o, std::ostream& out) {
  std::vector<AnnotatedDocument> docs;
  if (o.sentences > 0) {
    docs = synth_sentences(o.seed, o.sentences, o.params.pool_size);
  } else {
    o.params.num_docs = o.docs;
    docs = synth_generate(o.seed, o.params);
  }
  write_corpus(docs, o.out);
  out << "wrote " << docs.size() << " documents to " << o.out << '\n';
  return kExitOk;
}

int chunk_cmd(const ChunkOpts& o, std::ostream& out) {
  auto stored = read_document(o.doc, false);
  LabeledDocument doc = materialize(AnnotatedDocument{stored.doc_id, stored.text, {}});
  Vocabulary vocab = o.model.empty() ? build_piece_vocab({doc}, 100000, 1) : IsBert::load(o.model).vocabulary();
  auto td = tokenize_tokens(doc.tokens, vocab);
  auto stream = to_piece_stream(td, doc.sentence_ends);
  auto cd = chunk_document(stream, o.capacity, parse_overlap(o.overlap, o.capacity), doc.doc_id);
  out << "document " << cd.doc_id << " pieces " << stream.pieces.size() << " capacity " << cd.capacity << " ratio "
      << cd.ratio << " overlap " << cd.effective_k << " chunks " << cd.chunks.size() << '\n';
  for (std::size_t i = 0; i < cd.chunks.size(); ++i) {
    const Chunk& c = cd.chunks[i];
    out << "chunk " << i << " content [" << c.content_begin << ", " << c.content_end << ") overlap_prev "
        << c.overlap_prev << " :";
    for (const auto& p : c.pieces) out << ' ' << p;
    out << '\n';
  }
  return kExitOk;
}

/// Document folder, its id and its corpus root.
struct DocPath {
  fs::path dir, root;
};
DocPath doc_path(const std::string& s) {
  fs::path p = fs::path(s).lexically_normal();
  if (!p.has_filename()) p = p.parent_path();
  return {p, p.has_parent_path() ? p.parent_path() : fs::path(".")};
}

int group_label_cmd(const AnnotateOpts& o, std::ostream& out) {
  auto dp = doc_path(o.doc);
  auto doc = read_document(dp.dir);
  auto r = group_label(doc, o.templ, split_labels(o.labels));
  if (!o.dry_run) write_document(r.doc, dp.root);
  out << "applied " << r.applied.size() << " skipped " << r.skipped.size() << '\n';
  for (const auto& s : r.applied) out << "applied " << s.begin << ' ' << s.end << '\n';
  for (const auto& s : r.skipped) out << "skipped " << s.begin << ' ' << s.end << '\n';
  return kExitOk;
}

int validate_cmd(const AnnotateOpts& o, std::ostream& out) {
  std::vector<AnnotatedDocument> docs;
  std::size_t bad = 0;
  try {
    if (!o.doc.empty()) docs.push_back(read_document(doc_path(o.doc).dir, false));
    if (!o.corpus.empty()) {
      auto c = read_corpus(o.corpus, false);
      docs.insert(docs.end(), c.begin(), c.end());
    }
  } catch (const CorpusError& e) {
    out << e.doc_id() << '\t' << e.record() << "\tSchema\t0\t" << e.what() << '\n';
    return kExitFailure;
  }
  for (const auto& d : docs) {
    for (const auto& v : validate(d).violations) {
      out << d.doc_id << '\t' << v.record << '\t' << to_string(v.kind) << '\t' << v.position << '\t' << v.message
          << '\n';
      ++bad;
    }
  }
  out << "documents " << docs.size() << " violations " << bad << '\n';
  return bad == 0 ? kExitOk : kExitFailure;
}

int compare_cmd(const AnnotateOpts& o, std::ostream& out) {
  std::map<std::string, AnnotatedDocument> b;
  for (auto& d : read_corpus(o.b)) b.emplace(d.doc_id, std::move(d));
  std::size_t total = 0;
  out << "doc\tkind\tbegin\tend\ttext\tlabels_a\tlabels_b\n";
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
    return s.empty() ? std::string("-") : s;
  };
  for (const auto& a : read_corpus(o.a)) {
    auto it = b.find(a.doc_id);
    if (it == b.end()) throw ValidationFailure("document " + a.doc_id + " missing from " + o.b);
    for (const auto& d : compare(a, it->second)) {
      out << d.doc_id << '\t' << to_string(d.kind) << '\t' << d.span.begin << '\t' << d.span.end << '\t' << d.text
          << '\t' << join(d.labels_a) << '\t' << join(d.labels_b) << '\n';
      ++total;
    }
    out << "# " << a.doc_id << " kappa " << token_agreement(a, it->second) << '\n';
  }
  out << "# disagreements " << total << '\n';
  return kExitOk;
}

int serve_cmd(ServeOpts o, std::ostream& out) {
  if (o.corpus.empty()) {
    if (const char* env = std::getenv(kCorpusEnv)) o.corpus = env;
  }
  if (o.corpus.empty()) throw CLI::RequiredError(std::string("--corpus (or ") + kCorpusEnv + ")");
  Tagger tagger;
  if (!o.model.empty()) tagger = load_tagger(o.model);
  AnnotationService service(o.corpus, tagger);
  HttpServer server(service);
  int port = server.bind(o.host, o.port);
  if (port < 0) throw std::runtime_error("cannot bind " + o.host + ":" + std::to_string(o.port));
  out << "serving " << o.corpus << " on http://" << o.host << ':' << port << std::endl;
  return server.run() ? kExitOk : kExitFailure;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fine-grained person-name recognition toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  TrainOpts tco, tio;
  auto* tc = app.add_subcommand("train-cognn", "Train the coupled BiLSTM-CRF tagger (or its no-fusion baseline)");
  tc->add_option("--train", tco.train, "Training corpus")->required()->check(CLI::ExistingDirectory);
  tc->add_option("--dev", tco.dev, "Development corpus")->required()->check(CLI::ExistingDirectory);
  tc->add_option("--out", tco.out, "Checkpoint path")->required();
  tc->add_option("--config", tco.config, "key = value config file")->check(CLI::ExistingFile);
  tc->add_option("--seed", tco.seed, "Seed for initialisation, dropout and shuffling");
  tc->add_option("--epochs", tco.epochs, "Override max_epochs");
  tc->add_option("--axis", tco.axis, "Form axis of the second network: FML or FI");
  tc->add_flag("--baseline", tco.baseline, "Train the single-axis no-fusion baseline");
  tc->add_option("--metrics", tco.metrics, "Write the per-epoch metrics CSV here");

  auto* ti = app.add_subcommand("train-isbert", "Train the overlapped-chunk transformer tagger");
  ti->add_option("--train", tio.train, "Training corpus")->required()->check(CLI::ExistingDirectory);
  ti->add_option("--dev", tio.dev, "Development corpus")->required()->check(CLI::ExistingDirectory);
  ti->add_option("--out", tio.out, "Checkpoint path")->required();
  ti->add_option("--config", tio.config, "key = value config file")->check(CLI::ExistingFile);
  ti->add_option("--seed", tio.seed, "Seed for initialisation, dropout and shuffling");
  ti->add_option("--epochs", tio.epochs, "Override max_epochs");
  ti->add_option("--overlap", tio.overlap, "Overlap ratio in [0, 1) or \"adaptive\"");
  ti->add_option("--hops", tio.hops, "Forward/backward hops")->check(CLI::PositiveNumber);
  ti->add_option("--owner", tio.owner, "Overlap prediction owner: first, last or average");
  ti->add_option("--metrics", tio.metrics, "Write the per-epoch metrics CSV here");

  PredictOpts po;
  auto* pr = app.add_subcommand("predict", "Tag a corpus with a checkpoint and write predicted sidecars");
  pr->add_option("--model", po.model, "CogNN or IsBERT checkpoint")->required()->check(CLI::ExistingFile);
  pr->add_option("--corpus", po.corpus, "Input corpus")->required()->check(CLI::ExistingDirectory);
  pr->add_option("--out", po.out, "Output corpus directory")->required();

  EvalOpts eo;
  auto* ev = app.add_subcommand("eval", "Score a predicted corpus against a gold corpus");
  ev->add_option("--pred", eo.pred, "Predicted corpus")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--gold", eo.gold, "Gold corpus")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--level", eo.level, "token or name")->check(CLI::IsMember({"token", "name"}));
  ev->add_option("--mode", eo.mode, "Token scoring: span or fine")->check(CLI::IsMember({"span", "fine"}));
  ev->add_flag("--strict", eo.strict, "Name level: also require identical forms");

  SynthOpts so;
  auto* sy = app.add_subcommand("synth", "Generate a synthetic homepage corpus");
  sy->add_option("--out", so.out, "Output corpus directory")->required();
  sy->add_option("--seed", so.seed, "Generator seed");
  sy->add_option("--docs", so.docs, "Number of documents");
  sy->add_option("--sentences", so.sentences, "Emit this many standalone sentences instead of documents");
  sy->add_option("--min-sections", so.params.min_sections, "Sections per document, lower bound");
  sy->add_option("--max-sections", so.params.max_sections, "Sections per document, upper bound");
  sy->add_option("--min-lines", so.params.min_lines, "Lines per section, lower bound");
  sy->add_option("--max-lines", so.params.max_lines, "Lines per section, upper bound");
  sy->add_option("--repetition", so.params.repetition_rate, "Chance a mention reuses a person")->check(CLI::Range(0.0, 1.0));
  sy->add_option("--context", so.params.context_richness, "Share of biography sections")->check(CLI::Range(0.0, 1.0));
  sy->add_option("--ambiguity", so.params.ambiguity, "Share of bare list lines")->check(CLI::Range(0.0, 1.0));
  sy->add_option("--pool", so.params.pool_size, "Pseudo-word pool size");

  ChunkOpts co;
  auto* ck = app.add_subcommand("chunk-inspect", "Show how a document is cut into overlapped chunks");
  ck->add_option("--doc", co.doc, "Document folder")->required()->check(CLI::ExistingDirectory);
  ck->add_option("--capacity", co.capacity, "Pieces per chunk, specials included");
  ck->add_option("--overlap", co.overlap, "Overlap ratio or \"adaptive\"");
  ck->add_option("--model", co.model, "Take the piece vocabulary from an IsBERT checkpoint")->check(CLI::ExistingFile);

  AnnotateOpts ao;
  auto* an = app.add_subcommand("annotate", "Annotation operations on corpus documents");
  an->require_subcommand(1);
  auto* gl = an->add_subcommand("group-label", "Label every unannotated match of a template");
  gl->add_option("--doc", ao.doc, "Document folder")->required()->check(CLI::ExistingDirectory);
  gl->add_option("--template", ao.templ, "Name template, e.g. \"Full Full\" or \"X, Y.\"")->required();
  gl->add_option("--labels", ao.labels, "Comma-separated fused labels, one per labelled template token")->required();
  gl->add_flag("--dry-run", ao.dry_run, "Report matches without writing");
  auto* ix = an->add_subcommand("index", "Positions of a name string");
  ix->add_option("--doc", ao.doc, "Document folder")->required()->check(CLI::ExistingDirectory);
  ix->add_option("--text", ao.text, "Name string")->required();
  ix->add_flag("--ci", ao.ci, "Fold ASCII case");
  auto* mk = an->add_subcommand("mask", "Print the text with annotated names masked");
  mk->add_option("--doc", ao.doc, "Document folder")->required()->check(CLI::ExistingDirectory);
  auto* va = an->add_subcommand("validate", "Report annotation violations; exit 1 when any exist");
  va->add_option("--doc", ao.doc, "Document folder")->check(CLI::ExistingDirectory);
  va->add_option("--corpus", ao.corpus, "Corpus directory")->check(CLI::ExistingDirectory);
  auto* cm = an->add_subcommand("compare", "Disagreements between two annotations of one corpus");
  cm->add_option("--a", ao.a, "First corpus")->required()->check(CLI::ExistingDirectory);
  cm->add_option("--b", ao.b, "Second corpus")->required()->check(CLI::ExistingDirectory);

  ServeOpts svo;
  auto* sv = app.add_subcommand("serve", "Serve a corpus to the annotation workbench");
  sv->add_option("--corpus", svo.corpus, std::string("Corpus directory; defaults to $") + kCorpusEnv);
  sv->add_option("--port", svo.port, "TCP port; 0 picks a free one")->check(CLI::Range(0, 65535));
  sv->add_option("--host", svo.host, "Bind address");
  sv->add_option("--model", svo.model, "Checkpoint for suggestions")->check(CLI::ExistingFile);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
    if (va->parsed() && ao.doc.empty() && ao.corpus.empty())
      throw CLI::RequiredError("--doc or --corpus");
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (tc->parsed()) return train_cognn_cmd(tco, out, err);
    if (ti->parsed()) return train_isbert_cmd(tio, out, err);
    if (pr->parsed()) return predict_cmd(po, out);
    if (ev->parsed()) return eval_cmd(eo, out);
    if (sy->parsed()) return synth_cmd(so, out);
    if (ck->parsed()) return chunk_cmd(co, out);
    if (gl->parsed()) return group_label_cmd(ao, out);
    if (ix->parsed()) {
      for (auto p : index_positions(read_document(doc_path(ao.doc).dir, false), ao.text, ao.ci)) out << p << '\n';
      return kExitOk;
    }
    if (mk->parsed()) {
      out << mask(read_document(doc_path(ao.doc).dir));
      return kExitOk;
    }
    if (va->parsed()) return validate_cmd(ao, out);
    if (cm->parsed()) return compare_cmd(ao, out);
    if (sv->parsed()) return serve_cmd(svo, out);
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace namerec
