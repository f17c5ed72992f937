// Copyright 2026 The memescope Authors.
// SPDX-License-Identifier: Apache-2.0

#include "memescope/cli.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "memescope/attention.h"
#include "memescope/attribution.h"
#include "memescope/checkpoint.h"
#include "memescope/dataset.h"
#include "memescope/error.h"
#include "memescope/gradcheck.h"
#include "memescope/report.h"
#include "memescope/synth.h"
#include "memescope/train.h"

namespace memescope {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) throw ValidationError(what + " not found: " + path);
}

DatasetSplit read_split(const std::string& path) {
  require_file(path, "dataset file");
  return load_jsonl(path);
}

ModelCheckpoint read_checkpoint(const std::string& path) {
  require_file(path, "checkpoint file");
  try {
    return load_checkpoint(path);
  } catch (const LoadError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

json read_json_file(const std::string& path, const std::string& what) {
  require_file(path, what);
  std::ifstream in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(what + " " + path + " is not valid JSON: " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
  if (!out) throw ValidationError("failed writing " + path.string());
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

void emit(std::ostream& out, const json& j, const std::string& json_path) {
  const std::string text = dump(j);
  out << text;
  if (!json_path.empty()) write_text(json_path, text);
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::string vocab;
  std::string eval;
  std::string loss_log;
  std::optional<std::uint64_t> seed;
};

WordPieceVocab vocab_from_data(const DatasetSplit& split) {
  std::vector<std::string> words;
  for (const auto& r : split.records) {
    for (auto& w : pre_tokenize(r.text)) words.push_back(std::move(w));
  }
  std::sort(words.begin(), words.end());
  words.erase(std::unique(words.begin(), words.end()), words.end());
  return WordPieceVocab::from_tokens(words);
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const json cfg = read_json_file(a.config, "config file");
  if (!cfg.is_object()) throw ValidationError("config file " + a.config + " must hold an object");
  const DatasetSplit data = read_split(a.data);

  const json model_json = cfg.value("model", json::object());
  ModelConfig config = ModelConfig::from_json(model_json);
  // Feature width and region budget default to what the data carries.
  if (!model_json.contains("visual_feature_dim") && !data.empty()) {
    config.visual_feature_dim = data.feature_dim();
  }
  if (!model_json.contains("num_regions")) {
    std::size_t most = 1;
    for (const auto& r : data.records) most = std::max(most, r.regions.size());
    config.num_regions = most;
  }
  TrainOptions options = TrainOptions::from_json(cfg.value("train", json::object()));
  if (a.seed) options.seed = *a.seed;

  WordPieceVocab vocab;
  std::string vocab_path = a.vocab;
  if (vocab_path.empty() && cfg.contains("vocab")) {
    vocab_path = cfg["vocab"].get<std::string>();
    if (fs::path(vocab_path).is_relative()) {
      vocab_path = (fs::path(a.config).parent_path() / vocab_path).string();
    }
  }
  if (!vocab_path.empty()) {
    require_file(vocab_path, "vocabulary file");
    vocab = WordPieceVocab::load(vocab_path);
  } else {
    vocab = vocab_from_data(data);
  }

  TrainResult result = train(config, vocab, data, options);
  save_checkpoint(result.checkpoint, a.out);

  std::ostringstream log;
  log << "step\tloss\n";
  for (std::size_t i = 0; i < result.loss_history.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", result.loss_history[i]);
    log << i << '\t' << buf << '\n';
  }
  const std::string log_path = a.loss_log.empty() ? a.out + ".loss.tsv" : a.loss_log;
  write_text(log_path, log.str());

  json summary = {{"checkpoint", a.out},
                  {"hash", checkpoint_hash(result.checkpoint)},
                  {"loss_log", log_path},
                  {"config", result.checkpoint.config.to_json()},
                  {"train", options.to_json()},
                  {"final_loss", result.checkpoint.meta.final_loss},
                  {"train_accuracy", accuracy(result.checkpoint, data)}};
  if (!a.eval.empty()) summary["eval_accuracy"] = accuracy(result.checkpoint, read_split(a.eval));
  emit(out, summary, "");
  return kExitOk;
}

// --- stats -------------------------------------------------------------------

struct StatsArgs {
  std::vector<std::string> checkpoints;
  std::vector<std::string> names;
  std::string data;
  std::string target = "hateful-logit";
  std::string json_path;
};

int cmd_stats(const StatsArgs& a, std::ostream& out) {
  if (!a.names.empty() && a.names.size() != a.checkpoints.size()) {
    throw ValidationError("--name must be given once per --checkpoint");
  }
  const Target target = parse_target(a.target);
  const DatasetSplit data = read_split(a.data);
  if (data.empty()) throw ValidationError("dataset " + a.data + " is empty");

  std::vector<ModalityStats> rows;
  for (std::size_t i = 0; i < a.checkpoints.size(); ++i) {
    const std::string name =
        a.names.empty() ? fs::path(a.checkpoints[i]).stem().string() : a.names[i];
    rows.push_back(dataset_modality_stats(read_checkpoint(a.checkpoints[i]), data, target, name));
  }

  out << "Model | Text Avg | Text Std | Visual Avg | Visual Std\n";
  for (const auto& s : rows) {
    out << s.model << " | " << fixed3(s.text_avg) << " | " << fixed3(s.text_std) << " | "
        << fixed3(s.visual_avg) << " | " << fixed3(s.visual_std) << "\n";
  }
  json j = {{"dataset", a.data}, {"target", target_name(target)}, {"rows", json::array()}};
  for (const auto& s : rows) j["rows"].push_back(stats_to_json(s));
  if (!a.json_path.empty()) write_text(a.json_path, dump(j));
  return kExitOk;
}

// --- align / explain shared pieces --------------------------------------------

struct RecordArgs {
  std::string checkpoint;
  std::string data;
  std::string id;
  std::string image;
  std::string json_path;
  std::string html_path;
};

struct LoadedRecord {
  ModelCheckpoint ckpt;
  MemeRecord record;
  ModelInput input;
};

LoadedRecord load_record(const RecordArgs& a) {
  LoadedRecord l;
  l.ckpt = read_checkpoint(a.checkpoint);
  const DatasetSplit data = read_split(a.data);
  l.record = data.find(a.id);
  l.input = prepare_input(l.ckpt.config, l.ckpt.vocab, l.record);
  return l;
}

std::optional<std::string> image_for(const RecordArgs& a, const MemeRecord& r) {
  if (!a.image.empty()) return a.image;
  return r.image_path;
}

struct AlignOutcome {
  json j;
  std::vector<HeadPanel> panels;
};

AlignOutcome align_record(const LoadedRecord& l, const AttentionTrace& trace,
                          const std::string& keyword, std::size_t k_heads, std::size_t k_regions,
                          bool sep_only) {
  const std::vector<std::size_t> positions =
      keyword_positions(l.input.tokens, keyword, l.ckpt.vocab);
  if (positions.empty()) {
    throw NotFoundError("keyword '" + keyword + "' does not occur in record " + l.record.id);
  }
  AlignOutcome o;
  json heads = json::array();
  for (const HeadScore& h : top_alignment_heads(trace, positions, k_heads)) {
    HeadPanel panel;
    panel.layer = h.layer;
    panel.head = h.head;
    panel.peak_region_mass = h.peak_region_mass;
    panel.noop_mass = noop_mass(trace, positions, h.layer, h.head, sep_only);
    json regions = json::array();
    for (const RegionMass& rm : top_regions_for_head(trace, positions, h.layer, h.head, k_regions)) {
      const BoundingBox& box = l.input.boxes[rm.region];
      panel.regions.push_back({rm.region, box, rm.mass});
      regions.push_back({{"region", rm.region}, {"mass", rm.mass}, {"bbox", box}});
    }
    heads.push_back({{"layer", h.layer},
                     {"head", h.head},
                     {"peak_region_mass", h.peak_region_mass},
                     {"noop_mass", panel.noop_mass},
                     {"regions", regions}});
    o.panels.push_back(std::move(panel));
  }
  o.j = {{"record_id", l.record.id},
         {"keyword", keyword},
         {"positions", positions},
         {"noop", sep_only ? "sep" : "cls+sep"},
         {"heads", heads},
         {"alignment", alignment_to_json(align_keyword(trace, keyword, positions))}};
  return o;
}

ReportDocument base_document(const LoadedRecord& l, const Classification& c,
                             const std::optional<std::string>& image) {
  ReportDocument doc;
  doc.record_id = l.record.id;
  doc.text = l.record.text;
  doc.gold = l.record.label;
  doc.predicted = c.label;
  doc.p_hateful = c.p_hateful;
  doc.image_path = image;
  return doc;
}

json prediction_json(const MemeRecord& r, const Classification& c) {
  return {{"gold", label_name(r.label)},
          {"predicted", label_name(c.label)},
          {"p_hateful", c.p_hateful},
          {"logit", c.logit}};
}

// --- align -------------------------------------------------------------------

struct AlignArgs {
  RecordArgs rec;
  std::string keyword;
  std::size_t heads = 4;
  std::size_t regions = 9;
  bool sep_only = false;
};

int cmd_align(const AlignArgs& a, std::ostream& out) {
  const LoadedRecord l = load_record(a.rec);
  const ForwardResult fwd = forward(l.ckpt, l.input);
  AlignOutcome o = align_record(l, fwd.trace, a.keyword, a.heads, a.regions, a.sep_only);
  const Classification c = classify(fwd.logit);
  o.j["prediction"] = prediction_json(l.record, c);
  if (!a.rec.html_path.empty()) {
    ReportDocument doc = base_document(l, c, image_for(a.rec, l.record));
    doc.keyword = a.keyword;
    doc.heads = std::move(o.panels);
    write_text(a.rec.html_path, render_html(doc));
  }
  emit(out, o.j, a.rec.json_path);
  return kExitOk;
}

// --- explain -----------------------------------------------------------------

struct ExplainArgs {
  RecordArgs rec;
  std::string method = "ig";
  std::size_t steps = 64;
  std::string target = "hateful-logit";
};

AttributionResult attribute(const ModelCheckpoint& ckpt, const ModelInput& input,
                            const std::string& method, Target target, std::size_t steps) {
  if (method == "ig") return integrated_gradients(ckpt, input, target, {}, steps);
  if (method == "grad") return gradient_attribution(ckpt, input, target);
  throw ValidationError("unknown attribution method '" + method + "' (expected ig or grad)");
}

void fill_explanation(ReportDocument& doc, const AttributionResult& r,
                      const std::vector<WordScore>& words) {
  doc.method = method_name(r.method);
  doc.steps = r.steps;
  doc.words = words;
  doc.text_contrib = r.text_contrib;
  doc.visual_contrib = r.visual_contrib;
  doc.completeness_delta = r.completeness_delta;
}

int cmd_explain(const ExplainArgs& a, std::ostream& out) {
  const Target target = parse_target(a.target);
  if (a.method != "ig" && a.method != "grad") {
    throw ValidationError("unknown attribution method '" + a.method + "' (expected ig or grad)");
  }
  const LoadedRecord l = load_record(a.rec);
  const Classification c = classify(l.ckpt, l.input);
  const AttributionResult r = attribute(l.ckpt, l.input, a.method, target, a.steps);
  const std::vector<WordScore> words = token_scores(r, l.input.tokens);
  const json j = {{"prediction", prediction_json(l.record, c)},
                  {"attribution", attribution_to_json(r, words)}};
  if (!a.rec.html_path.empty()) {
    ReportDocument doc = base_document(l, c, image_for(a.rec, l.record));
    fill_explanation(doc, r, words);
    write_text(a.rec.html_path, render_html(doc));
  }
  emit(out, j, a.rec.json_path);
  return kExitOk;
}

// --- errors ------------------------------------------------------------------

struct ErrorsArgs {
  std::string checkpoint;
  std::string data;
  std::string type = "fp";
  std::string method = "ig";
  std::size_t steps = 64;
  std::size_t top = 10;
  std::size_t heads = 4;
  std::size_t regions = 9;
  std::string out_dir;
  std::string json_path;
};

int cmd_errors(const ErrorsArgs& a, std::ostream& out) {
  if (a.type != "fp" && a.type != "fn" && a.type != "all") {
    throw ValidationError("--type must be fp, fn or all, got '" + a.type + "'");
  }
  if (a.method != "ig" && a.method != "grad") {
    throw ValidationError("unknown attribution method '" + a.method + "' (expected ig or grad)");
  }
  const ModelCheckpoint ckpt = read_checkpoint(a.checkpoint);
  const DatasetSplit data = read_split(a.data);

  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  json records = json::array();
  // word -> (sum of positive per-record scores, records with a positive score)
  std::map<std::string, std::pair<double, std::size_t>> aggregate;

  for (const MemeRecord& record : data.records) {
    LoadedRecord l{ckpt, record, prepare_input(ckpt.config, ckpt.vocab, record)};
    const ForwardResult fwd = forward(ckpt, l.input);
    const Classification c = classify(fwd.logit);
    const bool gold_pos = record.label == Label::kHateful;
    const bool pred_pos = c.label == Label::kHateful;
    if (gold_pos && pred_pos) ++tp;
    if (!gold_pos && pred_pos) ++fp;
    if (!gold_pos && !pred_pos) ++tn;
    if (gold_pos && !pred_pos) ++fn;
    const bool selected = (a.type == "fp" && !gold_pos && pred_pos) ||
                          (a.type == "fn" && gold_pos && !pred_pos) ||
                          (a.type == "all" && gold_pos != pred_pos);
    if (!selected) continue;

    const AttributionResult r =
        attribute(ckpt, l.input, a.method, Target::kHatefulLogit, a.steps);
    const std::vector<WordScore> words = token_scores(r, l.input.tokens);
    std::map<std::string, double> per_record;
    for (const WordScore& w : words) per_record[w.word] += w.score;
    for (const auto& [word, score] : per_record) {
      if (score > 0.0) {
        aggregate[word].first += score;
        aggregate[word].second += 1;
      }
    }
    records.push_back({{"id", record.id},
                       {"gold", label_name(record.label)},
                       {"predicted", label_name(c.label)},
                       {"p_hateful", c.p_hateful}});

    if (!a.out_dir.empty()) {
      json report = {{"prediction", prediction_json(record, c)},
                     {"attribution", attribution_to_json(r, words)}};
      ReportDocument doc = base_document(l, c, record.image_path);
      fill_explanation(doc, r, words);
      // Align on the record's most positively attributed word that maps to pieces.
      std::vector<const WordScore*> ranked;
      for (const WordScore& w : words) ranked.push_back(&w);
      std::stable_sort(ranked.begin(), ranked.end(),
                       [](const WordScore* x, const WordScore* y) { return x->score > y->score; });
      for (const WordScore* w : ranked) {
        if (w->score <= 0.0) break;
        if (keyword_positions(l.input.tokens, w->word, ckpt.vocab).empty()) continue;
        AlignOutcome o = align_record(l, fwd.trace, w->word, a.heads, a.regions, false);
        report["alignment"] = std::move(o.j);
        doc.keyword = w->word;
        doc.heads = std::move(o.panels);
        break;
      }
      const fs::path dir(a.out_dir);
      write_text(dir / (record.id + ".json"), dump(report));
      write_text(dir / (record.id + ".html"), render_html(doc));
    }
  }

  struct Row {
    std::string word;
    double score;
    std::size_t df;
    double mean;
  };
  std::vector<Row> rows;
  for (const auto& [word, acc] : aggregate) {
    const double mean = acc.first / static_cast<double>(acc.second);
    rows.push_back({word, mean * static_cast<double>(acc.second), acc.second, mean});
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const Row& x, const Row& y) { return x.score > y.score; });
  if (rows.size() > a.top) rows.resize(a.top);
  json top = json::array();
  for (const Row& r : rows) {
    top.push_back({{"word", r.word},
                   {"score", r.score},
                   {"doc_freq", r.df},
                   {"mean_positive_score", r.mean}});
  }
  const json summary = {{"type", a.type},
                        {"method", a.method},
                        {"confusion", {{"tp", tp}, {"fp", fp}, {"tn", tn}, {"fn", fn}}},
                        {"count", records.size()},
                        {"records", records},
                        {"top_words", top}};
  if (!a.out_dir.empty()) write_text(fs::path(a.out_dir) / "summary.json", dump(summary));
  emit(out, summary, a.json_path);
  return kExitOk;
}

// --- gradcheck ---------------------------------------------------------------

struct GradcheckArgs {
  bool fresh = false;
  std::string checkpoint;
  std::string data;
  std::string id;
  std::size_t samples = 200;
  std::uint64_t seed = 0;
  double step = 1e-5;
  double tolerance = 1e-4;
  std::string fault_op;
  double fault_factor = 1.5;
  std::string json_path;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out, std::ostream& err) {
  if (a.fresh == !a.checkpoint.empty()) {
    throw ValidationError("gradcheck needs exactly one of --fresh or --checkpoint");
  }
  if (a.samples < 1) throw ValidationError("--samples must be >= 1");
  ModelCheckpoint ckpt;
  if (a.fresh) {
    const WordPieceVocab vocab = synth_generate(SyntheticSpec{}).vocab;
    ckpt = make_checkpoint(gradcheck_default_config(vocab.size()), vocab, a.seed);
  } else {
    ckpt = read_checkpoint(a.checkpoint);
  }
  MemeRecord record;
  if (!a.data.empty()) {
    const DatasetSplit data = read_split(a.data);
    if (data.empty()) throw ValidationError("dataset " + a.data + " is empty");
    record = a.id.empty() ? data.records.front() : data.find(a.id);
  } else {
    record = random_record(ckpt.config, ckpt.vocab, a.seed);
  }
  ModelGradCheckOptions options;
  options.samples = a.samples;
  options.seed = a.seed;
  options.step = a.step;
  if (!a.fault_op.empty()) {
    options.fault_op = a.fault_op;
    options.fault_factor = a.fault_factor;
  }
  const ModelGradCheckReport report =
      model_grad_check(ckpt, prepare_input(ckpt.config, ckpt.vocab, record), options);
  json j = gradcheck_to_json(report, a.tolerance);
  j["model"] = a.fresh ? "fresh" : a.checkpoint;
  j["record_id"] = record.id;
  j["seed"] = a.seed;
  j["step"] = a.step;
  if (options.fault_op) j["fault"] = {{"op", *options.fault_op}, {"factor", a.fault_factor}};
  emit(out, j, a.json_path);
  if (report.max_relative_error > a.tolerance) {
    err << "gradcheck failed: max relative error " << report.max_relative_error << " at "
        << report.worst.path << " (analytic " << report.worst.analytic << ", numeric "
        << report.worst.numeric << ")\n";
    return kExitInternal;
  }
  return kExitOk;
}

// --- synth -------------------------------------------------------------------

struct SynthArgs {
  std::string spec;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::string rule;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  SyntheticSpec spec;
  if (!a.spec.empty()) spec = SyntheticSpec::from_json(read_json_file(a.spec, "spec file"));
  if (a.seed) spec.seed = *a.seed;
  if (!a.rule.empty()) spec.rule = parse_rule(a.rule);
  const SyntheticDataset ds = synth_generate(spec);

  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  save_jsonl(ds.train, dir / "train.jsonl");
  save_jsonl(ds.test, dir / "test.jsonl");
  save_truth(ds.truth, dir / "truth.jsonl");
  ds.vocab.save(dir / "vocab.txt");
  std::string header = "# memescope synthetic dataset\n# regenerate with: memescope synth --spec <this spec> --out-dir <dir>\n";
  std::istringstream lines(spec.to_json().dump(2));
  for (std::string line; std::getline(lines, line);) header += "# " + line + "\n";
  write_text(dir / "header.txt", header);

  const SplitStats tr = split_stats(ds.train), te = split_stats(ds.test);
  emit(out,
       {{"out_dir", a.out_dir},
        {"spec", spec.to_json()},
        {"files", {"train.jsonl", "test.jsonl", "truth.jsonl", "vocab.txt", "header.txt"}},
        {"train", {{"hateful", tr.hateful}, {"nonhateful", tr.nonhateful}}},
        {"test", {{"hateful", te.hateful}, {"nonhateful", te.nonhateful}}}},
       "");
  return kExitOk;
}

void add_record_options(CLI::App* cmd, RecordArgs& r) {
  cmd->add_option("--checkpoint", r.checkpoint, "Checkpoint file")->required();
  cmd->add_option("--data", r.data, "Dataset JSONL holding the record")->required();
  cmd->add_option("--id", r.id, "Record id")->required();
  cmd->add_option("--image", r.image, "Image file drawn under the overlays");
  cmd->add_option("--json", r.json_path, "Also write the JSON output here");
  cmd->add_option("--html", r.html_path, "Write a self-contained HTML report here");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"memescope: attribution and attention analysis for multimodal classifiers",
               "memescope"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a classifier checkpoint");
  train_cmd->add_option("--config", train_args.config, "JSON with model, train and vocab keys")
      ->required();
  train_cmd->add_option("--data", train_args.data, "Training JSONL")->required();
  train_cmd->add_option("--out", train_args.out, "Output checkpoint path")->required();
  train_cmd->add_option("--vocab", train_args.vocab, "Vocabulary file (one token per line)");
  train_cmd->add_option("--eval", train_args.eval, "Held-out JSONL to report accuracy on");
  train_cmd->add_option("--loss-log", train_args.loss_log, "Loss log path (default <out>.loss.tsv)");
  train_cmd->add_option("--seed", train_args.seed, "Overrides train.seed");

  StatsArgs stats_args;
  auto* stats_cmd = app.add_subcommand("stats", "Modality contribution table");
  stats_cmd->add_option("--checkpoint", stats_args.checkpoints, "Checkpoint(s), one row each")
      ->required();
  stats_cmd->add_option("--name", stats_args.names, "Row name per checkpoint (default file stem)");
  stats_cmd->add_option("--data", stats_args.data, "Dataset JSONL")->required();
  stats_cmd->add_option("--target", stats_args.target, "hateful-logit or predicted-logit")
      ->capture_default_str();
  stats_cmd->add_option("--json", stats_args.json_path, "Write the JSON rows here");

  AlignArgs align_args;
  auto* align_cmd = app.add_subcommand("align", "Keyword-to-region attention alignment");
  add_record_options(align_cmd, align_args.rec);
  align_cmd->add_option("--keyword", align_args.keyword, "Word or word piece")->required();
  align_cmd->add_option("--heads", align_args.heads, "Heads to report")->capture_default_str();
  align_cmd->add_option("--regions", align_args.regions, "Regions per head")->capture_default_str();
  align_cmd->add_flag("--sep-only", align_args.sep_only, "No-op mass counts [SEP] only");

  ExplainArgs explain_args;
  auto* explain_cmd = app.add_subcommand("explain", "Word and region attributions");
  add_record_options(explain_cmd, explain_args.rec);
  explain_cmd->add_option("--method", explain_args.method, "ig or grad")->capture_default_str();
  explain_cmd->add_option("--steps", explain_args.steps, "Integrated gradients steps")
      ->capture_default_str();
  explain_cmd->add_option("--target", explain_args.target, "hateful-logit or predicted-logit")
      ->capture_default_str();

  ErrorsArgs errors_args;
  auto* errors_cmd = app.add_subcommand("errors", "Misclassification analysis");
  errors_cmd->add_option("--checkpoint", errors_args.checkpoint, "Checkpoint file")->required();
  errors_cmd->add_option("--data", errors_args.data, "Dataset JSONL")->required();
  errors_cmd->add_option("--type", errors_args.type, "fp, fn or all")->capture_default_str();
  errors_cmd->add_option("--method", errors_args.method, "ig or grad")->capture_default_str();
  errors_cmd->add_option("--steps", errors_args.steps, "Integrated gradients steps")
      ->capture_default_str();
  errors_cmd->add_option("--top", errors_args.top, "Aggregate words to list")->capture_default_str();
  errors_cmd->add_option("--heads", errors_args.heads, "Heads per report")->capture_default_str();
  errors_cmd->add_option("--regions", errors_args.regions, "Regions per head")->capture_default_str();
  errors_cmd->add_option("--out-dir", errors_args.out_dir, "Write per-record reports here");
  errors_cmd->add_option("--json", errors_args.json_path, "Also write the summary here");

  GradcheckArgs gc_args;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the logit gradient");
  gc_cmd->add_flag("--fresh", gc_args.fresh, "Randomly initialized default model");
  gc_cmd->add_option("--checkpoint", gc_args.checkpoint, "Check this checkpoint instead");
  gc_cmd->add_option("--data", gc_args.data, "Dataset JSONL for the input (default: random)");
  gc_cmd->add_option("--id", gc_args.id, "Record id within --data (default: first)");
  gc_cmd->add_option("--samples", gc_args.samples, "Coordinates to check")->capture_default_str();
  gc_cmd->add_option("--seed", gc_args.seed, "Seed for init, input and sampling")
      ->capture_default_str();
  gc_cmd->add_option("--step", gc_args.step, "Central difference step")->capture_default_str();
  gc_cmd->add_option("--tolerance", gc_args.tolerance, "Max relative error")->capture_default_str();
  gc_cmd->add_option("--fault-op", gc_args.fault_op, "Corrupt the backward of this op");
  gc_cmd->add_option("--fault-factor", gc_args.fault_factor, "Gradient scale for --fault-op")
      ->capture_default_str();
  gc_cmd->add_option("--json", gc_args.json_path, "Also write the JSON report here");

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a planted synthetic dataset");
  synth_cmd->add_option("--spec", synth_args.spec, "Synthetic spec JSON (default built-in)");
  synth_cmd->add_option("--out-dir", synth_args.out_dir, "Output directory")->required();
  synth_cmd->add_option("--seed", synth_args.seed, "Overrides the spec seed");
  synth_cmd->add_option("--rule", synth_args.rule, "text-only, visual-only or conjunction");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*train_cmd) return cmd_train(train_args, out);
    if (*stats_cmd) return cmd_stats(stats_args, out);
    if (*align_cmd) return cmd_align(align_args, out);
    if (*explain_cmd) return cmd_explain(explain_args, out);
    if (*errors_cmd) return cmd_errors(errors_args, out);
    if (*gc_cmd) return cmd_gradcheck(gc_args, out, err);
    if (*synth_cmd) return cmd_synth(synth_args, out);
  } catch (const NotFoundError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNotFound;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const LoadError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const IndexError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const nlohmann::json::exception& e) {
    err << "error: malformed JSON input: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  err << "error: no command given\n";
  return kExitValidation;
}

}  // namespace memescope
