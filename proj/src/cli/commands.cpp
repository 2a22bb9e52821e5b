#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "vulmtl/cli.hpp"
#include "vulmtl/encoder.hpp"
#include "vulmtl/errors.hpp"
#include "vulmtl/training.hpp"

namespace vulmtl {

namespace {

std::vector<Record> load_or_die(const std::string& path) {
  LoadSummary sum = load_dataset(path);
  if (sum.malformed > 0) {
    std::cerr << path << ": " << sum.malformed << " of " << sum.total_lines
              << " lines malformed, continuing with the rest\n";
    for (const auto& m : sum.messages) std::cerr << "  " << m << '\n';
  }
  if (sum.records.empty())
    throw ValidationError("dataset " + path + " holds no usable records");
  return sum.records;
}

std::vector<PreparedSample> prepare_all(const std::vector<Record>& records,
                                        const Vocabulary& vocab,
                                        const ClassMap& classes,
                                        const Dims& dims, const char* label) {
  std::vector<PreparedSample> out;
  out.reserve(records.size());
  std::size_t fallbacks = 0, truncated = 0;
  for (const auto& r : records) {
    out.push_back(prepare_sample(r, vocab, classes, dims));
    fallbacks += out.back().tf.parse_fallback ? 1 : 0;
    truncated += out.back().tf.truncated ? 1 : 0;
  }
  if (fallbacks > 0 || truncated > 0)
    std::cerr << label << ": " << fallbacks << " parse fallback(s), "
              << truncated << " truncated sample(s) of " << records.size()
              << '\n';
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write error on " + path);
}

}  // namespace

void cmd_split(const std::string& input, const std::string& out_dir,
               const std::string& ratios, std::uint64_t seed) {
  int r[3];
  if (std::sscanf(ratios.c_str(), "%d:%d:%d", &r[0], &r[1], &r[2]) != 3)
    throw ValidationError("ratios must look like 8:1:1, got '" + ratios + "'");

  std::vector<Record> records = load_or_die(input);
  SplitResult split = stratified_split(records, seed, r[0], r[1], r[2]);
  for (const auto& w : split.warnings) std::cerr << "warning: " << w << '\n';

  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create directory " + out_dir);

  write_dataset(out_dir + "/train.jsonl", split.train);
  write_dataset(out_dir + "/valid.jsonl", split.valid);
  write_dataset(out_dir + "/test.jsonl", split.test);

  nlohmann::ordered_json manifest;
  manifest["seed"] = seed;
  manifest["ratios"] = ratios;
  manifest["input_records"] = records.size();
  manifest["counts"] = {{"train", split.train.size()},
                        {"valid", split.valid.size()},
                        {"test", split.test.size()}};
  nlohmann::ordered_json per_class;
  for (const auto& [cls, c] : split.class_counts)
    per_class[cls] = {{"train", c[0]}, {"valid", c[1]}, {"test", c[2]}};
  manifest["per_class"] = std::move(per_class);
  manifest["warnings"] = split.warnings;
  write_text(out_dir + "/manifest.json", manifest.dump(2) + "\n");

  std::cout << "split " << records.size() << " records into "
            << split.train.size() << "/" << split.valid.size() << "/"
            << split.test.size() << " at " << out_dir << '\n';
}

void cmd_vocab(const std::string& input, const std::string& out,
               int min_freq) {
  if (min_freq < 1) throw ValidationError("min_freq must be >= 1");
  std::vector<Record> records = load_or_die(input);
  Vocabulary v = build_vocab(records, min_freq);
  save_vocab(out, v);
  std::cout << "vocabulary of " << v.size() << " ids (" << v.ids.size()
            << " tokens + 3 reserved) at " << out << '\n';
}

void cmd_train(const RunConfig& cfg, const std::string& train_path,
               const std::string& valid_path, const std::string& vocab_path,
               const std::string& out_model, const std::string& log_path) {
  cfg.validate();

  std::vector<Record> train_recs = load_or_die(train_path);
  std::vector<Record> valid_recs;
  if (!valid_path.empty()) valid_recs = load_or_die(valid_path);

  Vocabulary vocab = vocab_path.empty()
                         ? build_vocab(train_recs, cfg.min_freq)
                         : load_vocab(vocab_path);
  ClassMap classes = build_class_map(train_recs);
  Dims dims{cfg.L_c, cfg.N_l, cfg.N_t};

  EncoderConfig enc;
  enc.d_model = cfg.d_model;
  enc.n_layers = cfg.n_layers;
  enc.n_heads = cfg.n_heads;
  enc.vocab_size = vocab.size();
  enc.max_len = cfg.L_c;
  enc.dropout = cfg.dropout;
  enc.n_classes = classes.n_classes();
  enc.N_l = cfg.N_l;
  enc.N_t = cfg.N_t;

  auto train_samples =
      prepare_all(train_recs, vocab, classes, dims, "train set");
  auto valid_samples =
      prepare_all(valid_recs, vocab, classes, dims, "valid set");

  Encoder model(enc, DetRng::derive(cfg.seed, streams::kModel));

  TrainConfig tc;
  tc.lr = cfg.lr;
  tc.epochs = cfg.epochs;
  tc.batch = cfg.batch;
  tc.grad_clip = cfg.grad_clip;
  tc.focal_gamma = cfg.focal_gamma;
  tc.adv.epsilon = cfg.pgd_eps;
  tc.adv.mu = cfg.pgd_mu;
  tc.adv.K = cfg.pgd_steps;
  tc.adv.sigma = cfg.sigma;
  tc.adv.enabled = cfg.edat_enabled;
  tc.adv.warmup_epochs = cfg.warmup_epochs;
  tc.mode = task_mode_from(cfg.task_mode);
  tc.seed = cfg.seed;

  Checkpoint meta;
  meta.config = enc;
  meta.dims = dims;
  meta.classes = classes.classes;
  meta.vocab = vocab;
  meta.extra["task_mode"] = cfg.task_mode;
  meta.extra["edat_enabled"] = cfg.edat_enabled ? "true" : "false";
  meta.extra["seed"] = std::to_string(cfg.seed);

  TrainResult res = train_loop(model, train_samples, valid_samples, tc, meta,
                               out_model, log_path);

  std::cout << "trained " << cfg.epochs << " epoch(s); best epoch "
            << res.best_epoch;
  if (res.best_score >= 0.0 && !valid_samples.empty())
    std::cout << " (selection score " << res.best_score << ")";
  std::cout << "; model at " << out_model << '\n';
}

void cmd_eval(const std::string& model_path, const std::string& test_path,
              const std::string& out_report) {
  Checkpoint meta;
  Encoder model = load_checkpoint(model_path, &meta);

  if (static_cast<int>(meta.classes.size()) != meta.config.n_classes)
    throw ValidationError("checkpoint class list disagrees with its config");

  ClassMap classes;
  classes.classes = meta.classes;
  for (std::size_t i = 0; i < meta.classes.size(); ++i)
    classes.index[meta.classes[i]] = static_cast<int>(i);

  std::vector<Record> records = load_or_die(test_path);
  auto samples =
      prepare_all(records, meta.vocab, classes, meta.dims, "test set");

  MetricReport report = evaluate(model, samples);
  const std::string json = report_to_json(report);
  if (!out_report.empty()) write_text(out_report, json + "\n");
  std::cout << report_table(report);
}

void cmd_targets(const std::string& source_path, const std::string& out_path,
                 int max_len) {
  std::ifstream in(source_path);
  if (!in) throw IoError("cannot open source: " + source_path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string source = buf.str();

  bool parsed_ok = false;
  std::vector<IdentifierSpan> spans = extract_identifiers(source, &parsed_ok);

  Vocabulary empty_vocab;  // ids are irrelevant for positions
  TokenizedFunction tf = tokenize(source, empty_vocab, max_len);
  attach_identifiers(tf, spans);
  DefUseGraph graph = build_def_use(tf.identifier_spans);
  std::vector<int> targets = select_perturbation_targets(tf, graph);

  nlohmann::ordered_json j;
  j["source"] = source_path;
  j["parse_fallback"] = !parsed_ok;
  j["truncated"] = tf.truncated;

  auto idents = nlohmann::ordered_json::array();
  for (const auto& s : spans) {
    nlohmann::ordered_json e;
    e["name"] = s.name;
    e["kind"] = ident_kind_name(s.kind);
    e["scope"] = s.scope_id;
    e["def_lines"] = std::vector<int>(s.def_sites.begin(), s.def_sites.end());
    e["use_lines"] = std::vector<int>(s.use_sites.begin(), s.use_sites.end());
    e["lexeme_indices"] = s.token_indices;
    idents.push_back(std::move(e));
  }
  j["identifiers"] = std::move(idents);

  nlohmann::ordered_json du;
  du["nodes"] = std::vector<int>(graph.nodes.begin(), graph.nodes.end());
  auto edges = nlohmann::ordered_json::array();
  for (const auto& [a, b] : graph.edges) edges.push_back({a, b});
  du["edges"] = std::move(edges);
  nlohmann::ordered_json chains;
  for (const auto& [key, links] : graph.chains) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& [a, b] : links) arr.push_back({a, b});
    chains[key] = std::move(arr);
  }
  du["chains"] = std::move(chains);
  j["def_use"] = std::move(du);

  j["target_token_positions"] = targets;

  const std::string text = j.dump(2) + "\n";
  if (out_path.empty())
    std::cout << text;
  else
    write_text(out_path, text);
}

void cmd_stats(const std::string& input, const Dims& dims,
               const std::string& out_path) {
  std::vector<Record> records = load_or_die(input);
  DatasetStats st = dataset_stats(records, dims);

  auto dim_json = [](const DimCoverage& c) {
    nlohmann::ordered_json j;
    j["coverage"] = c.coverage;
    j["min"] = c.min;
    j["max"] = c.max;
    j["mean"] = c.mean;
    j["std"] = c.stddev;
    return j;
  };
  nlohmann::ordered_json j;
  j["n_samples"] = st.n_samples;
  j["bounds"] = {{"L_c", dims.L_c}, {"N_l", dims.N_l}, {"N_t", dims.N_t}};
  j["tokens"] = dim_json(st.tokens);
  j["lines"] = dim_json(st.lines);
  j["line_tokens"] = dim_json(st.line_tokens);

  const std::string text = j.dump(2) + "\n";
  if (out_path.empty())
    std::cout << text;
  else
    write_text(out_path, text);
}

void cmd_convert_csv(const std::string& input, const std::string& out,
                     const CsvOptions& opt) {
  const std::size_t n = convert_csv(input, out, opt);
  std::cout << "converted " << n << " record(s) to " << out << '\n';
}

namespace {

int dispatch(std::vector<std::string> args) {
  CLI::App app{"vulnerability type prediction and line-level detection"};
  app.require_subcommand(1);

  // split
  auto* sp = app.add_subcommand("split", "stratified dataset split");
  std::string sp_input, sp_out, sp_ratios = "8:1:1";
  std::uint64_t sp_seed = 42;
  sp->add_option("--input", sp_input, "JSON-lines dataset")->required();
  sp->add_option("--out", sp_out, "output directory")->required();
  sp->add_option("--ratios", sp_ratios, "train:valid:test, default 8:1:1");
  sp->add_option("--seed", sp_seed, "shuffle seed");

  // vocab
  auto* vo = app.add_subcommand("vocab", "build a vocabulary file");
  std::string vo_input, vo_out;
  int vo_min_freq = 1;
  vo->add_option("--input", vo_input, "JSON-lines dataset")->required();
  vo->add_option("--out", vo_out, "vocabulary path")->required();
  vo->add_option("--min-freq", vo_min_freq, "frequency cutoff");

  // train
  auto* tr = app.add_subcommand("train", "train a model");
  std::string tr_config, tr_train, tr_valid, tr_vocab, tr_out, tr_log;
  std::vector<std::string> tr_sets;
  std::uint64_t tr_seed = 0;
  bool tr_seed_given = false;
  tr->add_option("--config", tr_config, "key=value config file");
  tr->add_option("--train", tr_train, "training split")->required();
  tr->add_option("--valid", tr_valid, "validation split");
  tr->add_option("--vocab", tr_vocab,
                 "vocabulary file (built from the training split if absent)");
  tr->add_option("--out", tr_out, "checkpoint path")->required();
  tr->add_option("--log", tr_log, "JSON-lines training log path");
  tr->add_option("--set", tr_sets, "config override key=value, repeatable");
  tr->add_option("--seed", tr_seed, "run seed (wins over config and --set)")
      ->each([&](const std::string&) { tr_seed_given = true; });

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_model, ev_test, ev_out;
  ev->add_option("--model", ev_model, "checkpoint path")->required();
  ev->add_option("--test", ev_test, "test split")->required();
  ev->add_option("--out", ev_out, "metric report JSON path");

  // targets
  auto* tg = app.add_subcommand(
      "targets", "dump identifiers, def-use chains, and perturbation targets");
  std::string tg_source, tg_out;
  int tg_maxlen = 512;
  tg->add_option("--source", tg_source, "C source file")->required();
  tg->add_option("--out", tg_out, "output JSON path (stdout if absent)");
  tg->add_option("--max-len", tg_maxlen, "token budget");

  // stats
  auto* st = app.add_subcommand("stats", "dataset coverage statistics");
  std::string st_input, st_out;
  Dims st_dims;
  st->add_option("--input", st_input, "JSON-lines dataset")->required();
  st->add_option("--out", st_out, "output JSON path (stdout if absent)");
  st->add_option("--L-c", st_dims.L_c, "token budget");
  st->add_option("--N-l", st_dims.N_l, "line rows");
  st->add_option("--N-t", st_dims.N_t, "tokens per line");

  // convert-csv
  auto* cv = app.add_subcommand("convert-csv", "CSV corpus to JSON-lines");
  std::string cv_input, cv_out;
  CsvOptions cv_opt;
  bool cv_one_based = false;
  cv->add_option("--input", cv_input, "CSV path")->required();
  cv->add_option("--out", cv_out, "JSON-lines path")->required();
  cv->add_option("--code-col", cv_opt.code_col, "function body column");
  cv->add_option("--cwe-col", cv_opt.cwe_col, "CWE label column");
  cv->add_option("--id-col", cv_opt.id_col, "sample id column");
  cv->add_option("--lines-col", cv_opt.lines_col, "flaw line list column");
  cv->add_flag("--one-based-lines", cv_one_based,
               "flaw line indices already start at 1");
  cv->add_option("--default-cwe", cv_opt.default_cwe,
                 "label for rows with an empty CWE");

  std::reverse(args.begin(), args.end());  // CLI11 wants them backwards
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  if (sp->parsed()) {
    cmd_split(sp_input, sp_out, sp_ratios, sp_seed);
  } else if (vo->parsed()) {
    cmd_vocab(vo_input, vo_out, vo_min_freq);
  } else if (tr->parsed()) {
    RunConfig cfg;
    if (!tr_config.empty()) cfg = load_config(tr_config);
    for (const auto& kv : tr_sets) {
      auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw ValidationError("--set expects key=value, got '" + kv + "'");
      cfg.apply(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (tr_seed_given) cfg.seed = tr_seed;
    cmd_train(cfg, tr_train, tr_valid, tr_vocab, tr_out, tr_log);
  } else if (ev->parsed()) {
    cmd_eval(ev_model, ev_test, ev_out);
  } else if (tg->parsed()) {
    cmd_targets(tg_source, tg_out, tg_maxlen);
  } else if (st->parsed()) {
    cmd_stats(st_input, st_dims, st_out);
  } else if (cv->parsed()) {
    cv_opt.lines_zero_based = !cv_one_based;
    cmd_convert_csv(cv_input, cv_out, cv_opt);
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  try {
    return dispatch(args);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const Error& e) {
    // validation, contract, dimension, degenerate-input
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << '\n';
    return kExitUnexpected;
  }
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

}  // namespace vulmtl
