#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "support/tempdir.hpp"
#include "vulmtl/cli.hpp"
#include "vulmtl/dataset.hpp"
#include "vulmtl/encoder.hpp"
#include "vulmtl/errors.hpp"

using namespace vulmtl;
using testutil::fresh_dir;
using testutil::write_file;

namespace {

std::string tiny_dataset(const std::string& dir, const std::string& name,
                         int copies = 1) {
  std::vector<Record> rs;
  for (int i = 0; i < copies; ++i) {
    Record a;
    a.id = "add" + std::to_string(i);
    a.cwe = "CWE-119";
    a.code =
        "int add(int a, int b) {\n"
        "  int s = a + b;\n"
        "  return s;\n"
        "}\n";
    a.vuln_lines = {2};
    Record b;
    b.id = "cp" + std::to_string(i);
    b.cwe = "CWE-787";
    b.code =
        "void cp(char *d, char *s) {\n"
        "  int i = 0;\n"
        "  d[0] = *s;\n"
        "}\n";
    b.vuln_lines = {3};
    rs.push_back(a);
    rs.push_back(b);
  }
  const std::string path = dir + "/" + name;
  write_dataset(path, rs);
  return path;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("run config applies typed keys and rejects unknown ones") {
  RunConfig c;
  c.apply("lr", "0.001");
  CHECK(c.lr == doctest::Approx(0.001));
  c.apply("epochs", "7");
  CHECK(c.epochs == 7);
  c.apply("edat_enabled", "false");
  CHECK_FALSE(c.edat_enabled);
  c.apply("edat_enabled", "1");
  CHECK(c.edat_enabled);
  c.apply("task_mode", "loc-only");
  CHECK(c.task_mode == "loc-only");
  c.apply("seed", "123");
  CHECK(c.seed == 123);

  CHECK_THROWS_AS(c.apply("learning_rate", "0.1"), ValidationError);
  CHECK_THROWS_AS(c.apply("lr", "abc"), ValidationError);
  CHECK_THROWS_AS(c.apply("lr", "1.5x"), ValidationError);
  CHECK_THROWS_AS(c.apply("epochs", "2.5"), ValidationError);
  CHECK_THROWS_AS(c.apply("edat_enabled", "yes"), ValidationError);
}

TEST_CASE("run config validation enforces ranges") {
  RunConfig c;
  CHECK_NOTHROW(c.validate());

  auto broken = [](auto mutate) {
    RunConfig c2;
    mutate(c2);
    CHECK_THROWS_AS(c2.validate(), ValidationError);
  };
  broken([](RunConfig& x) { x.lr = 0.0; });
  broken([](RunConfig& x) { x.dropout = 1.0; });
  broken([](RunConfig& x) { x.batch = 0; });
  broken([](RunConfig& x) { x.d_model = 6; x.n_heads = 4; });
  broken([](RunConfig& x) { x.task_mode = "bogus"; });
  broken([](RunConfig& x) { x.min_freq = 0; });
  broken([](RunConfig& x) { x.L_c = 1; });
  broken([](RunConfig& x) { x.pgd_steps = 0; });
}

TEST_CASE("config files parse comments and whitespace") {
  const std::string dir = fresh_dir("cfg");
  const std::string path = write_file(dir, "run.cfg",
                                      "# full line comment\n"
                                      "lr = 0.01   # trailing comment\n"
                                      "epochs=3\n"
                                      "\n"
                                      "  batch = 4  \n");
  RunConfig c = load_config(path);
  CHECK(c.lr == doctest::Approx(0.01));
  CHECK(c.epochs == 3);
  CHECK(c.batch == 4);

  CHECK_THROWS_AS(load_config(write_file(dir, "noeq.cfg", "lr 0.01\n")),
                  ValidationError);
  CHECK_THROWS_AS(load_config(dir + "/absent.cfg"), IoError);
}

TEST_CASE("exit codes separate io, validation and success") {
  const std::string dir = fresh_dir("cli");
  const std::string ds = tiny_dataset(dir, "data.jsonl");

  CHECK(run_cli({"vocab", "--input", dir + "/nothing.jsonl", "--out",
                 dir + "/v.tsv"}) == kExitIo);
  CHECK(run_cli({"split", "--input", ds, "--out", dir + "/sp", "--ratios",
                 "banana"}) == kExitValidation);
  CHECK(run_cli({"definitely-not-a-command"}) == kExitValidation);
  CHECK(run_cli({}) == kExitValidation);
  CHECK(run_cli({"train", "--train", ds, "--out", dir + "/m.json", "--set",
                 "lr=abc"}) == kExitValidation);
  CHECK(run_cli({"train", "--train", ds, "--out", dir + "/m.json", "--set",
                 "nonsense"}) == kExitValidation);
  CHECK(run_cli({"--help"}) == kExitOk);
  CHECK(run_cli({"vocab", "--input", ds, "--out", dir + "/v.tsv"}) ==
        kExitOk);
}

TEST_CASE("split command writes three files plus a manifest") {
  const std::string dir = fresh_dir("cli_split");
  std::vector<Record> rs;
  for (int i = 0; i < 12; ++i) {
    Record r;
    r.id = "a" + std::to_string(i);
    r.cwe = "CWE-119";
    r.code = "int f() { return " + std::to_string(i) + "; }";
    rs.push_back(r);
  }
  for (int i = 0; i < 5; ++i) {
    Record r;
    r.id = "b" + std::to_string(i);
    r.cwe = "CWE-787";
    r.code = "int g() { return " + std::to_string(i) + "; }";
    rs.push_back(r);
  }
  write_dataset(dir + "/in.jsonl", rs);

  CHECK(run_cli({"split", "--input", dir + "/in.jsonl", "--out",
                 dir + "/out", "--seed", "9"}) == kExitOk);

  LoadSummary train = load_dataset(dir + "/out/train.jsonl");
  LoadSummary valid = load_dataset(dir + "/out/valid.jsonl");
  LoadSummary test = load_dataset(dir + "/out/test.jsonl");
  CHECK(train.records.size() + valid.records.size() + test.records.size() ==
        17);

  auto manifest =
      nlohmann::json::parse(testutil::read_file(dir + "/out/manifest.json"));
  CHECK(manifest.at("seed").get<int>() == 9);
  CHECK(manifest.at("ratios").get<std::string>() == "8:1:1");
  CHECK(manifest.at("input_records").get<int>() == 17);
  CHECK(manifest.at("counts").at("train").get<std::size_t>() ==
        train.records.size());
  CHECK(manifest.at("per_class").contains("CWE-119"));
  CHECK(manifest.at("per_class").at("CWE-787").at("train").get<int>() == 4);
}

TEST_CASE("vocab command writes a loadable vocabulary") {
  const std::string dir = fresh_dir("cli_vocab");
  const std::string ds = tiny_dataset(dir, "data.jsonl");
  CHECK(run_cli({"vocab", "--input", ds, "--out", dir + "/v.tsv",
                 "--min-freq", "1"}) == kExitOk);

  Vocabulary v = load_vocab(dir + "/v.tsv");
  CHECK(!v.ids.empty());
  CHECK(v.lookup("int") >= 3);
  CHECK(v.lookup("never_seen_token") == Vocabulary::kUnk);
}

TEST_CASE("targets command emits the dependency analysis") {
  const std::string dir = fresh_dir("cli_targets");
  write_file(dir, "add.c",
             "int add(int a, int b) {\n"
             "  int s = a + b;\n"
             "  return s;\n"
             "}\n");
  CHECK(run_cli({"targets", "--source", dir + "/add.c", "--out",
                 dir + "/t.json"}) == kExitOk);

  auto j = nlohmann::json::parse(testutil::read_file(dir + "/t.json"));
  CHECK(j.at("parse_fallback").get<bool>() == false);
  CHECK(j.at("truncated").get<bool>() == false);
  CHECK(j.at("target_token_positions").get<std::vector<int>>() ==
        std::vector<int>{5, 8, 12, 14, 16, 19});
  CHECK(j.at("def_use").at("edges").size() == 2);
  CHECK(j.at("def_use").at("chains").contains("s@2"));
  bool saw_param = false;
  for (const auto& e : j.at("identifiers"))
    if (e.at("name") == "a" && e.at("kind") == "parameter") saw_param = true;
  CHECK(saw_param);

  CHECK(run_cli({"targets", "--source", dir + "/missing.c"}) == kExitIo);
}

TEST_CASE("stats command reports dimension coverage") {
  const std::string dir = fresh_dir("cli_stats");
  const std::string ds = tiny_dataset(dir, "data.jsonl");
  CHECK(run_cli({"stats", "--input", ds, "--out", dir + "/st.json", "--L-c",
                 "32", "--N-l", "8", "--N-t", "16"}) == kExitOk);

  auto j = nlohmann::json::parse(testutil::read_file(dir + "/st.json"));
  CHECK(j.at("n_samples").get<int>() == 2);
  CHECK(j.at("bounds").at("L_c").get<int>() == 32);
  CHECK(j.at("tokens").at("coverage").get<double>() == doctest::Approx(1.0));
  CHECK(j.at("tokens").at("max").get<int>() == 27);
  CHECK(j.at("lines").at("max").get<int>() == 4);
}

TEST_CASE("convert-csv command produces a loadable dataset") {
  const std::string dir = fresh_dir("cli_csv");
  write_file(dir, "in.csv",
             "index,processed_func,CWE ID,flaw_line_index\n"
             "5,\"int f() { return 0; }\",CWE-119,0\n");
  CHECK(run_cli({"convert-csv", "--input", dir + "/in.csv", "--out",
                 dir + "/out.jsonl"}) == kExitOk);
  LoadSummary s = load_dataset(dir + "/out.jsonl");
  REQUIRE(s.records.size() == 1);
  CHECK(s.records[0].vuln_lines == std::set<int>{1});
}

TEST_CASE("train and eval run end to end in process") {
  const std::string dir = fresh_dir("cli_train");
  const std::string ds = tiny_dataset(dir, "data.jsonl", 2);

  const std::vector<std::string> train_args = {
      "train",     "--train", ds,
      "--valid",   ds,        "--out",
      dir + "/model.json",    "--log",
      dir + "/log.jsonl",     "--set",
      "d_model=8", "--set",   "n_heads=2",
      "--set",     "n_layers=1",
      "--set",     "L_c=32",  "--set",
      "N_l=6",     "--set",   "N_t=8",
      "--set",     "epochs=1", "--set",
      "lr=0.001",  "--set",   "batch=2",
      "--set",     "dropout=0", "--set",
      "pgd_steps=1", "--seed", "5"};
  CHECK(run_cli(train_args) == kExitOk);

  Checkpoint meta;
  Encoder model = load_checkpoint(dir + "/model.json", &meta);
  CHECK(meta.config.d_model == 8);
  CHECK(meta.classes ==
        std::vector<std::string>{"CWE-119", "CWE-787", "OTHER"});
  CHECK(meta.extra.at("seed") == "5");
  CHECK(meta.extra.at("task_mode") == "multi");

  CHECK(run_cli({"eval", "--model", dir + "/model.json", "--test", ds,
                 "--out", dir + "/report.json"}) == kExitOk);
  auto rep = nlohmann::json::parse(testutil::read_file(dir + "/report.json"));
  CHECK(rep.at("n_samples").get<int>() == 4);
  CHECK(rep.at("n_ranked").get<int>() == 4);
  CHECK(rep.at("accuracy").is_number());

  CHECK(run_cli({"eval", "--model", dir + "/model.json", "--test",
                 dir + "/absent.jsonl"}) == kExitIo);
}

}  // TEST_SUITE
