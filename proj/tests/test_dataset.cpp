#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "support/tempdir.hpp"
#include "vulmtl/dataset.hpp"
#include "vulmtl/errors.hpp"

using namespace vulmtl;
using testutil::fresh_dir;
using testutil::write_file;

namespace {

Record rec(const std::string& id, const std::string& cwe,
           const std::string& code = "int x;",
           std::set<int> vuln = {}) {
  Record r;
  r.id = id;
  r.cwe = cwe;
  r.code = code;
  r.vuln_lines = std::move(vuln);
  return r;
}

std::vector<std::string> ids_of(const std::vector<Record>& rs) {
  std::vector<std::string> out;
  for (const auto& r : rs) out.push_back(r.id);
  return out;
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("records round trip through json lines") {
  const std::string dir = fresh_dir("ds");
  std::vector<Record> in;
  in.push_back(rec("a1", "CWE-119", "int f() { return 1; }", {1, 4}));
  Record r2 = rec("a2", "CWE-787", "void g(void) {}");
  r2.project = "proj";
  r2.commit = "deadbeef";
  in.push_back(r2);

  const std::string path = dir + "/data.jsonl";
  write_dataset(path, in);
  LoadSummary s = load_dataset(path);

  CHECK(s.total_lines == 2);
  CHECK(s.malformed == 0);
  REQUIRE(s.records.size() == 2);
  CHECK(s.records[0].id == "a1");
  CHECK(s.records[0].cwe == "CWE-119");
  CHECK(s.records[0].vuln_lines == std::set<int>{1, 4});
  CHECK(s.records[1].project == "proj");
  CHECK(s.records[1].commit == "deadbeef");
  CHECK(s.records[1].vuln_lines.empty());
}

TEST_CASE("malformed lines are counted below the failure threshold") {
  const std::string dir = fresh_dir("ds");
  std::string content;
  content += "{\"id\":1,\"code\":\"int x;\",\"cwe\":\"XSS\"}\n";  // bad label
  content += "{\"id\":2,\"code\":\"int x;\",\"cwe\":\"CWE-5\","
             "\"vuln_lines\":[0]}\n";                // line below 1
  content += "{\"code\":\"int x;\",\"cwe\":\"CWE-5\"}\n";  // missing id
  content += "\n   \n";                                    // blanks don't count
  for (int i = 0; i < 30; ++i)
    content += "{\"id\":" + std::to_string(100 + i) +
               ",\"code\":\"int x;\",\"cwe\":\"CWE-5\"}\n";

  const std::string path = write_file(dir, "mixed.jsonl", content);
  LoadSummary s = load_dataset(path);
  CHECK(s.total_lines == 33);
  CHECK(s.malformed == 3);
  CHECK(s.records.size() == 30);
  CHECK(s.records[0].id == "100");  // integer ids are accepted as strings
  REQUIRE(!s.messages.empty());
  CHECK(s.messages[0].find("line 1") != std::string::npos);
}

TEST_CASE("too many malformed lines is a hard failure") {
  const std::string dir = fresh_dir("ds");
  const std::string path = write_file(
      dir, "bad.jsonl",
      "not json at all\n"
      "{\"id\":\"ok\",\"code\":\"int x;\",\"cwe\":\"CWE-5\"}\n"
      "{\"id\":\"ok2\",\"code\":\"int x;\",\"cwe\":\"CWE-5\"}\n");
  CHECK_THROWS_AS(load_dataset(path), ValidationError);
  CHECK_THROWS_AS(load_dataset(dir + "/never_written.jsonl"), IoError);
}

TEST_CASE("vocabulary orders by frequency then token text") {
  std::vector<Record> rs = {rec("r", "CWE-5", "a a a b b c ; ;")};
  Vocabulary v = build_vocab(rs, 1);
  CHECK(v.ids.at("a") == 3);   // most frequent
  CHECK(v.ids.at(";") == 4);   // ties broken by byte order
  CHECK(v.ids.at("b") == 5);
  CHECK(v.ids.at("c") == 6);
  CHECK(v.size() == 7);
  CHECK(v.lookup("a") == 3);
  CHECK(v.lookup("zzz") == Vocabulary::kUnk);

  Vocabulary cut = build_vocab(rs, 2);
  CHECK(cut.ids.size() == 3);
  CHECK(cut.lookup("c") == Vocabulary::kUnk);

  CHECK_THROWS_AS(build_vocab({}, 1), ContractError);
}

TEST_CASE("vocabulary file round trips with escaped tokens") {
  const std::string dir = fresh_dir("vocab");
  Vocabulary v;
  v.ids = {{"plain", 3}, {"w\tt", 4}, {"nl\nx", 5}, {"bs\\", 6}};
  const std::string path = dir + "/vocab.tsv";
  save_vocab(path, v);

  const std::string text = testutil::read_file(path);
  CHECK(text.rfind("<PAD>\t0\n<UNK>\t1\n<CLS>\t2\n", 0) == 0);

  Vocabulary back = load_vocab(path);
  CHECK(back.ids == v.ids);

  CHECK_THROWS_AS(load_vocab(write_file(dir, "notab.tsv", "token 7\n")),
                  ValidationError);
  CHECK_THROWS_AS(load_vocab(write_file(dir, "badid.tsv", "token\tx\n")),
                  ValidationError);
  CHECK_THROWS_AS(
      load_vocab(write_file(dir, "dup.tsv", "tok\t3\ntok\t4\n")),
      ValidationError);
  CHECK_THROWS_AS(load_vocab(dir + "/missing.tsv"), IoError);
}

TEST_CASE("stratified split partitions with per-class quotas") {
  std::vector<Record> rs;
  for (int i = 0; i < 10; ++i)
    rs.push_back(rec("a" + std::to_string(i), "CWE-10"));
  for (int i = 0; i < 23; ++i)
    rs.push_back(rec("b" + std::to_string(i), "CWE-20"));
  rs.push_back(rec("c0", "CWE-30"));
  rs.push_back(rec("c1", "CWE-30"));

  SplitResult sp = stratified_split(rs, 7);

  CHECK(sp.class_counts.at("CWE-10") ==
        std::array<std::size_t, 3>{8, 1, 1});
  CHECK(sp.class_counts.at("CWE-20") ==
        std::array<std::size_t, 3>{19, 2, 2});  // largest remainder to train
  CHECK(sp.class_counts.at("CWE-30") ==
        std::array<std::size_t, 3>{2, 0, 0});
  REQUIRE(sp.warnings.size() == 1);
  CHECK(sp.warnings[0].find("CWE-30") != std::string::npos);

  // exact partition: every input id appears exactly once across the splits
  std::vector<std::string> all = ids_of(sp.train);
  for (const auto& id : ids_of(sp.valid)) all.push_back(id);
  for (const auto& id : ids_of(sp.test)) all.push_back(id);
  std::vector<std::string> want = ids_of(rs);
  std::sort(all.begin(), all.end());
  std::sort(want.begin(), want.end());
  CHECK(all == want);
}

TEST_CASE("split assignment ignores input file order") {
  std::vector<Record> rs;
  for (int i = 0; i < 12; ++i)
    rs.push_back(rec("x" + std::to_string(i), "CWE-10"));
  SplitResult a = stratified_split(rs, 11);

  std::reverse(rs.begin(), rs.end());
  SplitResult b = stratified_split(rs, 11);

  CHECK(ids_of(a.train) == ids_of(b.train));
  CHECK(ids_of(a.valid) == ids_of(b.valid));
  CHECK(ids_of(a.test) == ids_of(b.test));

  SplitResult c = stratified_split(rs, 12);
  CHECK(ids_of(a.train) != ids_of(c.train));  // seed matters
}

TEST_CASE("split remainder ties prefer valid over test") {
  std::vector<Record> rs;
  for (int i = 0; i < 5; ++i)
    rs.push_back(rec("e" + std::to_string(i), "CWE-7"));
  SplitResult sp = stratified_split(rs, 1);
  CHECK(sp.class_counts.at("CWE-7") ==
        std::array<std::size_t, 3>{4, 1, 0});
  CHECK_THROWS_AS(stratified_split(rs, 1, 0, 1, 1), ContractError);
}

TEST_CASE("class map sorts numerically with a trailing catch-all") {
  std::vector<Record> rs = {rec("1", "CWE-119"), rec("2", "CWE-20"),
                            rec("3", "CWE-787"), rec("4", "CWE-5"),
                            rec("5", "CWE-20")};
  ClassMap cm = build_class_map(rs);
  CHECK(cm.classes ==
        std::vector<std::string>{"CWE-5", "CWE-20", "CWE-119", "CWE-787",
                                 "OTHER"});
  CHECK(cm.n_classes() == 5);
  CHECK(cm.label_of("CWE-20") == 1);
  CHECK(cm.label_of("CWE-999") == 4);
  CHECK(cm.other_index() == 4);
}

TEST_CASE("pad truncate fixes shapes and tracks lost vulnerable lines") {
  Vocabulary vocab;
  auto tf = tokenize("int f() {\na1 a2 a3 a4;\nb1;\n}\n", vocab, 32);
  tf.vuln_lines = {2, 9};

  Dims dims{32, 4, 3};
  PaddedSample p = pad_truncate(tf, dims);

  CHECK(p.tokens.size() == 32);
  CHECK(p.real_len == static_cast<int>(tf.tokens.size()));
  CHECK(p.tokens[p.real_len] == Vocabulary::kPad);
  CHECK(p.token_mask[0] == 1);
  CHECK(p.token_mask[p.real_len - 1] == 1);
  CHECK(p.token_mask[p.real_len] == 0);

  REQUIRE(p.line_tokens.size() == 4);
  CHECK(p.line_tokens[0].size() == 3);  // five tokens on line 1, capped
  CHECK(p.line_tokens[1].size() == 3);
  CHECK(p.line_tokens[1][0] == tf.line_map.at(2)[0]);
  CHECK(p.line_valid == std::vector<std::uint8_t>{1, 1, 1, 1});

  CHECK(p.line_label[1] == 1);  // row 1 covers source line 2
  CHECK(p.line_label[0] == 0);
  CHECK(p.truncated_vuln_lines == std::set<int>{9});
  CHECK_FALSE(p.line_loss_excluded);

  tf.vuln_lines = {9};
  PaddedSample gone = pad_truncate(tf, dims);
  CHECK(gone.line_loss_excluded);  // had vulnerable lines, none survived

  auto longer = tokenize("int add(int a, int b) {\nint s = a + b;\n}", vocab,
                         64);
  CHECK_THROWS_AS(pad_truncate(longer, Dims{16, 4, 4}), DimensionError);
  CHECK_THROWS_AS(pad_truncate(tf, Dims{1, 4, 4}), ContractError);
}

TEST_CASE("prepare sample wires the whole pipeline") {
  Record r = rec("r1", "CWE-119",
                 "int add(int a, int b) {\n"
                 "  int s = a + b;\n"
                 "  return s;\n"
                 "}\n",
                 {2});
  Vocabulary vocab = build_vocab({r}, 1);
  ClassMap cm = build_class_map({r});
  Dims dims{32, 8, 8};

  PreparedSample ps = prepare_sample(r, vocab, cm, dims);
  CHECK(ps.tf.sample_id == "r1");
  CHECK(ps.tf.cwe_label == cm.label_of("CWE-119"));
  CHECK_FALSE(ps.tf.parse_fallback);
  CHECK(ps.mask.T == 32);
  CHECK(ps.target_indices == std::vector<int>{5, 8, 12, 14, 16, 19});
  CHECK(ps.padded.real_len == 22);
  CHECK(ps.padded.line_label[1] == 1);
  CHECK(ps.vuln_lines == std::set<int>{2});
}

TEST_CASE("dataset stats cover dimension budgets") {
  std::vector<Record> rs = {rec("1", "CWE-5", "a b\nc"),
                            rec("2", "CWE-5", "x")};
  DatasetStats st = dataset_stats(rs, Dims{4, 1, 2});
  CHECK(st.n_samples == 2);
  CHECK(st.tokens.coverage == doctest::Approx(1.0));
  CHECK(st.tokens.min == 2);
  CHECK(st.tokens.max == 4);
  CHECK(st.tokens.mean == doctest::Approx(3.0));
  CHECK(st.tokens.stddev == doctest::Approx(1.0));
  CHECK(st.lines.coverage == doctest::Approx(0.5));
  CHECK(st.line_tokens.coverage == doctest::Approx(1.0));
  CHECK_THROWS_AS(dataset_stats({}, Dims{}), ContractError);
}

TEST_CASE("csv conversion handles quoting, floats and zero-based lines") {
  const std::string dir = fresh_dir("csv");
  const std::string csv =
      "index,processed_func,CWE ID,flaw_line_index\n"
      "1,\"int f() {\n  return 0;\n}\",CWE-119,\"1,2.0\"\n"
      "2,\"void g(\"\"x\"\")\",,3\n"
      "3,   ,CWE-787,\n";
  const std::string in = write_file(dir, "in.csv", csv);
  const std::string out = dir + "/out.jsonl";

  std::size_t n = convert_csv(in, out, CsvOptions{});
  CHECK(n == 2);  // the blank-code row is dropped

  LoadSummary s = load_dataset(out);
  REQUIRE(s.records.size() == 2);
  CHECK(s.records[0].id == "1");
  CHECK(s.records[0].code.find("\n  return 0;") != std::string::npos);
  CHECK(s.records[0].vuln_lines == std::set<int>{2, 3});  // shifted to 1-based
  CHECK(s.records[1].code == "void g(\"x\")");
  CHECK(s.records[1].cwe == "CWE-0");  // empty label falls back
  CHECK(s.records[1].vuln_lines == std::set<int>{4});
}

TEST_CASE("csv conversion prefixes bare labels and rejects junk") {
  const std::string dir = fresh_dir("csv");
  const std::string in = write_file(
      dir, "bare.csv",
      "index,processed_func,CWE ID,flaw_line_index\r\n"
      "7,int x;,119,0\r\n");
  std::size_t n = convert_csv(in, dir + "/bare.jsonl", CsvOptions{});
  CHECK(n == 1);
  LoadSummary s = load_dataset(dir + "/bare.jsonl");
  CHECK(s.records[0].cwe == "CWE-119");
  CHECK(s.records[0].vuln_lines == std::set<int>{1});

  const std::string junk = write_file(
      dir, "junk.csv",
      "index,processed_func,CWE ID,flaw_line_index\n"
      "1,int x;,CWE-5,notanumber\n");
  CHECK_THROWS_AS(convert_csv(junk, dir + "/junk.jsonl", CsvOptions{}),
                  ValidationError);

  const std::string nocol = write_file(dir, "nocol.csv", "a,b\n1,2\n");
  CHECK_THROWS_AS(convert_csv(nocol, dir + "/nocol.jsonl", CsvOptions{}),
                  ValidationError);
  CHECK_THROWS_AS(convert_csv(dir + "/absent.csv", dir + "/x.jsonl",
                              CsvOptions{}),
                  IoError);
}

}  // TEST_SUITE
