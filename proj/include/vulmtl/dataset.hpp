#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "vulmtl/syntax.hpp"

namespace vulmtl {

// One function-level sample as stored on disk (JSON-lines).
struct Record {
  std::string id;
  std::string code;
  std::string cwe;           // "CWE-<int>"
  std::set<int> vuln_lines;  // 1-based source lines
  std::string project;       // optional provenance
  std::string commit;
};

// Token -> id map. Ids 0..2 are reserved and never appear in the map; real
// tokens start at 3.
struct Vocabulary {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;

  std::map<std::string, int> ids;
  int min_freq = 1;

  int lookup(const std::string& token) const;
  int size() const { return static_cast<int>(ids.size()) + 3; }
};

struct LoadSummary {
  std::vector<Record> records;
  std::size_t total_lines = 0;
  std::size_t malformed = 0;
  std::vector<std::string> messages;  // first few malformed-line diagnostics
};

// One JSON object per line. More than 10% malformed lines is a hard failure;
// below that the bad lines are counted and reported, never silently dropped.
LoadSummary load_dataset(const std::string& path);
void write_dataset(const std::string& path, const std::vector<Record>& records);

struct SplitResult {
  std::vector<Record> train;
  std::vector<Record> valid;
  std::vector<Record> test;
  std::vector<std::string> warnings;
  // class -> {train, valid, test} counts, for the manifest
  std::map<std::string, std::array<std::size_t, 3>> class_counts;
};

// Per-class shuffle (seeded) and largest-remainder apportionment. Classes
// with fewer than 3 records go wholly to train with a warning.
SplitResult stratified_split(const std::vector<Record>& records,
                             std::uint64_t seed, int r_train = 8,
                             int r_valid = 1, int r_test = 1);

// Lexes every record's code and assigns ids by (frequency desc, token asc),
// starting at 3. Tokens below min_freq are left out and resolve to UNK.
Vocabulary build_vocab(const std::vector<Record>& records, int min_freq);

// token<TAB>id per line, reserved rows first; tab/newline/backslash escaped.
void save_vocab(const std::string& path, const Vocabulary& vocab);
Vocabulary load_vocab(const std::string& path);

// CWE string -> dense label. Built from the train split; anything unseen
// maps to the reserved OTHER class, which always occupies the last index.
struct ClassMap {
  std::vector<std::string> classes;  // index -> name, numeric order, OTHER last
  std::map<std::string, int> index;

  int label_of(const std::string& cwe) const;
  int other_index() const { return static_cast<int>(classes.size()) - 1; }
  int n_classes() const { return static_cast<int>(classes.size()); }
};

ClassMap build_class_map(const std::vector<Record>& train_records);

struct Dims {
  int L_c = 512;  // token budget including the classification slot
  int N_l = 256;  // line rows
  int N_t = 64;   // tokens pooled per line
};

// Fixed-shape view of one tokenized sample plus the bookkeeping the losses
// need. Line row r covers source line r+1.
struct PaddedSample {
  std::string sample_id;
  int cwe_label = -1;

  std::vector<int> tokens;               // length L_c, PAD-filled
  std::vector<std::uint8_t> token_mask;  // 1 = real token
  int real_len = 0;

  std::vector<std::vector<int>> line_tokens;  // N_l rows of token positions
  std::vector<std::uint8_t> line_valid;
  std::vector<std::uint8_t> line_label;  // 1 = vulnerable

  std::set<int> truncated_vuln_lines;
  bool line_loss_excluded = false;  // had vuln lines, none survived
};

PaddedSample pad_truncate(const TokenizedFunction& tf, const Dims& dims);

// Everything the trainer needs for one sample, precomputed once.
struct PreparedSample {
  PaddedSample padded;
  TokenizedFunction tf;
  DefUseGraph graph;
  AttnMask mask;                    // L_c x L_c
  std::vector<int> target_indices;  // perturbation-eligible token positions
  std::set<int> vuln_lines;         // post-truncation ground truth
};

// Tokenize, parse, build the def-use graph and mask, select targets, pad.
// parse_fallback and truncation state are recorded on the sample.
PreparedSample prepare_sample(const Record& rec, const Vocabulary& vocab,
                              const ClassMap& classes, const Dims& dims);

struct DimCoverage {
  double coverage = 0.0;  // fraction of samples within the bound
  long long min = 0;
  long long max = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population
};

struct DatasetStats {
  std::size_t n_samples = 0;
  DimCoverage tokens;       // sequence length incl. classification slot vs L_c
  DimCoverage lines;        // highest token-bearing line vs N_l
  DimCoverage line_tokens;  // max tokens on any single line vs N_t
};

DatasetStats dataset_stats(const std::vector<Record>& records,
                           const Dims& dims);

// Big-Vul style CSV -> JSON-lines. Column names and line-number base are
// overridable; flaw line indices in the source data are 0-based.
struct CsvOptions {
  std::string code_col = "processed_func";
  std::string cwe_col = "CWE ID";
  std::string id_col = "index";
  std::string lines_col = "flaw_line_index";
  bool lines_zero_based = true;
  std::string default_cwe = "CWE-0";
};

std::size_t convert_csv(const std::string& csv_path,
                        const std::string& out_path, const CsvOptions& opt);

}  // namespace vulmtl
