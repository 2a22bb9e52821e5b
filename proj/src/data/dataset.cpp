#include "vulmtl/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "vulmtl/errors.hpp"
#include "vulmtl/rng.hpp"

namespace vulmtl {

int Vocabulary::lookup(const std::string& token) const {
  auto it = ids.find(token);
  return it == ids.end() ? kUnk : it->second;
}

namespace {

bool valid_cwe(const std::string& s) {
  if (s.size() < 5 || s.compare(0, 4, "CWE-") != 0) return false;
  for (std::size_t i = 4; i < s.size(); ++i)
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  return true;
}

// Throws std::runtime_error with a reason on schema violations.
Record parse_record(const nlohmann::json& j) {
  if (!j.is_object()) throw std::runtime_error("not a JSON object");
  Record r;

  if (!j.contains("id")) throw std::runtime_error("missing id");
  if (j["id"].is_string())
    r.id = j["id"].get<std::string>();
  else if (j["id"].is_number_integer())
    r.id = std::to_string(j["id"].get<long long>());
  else
    throw std::runtime_error("id must be a string or integer");

  if (!j.contains("code") || !j["code"].is_string())
    throw std::runtime_error("missing or non-string code");
  r.code = j["code"].get<std::string>();
  if (r.code.empty()) throw std::runtime_error("empty code");

  if (!j.contains("cwe") || !j["cwe"].is_string())
    throw std::runtime_error("missing or non-string cwe");
  r.cwe = j["cwe"].get<std::string>();
  if (!valid_cwe(r.cwe)) throw std::runtime_error("cwe not of form CWE-<int>");

  if (j.contains("vuln_lines")) {
    if (!j["vuln_lines"].is_array())
      throw std::runtime_error("vuln_lines must be an array");
    for (const auto& v : j["vuln_lines"]) {
      if (!v.is_number_integer())
        throw std::runtime_error("vuln_lines entry not an integer");
      long long line = v.get<long long>();
      if (line < 1) throw std::runtime_error("vuln_lines entry below 1");
      r.vuln_lines.insert(static_cast<int>(line));
    }
  }

  if (j.contains("project") && j["project"].is_string())
    r.project = j["project"].get<std::string>();
  if (j.contains("commit") && j["commit"].is_string())
    r.commit = j["commit"].get<std::string>();
  return r;
}

}  // namespace

LoadSummary load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset: " + path);

  LoadSummary out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() ||
        line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    ++out.total_lines;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      out.records.push_back(parse_record(j));
    } catch (const std::exception& e) {
      ++out.malformed;
      if (out.messages.size() < 5)
        out.messages.push_back("line " + std::to_string(lineno) + ": " +
                               e.what());
    }
  }
  if (in.bad()) throw IoError("read error on dataset: " + path);

  if (out.total_lines > 0 &&
      10 * out.malformed > out.total_lines) {
    std::string msg = "dataset " + path + ": " +
                      std::to_string(out.malformed) + " of " +
                      std::to_string(out.total_lines) +
                      " lines malformed (over 10%)";
    for (const auto& m : out.messages) msg += "\n  " + m;
    throw ValidationError(msg);
  }
  return out;
}

void write_dataset(const std::string& path,
                   const std::vector<Record>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset: " + path);
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["code"] = r.code;
    j["cwe"] = r.cwe;
    j["vuln_lines"] = std::vector<int>(r.vuln_lines.begin(),
                                       r.vuln_lines.end());
    if (!r.project.empty()) j["project"] = r.project;
    if (!r.commit.empty()) j["commit"] = r.commit;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write error on dataset: " + path);
}

SplitResult stratified_split(const std::vector<Record>& records,
                             std::uint64_t seed, int r_train, int r_valid,
                             int r_test) {
  if (r_train < 1 || r_valid < 0 || r_test < 0)
    throw ContractError("stratified_split: bad ratios");
  const int R = r_train + r_valid + r_test;

  // class -> record indices, classes walked in sorted order so the single
  // shuffle stream is consumed deterministically
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < records.size(); ++i)
    by_class[records[i].cwe].push_back(i);

  DetRng rng(DetRng::derive(seed, 0x73706c6974));  // stream tag: "split"
  SplitResult out;

  for (auto& [cls, idx] : by_class) {
    // order within a class must not depend on input file order
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) {
                       return records[a].id < records[b].id;
                     });
    const std::size_t n = idx.size();
    auto& counts = out.class_counts[cls];

    if (n < 3) {
      for (auto i : idx) out.train.push_back(records[i]);
      counts = {n, 0, 0};
      out.warnings.push_back("class " + cls + " has " + std::to_string(n) +
                             " record(s); all assigned to train");
      continue;
    }

    rng.shuffle(idx);

    // largest-remainder apportionment; remainder ties resolve train-first
    std::array<long long, 3> ratio = {r_train, r_valid, r_test};
    std::array<std::size_t, 3> quota;
    std::array<std::pair<long long, int>, 3> frac;
    std::size_t assigned = 0;
    for (int s = 0; s < 3; ++s) {
      quota[s] = n * ratio[s] / R;
      frac[s] = {static_cast<long long>(n * ratio[s] % R), s};
      assigned += quota[s];
    }
    std::sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (std::size_t left = n - assigned, k = 0; k < left; ++k)
      ++quota[frac[k % 3].second];

    std::size_t pos = 0;
    for (std::size_t k = 0; k < quota[0]; ++k)
      out.train.push_back(records[idx[pos++]]);
    for (std::size_t k = 0; k < quota[1]; ++k)
      out.valid.push_back(records[idx[pos++]]);
    for (std::size_t k = 0; k < quota[2]; ++k)
      out.test.push_back(records[idx[pos++]]);
    counts = quota;
  }
  return out;
}

Vocabulary build_vocab(const std::vector<Record>& records, int min_freq) {
  if (records.empty()) throw ContractError("build_vocab: no records");
  std::map<std::string, std::size_t> freq;
  for (const auto& r : records)
    for (const auto& t : lex(r.code)) ++freq[t.text];

  std::vector<std::pair<std::string, std::size_t>> order(freq.begin(),
                                                         freq.end());
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });

  Vocabulary v;
  v.min_freq = min_freq;
  int next = 3;
  for (const auto& [tok, count] : order)
    if (count >= static_cast<std::size_t>(min_freq)) v.ids[tok] = next++;
  return v;
}

namespace {

std::string escape_token(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out;
}

std::string unescape_token(const std::string& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\' || i + 1 == s.size()) {
      out += s[i];
      continue;
    }
    switch (s[++i]) {
      case 't': out += '\t'; break;
      case 'n': out += '\n'; break;
      case 'r': out += '\r'; break;
      default: out += s[i];
    }
  }
  return out;
}

}  // namespace

void save_vocab(const std::string& path, const Vocabulary& vocab) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write vocabulary: " + path);
  out << "<PAD>\t0\n<UNK>\t1\n<CLS>\t2\n";
  std::vector<std::pair<int, std::string>> rows;
  for (const auto& [tok, id] : vocab.ids) rows.push_back({id, tok});
  std::sort(rows.begin(), rows.end());
  for (const auto& [id, tok] : rows)
    out << escape_token(tok) << '\t' << id << '\n';
  if (!out) throw IoError("write error on vocabulary: " + path);
}

Vocabulary load_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocabulary: " + path);
  Vocabulary v;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto tab = line.rfind('\t');
    if (tab == std::string::npos)
      throw ValidationError("vocabulary " + path + " line " +
                            std::to_string(lineno) + ": no tab separator");
    int id;
    try {
      id = std::stoi(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw ValidationError("vocabulary " + path + " line " +
                            std::to_string(lineno) + ": bad id");
    }
    if (id <= 2) continue;  // reserved rows are descriptive only
    std::string tok = unescape_token(line.substr(0, tab));
    if (!v.ids.emplace(tok, id).second)
      throw ValidationError("vocabulary " + path + ": duplicate token");
  }
  return v;
}

int ClassMap::label_of(const std::string& cwe) const {
  auto it = index.find(cwe);
  return it == index.end() ? other_index() : it->second;
}

ClassMap build_class_map(const std::vector<Record>& train_records) {
  std::set<std::string> names;
  for (const auto& r : train_records) names.insert(r.cwe);

  // numeric order, so CWE-20 sorts before CWE-119
  std::vector<std::string> ordered(names.begin(), names.end());
  std::sort(ordered.begin(), ordered.end(),
            [](const std::string& a, const std::string& b) {
              long long na = std::stoll(a.substr(4));
              long long nb = std::stoll(b.substr(4));
              return na != nb ? na < nb : a < b;
            });

  ClassMap cm;
  for (auto& name : ordered) {
    cm.index[name] = static_cast<int>(cm.classes.size());
    cm.classes.push_back(name);
  }
  cm.classes.push_back("OTHER");  // catch-all for unseen labels, always last
  return cm;
}

PaddedSample pad_truncate(const TokenizedFunction& tf, const Dims& dims) {
  if (dims.L_c < 2 || dims.N_l < 1 || dims.N_t < 1)
    throw ContractError("pad_truncate: dimensions must be positive");
  if (static_cast<int>(tf.tokens.size()) > dims.L_c)
    throw DimensionError("pad_truncate: sequence longer than token budget");

  PaddedSample s;
  s.sample_id = tf.sample_id;
  s.cwe_label = tf.cwe_label;
  s.real_len = static_cast<int>(tf.tokens.size());

  s.tokens = tf.tokens;
  s.tokens.resize(dims.L_c, Vocabulary::kPad);
  s.token_mask.assign(dims.L_c, 0);
  std::fill(s.token_mask.begin(), s.token_mask.begin() + s.real_len, 1);

  s.line_tokens.assign(dims.N_l, {});
  s.line_valid.assign(dims.N_l, 0);
  s.line_label.assign(dims.N_l, 0);
  for (const auto& [line, toks] : tf.line_map) {
    if (line < 1 || line > dims.N_l) continue;
    auto& row = s.line_tokens[line - 1];
    for (int t : toks) {
      if (static_cast<int>(row.size()) >= dims.N_t) break;
      row.push_back(t);
    }
    if (!row.empty()) s.line_valid[line - 1] = 1;
  }

  bool any_survives = false;
  for (int v : tf.vuln_lines) {
    if (v >= 1 && v <= dims.N_l && s.line_valid[v - 1]) {
      s.line_label[v - 1] = 1;
      any_survives = true;
    } else {
      s.truncated_vuln_lines.insert(v);
    }
  }
  s.line_loss_excluded = !tf.vuln_lines.empty() && !any_survives;
  return s;
}

PreparedSample prepare_sample(const Record& rec, const Vocabulary& vocab,
                              const ClassMap& classes, const Dims& dims) {
  PreparedSample ps;
  ps.tf = tokenize(rec.code, vocab, dims.L_c);
  ps.tf.sample_id = rec.id;
  ps.tf.cwe_label = classes.label_of(rec.cwe);
  ps.tf.vuln_lines = rec.vuln_lines;

  bool parsed_ok = false;
  attach_identifiers(ps.tf, extract_identifiers(rec.code, &parsed_ok));
  ps.tf.parse_fallback = !parsed_ok;

  ps.graph = build_def_use(ps.tf.identifier_spans);
  ps.mask = build_pdg_attention_mask(ps.tf, ps.graph, dims.L_c);
  ps.target_indices = select_perturbation_targets(ps.tf, ps.graph);

  ps.padded = pad_truncate(ps.tf, dims);
  for (int r = 0; r < static_cast<int>(ps.padded.line_label.size()); ++r)
    if (ps.padded.line_label[r]) ps.vuln_lines.insert(r + 1);
  return ps;
}

DatasetStats dataset_stats(const std::vector<Record>& records,
                           const Dims& dims) {
  if (records.empty()) throw ContractError("dataset_stats: no records");

  struct Acc {
    std::vector<long long> xs;
    std::size_t within = 0;
    void add(long long x, long long bound) {
      xs.push_back(x);
      if (x <= bound) ++within;
    }
    DimCoverage done(std::size_t n) const {
      DimCoverage c;
      c.coverage = static_cast<double>(within) / static_cast<double>(n);
      c.min = *std::min_element(xs.begin(), xs.end());
      c.max = *std::max_element(xs.begin(), xs.end());
      double mean = 0.0;
      for (long long x : xs) mean += static_cast<double>(x);
      mean /= static_cast<double>(xs.size());
      double var = 0.0;
      for (long long x : xs) {
        double d = static_cast<double>(x) - mean;
        var += d * d;
      }
      var /= static_cast<double>(xs.size());
      c.mean = mean;
      c.stddev = std::sqrt(var);
      return c;
    }
  } tok, lin, per_line;

  for (const auto& r : records) {
    const auto lx = lex(r.code);
    std::map<int, long long> on_line;
    long long max_line = 0;
    for (const auto& t : lx) {
      ++on_line[t.line];
      max_line = std::max(max_line, static_cast<long long>(t.line));
    }
    long long widest = 0;
    for (const auto& [line, n] : on_line) widest = std::max(widest, n);

    tok.add(static_cast<long long>(lx.size()) + 1, dims.L_c);  // + CLS slot
    lin.add(max_line, dims.N_l);
    per_line.add(widest, dims.N_t);
  }

  DatasetStats st;
  st.n_samples = records.size();
  st.tokens = tok.done(records.size());
  st.lines = lin.done(records.size());
  st.line_tokens = per_line.done(records.size());
  return st;
}

}  // namespace vulmtl
