#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vulmtl/dataset.hpp"

namespace vulmtl {

// Exit codes: 0 success, 2 I/O failure, 3 invalid input or configuration,
// 4 numeric failure, 1 anything unexpected.
enum ExitCode {
  kExitOk = 0,
  kExitUnexpected = 1,
  kExitIo = 2,
  kExitValidation = 3,
  kExitNumeric = 4,
};

// Flat tunables. Every field has a default; unknown keys are rejected.
struct RunConfig {
  double lr = 5e-6;
  int epochs = 100;
  int batch = 32;
  double dropout = 0.2;
  double grad_clip = 1.0;
  double pgd_eps = 0.02;
  double pgd_mu = 0.01;
  int pgd_steps = 3;
  double sigma = 0.01;
  double focal_gamma = 2.0;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int L_c = 512;
  int N_l = 256;
  int N_t = 64;
  std::uint64_t seed = 42;
  bool edat_enabled = true;
  std::string task_mode = "multi";
  int warmup_epochs = 0;
  int min_freq = 1;

  void apply(const std::string& key, const std::string& value);
  void validate() const;
};

// key=value per line; '#' starts a comment.
RunConfig load_config(const std::string& path);

void cmd_split(const std::string& input, const std::string& out_dir,
               const std::string& ratios, std::uint64_t seed);
void cmd_vocab(const std::string& input, const std::string& out, int min_freq);
void cmd_train(const RunConfig& cfg, const std::string& train_path,
               const std::string& valid_path, const std::string& vocab_path,
               const std::string& out_model, const std::string& log_path);
void cmd_eval(const std::string& model_path, const std::string& test_path,
              const std::string& out_report);
void cmd_targets(const std::string& source_path, const std::string& out_path,
                 int max_len);
void cmd_stats(const std::string& input, const Dims& dims,
               const std::string& out_path);
void cmd_convert_csv(const std::string& input, const std::string& out,
                     const CsvOptions& opt);

// Full argument parsing plus exception-to-exit-code mapping. The vector
// overload takes arguments without the program name.
int run_cli(const std::vector<std::string>& args);
int run_cli(int argc, char** argv);

}  // namespace vulmtl
