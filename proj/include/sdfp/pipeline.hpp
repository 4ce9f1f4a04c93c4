#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "sdfp/bench.hpp"
#include "sdfp/corpus.hpp"
#include "sdfp/fit.hpp"
#include "sdfp/specdec.hpp"
#include "sdfp/trainer.hpp"
#include "sdfp/transformer.hpp"

namespace sdfp {

struct DataConfig {
  std::string corpus = "data/corpus.txt";
  std::string manifest;  // overrides `corpus` when set
  double train_fraction = 0.9;
};

struct FitStageConfig {
  std::size_t batches = 64;
  std::size_t batch_size = 8;
  std::size_t seq_len = 128;
  std::uint64_t seed = 11;
  FitConvention convention = FitConvention::kMinibatch;
  std::size_t threads = 1;
};

struct PruneStageConfig {
  double attn_ratio = 0.5;
  double ffn_ratio = 0.35;
};

struct BenchStageConfig {
  std::size_t prompts = 50;
  std::size_t prompt_len = 32;
  std::uint64_t prompt_seed = 21;
  std::size_t repeats = 5;
  StudyOptions study;
};

struct VerifyStageConfig {
  std::size_t n_samples = 200000;
  std::size_t vocab = 16;
  std::size_t contexts = 3;
  std::size_t context_len = 32;
  std::uint64_t seed = 5;
};

// One JSON document with a flat block per stage. Relative data paths resolve
// against `base_dir` (the config file's directory).
struct PipelineConfig {
  ModelConfig model;
  DataConfig data;
  TrainConfig train;
  FitStageConfig fit;
  PruneStageConfig prune;
  GenerationParams decode;
  BenchStageConfig bench;
  VerifyStageConfig verify;
  std::filesystem::path base_dir = ".";

  // Every block, before any work starts. Throws ConfigError with a dotted
  // field name such as "prune.attn_ratio".
  void validate() const;
  std::filesystem::path resolve(const std::string& path) const;
};

// Unknown keys and wrongly typed values are ConfigErrors naming the field.
PipelineConfig parse_pipeline_config(std::string_view json_text,
                                     const std::filesystem::path& base_dir = ".");
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
std::string pipeline_config_json(const PipelineConfig& config);

Corpus load_pipeline_corpus(const PipelineConfig& config);

// `count` prompts of `len` tokens taken from uniformly drawn corpus windows.
std::vector<std::vector<Token>> sample_prompts(const Corpus& corpus, std::size_t count,
                                               std::size_t len, std::uint64_t seed);

// Next-token contexts for the losslessness verifier.
std::vector<std::vector<Token>> sample_contexts(const Corpus& corpus, std::size_t count,
                                                std::size_t len, std::uint64_t seed);

// Artifact names inside the pipeline output directory.
namespace artifacts {
inline constexpr const char* kTarget = "target.ckpt";
inline constexpr const char* kLossCurve = "loss_curve.csv";
inline constexpr const char* kTrainSummary = "train_summary.json";
inline constexpr const char* kFitJson = "fit_report.json";
inline constexpr const char* kFitText = "fit_report.txt";
inline constexpr const char* kPruneSet = "prune_set.json";
inline constexpr const char* kDraft = "draft.ckpt";
inline constexpr const char* kGeneration = "generation.json";
inline constexpr const char* kBench = "bench_report.json";
inline constexpr const char* kStudyCsv = "ordering_study.csv";
inline constexpr const char* kVerify = "verify_report.json";
inline constexpr const char* kConfig = "config.json";
}  // namespace artifacts

using PipelineLog = std::function<void(const std::string& line)>;

// train -> fit -> prune -> generate -> bench (+ ordering study) -> verify.
// Every artifact is written atomically. Reports keep timings in a separate
// "timing" block so the rest is byte-reproducible.
void run_pipeline(const PipelineConfig& config, const std::filesystem::path& out_dir,
                  const PipelineLog& log = {});

}  // namespace sdfp
