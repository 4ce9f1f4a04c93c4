// sdfp: train -> fit -> prune -> generate / bench / verify, or all of it via
// `pipeline`. Shared parameters come from a JSON config (--config); flags
// given on the command line win over the file.

#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sdfp/checkpoint.hpp"
#include "sdfp/errors.hpp"
#include "sdfp/io_util.hpp"
#include "sdfp/pipeline.hpp"
#include "sdfp/pruner.hpp"
#include "sdfp/report.hpp"

namespace {

using namespace sdfp;
using nlohmann::json;

// A usage problem tied to one command-line flag or variable.
struct FlagError {
  std::string field;
  std::string message;
};

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  while (!s.empty() && s.back() == ' ') s.pop_back();
  return s;
}

void print_error(const std::string& kind, const std::string& field, const std::string& message) {
  std::string line = "error: kind=" + kind;
  if (!field.empty()) line += " field=" + field;
  line += " msg=\"" + one_line(message) + "\"";
  std::cerr << line << '\n';
}

// Config values that a flag may override. Each flag binds to its own copy of
// the default so --help can show it; only flags actually given are copied
// into the loaded config.
class Overrides {
 public:
  template <class V, class Get>
  CLI::Option* add(CLI::App* app, const std::string& flag, Get get, const std::string& help) {
    PipelineConfig defaults;
    auto value = std::make_shared<V>(get(defaults));
    CLI::Option* opt = app->add_option(flag, *value, help)->capture_default_str();
    appliers_.push_back([opt, value, get](PipelineConfig& c) {
      if (opt->count() > 0) get(c) = *value;
    });
    return opt;
  }

  // Enumerations travel as strings and are converted by `set`.
  CLI::Option* add_text(CLI::App* app, const std::string& flag, const std::string& fallback,
                        std::function<void(PipelineConfig&, const std::string&)> set,
                        const std::string& help) {
    auto value = std::make_shared<std::string>(fallback);
    CLI::Option* opt = app->add_option(flag, *value, help)->capture_default_str();
    appliers_.push_back([opt, value, set](PipelineConfig& c) {
      if (opt->count() > 0) set(c, *value);
    });
    return opt;
  }

  void apply(PipelineConfig& c) const {
    for (const auto& f : appliers_) f(c);
  }

 private:
  std::vector<std::function<void(PipelineConfig&)>> appliers_;
};

struct Common {
  std::string config_path;
  Overrides overrides;

  PipelineConfig load() const {
    PipelineConfig c = config_path.empty() ? PipelineConfig{} : load_pipeline_config(config_path);
    overrides.apply(c);
    c.validate();
    return c;
  }
};

void add_config(CLI::App* app, Common& common) {
  app->add_option("--config", common.config_path,
                  "JSON pipeline config; relative data paths resolve against its directory")
      ->capture_default_str();
}

void add_data_flags(CLI::App* app, Common& common) {
  auto& o = common.overrides;
  o.add<std::string>(app, "--corpus", [](PipelineConfig& c) -> auto& { return c.data.corpus; },
                     "corpus text file");
  o.add<std::string>(app, "--manifest",
                     [](PipelineConfig& c) -> auto& { return c.data.manifest; },
                     "manifest of document paths, one per line (overrides --corpus)");
  o.add<double>(app, "--train-fraction",
                [](PipelineConfig& c) -> auto& { return c.data.train_fraction; },
                "leading share of the corpus used for training and calibration");
}

void add_decode_flags(CLI::App* app, Common& common) {
  auto& o = common.overrides;
  o.add<std::size_t>(app, "--k", [](PipelineConfig& c) -> auto& { return c.decode.k; },
                     "draft tokens per round");
  o.add<std::size_t>(app, "--max-len",
                     [](PipelineConfig& c) -> auto& { return c.decode.max_len; },
                     "generated tokens, prompt excluded");
  o.add_text(app, "--mode", "greedy",
             [](PipelineConfig& c, const std::string& s) {
               c.decode.mode = decode_mode_from_string(s);
             },
             "greedy or sample");
  o.add<double>(app, "--temperature",
                [](PipelineConfig& c) -> auto& { return c.decode.temperature; },
                "sampling temperature (sample mode)");
  o.add<std::uint64_t>(app, "--seed", [](PipelineConfig& c) -> auto& { return c.decode.seed; },
                       "decoding seed");
}

// Checkpoint precision for the inference commands.
bool use_f64() {
  const char* env = std::getenv("SDFP_PRECISION");
  if (!env || std::string(env).empty() || std::string(env) == "f32") return false;
  if (std::string(env) == "f64") return true;
  throw FlagError{"SDFP_PRECISION", "expected f32 or f64, got '" + std::string(env) + "'"};
}

void need(const std::string& value, const std::string& flag) {
  if (value.empty()) throw FlagError{flag, "required flag is missing"};
}

// What the draft bypasses relative to the target, recovered from the masks.
PruneSet prune_set_between(const ActiveMask& target, const ActiveMask& draft) {
  PruneSet set;
  for (const auto& id : target.active_ids()) {
    if (!draft.active(id)) set.ids.push_back(id);
  }
  for (const auto& id : draft.active_ids()) {
    if (!target.active(id)) {
      throw UsageError("draft enables " + id.str() + ", which the target disables");
    }
  }
  return set;
}

std::pair<Corpus, Corpus> load_splits(const PipelineConfig& c) {
  return split_corpus(load_pipeline_corpus(c), c.data.train_fraction);
}

// ---- train ----------------------------------------------------------------

struct TrainCmd {
  Common common;
  std::string out = "target.ckpt";
  std::string loss_csv = "loss_curve.csv";

  void setup(CLI::App* app) {
    add_config(app, common);
    add_data_flags(app, common);
    auto& o = common.overrides;
    o.add<std::size_t>(app, "--steps", [](PipelineConfig& c) -> auto& { return c.train.steps; },
                       "optimizer steps");
    o.add<double>(app, "--lr", [](PipelineConfig& c) -> auto& { return c.train.lr; },
                  "peak learning rate");
    o.add<double>(app, "--momentum",
                  [](PipelineConfig& c) -> auto& { return c.train.momentum; }, "SGD momentum");
    o.add<std::size_t>(app, "--warmup-steps",
                       [](PipelineConfig& c) -> auto& { return c.train.warmup_steps; },
                       "linear warmup length");
    o.add<double>(app, "--grad-clip",
                  [](PipelineConfig& c) -> auto& { return c.train.grad_clip; },
                  "global gradient-norm clip, 0 disables");
    o.add<std::size_t>(app, "--batch-size",
                       [](PipelineConfig& c) -> auto& { return c.train.batch_size; },
                       "sequences per step");
    o.add<std::size_t>(app, "--seq-len",
                       [](PipelineConfig& c) -> auto& { return c.train.seq_len; },
                       "tokens per sequence");
    o.add<std::uint64_t>(app, "--seed", [](PipelineConfig& c) -> auto& { return c.train.seed; },
                         "batch sampling seed");
    o.add<std::uint32_t>(app, "--model-seed",
                         [](PipelineConfig& c) -> auto& { return c.model.rng_seed; },
                         "weight initialization seed");
    app->add_option("--out", out, "target checkpoint to write")->capture_default_str();
    app->add_option("--loss-csv", loss_csv, "loss curve CSV (step,loss)")->capture_default_str();
  }

  int run() const {
    const PipelineConfig c = common.load();
    const auto [train_split, heldout] = load_splits(c);
    const std::size_t every = std::max<std::size_t>(1, c.train.steps / 10);
    const auto res = train(init_model<float>(c.model), train_split, c.train,
                           [&](std::size_t step, double loss) {
                             if ((step + 1) % every == 0) {
                               std::fprintf(stderr, "[train] step %zu loss %.4f\n", step + 1, loss);
                             }
                           });
    save_checkpoint(res.model, out);
    write_file_atomic(loss_csv, loss_curve_csv(res.loss_curve));
    const auto smooth = smooth_curve(res.loss_curve, 100);
    if (!smooth.empty()) {
      std::printf("final smoothed loss %.4f (window 100), wrote %s\n", smooth.back(), out.c_str());
    }
    return 0;
  }
};

// ---- fit ------------------------------------------------------------------

struct FitCmd {
  Common common;
  std::string checkpoint;
  std::string out = "fit_report.json";
  std::string text_out;

  void setup(CLI::App* app) {
    add_config(app, common);
    add_data_flags(app, common);
    app->add_option("--checkpoint", checkpoint, "target checkpoint (required)");
    auto& o = common.overrides;
    o.add<std::size_t>(app, "--batches", [](PipelineConfig& c) -> auto& { return c.fit.batches; },
                       "calibration minibatches");
    o.add<std::size_t>(app, "--batch-size",
                       [](PipelineConfig& c) -> auto& { return c.fit.batch_size; },
                       "sequences per calibration minibatch");
    o.add<std::size_t>(app, "--seq-len", [](PipelineConfig& c) -> auto& { return c.fit.seq_len; },
                       "tokens per calibration sequence");
    o.add<std::uint64_t>(app, "--seed", [](PipelineConfig& c) -> auto& { return c.fit.seed; },
                         "calibration sampling seed");
    o.add<std::size_t>(app, "--threads", [](PipelineConfig& c) -> auto& { return c.fit.threads; },
                       "worker threads (result does not depend on it)");
    o.add_text(app, "--convention", "minibatch",
               [](PipelineConfig& c, const std::string& s) {
                 c.fit.convention = fit_convention_from_string(s);
               },
               "minibatch (squared norm of each minibatch gradient) or per_sample");
    app->add_option("--out", out, "JSON report")->capture_default_str();
    app->add_option("--text", text_out, "also write the aligned text table here")
        ->capture_default_str();
  }

  template <class T>
  FitTable measure(const PipelineConfig& c, std::span<const Batch> batches) const {
    FitOptions opt;
    opt.convention = c.fit.convention;
    opt.threads = c.fit.threads;
    return accumulate_fit(load_checkpoint<T>(checkpoint), batches, opt);
  }

  int run() const {
    need(checkpoint, "--checkpoint");
    const PipelineConfig c = common.load();
    const auto [train_split, heldout] = load_splits(c);
    const auto batches =
        sample_batches(train_split, c.fit.batches, c.fit.batch_size, c.fit.seq_len, c.fit.seed);
    FitTable fit = use_f64() ? measure<double>(c, batches) : measure<float>(c, batches);
    fit.corpus = train_split.name;
    fit.seed = c.fit.seed;
    write_file_atomic(out, fit_report_json(fit));
    const std::string table = fit_report_text(fit);
    if (!text_out.empty()) write_file_atomic(text_out, table);
    std::fputs(table.c_str(), stdout);
    return 0;
  }
};

// ---- prune ----------------------------------------------------------------

struct PruneCmd {
  Common common;
  std::string checkpoint;
  std::string fit_report;
  std::string out = "draft.ckpt";
  std::string set_out = "prune_set.json";

  void setup(CLI::App* app) {
    add_config(app, common);
    app->add_option("--checkpoint", checkpoint, "target checkpoint (required)");
    app->add_option("--fit-report", fit_report, "JSON report from `fit` (required)");
    auto& o = common.overrides;
    o.add<double>(app, "--attn-ratio", [](PipelineConfig& c) -> auto& { return c.prune.attn_ratio; },
                  "share of attention sublayers to bypass, in [0, 1)");
    o.add<double>(app, "--ffn-ratio", [](PipelineConfig& c) -> auto& { return c.prune.ffn_ratio; },
                  "share of FFN sublayers to bypass, in [0, 1)");
    app->add_option("--out", out, "draft checkpoint to write")->capture_default_str();
    app->add_option("--prune-set-out", set_out, "pruned sublayers as JSON")->capture_default_str();
  }

  int run() const {
    need(checkpoint, "--checkpoint");
    need(fit_report, "--fit-report");
    const PipelineConfig c = common.load();
    const auto target = load_checkpoint<float>(checkpoint);
    const FitTable fit = parse_fit_report(read_file_text(fit_report));
    const PruneSet set = select_prune_set(fit, c.prune.attn_ratio, c.prune.ffn_ratio);
    set.validate(target.config());
    save_checkpoint(build_draft(target, set), out);
    write_file_atomic(set_out, dump_json(prune_set_json(set)));
    std::printf("pruned");
    for (const auto& id : set.ids) std::printf(" %s", id.str().c_str());
    std::printf("\ndraft cost %.4f of target, wrote %s\n",
                draft_cost_model(target.config(), set), out.c_str());
    return 0;
  }
};

// ---- generate -------------------------------------------------------------

struct GenerateCmd {
  Common common;
  std::string target_ckpt;
  std::string draft_ckpt;
  std::string prompt;
  std::string prompt_file;
  std::string out = "generation.json";

  void setup(CLI::App* app) {
    add_config(app, common);
    app->add_option("--target-ckpt", target_ckpt, "target checkpoint (required)");
    app->add_option("--draft-ckpt", draft_ckpt,
                    "draft checkpoint; without it decoding is plain autoregressive");
    app->add_option("--prompt", prompt, "prompt text");
    app->add_option("--prompt-file", prompt_file, "read the prompt from a file");
    add_decode_flags(app, common);
    app->add_option("--out", out, "JSON round log")->capture_default_str();
  }

  template <class T>
  GenerationResult decode(const std::vector<Token>& tokens, const GenerationParams& params) const {
    const auto target = load_checkpoint<T>(target_ckpt);
    if (draft_ckpt.empty()) return vanilla_generate(target, tokens, params);
    return spec_generate(target, load_checkpoint<T>(draft_ckpt), tokens, params);
  }

  int run() const {
    need(target_ckpt, "--target-ckpt");
    if (!prompt.empty() && !prompt_file.empty()) {
      throw FlagError{"--prompt-file", "give either --prompt or --prompt-file"};
    }
    const std::string text = prompt_file.empty() ? prompt : read_file_text(prompt_file);
    if (text.empty()) throw FlagError{"--prompt", "prompt is empty"};
    const PipelineConfig c = common.load();
    const std::vector<Token> tokens = corpus_from_text("prompt", text).tokens;
    const auto res = use_f64() ? decode<double>(tokens, c.decode) : decode<float>(tokens, c.decode);
    write_file_atomic(out, dump_json(generation_json(res, tokens, c.decode)));
    std::fwrite(text.data(), 1, text.size(), stdout);
    const std::string gen = tokens_to_text(res.tokens);
    std::fwrite(gen.data(), 1, gen.size(), stdout);
    std::fputc('\n', stdout);
    if (!res.rounds.empty()) {
      std::fprintf(stderr, "%zu rounds, %zu/%zu proposals accepted\n", res.rounds.size(),
                   res.accepted(), res.proposed());
    }
    return 0;
  }
};

// ---- bench ----------------------------------------------------------------

struct BenchCmd {
  Common common;
  std::string target_ckpt;
  std::string draft_ckpt;
  std::string fit_report;
  std::string out = "bench_report.json";
  std::string study_csv_out = "ordering_study.csv";

  void setup(CLI::App* app) {
    add_config(app, common);
    add_data_flags(app, common);
    app->add_option("--target-ckpt", target_ckpt, "target checkpoint (required)");
    app->add_option("--draft-ckpt", draft_ckpt, "draft checkpoint (required)");
    app->add_option("--fit-report", fit_report,
                    "FIT report; when given, the pruning-ordering study runs too");
    add_decode_flags(app, common);
    auto& o = common.overrides;
    o.add<std::size_t>(app, "--prompts", [](PipelineConfig& c) -> auto& { return c.bench.prompts; },
                       "held-out prompts");
    o.add<std::size_t>(app, "--prompt-len",
                       [](PipelineConfig& c) -> auto& { return c.bench.prompt_len; },
                       "tokens per prompt");
    o.add<std::uint64_t>(app, "--prompt-seed",
                         [](PipelineConfig& c) -> auto& { return c.bench.prompt_seed; },
                         "prompt sampling seed");
    o.add<std::size_t>(app, "--repeats", [](PipelineConfig& c) -> auto& { return c.bench.repeats; },
                       "timed repeats (median reported) after one warmup");
    app->add_option("--out", out, "JSON report")->capture_default_str();
    app->add_option("--study-csv", study_csv_out, "ordering-study table")->capture_default_str();
  }

  template <class T>
  json measure(const PipelineConfig& c) const {
    const auto target = load_checkpoint<T>(target_ckpt);
    const auto draft = load_checkpoint<T>(draft_ckpt);
    const PruneSet set = prune_set_between(target.mask(), draft.mask());
    const auto [train_split, heldout] = load_splits(c);
    const auto prompts =
        sample_prompts(heldout, c.bench.prompts, c.bench.prompt_len, c.bench.prompt_seed);
    const auto res = bench(target, draft, prompts, c.decode, c.bench.repeats,
                           draft_cost_model(target.config(), set));
    std::printf("alpha %.4f  block efficiency %.3f  spec %.1f tok/s  vanilla %.1f tok/s  "
                "speedup %.3f (expected %.3f)\n",
                res.spec.alpha_tok, res.spec.block_efficiency, res.spec.tokens_per_second,
                res.vanilla.tokens_per_second, res.speedup, res.expected_speedup);
    json report = bench_json(res);
    if (!fit_report.empty()) {
      const FitTable fit = parse_fit_report(read_file_text(fit_report));
      const StudyResult study = prune_ordering_study(target, fit, heldout, c.bench.study);
      report["deterministic"]["ordering_study"] = study_json(study);
      write_file_atomic(study_csv_out, study_csv(study));
      std::printf("ordering study: bottom %.4f  random %.4f  top %.4f\n", study.mean_bottom,
                  study.mean_random, study.mean_top);
    }
    return report;
  }

  int run() const {
    need(target_ckpt, "--target-ckpt");
    need(draft_ckpt, "--draft-ckpt");
    const PipelineConfig c = common.load();
    const json report = use_f64() ? measure<double>(c) : measure<float>(c);
    write_file_atomic(out, dump_json(report));
    std::printf("%s\n", kPublishedSpeedupNote);
    return 0;
  }
};

// ---- verify ---------------------------------------------------------------

struct VerifyCmd {
  Common common;
  std::string target_ckpt;
  std::string draft_ckpt;
  std::string out = "verify_report.json";

  void setup(CLI::App* app) {
    add_config(app, common);
    add_data_flags(app, common);
    app->add_option("--target-ckpt", target_ckpt, "target checkpoint (required)");
    app->add_option("--draft-ckpt", draft_ckpt, "draft checkpoint (required)");
    auto& o = common.overrides;
    o.add<std::size_t>(app, "--samples",
                       [](PipelineConfig& c) -> auto& { return c.verify.n_samples; },
                       "Monte Carlo draws per path and context");
    o.add<std::size_t>(app, "--vocab", [](PipelineConfig& c) -> auto& { return c.verify.vocab; },
                       "restricted vocabulary (top-m target tokens)");
    o.add<std::size_t>(app, "--contexts",
                       [](PipelineConfig& c) -> auto& { return c.verify.contexts; },
                       "held-out contexts");
    o.add<std::size_t>(app, "--context-len",
                       [](PipelineConfig& c) -> auto& { return c.verify.context_len; },
                       "tokens per context");
    o.add<std::uint64_t>(app, "--seed", [](PipelineConfig& c) -> auto& { return c.verify.seed; },
                         "context and sampling seed");
    o.add<double>(app, "--temperature",
                  [](PipelineConfig& c) -> auto& { return c.decode.temperature; },
                  "temperature applied to both models");
  }

  template <class T>
  json measure(const PipelineConfig& c) const {
    const auto target = load_checkpoint<T>(target_ckpt);
    const auto draft = load_checkpoint<T>(draft_ckpt);
    const auto [train_split, heldout] = load_splits(c);
    const auto contexts =
        sample_contexts(heldout, c.verify.contexts, c.verify.context_len, c.verify.seed);
    json report;
    report["contexts"] = json::array();
    for (std::size_t i = 0; i < contexts.size(); ++i) {
      LosslessOptions lo;
      lo.n_samples = c.verify.n_samples;
      lo.vocab = c.verify.vocab;
      lo.seed = c.verify.seed + i;
      lo.temperature = c.decode.temperature;
      const auto res = lossless_test(target, draft, contexts[i], lo);
      for (const auto& w : res.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
      std::printf("context %zu: tv %.5f  chi2 %.2f (dof %zu, p %.4f)  exact deviation %.3g\n", i,
                  res.tv, res.chi_square, res.dof, res.p_value, res.exact_max_deviation);
      json entry = lossless_json(res);
      entry["context"] = tokens_to_text(contexts[i]);
      report["contexts"].push_back(std::move(entry));
    }
    return report;
  }

  int run() const {
    need(target_ckpt, "--target-ckpt");
    need(draft_ckpt, "--draft-ckpt");
    const PipelineConfig c = common.load();
    const json report = use_f64() ? measure<double>(c) : measure<float>(c);
    write_file_atomic(out, dump_json(report));
    return 0;
  }
};

// ---- pipeline -------------------------------------------------------------

struct PipelineCmd {
  Common common;
  std::string out_dir = "sdfp_out";

  void setup(CLI::App* app) {
    add_config(app, common);
    app->add_option("--out-dir", out_dir, "artifact directory")->capture_default_str();
  }

  int run() const {
    const PipelineConfig c = common.load();
    run_pipeline(c, out_dir, [](const std::string& line) {
      std::fprintf(stderr, "%s\n", line.c_str());
    });
    std::printf("artifacts in %s\n", out_dir.c_str());
    return 0;
  }
};

// CLI11 names the offending argument inside its message.
std::string flag_from_parse_error(const CLI::ParseError& e) {
  const std::string msg = e.what();
  const auto pos = msg.find("--");
  if (pos == std::string::npos) return "";
  auto end = msg.find_first_of(" :,=", pos);
  return msg.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speculative decoding with a FIT-pruned draft of a byte-level transformer"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  TrainCmd train_cmd;
  FitCmd fit_cmd;
  PruneCmd prune_cmd;
  GenerateCmd generate_cmd;
  BenchCmd bench_cmd;
  VerifyCmd verify_cmd;
  PipelineCmd pipeline_cmd;

  struct Entry {
    CLI::App* app;
    std::function<int()> run;
  };
  std::vector<Entry> entries;
  auto sub = [&](const char* name, const char* help, auto& cmd) {
    CLI::App* s = app.add_subcommand(name, help);
    cmd.setup(s);
    entries.push_back({s, [&cmd] { return cmd.run(); }});
  };
  sub("train", "train the target model on the corpus", train_cmd);
  sub("fit", "score every sublayer by its empirical Fisher trace", fit_cmd);
  sub("prune", "build the draft by bypassing the lowest-scoring sublayers", prune_cmd);
  sub("generate", "decode one prompt, speculatively when a draft is given", generate_cmd);
  sub("bench", "acceptance, throughput and speedup over held-out prompts", bench_cmd);
  sub("verify", "statistical and exact losslessness checks", verify_cmd);
  sub("pipeline", "every stage in order from one config", pipeline_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", flag_from_parse_error(e), e.what());
    return 2;
  }

  try {
    for (const auto& e : entries) {
      if (e.app->parsed()) return e.run();
    }
    return 2;
  } catch (const FlagError& e) {
    print_error("usage", e.field, e.message);
    return 2;
  } catch (const ConfigError& e) {
    print_error("config", e.field(), e.what());
    return 2;
  } catch (const Error& e) {
    print_error(to_string(e.kind()), "", e.what());
    return e.kind() == ErrorKind::kUsage ? 2 : 1;
  } catch (const std::exception& e) {
    print_error("internal", "", e.what());
    return 1;
  }
}
