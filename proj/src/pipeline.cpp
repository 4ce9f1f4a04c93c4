#include "sdfp/pipeline.hpp"

#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "sdfp/checkpoint.hpp"
#include "sdfp/errors.hpp"
#include "sdfp/io_util.hpp"
#include "sdfp/pruner.hpp"
#include "sdfp/report.hpp"

namespace sdfp {

using nlohmann::json;

namespace {

// Reads one config block, remembering which keys were consumed so leftovers
// can be reported as unknown.
class Block {
 public:
  Block(const json& doc, std::string name) : name_(std::move(name)) {
    if (!doc.contains(name_)) return;
    const json& b = doc.at(name_);
    if (!b.is_object()) throw ConfigError(name_, "must be a JSON object");
    obj_ = &b;
  }

  template <class U>
  void uint(const char* key, U& out) {
    const json* v = take(key);
    if (!v) return;
    if (!v->is_number_unsigned()) throw ConfigError(field(key), "expected a non-negative integer");
    const auto raw = v->get<std::uint64_t>();
    if (raw > std::numeric_limits<U>::max()) throw ConfigError(field(key), "out of range");
    out = static_cast<U>(raw);
  }

  void real(const char* key, double& out) {
    const json* v = take(key);
    if (!v) return;
    if (!v->is_number()) throw ConfigError(field(key), "expected a number");
    out = v->get<double>();
  }

  void text(const char* key, std::string& out) {
    const json* v = take(key);
    if (!v) return;
    if (!v->is_string()) throw ConfigError(field(key), "expected a string");
    out = v->get<std::string>();
  }

  void uint_list(const char* key, std::vector<std::uint64_t>& out) {
    const json* v = take(key);
    if (!v) return;
    if (!v->is_array()) throw ConfigError(field(key), "expected an array of integers");
    out.clear();
    for (const auto& e : *v) {
      if (!e.is_number_unsigned()) throw ConfigError(field(key), "expected an array of integers");
      out.push_back(e.get<std::uint64_t>());
    }
  }

  void finish() const {
    if (!obj_) return;
    for (const auto& [key, _] : obj_->items()) {
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) {
        throw ConfigError(field(key), "unknown key");
      }
    }
  }

  std::string field(const std::string& key) const { return name_ + "." + key; }

 private:
  const json* take(const char* key) {
    seen_.emplace_back(key);
    if (!obj_ || !obj_->contains(key)) return nullptr;
    return &obj_->at(key);
  }

  std::string name_;
  const json* obj_ = nullptr;
  std::vector<std::string> seen_;
};

// Re-raises a module's ConfigError under the block's dotted name.
template <class F>
void in_block(const std::string& block, F&& check) {
  try {
    check();
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    const std::string prefix = e.field() + ": ";
    if (msg.rfind(prefix, 0) == 0) msg = msg.substr(prefix.size());
    throw ConfigError(block + "." + e.field(), msg);
  }
}

std::size_t uniform_offset(std::mt19937_64& rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * double(n)));
}

std::vector<std::vector<Token>> corpus_windows(const Corpus& corpus, std::size_t count,
                                               std::size_t len, std::uint64_t seed) {
  if (len == 0) throw UsageError("window length must be positive");
  if (len > corpus.size()) {
    throw UsageError("corpus '" + corpus.name + "' is shorter than one window of " +
                     std::to_string(len) + " tokens");
  }
  std::mt19937_64 rng(seed);
  std::vector<std::vector<Token>> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t at = uniform_offset(rng, corpus.size() - len + 1);
    out.emplace_back(corpus.tokens.begin() + at, corpus.tokens.begin() + at + len);
  }
  return out;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

void PipelineConfig::validate() const {
  in_block("model", [&] { model.validate(); });
  if (data.manifest.empty() && data.corpus.empty()) {
    throw ConfigError("data.corpus", "either corpus or manifest must be set");
  }
  if (!(data.train_fraction > 0.0 && data.train_fraction < 1.0)) {
    throw ConfigError("data.train_fraction", "must lie in (0, 1)");
  }
  in_block("train", [&] { train.validate(); });
  if (train.seq_len > model.max_context) {
    throw ConfigError("train.seq_len", "exceeds model.max_context");
  }
  if (fit.batches == 0) throw ConfigError("fit.batches", "need at least one batch");
  if (fit.batch_size == 0) throw ConfigError("fit.batch_size", "must be positive");
  if (fit.seq_len == 0 || fit.seq_len > model.max_context) {
    throw ConfigError("fit.seq_len", "must lie in [1, model.max_context]");
  }
  if (fit.threads == 0) throw ConfigError("fit.threads", "must be positive");
  if (!(prune.attn_ratio >= 0.0 && prune.attn_ratio < 1.0)) {
    throw ConfigError("prune.attn_ratio", "must lie in [0, 1)");
  }
  if (!(prune.ffn_ratio >= 0.0 && prune.ffn_ratio < 1.0)) {
    throw ConfigError("prune.ffn_ratio", "must lie in [0, 1)");
  }
  in_block("decode", [&] { decode.validate(); });
  if (decode.eos_token >= model.vocab_size) {
    throw ConfigError("decode.eos_token", "outside the vocabulary");
  }
  if (bench.prompts == 0) throw ConfigError("bench.prompts", "need at least one prompt");
  if (bench.prompt_len == 0 || bench.prompt_len >= model.max_context) {
    throw ConfigError("bench.prompt_len", "must lie in [1, model.max_context)");
  }
  if (bench.repeats == 0) throw ConfigError("bench.repeats", "must be positive");
  const auto& st = bench.study;
  if (!(st.ratio >= 0.0 && st.ratio < 1.0)) throw ConfigError("study.ratio", "must lie in [0, 1)");
  if (st.seeds.empty()) throw ConfigError("study.seeds", "need at least one seed");
  if (st.batches_per_seed == 0) throw ConfigError("study.batches_per_seed", "must be positive");
  if (st.batch_size == 0) throw ConfigError("study.batch_size", "must be positive");
  if (st.seq_len == 0 || st.seq_len > model.max_context) {
    throw ConfigError("study.seq_len", "must lie in [1, model.max_context]");
  }
  if (verify.n_samples == 0) throw ConfigError("verify.n_samples", "must be positive");
  if (verify.vocab < 2 || verify.vocab > model.vocab_size) {
    throw ConfigError("verify.vocab", "must lie in [2, model.vocab_size]");
  }
  if (verify.contexts == 0) throw ConfigError("verify.contexts", "must be positive");
  if (verify.context_len == 0 || verify.context_len > model.max_context) {
    throw ConfigError("verify.context_len", "must lie in [1, model.max_context]");
  }
}

std::filesystem::path PipelineConfig::resolve(const std::string& path) const {
  const std::filesystem::path p(path);
  return p.is_absolute() ? p : base_dir / p;
}

PipelineConfig parse_pipeline_config(std::string_view json_text,
                                     const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(e.byte, std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config", "top level must be a JSON object");
  static const char* kBlocks[] = {"model", "data", "train", "fit", "prune",
                                  "decode", "bench", "study", "verify"};
  for (const auto& [key, _] : doc.items()) {
    if (std::find(std::begin(kBlocks), std::end(kBlocks), key) == std::end(kBlocks)) {
      throw ConfigError(key, "unknown config block");
    }
  }

  PipelineConfig c;
  c.base_dir = base_dir;

  Block m(doc, "model");
  m.uint("vocab_size", c.model.vocab_size);
  m.uint("d_model", c.model.d_model);
  m.uint("n_heads", c.model.n_heads);
  m.uint("n_layers", c.model.n_layers);
  m.uint("d_ff", c.model.d_ff);
  m.uint("max_context", c.model.max_context);
  m.uint("rng_seed", c.model.rng_seed);
  m.finish();

  Block d(doc, "data");
  d.text("corpus", c.data.corpus);
  d.text("manifest", c.data.manifest);
  d.real("train_fraction", c.data.train_fraction);
  d.finish();

  Block t(doc, "train");
  t.uint("steps", c.train.steps);
  t.real("lr", c.train.lr);
  t.real("momentum", c.train.momentum);
  t.uint("warmup_steps", c.train.warmup_steps);
  t.real("grad_clip", c.train.grad_clip);
  t.uint("batch_size", c.train.batch_size);
  t.uint("seq_len", c.train.seq_len);
  t.uint("seed", c.train.seed);
  t.finish();

  Block f(doc, "fit");
  f.uint("batches", c.fit.batches);
  f.uint("batch_size", c.fit.batch_size);
  f.uint("seq_len", c.fit.seq_len);
  f.uint("seed", c.fit.seed);
  f.uint("threads", c.fit.threads);
  std::string convention = to_string(c.fit.convention);
  f.text("convention", convention);
  in_block("fit", [&] { c.fit.convention = fit_convention_from_string(convention); });
  f.finish();

  Block p(doc, "prune");
  p.real("attn_ratio", c.prune.attn_ratio);
  p.real("ffn_ratio", c.prune.ffn_ratio);
  p.finish();

  Block g(doc, "decode");
  g.uint("k", c.decode.k);
  g.uint("max_len", c.decode.max_len);
  std::string mode = to_string(c.decode.mode);
  g.text("mode", mode);
  in_block("decode", [&] { c.decode.mode = decode_mode_from_string(mode); });
  g.real("temperature", c.decode.temperature);
  g.uint("seed", c.decode.seed);
  g.uint("eos_token", c.decode.eos_token);
  g.finish();

  Block b(doc, "bench");
  b.uint("prompts", c.bench.prompts);
  b.uint("prompt_len", c.bench.prompt_len);
  b.uint("prompt_seed", c.bench.prompt_seed);
  b.uint("repeats", c.bench.repeats);
  b.finish();

  Block s(doc, "study");
  s.real("ratio", c.bench.study.ratio);
  s.uint_list("seeds", c.bench.study.seeds);
  s.uint("batches_per_seed", c.bench.study.batches_per_seed);
  s.uint("batch_size", c.bench.study.batch_size);
  s.uint("seq_len", c.bench.study.seq_len);
  s.uint("random_sets", c.bench.study.random_sets);
  s.uint("random_seed", c.bench.study.random_seed);
  s.finish();

  Block v(doc, "verify");
  v.uint("n_samples", c.verify.n_samples);
  v.uint("vocab", c.verify.vocab);
  v.uint("contexts", c.verify.contexts);
  v.uint("context_len", c.verify.context_len);
  v.uint("seed", c.verify.seed);
  v.finish();

  c.validate();
  return c;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file_text(path);
  } catch (const IoError&) {
    throw ConfigError("config", "cannot read '" + path.string() + "'");
  }
  auto base = path.parent_path();
  if (base.empty()) base = ".";
  return parse_pipeline_config(text, base);
}

std::string pipeline_config_json(const PipelineConfig& c) {
  json j;
  j["model"] = {{"vocab_size", c.model.vocab_size}, {"d_model", c.model.d_model},
                {"n_heads", c.model.n_heads},       {"n_layers", c.model.n_layers},
                {"d_ff", c.model.d_ff},             {"max_context", c.model.max_context},
                {"rng_seed", c.model.rng_seed}};
  j["data"] = {{"corpus", c.data.corpus},
               {"manifest", c.data.manifest},
               {"train_fraction", c.data.train_fraction}};
  j["train"] = {{"steps", c.train.steps},
                {"lr", c.train.lr},
                {"momentum", c.train.momentum},
                {"warmup_steps", c.train.warmup_steps},
                {"grad_clip", c.train.grad_clip},
                {"batch_size", c.train.batch_size},
                {"seq_len", c.train.seq_len},
                {"seed", c.train.seed}};
  j["fit"] = {{"batches", c.fit.batches},       {"batch_size", c.fit.batch_size},
              {"seq_len", c.fit.seq_len},       {"seed", c.fit.seed},
              {"threads", c.fit.threads},       {"convention", to_string(c.fit.convention)}};
  j["prune"] = {{"attn_ratio", c.prune.attn_ratio}, {"ffn_ratio", c.prune.ffn_ratio}};
  j["decode"] = {{"k", c.decode.k},
                 {"max_len", c.decode.max_len},
                 {"mode", to_string(c.decode.mode)},
                 {"temperature", c.decode.temperature},
                 {"seed", c.decode.seed},
                 {"eos_token", c.decode.eos_token}};
  j["bench"] = {{"prompts", c.bench.prompts},
                {"prompt_len", c.bench.prompt_len},
                {"prompt_seed", c.bench.prompt_seed},
                {"repeats", c.bench.repeats}};
  const auto& st = c.bench.study;
  j["study"] = {{"ratio", st.ratio},
                {"seeds", st.seeds},
                {"batches_per_seed", st.batches_per_seed},
                {"batch_size", st.batch_size},
                {"seq_len", st.seq_len},
                {"random_sets", st.random_sets},
                {"random_seed", st.random_seed}};
  j["verify"] = {{"n_samples", c.verify.n_samples},
                 {"vocab", c.verify.vocab},
                 {"contexts", c.verify.contexts},
                 {"context_len", c.verify.context_len},
                 {"seed", c.verify.seed}};
  return dump_json(j);
}

Corpus load_pipeline_corpus(const PipelineConfig& config) {
  if (!config.data.manifest.empty()) return load_corpus_manifest(config.resolve(config.data.manifest));
  return load_corpus(config.resolve(config.data.corpus));
}

std::vector<std::vector<Token>> sample_prompts(const Corpus& corpus, std::size_t count,
                                               std::size_t len, std::uint64_t seed) {
  return corpus_windows(corpus, count, len, seed);
}

std::vector<std::vector<Token>> sample_contexts(const Corpus& corpus, std::size_t count,
                                                std::size_t len, std::uint64_t seed) {
  // Different stream from the prompts even when the seeds coincide.
  return corpus_windows(corpus, count, len, seed ^ 0x5bd1e9955bd1e995ULL);
}

void run_pipeline(const PipelineConfig& config, const std::filesystem::path& out_dir,
                  const PipelineLog& log) {
  config.validate();
  auto say = [&](const std::string& line) {
    if (log) log(line);
  };
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());
  write_file_atomic(out_dir / artifacts::kConfig, pipeline_config_json(config));

  const Corpus corpus = load_pipeline_corpus(config);
  const auto [train_split, heldout] = split_corpus(corpus, config.data.train_fraction);
  say("[data] " + corpus.name + ": " + std::to_string(corpus.size()) + " tokens, " +
      std::to_string(train_split.size()) + " train / " + std::to_string(heldout.size()) +
      " held out");

  // Stage: train.
  const Model<float> init = init_model<float>(config.model);
  const std::size_t every = std::max<std::size_t>(1, config.train.steps / 10);
  auto trained = train(init, train_split, config.train, [&](std::size_t step, double loss) {
    if ((step + 1) % every == 0) {
      say("[train] step " + std::to_string(step + 1) + "/" +
          std::to_string(config.train.steps) + " loss " + fixed(loss, 4));
    }
  });
  const Model<float>& target = trained.model;
  save_checkpoint(target, out_dir / artifacts::kTarget);
  write_file_atomic(out_dir / artifacts::kLossCurve, loss_curve_csv(trained.loss_curve));
  {
    const auto smooth = smooth_curve(trained.loss_curve, 100);
    json s;
    s["steps"] = config.train.steps;
    s["corpus"] = train_split.name;
    s["initial_loss"] = trained.loss_curve.empty() ? 0.0 : trained.loss_curve.front();
    s["final_loss"] = trained.loss_curve.empty() ? 0.0 : trained.loss_curve.back();
    s["final_smoothed_loss"] = smooth.empty() ? 0.0 : smooth.back();
    s["smoothing_window"] = 100;
    s["uniform_loss"] = std::log(double(config.model.vocab_size));
    write_file_atomic(out_dir / artifacts::kTrainSummary, dump_json(s));
  }

  // Stage: fit, on calibration windows from the training split.
  const auto calib = sample_batches(train_split, config.fit.batches, config.fit.batch_size,
                                    config.fit.seq_len, config.fit.seed);
  FitOptions fopt;
  fopt.convention = config.fit.convention;
  fopt.threads = config.fit.threads;
  FitTable fit = accumulate_fit(target, std::span<const Batch>(calib), fopt);
  fit.corpus = train_split.name;
  fit.seed = config.fit.seed;
  write_file_atomic(out_dir / artifacts::kFitJson, fit_report_json(fit));
  write_file_atomic(out_dir / artifacts::kFitText, fit_report_text(fit));
  say("[fit] " + std::to_string(fit.scores.size()) + " sublayers scored over " +
      std::to_string(calib.size()) + " batches");

  // Stage: prune.
  const PruneSet prune = select_prune_set(fit, config.prune.attn_ratio, config.prune.ffn_ratio);
  prune.validate(config.model);
  const Model<float> draft = build_draft(target, prune);
  save_checkpoint(draft, out_dir / artifacts::kDraft);
  write_file_atomic(out_dir / artifacts::kPruneSet, dump_json(prune_set_json(prune)));
  const double cost = draft_cost_model(config.model, prune);
  {
    std::string ids;
    for (const auto& id : prune.ids) ids += (ids.empty() ? "" : " ") + id.str();
    say("[prune] " + ids + " (draft cost " + fixed(cost, 3) + ")");
  }

  // Stage: generate, one sample on the first held-out prompt.
  const auto prompts =
      sample_prompts(heldout, config.bench.prompts, config.bench.prompt_len, config.bench.prompt_seed);
  {
    const auto gen = spec_generate(target, draft, prompts.front(), config.decode);
    write_file_atomic(out_dir / artifacts::kGeneration,
                      dump_json(generation_json(gen, prompts.front(), config.decode)));
  }

  // Stage: bench and ordering study.
  say("[bench] " + std::to_string(prompts.size()) + " prompts x " +
      std::to_string(config.bench.repeats) + " repeats");
  const BenchResult br = bench(target, draft, prompts, config.decode, config.bench.repeats, cost);
  say("[bench] alpha " + fixed(br.spec.alpha_tok, 3) + ", block efficiency " +
      fixed(br.spec.block_efficiency, 3) + ", speedup " + fixed(br.speedup, 3) +
      " (expected " + fixed(br.expected_speedup, 3) + ")");
  const StudyResult study = prune_ordering_study(target, fit, heldout, config.bench.study);
  say("[study] mean delta bottom " + fixed(study.mean_bottom, 4) + ", random " +
      fixed(study.mean_random, 4) + ", top " + fixed(study.mean_top, 4));
  json report = bench_json(br);
  report["deterministic"]["prune_set"] = prune_set_json(prune);
  report["deterministic"]["ordering_study"] = study_json(study);
  write_file_atomic(out_dir / artifacts::kBench, dump_json(report));
  write_file_atomic(out_dir / artifacts::kStudyCsv, study_csv(study));

  // Stage: verify.
  const auto contexts = sample_contexts(heldout, config.verify.contexts,
                                        config.verify.context_len, config.verify.seed);
  json vr;
  vr["contexts"] = json::array();
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    LosslessOptions lo;
    lo.n_samples = config.verify.n_samples;
    lo.vocab = config.verify.vocab;
    lo.seed = config.verify.seed + i;
    lo.temperature = config.decode.mode == DecodeMode::kSample ? config.decode.temperature : 1.0;
    const auto res = lossless_test(target, draft, contexts[i], lo);
    json entry = lossless_json(res);
    entry["context"] = tokens_to_text(contexts[i]);
    vr["contexts"].push_back(std::move(entry));
    say("[verify] context " + std::to_string(i) + ": tv " + fixed(res.tv, 4) + ", chi2 p " +
        fixed(res.p_value, 4) + ", exact deviation " + std::to_string(res.exact_max_deviation));
  }
  write_file_atomic(out_dir / artifacts::kVerify, dump_json(vr));
}

}  // namespace sdfp
