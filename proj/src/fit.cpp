#include "sdfp/fit.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <limits>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "sdfp/errors.hpp"

namespace sdfp {

using nlohmann::json;

const char* to_string(FitConvention c) {
  return c == FitConvention::kMinibatch ? "minibatch" : "per_sample";
}

FitConvention fit_convention_from_string(const std::string& s) {
  if (s == "minibatch") return FitConvention::kMinibatch;
  if (s == "per_sample") return FitConvention::kPerSample;
  throw ConfigError("convention", "expected minibatch or per_sample, got '" + s + "'");
}

double FitTable::score(SublayerId id) const {
  auto it = scores.find(id);
  if (it == scores.end()) throw IndexError("no FIT entry for " + id.str());
  return it->second;
}

std::uint64_t FitTable::fingerprint() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& [id, v] : scores) {
    const std::uint32_t layer = id.layer;
    const std::uint8_t kind = static_cast<std::uint8_t>(id.kind);
    mix(&layer, sizeof layer);
    mix(&kind, sizeof kind);
    mix(&v, sizeof v);
  }
  return h;
}

namespace {

struct Task {
  std::size_t batch;
  std::size_t row;  // only used for per-sample
};

}  // namespace

template <class T>
FitTable accumulate_fit(const Model<T>& model, std::span<const Batch> batches,
                        const FitOptions& options) {
  if (batches.empty()) throw UsageError("accumulate_fit needs at least one batch");
  if (!(options.loss_scale > 0.0) || !std::isfinite(options.loss_scale)) {
    throw ConfigError("loss_scale", "must be a positive finite number");
  }
  const auto& layout = model.weights().layout();
  const std::vector<SublayerId> ids = model.mask().active_ids();
  if (ids.empty()) throw UsageError("accumulate_fit: model has no active sublayers");
  std::vector<std::vector<ParamId>> params;
  for (const auto& id : ids) params.push_back(layout.sublayer_params(id));

  std::vector<Task> tasks;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    if (options.convention == FitConvention::kMinibatch) {
      tasks.push_back({b, 0});
    } else {
      for (std::size_t r = 0; r < batches[b].batch_size; ++r) tasks.push_back({b, r});
    }
  }

  std::vector<std::vector<double>> contrib(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        const Task& task = tasks[i];
        const Batch one = options.convention == FitConvention::kMinibatch
                              ? Batch{}
                              : batches[task.batch].row_batch(task.row);
        const Batch& batch =
            options.convention == FitConvention::kMinibatch ? batches[task.batch] : one;
        const auto lg = loss_and_gradients(model, batch, T(options.loss_scale));
        auto& out = contrib[i];
        out.resize(ids.size());
        for (std::size_t s = 0; s < ids.size(); ++s) {
          out[s] = lg.grads.squared_norm(params[s]);
          if (!std::isfinite(out[s])) {
            throw NumericError("non-finite gradient norm for sublayer " + ids[s].str());
          }
        }
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(options.threads, tasks.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  FitTable fit;
  fit.convention = options.convention;
  fit.n_batches = batches.size();
  fit.batch_size = batches.front().batch_size;
  fit.seq_len = batches.front().seq_len;
  fit.normalizer = tasks.size();
  fit.loss_scale = options.loss_scale;
  std::vector<double> column(tasks.size());
  for (std::size_t s = 0; s < ids.size(); ++s) {
    for (std::size_t i = 0; i < tasks.size(); ++i) column[i] = contrib[i][s];
    std::sort(column.begin(), column.end());
    double total = 0.0;
    for (double v : column) total += v;
    fit.scores[ids[s]] = total / double(fit.normalizer);
  }
  return fit;
}

std::vector<SublayerId> rank_sublayers(const FitTable& fit) {
  if (fit.scores.empty()) throw UsageError("rank_sublayers: empty FIT table");
  std::vector<std::pair<SublayerId, double>> entries(fit.scores.begin(), fit.scores.end());
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second < b.second;
    if (a.first.layer != b.first.layer) return a.first.layer > b.first.layer;
    return a.first.kind == SublayerKind::kFfn && b.first.kind == SublayerKind::kAttention;
  });
  std::vector<SublayerId> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.first);
  return out;
}

PruneSet select_prune_set(const FitTable& fit, double attn_ratio, double ffn_ratio) {
  auto check = [](double r, const char* field) {
    if (!(r >= 0.0 && r < 1.0)) {
      throw ConfigError(field, "ratio must lie in [0, 1), got " + std::to_string(r));
    }
  };
  check(attn_ratio, "attn_ratio");
  check(ffn_ratio, "ffn_ratio");
  const auto ranked = rank_sublayers(fit);
  PruneSet out;
  out.attn_ratio = attn_ratio;
  out.ffn_ratio = ffn_ratio;
  out.fit_fingerprint = fit.fingerprint();
  for (SublayerKind kind : {SublayerKind::kAttention, SublayerKind::kFfn}) {
    std::vector<SublayerId> of_kind;
    for (const auto& id : ranked)
      if (id.kind == kind) of_kind.push_back(id);
    const double ratio = kind == SublayerKind::kAttention ? attn_ratio : ffn_ratio;
    // The small slack keeps products such as 0.35 * 20 = 6.999... at 7.
    const auto take = static_cast<std::size_t>(std::floor(ratio * double(of_kind.size()) + 1e-9));
    out.ids.insert(out.ids.end(), of_kind.begin(), of_kind.begin() + take);
  }
  std::sort(out.ids.begin(), out.ids.end());
  return out;
}

namespace {

std::string log10_text(double v) {
  if (v <= 0.0) return "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", std::log10(v));
  return buf;
}

SublayerId parse_id(const json& e) {
  return {e.at("layer").get<std::uint32_t>(),
          sublayer_kind_from_string(e.at("kind").get<std::string>())};
}

}  // namespace

std::string fit_report_json(const FitTable& fit) {
  json doc;
  doc["convention"] = to_string(fit.convention);
  doc["normalizer"] = fit.normalizer;
  doc["n_batches"] = fit.n_batches;
  doc["batch_size"] = fit.batch_size;
  doc["seq_len"] = fit.seq_len;
  doc["corpus"] = fit.corpus;
  doc["seed"] = fit.seed;
  doc["loss_scale"] = fit.loss_scale;
  char fp[20];
  std::snprintf(fp, sizeof fp, "%016llx", static_cast<unsigned long long>(fit.fingerprint()));
  doc["fingerprint"] = fp;
  json rows = json::array();
  const auto ranked = rank_sublayers(fit);
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    const double t = fit.score(ranked[r]);
    json e;
    e["rank"] = r;
    e["id"] = ranked[r].str();
    e["layer"] = ranked[r].layer;
    e["kind"] = to_string(ranked[r].kind);
    e["fit"] = t;
    if (t > 0.0) {
      e["log10_fit"] = std::log10(t);
    } else {
      e["log10_fit"] = "-inf";
    }
    rows.push_back(std::move(e));
  }
  doc["sublayers"] = std::move(rows);
  return doc.dump(2) + "\n";
}

std::string fit_report_text(const FitTable& fit) {
  std::ostringstream os;
  os << "FIT (" << to_string(fit.convention) << ", N=" << fit.normalizer << ", "
     << fit.n_batches << " batches of " << fit.batch_size << "x" << fit.seq_len << ")\n";
  char line[128];
  std::snprintf(line, sizeof line, "%4s  %-8s  %16s  %12s\n", "rank", "sublayer", "T", "log10(T)");
  os << line;
  const auto ranked = rank_sublayers(fit);
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    const double t = fit.score(ranked[r]);
    std::snprintf(line, sizeof line, "%4zu  %-8s  %16.9e  %12s\n", r, ranked[r].str().c_str(), t,
                  log10_text(t).c_str());
    os << line;
  }
  return os.str();
}

FitTable parse_fit_report(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(e.byte, std::string("FIT report is not valid JSON: ") + e.what());
  }
  try {
    FitTable fit;
    fit.convention = fit_convention_from_string(doc.at("convention").get<std::string>());
    fit.normalizer = doc.at("normalizer").get<std::size_t>();
    fit.n_batches = doc.at("n_batches").get<std::size_t>();
    fit.batch_size = doc.at("batch_size").get<std::size_t>();
    fit.seq_len = doc.at("seq_len").get<std::size_t>();
    fit.corpus = doc.at("corpus").get<std::string>();
    fit.seed = doc.at("seed").get<std::uint64_t>();
    fit.loss_scale = doc.at("loss_scale").get<double>();
    for (const auto& e : doc.at("sublayers")) {
      const double t = e.at("fit").get<double>();
      if (!(t >= 0.0) || !std::isfinite(t)) {
        throw ConfigError("fit", "FIT scores must be finite and non-negative");
      }
      if (!fit.scores.emplace(parse_id(e), t).second) {
        throw ConfigError("sublayers", "duplicate entry " + e.at("id").get<std::string>());
      }
    }
    if (fit.scores.empty()) throw ConfigError("sublayers", "report has no entries");
    return fit;
  } catch (const json::exception& e) {
    throw ConfigError("fit_report", std::string("malformed FIT report: ") + e.what());
  }
}

namespace {

std::vector<double> log_softmax_row(std::span<const double> z) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : z) mx = std::max(mx, v);
  double s = 0.0;
  for (double v : z) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] - lse;
  return out;
}

double dot_direction(const GradientRecord<double>& g, const std::vector<Tensor<double>>& u) {
  double acc = 0.0;
  for (const auto& [id, grad] : g.entries()) {
    const auto a = grad.data();
    const auto b = u[id].data();
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  }
  return acc;
}

}  // namespace

KlCheckResult kl_quadratic_check(const Model<double>& model,
                                 std::span<const std::vector<Token>> contexts,
                                 const std::vector<Tensor<double>>& direction,
                                 double epsilon) {
  if (epsilon == 0.0) throw UsageError("kl_quadratic_check: epsilon = 0 gives 0/0");
  if (contexts.empty()) throw UsageError("kl_quadratic_check: no contexts");
  const auto& w = model.weights();
  if (direction.size() != w.params().size()) {
    throw DimensionError("direction has " + std::to_string(direction.size()) +
                         " tensors, model has " + std::to_string(w.params().size()));
  }
  std::vector<Tensor<double>> shifted;
  for (std::size_t i = 0; i < direction.size(); ++i) {
    if (direction[i].shape() != w.param(i).shape()) {
      throw DimensionError("direction tensor " + std::to_string(i) + " has shape " +
                           shape_str(direction[i].shape()));
    }
    std::vector<double> v = w.param(i).values();
    const auto d = direction[i].data();
    for (std::size_t j = 0; j < v.size(); ++j) v[j] += epsilon * d[j];
    shifted.emplace_back(w.param(i).shape(), std::move(v));
  }
  const Model<double> perturbed(
      std::make_shared<const Weights<double>>(model.config(), std::move(shifted)), model.mask());

  const std::size_t vocab = model.config().vocab_size;
  double kl_sum = 0.0, quad_sum = 0.0;
  for (const auto& ctx : contexts) {
    if (ctx.empty()) throw UsageError("kl_quadratic_check: empty context");
    const std::size_t n = ctx.size();
    const auto base = forward_logits(model, ctx);
    const auto moved = forward_logits(perturbed, ctx);
    const auto lp = log_softmax_row(base.row(n - 1));
    const auto lq = log_softmax_row(moved.row(n - 1));
    double kl = 0.0;
    for (std::size_t y = 0; y < vocab; ++y) kl += std::exp(lp[y]) * (lp[y] - lq[y]);
    kl_sum += kl;

    // Directional derivatives of every logit at the last position.
    Tape<double> tape;
    Var<double> logits = traced_logits(tape, model, ctx, 1, n);
    std::vector<double> g(vocab);
    auto cot = Tensor<double>::zeros({n, vocab});
    for (std::size_t y = 0; y < vocab; ++y) {
      cot.mutable_data()[(n - 1) * vocab + y] = 1.0;
      g[y] = dot_direction(tape.vjp(logits, cot), direction);
      cot.mutable_data()[(n - 1) * vocab + y] = 0.0;
    }
    double mean = 0.0;
    for (std::size_t y = 0; y < vocab; ++y) mean += std::exp(lp[y]) * g[y];
    double quad = 0.0;
    for (std::size_t y = 0; y < vocab; ++y) {
      const double s = g[y] - mean;
      quad += std::exp(lp[y]) * s * s;
    }
    quad_sum += quad;
  }
  KlCheckResult out;
  out.epsilon = epsilon;
  out.measured_kl = kl_sum / double(contexts.size());
  out.predicted_kl = 0.5 * epsilon * epsilon * quad_sum / double(contexts.size());
  out.ratio = out.predicted_kl == 0.0 ? std::numeric_limits<double>::quiet_NaN()
                                      : out.measured_kl / out.predicted_kl;
  return out;
}

std::vector<Tensor<double>> random_unit_direction(const Model<double>& model,
                                                  std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Tensor<double>> out;
  double sq = 0.0;
  for (const auto& p : model.weights().params()) {
    std::vector<double> v(p.size());
    for (auto& x : v) {
      x = normal(rng);
      sq += x * x;
    }
    out.emplace_back(p.shape(), std::move(v));
  }
  const double inv = 1.0 / std::sqrt(sq);
  for (auto& t : out)
    for (auto& x : t.mutable_data()) x *= inv;
  return out;
}

KlCheckResult kl_quadratic_check(const Model<double>& model, double epsilon,
                                 std::mt19937_64& rng, std::size_t n_contexts,
                                 std::size_t context_len) {
  if (epsilon == 0.0) throw UsageError("kl_quadratic_check: epsilon = 0 gives 0/0");
  std::uniform_int_distribution<Token> tok(0, model.config().vocab_size - 1);
  std::vector<std::vector<Token>> contexts(n_contexts);
  for (auto& c : contexts) {
    c.resize(context_len);
    for (auto& t : c) t = tok(rng);
  }
  const auto direction = random_unit_direction(model, rng);
  return kl_quadratic_check(model, contexts, direction, epsilon);
}

template FitTable accumulate_fit<float>(const Model<float>&, std::span<const Batch>,
                                        const FitOptions&);
template FitTable accumulate_fit<double>(const Model<double>&, std::span<const Batch>,
                                         const FitOptions&);

}  // namespace sdfp
