#include "sdfp/report.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "sdfp/errors.hpp"

namespace sdfp {

using nlohmann::json;

std::string dump_json(const json& doc) {
  return doc.dump(2, ' ', false, json::error_handler_t::replace) + "\n";
}

std::string tokens_to_text(std::span<const Token> tokens) {
  std::string out;
  for (Token t : tokens) {
    if (t < 256) {
      out.push_back(static_cast<char>(t));
    } else {
      out += "<eos>";
    }
  }
  return out;
}

json round_json(const SpecRound& r) {
  json j;
  j["proposed"] = r.proposed;
  j["alpha"] = r.alpha;
  j["accepted"] = r.accepted;
  j["committed"] = r.committed;
  j["truncated"] = r.truncated;
  j["target_cache_before"] = r.target_cache_before;
  j["target_cache_after"] = r.target_cache_after;
  j["draft_cache_after"] = r.draft_cache_after;
  return j;
}

json generation_json(const GenerationResult& result, std::span<const Token> prompt,
                     const GenerationParams& params) {
  json j;
  j["mode"] = to_string(params.mode);
  j["k"] = params.k;
  j["max_len"] = params.max_len;
  j["temperature"] = params.temperature;
  j["seed"] = params.seed;
  j["prompt"] = tokens_to_text(prompt);
  j["text"] = tokens_to_text(result.tokens);
  j["tokens"] = result.tokens;
  j["stopped_at_eos"] = result.stopped_at_eos;
  j["context_truncated"] = result.context_truncated;
  j["target_forwards"] = result.target_forwards;
  j["draft_forwards"] = result.draft_forwards;
  json rounds = json::array();
  for (const auto& r : result.rounds) rounds.push_back(round_json(r));
  j["rounds"] = std::move(rounds);
  return j;
}

json metrics_json(const RunMetrics& m) {
  json j;
  j["prompts"] = m.prompts;
  j["tokens"] = m.tokens;
  j["rounds"] = m.rounds;
  j["proposed"] = m.proposed;
  j["accepted"] = m.accepted;
  j["truncated"] = m.truncated;
  j["target_forwards"] = m.target_forwards;
  j["draft_forwards"] = m.draft_forwards;
  j["alpha_per_token"] = m.alpha_tok;
  j["mean_accepted_per_round"] = m.mean_accepted;
  j["block_efficiency"] = m.block_efficiency;
  return j;
}

json accounting_json(const AccountingCheck& a) {
  json j;
  j["committed"] = a.committed;
  j["sum_accepted_plus_one"] = a.accepted_plus_one;
  j["truncation"] = a.truncation;
  j["rounds"] = a.rounds;
  j["prefills"] = a.prefills;
  j["target_forwards"] = a.target_forwards;
  j["tokens_reconcile"] = a.tokens_reconcile;
  j["forwards_reconcile"] = a.forwards_reconcile;
  j["alpha_in_range"] = a.alpha_in_range;
  j["block_in_range"] = a.block_in_range;
  j["ok"] = a.ok();
  return j;
}

json bench_json(const BenchResult& r) {
  json det;
  det["mode"] = to_string(r.params.mode);
  det["k"] = r.params.k;
  det["max_len"] = r.params.max_len;
  det["repeats"] = r.repeats;
  det["spec"] = metrics_json(r.spec);
  det["vanilla"] = metrics_json(r.vanilla);
  det["outputs_identical"] = r.outputs_identical;
  det["draft_cost"] = r.draft_cost;
  det["expected_speedup"] = r.expected_speedup;
  det["spec_accounting"] = accounting_json(r.spec_accounting);
  det["vanilla_accounting"] = accounting_json(r.vanilla_accounting);
  json rounds = json::array();
  for (const auto& run : r.spec_runs) {
    json per;
    per["accepted"] = json::array();
    for (const auto& round : run.rounds) per["accepted"].push_back(round.accepted);
    per["tokens"] = run.tokens.size();
    rounds.push_back(std::move(per));
  }
  det["spec_round_log"] = std::move(rounds);

  json timing;
  timing["spec_seconds"] = r.spec_seconds;
  timing["vanilla_seconds"] = r.vanilla_seconds;
  timing["spec_median_seconds"] = r.spec.wall_seconds;
  timing["vanilla_median_seconds"] = r.vanilla.wall_seconds;
  timing["spec_tokens_per_second"] = r.spec.tokens_per_second;
  timing["vanilla_tokens_per_second"] = r.vanilla.tokens_per_second;
  timing["speedup"] = r.speedup;

  json j;
  j["deterministic"] = std::move(det);
  j["timing"] = std::move(timing);
  j["note"] = kPublishedSpeedupNote;
  return j;
}

namespace {

json ids_json(const std::vector<SublayerId>& ids) {
  json a = json::array();
  for (const auto& id : ids) a.push_back(id.str());
  return a;
}

}  // namespace

json study_json(const StudyResult& s) {
  json j;
  j["pruned_count"] = s.pruned_count;
  j["bottom_fit"] = ids_json(s.bottom);
  j["top_fit"] = ids_json(s.top);
  j["random_sets"] = s.random_sets.size();
  json rows = json::array();
  for (const auto& r : s.rows) {
    rows.push_back({{"seed", r.seed},
                    {"base_loss", r.base_loss},
                    {"bottom_delta", r.bottom_delta},
                    {"top_delta", r.top_delta},
                    {"random_delta", r.random_delta}});
  }
  j["rows"] = std::move(rows);
  j["mean_bottom_delta"] = s.mean_bottom;
  j["mean_top_delta"] = s.mean_top;
  j["mean_random_delta"] = s.mean_random;
  j["bottom_not_worse_than_top"] = s.bottom_not_worse;
  j["random_between"] = s.random_between;
  return j;
}

std::string study_csv(const StudyResult& s) {
  std::ostringstream os;
  os << "seed,base_loss,bottom_delta,top_delta,random_delta\n";
  char line[160];
  for (const auto& r : s.rows) {
    std::snprintf(line, sizeof line, "%llu,%.9f,%.9f,%.9f,%.9f\n",
                  static_cast<unsigned long long>(r.seed), r.base_loss, r.bottom_delta,
                  r.top_delta, r.random_delta);
    os << line;
  }
  return os.str();
}

json lossless_json(const LosslessResult& r) {
  json j;
  j["symbols"] = r.symbols;
  j["p"] = r.p;
  j["q"] = r.q;
  j["induced"] = r.induced;
  j["exact_max_deviation"] = r.exact_max_deviation;
  j["n_samples"] = r.n_samples;
  j["spec_counts"] = r.spec_counts;
  j["vanilla_counts"] = r.vanilla_counts;
  j["tv"] = r.tv;
  j["chi_square"] = r.chi_square;
  j["dof"] = r.dof;
  j["p_value"] = r.p_value;
  j["warnings"] = r.warnings;
  return j;
}

json prune_set_json(const PruneSet& set) {
  json j;
  j["attn_ratio"] = set.attn_ratio;
  j["ffn_ratio"] = set.ffn_ratio;
  char fp[20];
  std::snprintf(fp, sizeof fp, "%016llx", static_cast<unsigned long long>(set.fit_fingerprint));
  j["fit_fingerprint"] = fp;
  j["pruned"] = ids_json(set.ids);
  return j;
}

PruneSet parse_prune_set(const json& doc) {
  try {
    PruneSet set;
    set.attn_ratio = doc.at("attn_ratio").get<double>();
    set.ffn_ratio = doc.at("ffn_ratio").get<double>();
    set.fit_fingerprint = std::stoull(doc.at("fit_fingerprint").get<std::string>(), nullptr, 16);
    for (const auto& s : doc.at("pruned")) {
      const std::string id = s.get<std::string>();
      const auto dot = id.find('.');
      if (id.size() < 4 || id[0] != 'L' || dot == std::string::npos) {
        throw ConfigError("pruned", "bad sublayer id '" + id + "'");
      }
      const std::string kind = id.substr(dot + 1);
      if (kind != "attn" && kind != "ffn") {
        throw ConfigError("pruned", "bad sublayer id '" + id + "'");
      }
      set.ids.push_back({static_cast<std::uint32_t>(std::stoul(id.substr(1, dot - 1))),
                         kind == "attn" ? SublayerKind::kAttention : SublayerKind::kFfn});
    }
    std::sort(set.ids.begin(), set.ids.end());
    return set;
  } catch (const json::exception& e) {
    throw ConfigError("prune_set", std::string("malformed prune set: ") + e.what());
  } catch (const std::logic_error& e) {
    throw ConfigError("prune_set", std::string("malformed prune set: ") + e.what());
  }
}

}  // namespace sdfp
