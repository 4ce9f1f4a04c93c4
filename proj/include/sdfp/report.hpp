#pragma once

#include <string>

#include <json.hpp>

#include "sdfp/bench.hpp"
#include "sdfp/pruner.hpp"
#include "sdfp/specdec.hpp"

namespace sdfp {

// Two-space indented, trailing newline; invalid UTF-8 in generated text is
// replaced rather than rejected.
std::string dump_json(const nlohmann::json& doc);

nlohmann::json round_json(const SpecRound& round);
// Generated text (bytes, EOS shown as "<eos>") plus the per-round log.
nlohmann::json generation_json(const GenerationResult& result, std::span<const Token> prompt,
                               const GenerationParams& params);
std::string tokens_to_text(std::span<const Token> tokens);

// Deterministic counters only; no wall time.
nlohmann::json metrics_json(const RunMetrics& m);
nlohmann::json accounting_json(const AccountingCheck& a);

// {"deterministic": {...}, "timing": {...}, "note": ...}
nlohmann::json bench_json(const BenchResult& result);
nlohmann::json study_json(const StudyResult& study);
std::string study_csv(const StudyResult& study);
nlohmann::json lossless_json(const LosslessResult& result);

nlohmann::json prune_set_json(const PruneSet& set);
PruneSet parse_prune_set(const nlohmann::json& doc);

}  // namespace sdfp
