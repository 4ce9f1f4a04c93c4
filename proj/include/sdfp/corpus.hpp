#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "sdfp/transformer.hpp"

namespace sdfp {

using Rng = std::mt19937_64;

// Byte-level token stream: byte value = token id, kEosToken between documents.
struct Corpus {
  std::string name;
  std::vector<Token> tokens;

  std::size_t size() const { return tokens.size(); }
};

Corpus corpus_from_text(std::string name, std::string_view text);
Corpus load_corpus(const std::filesystem::path& path);
// Manifest: one document path per line (relative paths resolve against the
// manifest's directory); documents are joined with EOS.
Corpus load_corpus_manifest(const std::filesystem::path& manifest);

// First `train_fraction` of the tokens and the remainder, as two corpora.
std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double train_fraction);

// Windows of seq_len + 1 tokens drawn uniformly over valid offsets.
Batch sample_batch(const Corpus& corpus, std::size_t batch_size,
                   std::size_t seq_len, Rng& rng);

// `count` batches from one generator seeded with `seed`.
std::vector<Batch> sample_batches(const Corpus& corpus, std::size_t count,
                                  std::size_t batch_size, std::size_t seq_len,
                                  std::uint64_t seed);

}  // namespace sdfp
