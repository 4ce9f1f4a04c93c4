#include "sdfp/corpus.hpp"

#include <sstream>

#include "sdfp/io_util.hpp"

namespace sdfp {

Corpus corpus_from_text(std::string name, std::string_view text) {
  if (text.empty()) throw IngestionError("corpus '" + name + "' is empty");
  Corpus c;
  c.name = std::move(name);
  c.tokens.reserve(text.size());
  for (unsigned char ch : text) c.tokens.push_back(ch);
  return c;
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file_text(path);
  } catch (const IoError& e) {
    throw IngestionError(e.what());
  }
  return corpus_from_text(path.filename().string(), text);
}

Corpus load_corpus_manifest(const std::filesystem::path& manifest) {
  std::string listing;
  try {
    listing = read_file_text(manifest);
  } catch (const IoError& e) {
    throw IngestionError(e.what());
  }
  Corpus out;
  out.name = manifest.filename().string();
  std::istringstream lines(listing);
  std::string line;
  std::size_t docs = 0;
  while (std::getline(lines, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::filesystem::path doc(line);
    if (doc.is_relative()) doc = manifest.parent_path() / doc;
    const Corpus part = load_corpus(doc);
    if (docs++ > 0) out.tokens.push_back(kEosToken);
    out.tokens.insert(out.tokens.end(), part.tokens.begin(), part.tokens.end());
  }
  if (out.tokens.empty()) throw IngestionError("manifest '" + out.name + "' lists no documents");
  return out;
}

std::pair<Corpus, Corpus> split_corpus(const Corpus& corpus, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw UsageError("train_fraction must be in (0, 1)");
  }
  const auto cut = static_cast<std::size_t>(double(corpus.size()) * train_fraction);
  Corpus train{corpus.name + ":train", {corpus.tokens.begin(), corpus.tokens.begin() + cut}};
  Corpus held{corpus.name + ":heldout", {corpus.tokens.begin() + cut, corpus.tokens.end()}};
  return {std::move(train), std::move(held)};
}

Batch sample_batch(const Corpus& corpus, std::size_t batch_size,
                   std::size_t seq_len, Rng& rng) {
  if (batch_size == 0 || seq_len == 0) throw UsageError("batch size and sequence length must be positive");
  if (seq_len + 1 > corpus.size()) {
    throw UsageError("corpus '" + corpus.name + "' has " + std::to_string(corpus.size()) +
                     " tokens, need at least " + std::to_string(seq_len + 1));
  }
  std::uniform_int_distribution<std::size_t> offset(0, corpus.size() - seq_len - 1);
  Batch b;
  b.batch_size = batch_size;
  b.seq_len = seq_len;
  b.inputs.reserve(batch_size * seq_len);
  b.targets.reserve(batch_size * seq_len);
  for (std::size_t i = 0; i < batch_size; ++i) {
    const std::size_t start = offset(rng);
    auto first = corpus.tokens.begin() + static_cast<std::ptrdiff_t>(start);
    b.inputs.insert(b.inputs.end(), first, first + static_cast<std::ptrdiff_t>(seq_len));
    b.targets.insert(b.targets.end(), first + 1, first + 1 + static_cast<std::ptrdiff_t>(seq_len));
  }
  return b;
}

std::vector<Batch> sample_batches(const Corpus& corpus, std::size_t count,
                                  std::size_t batch_size, std::size_t seq_len,
                                  std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Batch> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(sample_batch(corpus, batch_size, seq_len, rng));
  return out;
}

}  // namespace sdfp
