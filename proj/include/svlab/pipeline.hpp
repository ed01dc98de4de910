#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "svlab/common.hpp"
#include "svlab/tensor.hpp"

namespace svlab {

using Sentence = std::vector<std::string>;

// Sentence store; topics are side metadata from the toy generator (never
// shown to models), empty for file corpora.
struct Corpus {
  std::vector<Sentence> sentences;
  std::vector<int> topics;

  std::size_t size() const { return sentences.size(); }
  bool empty() const { return sentences.empty(); }
};

struct Vocabulary {
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kReserved = 4;

  std::vector<std::string> id_to_token;  // reserved entries occupy ids 0..3
  std::unordered_map<std::string, int> token_to_id;

  Vocabulary();
  int size() const { return static_cast<int>(id_to_token.size()); }
  int lookup(const std::string& tok) const;  // kUnk when absent
  const std::string& token(int id) const;
  void add(const std::string& tok);

  // One non-reserved token per line; line number = id - reserved count.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);
};

Sentence tokenize(const std::string& line);
std::string detokenize(const Sentence& s);

// One sentence per line, UTF-8, whitespace-tokenized. Blank lines skipped.
Corpus read_corpus(const std::string& path);
void write_corpus(const Corpus& corpus, const std::string& path);

// Tokens under min_count map to UNK; ids ordered by frequency desc then
// lexicographic. Empty corpus is a data error.
Vocabulary build_vocab(const Corpus& corpus, int min_count);

// round(mean + 3*std) of raw sentence lengths.
int truncation_cap(const Corpus& corpus);

struct Batch {
  int batch = 0;
  int time = 0;                // wrapped, padded length (includes BOS/EOS)
  std::vector<int> ids;        // batch*time row-major, PAD at padding
  std::vector<int> lengths;    // wrapped true lengths
  Tensor mask;                 // (batch, time): 1 at real tokens, 0 at padding

  int id(int b, int t) const { return ids[static_cast<std::size_t>(b) * time + t]; }
};

// Wraps each sentence with BOS/EOS, truncates raw tokens to cap, pads to the
// per-batch max. Shuffle order is seeded; pass shuffle=false for natural
// order.
std::vector<Batch> make_batches(const Corpus& corpus, const Vocabulary& vocab,
                                int batch_size, int cap, std::uint64_t seed, bool shuffle);

// Seeded 80/10/10 split by hash of line index.
struct SplitCorpus {
  Corpus train, valid, test;
};
SplitCorpus split_corpus(const Corpus& corpus, std::uint64_t seed);

// Five disjoint content-word clusters plus shared function words; content
// choices within a sentence correlate through the latent topic.
struct ToyGrammarSpec {
  int n_topics = 5;
  int min_len = 4;
  int max_len = 12;
  double function_word_prob = 0.35;
};

Corpus generate_toy_corpus(const ToyGrammarSpec& spec, int n, std::uint64_t seed);

}  // namespace svlab
