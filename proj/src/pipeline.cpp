#include "svlab/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace svlab {

Vocabulary::Vocabulary() {
  id_to_token = {"<pad>", "<bos>", "<eos>", "<unk>"};
  for (int i = 0; i < kReserved; ++i) token_to_id[id_to_token[i]] = i;
}

int Vocabulary::lookup(const std::string& tok) const {
  auto it = token_to_id.find(tok);
  return it == token_to_id.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  check(id >= 0 && id < size(), "Vocabulary::token: id out of range");
  return id_to_token[static_cast<std::size_t>(id)];
}

void Vocabulary::add(const std::string& tok) {
  if (token_to_id.count(tok)) return;
  token_to_id[tok] = size();
  id_to_token.push_back(tok);
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write vocabulary file: " + path);
  for (int id = kReserved; id < size(); ++id) out << id_to_token[id] << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read vocabulary file: " + path);
  Vocabulary v;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) v.add(line);
  }
  return v;
}

Sentence tokenize(const std::string& line) {
  Sentence out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

std::string detokenize(const Sentence& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ' ';
    out += s[i];
  }
  return out;
}

Corpus read_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read corpus file: " + path);
  Corpus c;
  std::string line;
  while (std::getline(in, line)) {
    Sentence s = tokenize(line);
    if (!s.empty()) c.sentences.push_back(std::move(s));
  }
  return c;
}

void write_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write corpus file: " + path);
  for (const Sentence& s : corpus.sentences) out << detokenize(s) << '\n';
}

Vocabulary build_vocab(const Corpus& corpus, int min_count) {
  if (corpus.empty()) throw DataError("build_vocab: empty corpus");
  std::unordered_map<std::string, long long> counts;
  for (const Sentence& s : corpus.sentences) {
    for (const std::string& tok : s) ++counts[tok];
  }
  std::vector<std::pair<std::string, long long>> kept;
  for (const auto& [tok, n] : counts) {
    if (n >= min_count) kept.emplace_back(tok, n);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  for (const auto& [tok, n] : kept) v.add(tok);
  return v;
}

int truncation_cap(const Corpus& corpus) {
  check(!corpus.empty(), "truncation_cap: empty corpus");
  double mean = 0.0;
  for (const Sentence& s : corpus.sentences) mean += static_cast<double>(s.size());
  mean /= static_cast<double>(corpus.size());
  double var = 0.0;
  for (const Sentence& s : corpus.sentences) {
    const double d = static_cast<double>(s.size()) - mean;
    var += d * d;
  }
  var /= static_cast<double>(corpus.size());
  return static_cast<int>(std::llround(mean + 3.0 * std::sqrt(var)));
}

std::vector<Batch> make_batches(const Corpus& corpus, const Vocabulary& vocab,
                                int batch_size, int cap, std::uint64_t seed,
                                bool shuffle) {
  check(batch_size >= 1, "make_batches: batch_size must be >= 1");
  check(cap >= 1, "make_batches: cap must be >= 1");
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle) {
    Rng rng(seed);
    rng.shuffle(order);
  }

  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    Batch b;
    b.batch = static_cast<int>(end - start);
    std::vector<std::vector<int>> rows;
    for (std::size_t i = start; i < end; ++i) {
      const Sentence& s = corpus.sentences[order[i]];
      std::vector<int> row;
      row.push_back(Vocabulary::kBos);
      const std::size_t keep = std::min(s.size(), static_cast<std::size_t>(cap));
      for (std::size_t k = 0; k < keep; ++k) row.push_back(vocab.lookup(s[k]));
      row.push_back(Vocabulary::kEos);
      b.time = std::max(b.time, static_cast<int>(row.size()));
      rows.push_back(std::move(row));
    }
    b.ids.assign(static_cast<std::size_t>(b.batch) * b.time, Vocabulary::kPad);
    b.mask = Tensor(b.batch, b.time);
    for (int r = 0; r < b.batch; ++r) {
      const auto& row = rows[static_cast<std::size_t>(r)];
      b.lengths.push_back(static_cast<int>(row.size()));
      for (std::size_t t = 0; t < row.size(); ++t) {
        b.ids[static_cast<std::size_t>(r) * b.time + t] = row[t];
        b.mask.at(r, static_cast<int>(t)) = 1.0;
      }
    }
    out.push_back(std::move(b));
  }
  return out;
}

SplitCorpus split_corpus(const Corpus& corpus, std::uint64_t seed) {
  SplitCorpus out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const double u = static_cast<double>(mix_seed(seed, i)) /
                     static_cast<double>(std::numeric_limits<std::uint64_t>::max());
    Corpus& dst = u < 0.8 ? out.train : (u < 0.9 ? out.valid : out.test);
    dst.sentences.push_back(corpus.sentences[i]);
    if (!corpus.topics.empty()) dst.topics.push_back(corpus.topics[i]);
  }
  return out;
}

namespace {

const std::vector<std::string>& function_words() {
  static const std::vector<std::string> words = {
      "the", "a",  "is", "was", "and", "of", "to",  "in", "it", "that",
      "on",  "with", "as", "for", "at", "by", "an", "be", "or", "not"};
  return words;
}

const std::vector<std::vector<std::string>>& topic_words() {
  static const std::vector<std::vector<std::string>> topics = {
      {"wave", "ship", "tide", "harbor", "fish", "sail", "coral", "storm", "gull",
       "anchor", "reef", "salt", "foam", "deck", "mast", "buoy"},
      {"barn", "wheat", "plow", "fence", "cow", "hay", "tractor", "seed", "orchard",
       "hen", "pasture", "silo", "mule", "furrow", "crop", "scythe"},
      {"street", "tram", "tower", "market", "lamp", "bridge", "alley", "crowd",
       "subway", "plaza", "taxi", "siren", "vendor", "corner", "office", "curb"},
      {"pine", "moss", "fern", "owl", "trail", "cedar", "bark", "thicket", "stag",
       "brook", "lichen", "bough", "wolf", "glade", "root", "canopy"},
      {"chord", "viola", "tempo", "flute", "melody", "drum", "sonata", "reed",
       "octave", "choir", "baton", "fugue", "lyric", "cadence", "horn", "clef"}};
  return topics;
}

}  // namespace

Corpus generate_toy_corpus(const ToyGrammarSpec& spec, int n, std::uint64_t seed) {
  check(n >= 1, "generate_toy_corpus: n must be >= 1");
  check(spec.n_topics >= 1 &&
            spec.n_topics <= static_cast<int>(topic_words().size()),
        "generate_toy_corpus: unsupported topic count");
  check(spec.min_len >= 1 && spec.min_len <= spec.max_len,
        "generate_toy_corpus: bad length range");

  // Zipf-like weights over each topic's content words, and over the topics
  // themselves: natural corpora are heavy-headed at every level, and a
  // dominant mode is what makes "the model's modal sentence" well defined.
  auto zipf_cum = [](std::size_t k) {
    std::vector<double> cum;
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      total += 1.0 / static_cast<double>(i + 1);
      cum.push_back(total);
    }
    for (double& c : cum) c /= total;
    return cum;
  };
  const std::vector<double> cum = zipf_cum(topic_words()[0].size());
  const std::vector<double> topic_cum = zipf_cum(static_cast<std::size_t>(spec.n_topics));

  Rng rng(mix_seed(seed, 0x70CULL));
  Corpus out;
  // Half the sentences take the canonical (midpoint) length; the rest spread
  // uniformly. The sharp length mode gives the corpus a well-defined modal
  // sentence, which is what makes constant greedy decoding from the prior a
  // usable collapse diagnostic (a smooth length law leaves the end-of-sentence
  // decision balanced on a knife edge).
  const int canonical_len = (spec.min_len + spec.max_len + 1) / 2;
  for (int i = 0; i < n; ++i) {
    const int topic = static_cast<int>(
        std::lower_bound(topic_cum.begin(), topic_cum.end(), rng.uniform()) -
        topic_cum.begin());
    const int len = rng.bernoulli(0.5)
                        ? canonical_len
                        : spec.min_len + rng.uniform_int(spec.max_len - spec.min_len + 1);
    Sentence s;
    for (int p = 0; p < len; ++p) {
      if (rng.bernoulli(spec.function_word_prob)) {
        s.push_back(function_words()[static_cast<std::size_t>(
            rng.uniform_int(static_cast<int>(function_words().size())))]);
      } else {
        const double u = rng.uniform();
        const std::size_t k = static_cast<std::size_t>(
            std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
        s.push_back(topic_words()[static_cast<std::size_t>(topic)]
                                 [std::min(k, topic_words()[0].size() - 1)]);
      }
    }
    out.sentences.push_back(std::move(s));
    out.topics.push_back(topic);
  }
  return out;
}

}  // namespace svlab
