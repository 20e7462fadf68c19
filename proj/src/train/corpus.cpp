#include "mrf/train/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mrf/error.hpp"
#include "mrf/model/tokenizer.hpp"

namespace mrf::train {

namespace fs = std::filesystem;

Domain Corpus::split_domain(std::string name, std::vector<std::int32_t> stream, double valid_frac) {
  if (!(valid_frac > 0.0 && valid_frac < 1.0)) throw ConfigError("valid_frac must lie in (0, 1)");
  const auto held = static_cast<std::size_t>(std::ceil(valid_frac * static_cast<double>(stream.size())));
  Domain d;
  d.name = std::move(name);
  d.valid.assign(stream.end() - static_cast<std::ptrdiff_t>(held), stream.end());
  stream.resize(stream.size() - held);
  d.train = std::move(stream);
  if (d.train.empty() || d.valid.empty()) throw DataError("domain '" + d.name + "' is too small to split");
  return d;
}

Corpus Corpus::load(const fs::path& root, double valid_frac, std::ostream* warn) {
  if (!fs::is_directory(root)) throw DataError("corpus directory '" + root.string() + "' does not exist");
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  Corpus corpus;
  for (const fs::path& dir : dirs) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<std::int32_t> stream;
    for (const fs::path& file : files) {
      std::ifstream in(file, std::ios::binary);
      if (!in) throw DataError("cannot read corpus file '" + file.string() + "'");
      std::ostringstream buf;
      buf << in.rdbuf();
      const std::string text = buf.str();
      if (text.empty()) continue;
      const auto ids = model::encode_document(text);
      stream.insert(stream.end(), ids.begin(), ids.end());
    }
    if (stream.empty()) {
      if (warn) *warn << "warning: skipping empty domain directory '" << dir.string() << "'\n";
      continue;
    }
    corpus.domains_.push_back(split_domain(dir.filename().string(), std::move(stream), valid_frac));
  }
  if (corpus.domains_.empty()) throw DataError("corpus '" + root.string() + "' has no non-empty domain");
  return corpus;
}

Corpus Corpus::from_texts(const std::map<std::string, std::vector<std::string>>& texts, double valid_frac) {
  Corpus corpus;
  for (const auto& [name, docs] : texts) {
    std::vector<std::int32_t> stream;
    for (const auto& doc : docs) {
      const auto ids = model::encode_document(doc);
      stream.insert(stream.end(), ids.begin(), ids.end());
    }
    if (stream.empty()) continue;
    corpus.domains_.push_back(split_domain(name, std::move(stream), valid_frac));
  }
  if (corpus.domains_.empty()) throw DataError("corpus has no non-empty domain");
  return corpus;
}

const Domain& Corpus::domain(const std::string& name) const {
  for (const Domain& d : domains_) {
    if (d.name == name) return d;
  }
  throw DataError("corpus has no domain '" + name + "'");
}

std::size_t Corpus::total_tokens() const {
  std::size_t n = 0;
  for (const Domain& d : domains_) n += d.train.size() + d.valid.size();
  return n;
}

BatchIterator::BatchIterator(const Corpus& corpus, Split split, std::size_t batch, std::size_t seq, std::uint64_t seed)
    : corpus_(&corpus), split_(split), batch_(batch), seq_(seq), rng_(seed), order_(corpus.domains().size()) {
  if (batch == 0 || seq == 0) throw ConfigError("batch and seq must be positive");
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
}

model::TokenBatch BatchIterator::next() {
  if (cursor_ == 0) {
    for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_.index(i)]);
  }
  const Domain& domain = corpus_->domains()[order_[cursor_]];
  cursor_ = (cursor_ + 1) % order_.size();
  return draw(domain);
}

model::TokenBatch BatchIterator::next_from(std::size_t domain_index) {
  if (domain_index >= corpus_->domains().size()) throw DataError("domain index out of range");
  return draw(corpus_->domains()[domain_index]);
}

model::TokenBatch BatchIterator::draw(const Domain& domain) {
  const auto& stream = split_ == Split::train ? domain.train : domain.valid;
  model::TokenBatch b;
  b.batch = batch_;
  b.seq = seq_;
  b.domain = domain.name;
  b.inputs.assign(batch_ * seq_, model::kPad);
  b.targets.assign(batch_ * seq_, model::kPad);
  for (std::size_t r = 0; r < batch_; ++r) {
    // A window needs seq + 1 tokens; shorter streams are used whole and padded.
    const std::size_t offset = stream.size() > seq_ + 1 ? rng_.index(stream.size() - seq_) : 0;
    const std::size_t avail = std::min(seq_ + 1, stream.size() - offset);
    for (std::size_t t = 0; t + 1 < avail; ++t) {
      b.inputs[r * seq_ + t] = stream[offset + t];
      b.targets[r * seq_ + t] = stream[offset + t + 1];
    }
  }
  return b;
}

std::vector<model::TokenBatch> validation_batches(const Corpus& corpus, std::size_t per_domain, std::size_t batch,
                                                  std::size_t seq, std::uint64_t seed) {
  std::vector<model::TokenBatch> out;
  for (std::size_t d = 0; d < corpus.domains().size(); ++d) {
    BatchIterator it(corpus, Split::valid, batch, seq, Rng::derive(seed, d));
    for (std::size_t i = 0; i < per_domain; ++i) out.push_back(it.next_from(d));
  }
  return out;
}

}  // namespace mrf::train
