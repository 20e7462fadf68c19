#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "mrf/model/transformer.hpp"
#include "mrf/numeric/rng.hpp"

namespace mrf::train {

struct Domain {
  std::string name;
  std::vector<std::int32_t> train;  // token stream, documents joined as BOS..EOS
  std::vector<std::int32_t> valid;  // held-out tail of the stream
};

// Multi-domain byte corpus. On disk: one subdirectory per domain, each
// holding text files; domains and files are read in sorted name order.
class Corpus {
 public:
  // Empty domain directories are skipped with a warning to `warn`; a corpus
  // with no usable domain throws DataError.
  static Corpus load(const std::filesystem::path& root, double valid_frac = 0.1, std::ostream* warn = nullptr);
  static Corpus from_texts(const std::map<std::string, std::vector<std::string>>& texts, double valid_frac = 0.1);

  const std::vector<Domain>& domains() const { return domains_; }
  const Domain& domain(const std::string& name) const;
  std::size_t total_tokens() const;

 private:
  static Domain split_domain(std::string name, std::vector<std::int32_t> stream, double valid_frac);
  std::vector<Domain> domains_;
};

enum class Split { train, valid };

// Replayable stream of single-domain batches. Domains take turns in an
// order reshuffled every round; windows start at random offsets.
class BatchIterator {
 public:
  BatchIterator(const Corpus& corpus, Split split, std::size_t batch, std::size_t seq, std::uint64_t seed);

  model::TokenBatch next();
  // A batch from one specific domain; advances the window stream only.
  model::TokenBatch next_from(std::size_t domain_index);

 private:
  model::TokenBatch draw(const Domain& domain);

  const Corpus* corpus_;
  Split split_;
  std::size_t batch_, seq_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

// Fixed validation batches: `per_domain` batches from each domain's held-out
// tail, in domain order.
std::vector<model::TokenBatch> validation_batches(const Corpus& corpus, std::size_t per_domain, std::size_t batch,
                                                  std::size_t seq, std::uint64_t seed);

}  // namespace mrf::train
