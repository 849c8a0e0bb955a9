#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace r2dl {

using TokenSequence = std::vector<std::size_t>;

/// Bijection between token strings and dense indices.
class Vocab {
 public:
  Vocab() = default;
  explicit Vocab(std::vector<std::string> tokens);

  static constexpr const char* kUnkToken = "<unk>";

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  const std::string& token(std::size_t index) const { return tokens_.at(index); }
  std::optional<std::size_t> find(const std::string& token) const;
  /// Index of `token`, falling back to the UNK entry when present; throws otherwise.
  std::size_t index_of(const std::string& token) const;

  bool has_unk() const { return find(kUnkToken).has_value(); }
  /// Copy with the reserved UNK token appended (no-op if already present).
  Vocab with_unk() const;

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, std::size_t> index_;
};

enum class Tokenization {
  character,  ///< one token per UTF-8 code point, case-sensitive
  word,       ///< whitespace-separated, lowercased
};

std::vector<std::string> tokenize(const std::string& text, Tokenization mode);

struct SequenceDataset {
  std::vector<TokenSequence> sequences;
  std::vector<std::size_t> labels;
  Vocab vocab;
  std::vector<std::string> class_names;
  Tokenization tokenization = Tokenization::character;

  std::size_t size() const noexcept { return sequences.size(); }
  bool empty() const noexcept { return sequences.empty(); }
  std::size_t num_classes() const noexcept { return class_names.size(); }

  /// Throws FormatError if lengths disagree, a token index is outside the
  /// vocabulary, a label is outside class_names, or a sequence is empty.
  void validate() const;

  /// Rows at the given indices, same vocabulary and classes.
  SequenceDataset select(std::span<const std::size_t> indices) const;

  std::vector<std::size_t> class_counts() const;
  /// Share of the most frequent label (0 for an empty dataset).
  double majority_class_accuracy() const;

  friend bool operator==(const SequenceDataset&, const SequenceDataset&) = default;
};

struct CsvColumns {
  std::string sequence = "sequence";
  std::string label = "label";
};

/// Vocabulary is the sorted set of observed tokens; labels are indexed in
/// order of first appearance.
SequenceDataset load_csv(const std::filesystem::path& path, const CsvColumns& columns = {},
                         Tokenization mode = Tokenization::character);

/// Loads a CSV against a fixed vocabulary and class list (evaluation path).
/// Unseen tokens map to UNK when the vocabulary has one; unseen labels are a row error.
SequenceDataset load_csv_with_vocab(const std::filesystem::path& path, const Vocab& vocab,
                                    const std::vector<std::string>& class_names, const CsvColumns& columns = {},
                                    Tokenization mode = Tokenization::character);

void save_csv(const SequenceDataset& dataset, const std::filesystem::path& path, const CsvColumns& columns = {});

struct FastaLabelRule {
  char delimiter = '|';
  /// Field index after splitting the header on the delimiter; -1 means last.
  int field = -1;
};

SequenceDataset load_fasta(const std::filesystem::path& path, const FastaLabelRule& rule = {},
                           Tokenization mode = Tokenization::character);

struct SplitSpec {
  struct Fractions {
    double train = 0.8;
    double valid = 0.1;
    double test = 0.1;
  };
  struct Counts {
    std::size_t train = 0;
    std::size_t valid = 0;
    std::size_t test = 0;
  };
  std::optional<Fractions> fractions = Fractions{};
  std::optional<Counts> counts;  ///< takes precedence over fractions when set
  std::uint64_t seed = 0;

  void validate(std::size_t dataset_size) const;
};

struct Split {
  SequenceDataset train;
  SequenceDataset valid;
  SequenceDataset test;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> valid_indices;
  std::vector<std::size_t> test_indices;
};

/// Seeded shuffle then slice. With fractions the parts cover the dataset
/// (test takes the remainder); with counts, rows beyond their sum are dropped.
Split split(const SequenceDataset& dataset, const SplitSpec& spec);

/// Indices of a uniform subsample of size n, in ascending order. For a fixed
/// seed the result for n1 < n2 is a subset of the result for n2.
std::vector<std::size_t> subsample_indices(std::size_t dataset_size, std::size_t n, std::uint64_t seed);
SequenceDataset subsample(const SequenceDataset& dataset, std::size_t n, std::uint64_t seed);

struct SynthSizes {
  std::size_t source = 4000;
  std::size_t target = 3000;
  std::size_t source_vocab = 200;
  std::size_t min_length = 9;
  std::size_t max_length = 21;
};

struct SynthTasks {
  SequenceDataset source;
  SequenceDataset target;
};

/// Desk-scale stand-ins for the source and target tasks.
///
/// Source: sequences over `source_vocab` word tokens; label 1 iff tokens from
/// the first half of the vocabulary outnumber the rest (odd lengths, so no
/// ties). Target: sequences over the 7 letters of kTargetAlphabet; label 1 iff
/// the motif kTargetMotif occurs. Motif letters are rare in the background, so
/// negatives almost never contain them. Labels alternate, so both datasets are
/// balanced within one sample.
SynthTasks synth_tasks(std::uint64_t seed, const SynthSizes& sizes = {});

inline constexpr const char* kTargetAlphabet[] = {"A", "C", "D", "G", "K", "L", "R"};
inline constexpr std::size_t kTargetMotif[] = {1, 4, 5};  // C K L

/// Does `seq` contain `motif` as a contiguous run?
bool contains_motif(std::span<const std::size_t> seq, std::span<const std::size_t> motif);

}  // namespace r2dl
