#include "r2dl/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "r2dl/errors.hpp"
#include "r2dl/random.hpp"

namespace r2dl {

// ---------------------------------------------------------------------------
// Vocab

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second) throw FormatError("duplicate vocabulary token '" + tokens_[i] + "'");
  }
}

std::optional<std::size_t> Vocab::find(const std::string& token) const {
  const auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Vocab::index_of(const std::string& token) const {
  if (auto i = find(token)) return *i;
  if (auto unk = find(kUnkToken)) return *unk;
  throw IndexError("token '" + token + "' is not in the vocabulary");
}

Vocab Vocab::with_unk() const {
  if (has_unk()) return *this;
  auto tokens = tokens_;
  tokens.emplace_back(kUnkToken);
  return Vocab(std::move(tokens));
}

std::vector<std::string> tokenize(const std::string& text, Tokenization mode) {
  std::vector<std::string> out;
  if (mode == Tokenization::word) {
    std::istringstream in(text);
    std::string w;
    while (in >> w) {
      std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) { return std::tolower(c); });
      out.push_back(std::move(w));
    }
    return out;
  }
  for (std::size_t i = 0; i < text.size();) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (lead >= 0xF0) {
      len = 4;
    } else if (lead >= 0xE0) {
      len = 3;
    } else if (lead >= 0xC0) {
      len = 2;
    }
    len = std::min(len, text.size() - i);
    const std::string cp = text.substr(i, len);
    i += len;
    if (len == 1 && std::isspace(lead)) continue;
    out.push_back(cp);
  }
  return out;
}

// ---------------------------------------------------------------------------
// SequenceDataset

void SequenceDataset::validate() const {
  if (sequences.size() != labels.size()) throw FormatError("dataset has mismatched sequence and label counts");
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    if (sequences[i].empty()) throw FormatError("sequence " + std::to_string(i) + " is empty");
    for (std::size_t t : sequences[i]) {
      if (t >= vocab.size()) {
        throw FormatError("sequence " + std::to_string(i) + " has token " + std::to_string(t) +
                          " outside a vocabulary of " + std::to_string(vocab.size()));
      }
    }
    if (labels[i] >= class_names.size()) {
      throw FormatError("label " + std::to_string(labels[i]) + " of row " + std::to_string(i) + " has no class name");
    }
  }
}

SequenceDataset SequenceDataset::select(std::span<const std::size_t> indices) const {
  SequenceDataset out{{}, {}, vocab, class_names, tokenization};
  out.sequences.reserve(indices.size());
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    out.sequences.push_back(sequences.at(i));
    out.labels.push_back(labels.at(i));
  }
  return out;
}

std::vector<std::size_t> SequenceDataset::class_counts() const {
  std::vector<std::size_t> counts(class_names.size(), 0);
  for (std::size_t l : labels) ++counts.at(l);
  return counts;
}

double SequenceDataset::majority_class_accuracy() const {
  if (empty()) return 0.0;
  const auto counts = class_counts();
  return static_cast<double>(*std::max_element(counts.begin(), counts.end())) / static_cast<double>(size());
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> parse_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw RowError(line_no, "unterminated quoted field");
  fields.push_back(std::move(cur));
  return fields;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

struct RawRow {
  std::vector<std::string> tokens;
  std::string label;
  std::size_t line;
};

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return in;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::vector<RawRow> read_csv_rows(const std::filesystem::path& path, const CsvColumns& columns, Tokenization mode) {
  auto in = open_input(path);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": missing header row");
  ++line_no;
  strip_cr(line);
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = parse_csv_line(line, line_no);
  const auto column_index = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw FormatError(path.string() + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t seq_col = column_index(columns.sequence);
  const std::size_t label_col = column_index(columns.label);

  std::vector<RawRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const auto fields = parse_csv_line(line, line_no);
    if (fields.size() != header.size()) {
      throw RowError(line_no, "expected " + std::to_string(header.size()) + " fields, found " +
                                  std::to_string(fields.size()));
    }
    auto tokens = tokenize(fields[seq_col], mode);
    if (tokens.empty()) throw RowError(line_no, "empty sequence");
    if (fields[label_col].empty()) throw RowError(line_no, "empty label");
    rows.push_back({std::move(tokens), fields[label_col], line_no});
  }
  return rows;
}

SequenceDataset build_dataset(const std::vector<RawRow>& rows, Tokenization mode) {
  std::set<std::string> observed;
  for (const auto& r : rows) observed.insert(r.tokens.begin(), r.tokens.end());
  SequenceDataset ds;
  ds.tokenization = mode;
  ds.vocab = Vocab(std::vector<std::string>(observed.begin(), observed.end()));
  std::map<std::string, std::size_t> label_index;
  for (const auto& r : rows) {
    auto [it, inserted] = label_index.emplace(r.label, ds.class_names.size());
    if (inserted) ds.class_names.push_back(r.label);
    TokenSequence seq;
    seq.reserve(r.tokens.size());
    for (const auto& t : r.tokens) seq.push_back(*ds.vocab.find(t));
    ds.sequences.push_back(std::move(seq));
    ds.labels.push_back(it->second);
  }
  ds.validate();
  return ds;
}

}  // namespace

SequenceDataset load_csv(const std::filesystem::path& path, const CsvColumns& columns, Tokenization mode) {
  return build_dataset(read_csv_rows(path, columns, mode), mode);
}

SequenceDataset load_csv_with_vocab(const std::filesystem::path& path, const Vocab& vocab,
                                    const std::vector<std::string>& class_names, const CsvColumns& columns,
                                    Tokenization mode) {
  const auto rows = read_csv_rows(path, columns, mode);
  SequenceDataset ds{{}, {}, vocab, class_names, mode};
  for (const auto& r : rows) {
    const auto label = std::find(class_names.begin(), class_names.end(), r.label);
    if (label == class_names.end()) throw RowError(r.line, "unknown label '" + r.label + "'");
    TokenSequence seq;
    for (const auto& t : r.tokens) {
      try {
        seq.push_back(vocab.index_of(t));
      } catch (const IndexError& e) {
        throw RowError(r.line, e.what());
      }
    }
    ds.sequences.push_back(std::move(seq));
    ds.labels.push_back(static_cast<std::size_t>(label - class_names.begin()));
  }
  ds.validate();
  return ds;
}

void save_csv(const SequenceDataset& dataset, const std::filesystem::path& path, const CsvColumns& columns) {
  dataset.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << csv_escape(columns.sequence) << ',' << csv_escape(columns.label) << '\n';
  const std::string sep = dataset.tokenization == Tokenization::word ? " " : "";
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    std::string text;
    for (std::size_t k = 0; k < dataset.sequences[i].size(); ++k) {
      if (k > 0) text += sep;
      text += dataset.vocab.token(dataset.sequences[i][k]);
    }
    out << csv_escape(text) << ',' << csv_escape(dataset.class_names[dataset.labels[i]]) << '\n';
  }
}

// ---------------------------------------------------------------------------
// FASTA

SequenceDataset load_fasta(const std::filesystem::path& path, const FastaLabelRule& rule, Tokenization mode) {
  auto in = open_input(path);
  std::vector<RawRow> rows;
  std::optional<RawRow> current;
  std::string body;
  std::size_t line_no = 0;

  const auto flush = [&] {
    if (!current) return;
    current->tokens = tokenize(body, mode);
    if (current->tokens.empty()) throw RowError(current->line, "record has an empty sequence");
    rows.push_back(std::move(*current));
    current.reset();
    body.clear();
  };

  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    if (line.front() == '>') {
      flush();
      std::vector<std::string> fields;
      std::string field;
      std::istringstream header(line.substr(1));
      while (std::getline(header, field, rule.delimiter)) fields.push_back(field);
      if (fields.size() < 2) throw RowError(line_no, "header has no label after '" + std::string(1, rule.delimiter) + "'");
      const std::size_t idx = rule.field < 0 ? fields.size() - 1 : static_cast<std::size_t>(rule.field);
      if (idx == 0 || idx >= fields.size() || fields[idx].empty()) throw RowError(line_no, "header has no label field");
      current = RawRow{{}, fields[idx], line_no};
    } else {
      if (!current) throw RowError(line_no, "sequence data before the first header");
      body += line;
    }
  }
  flush();
  return build_dataset(rows, mode);
}

// ---------------------------------------------------------------------------
// Splits and subsampling

void SplitSpec::validate(std::size_t dataset_size) const {
  if (counts) {
    const std::size_t total = counts->train + counts->valid + counts->test;
    if (total > dataset_size) {
      throw ConfigError("split counts sum to " + std::to_string(total) + " but the dataset has " +
                        std::to_string(dataset_size) + " rows");
    }
    return;
  }
  if (!fractions) throw ConfigError("split needs fractions or counts");
  const auto& f = *fractions;
  if (f.train < 0 || f.valid < 0 || f.test < 0) throw ConfigError("split fractions must be non-negative");
  if (std::abs(f.train + f.valid + f.test - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
}

Split split(const SequenceDataset& dataset, const SplitSpec& spec) {
  spec.validate(dataset.size());
  const std::size_t n = dataset.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(spec.seed);
  rng.shuffle(std::span<std::size_t>(order));

  std::size_t n_train = 0, n_valid = 0, n_test = 0;
  if (spec.counts) {
    n_train = spec.counts->train;
    n_valid = spec.counts->valid;
    n_test = spec.counts->test;
  } else {
    n_train = static_cast<std::size_t>(std::floor(spec.fractions->train * static_cast<double>(n) + 1e-9));
    n_valid = static_cast<std::size_t>(std::floor(spec.fractions->valid * static_cast<double>(n) + 1e-9));
    n_train = std::min(n_train, n);
    n_valid = std::min(n_valid, n - n_train);
    n_test = n - n_train - n_valid;
  }

  Split out;
  out.train_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.valid_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                           order.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid));
  out.test_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid),
                          order.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid + n_test));
  out.train = dataset.select(out.train_indices);
  out.valid = dataset.select(out.valid_indices);
  out.test = dataset.select(out.test_indices);
  return out;
}

std::vector<std::size_t> subsample_indices(std::size_t dataset_size, std::size_t n, std::uint64_t seed) {
  if (n > dataset_size) {
    throw ConfigError("subsample of " + std::to_string(n) + " requested from " + std::to_string(dataset_size) + " rows");
  }
  std::vector<std::size_t> order(dataset_size);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));
  order.resize(n);
  std::sort(order.begin(), order.end());
  return order;
}

SequenceDataset subsample(const SequenceDataset& dataset, std::size_t n, std::uint64_t seed) {
  return dataset.select(subsample_indices(dataset.size(), n, seed));
}

// ---------------------------------------------------------------------------
// Synthetic tasks

bool contains_motif(std::span<const std::size_t> seq, std::span<const std::size_t> motif) {
  if (motif.empty()) return true;
  return std::search(seq.begin(), seq.end(), motif.begin(), motif.end()) != seq.end();
}

namespace {

SequenceDataset synth_source(Rng& rng, const SynthSizes& sizes) {
  const std::size_t v = sizes.source_vocab;
  if (v < 2) throw ConfigError("synthetic source vocabulary needs at least 2 tokens");
  const std::size_t half = v / 2;
  std::vector<std::string> tokens;
  const int width = static_cast<int>(std::to_string(v - 1).size());
  for (std::size_t i = 0; i < v; ++i) {
    std::string num = std::to_string(i);
    tokens.push_back("w" + std::string(static_cast<std::size_t>(width) - num.size(), '0') + num);
  }
  SequenceDataset ds{{}, {}, Vocab(std::move(tokens)), {"negative", "positive"}, Tokenization::word};

  const std::size_t lo = sizes.min_length | 1;  // odd lengths only
  const std::size_t span_len = sizes.max_length >= lo ? (sizes.max_length - lo) / 2 + 1 : 1;
  for (std::size_t i = 0; i < sizes.source; ++i) {
    const std::size_t label = i % 2;
    const std::size_t len = lo + 2 * rng.below(span_len);
    TokenSequence seq(len);
    for (;;) {
      std::size_t positives = 0;
      for (auto& t : seq) {
        t = rng.below(v);
        positives += t < half ? 1 : 0;
      }
      if ((2 * positives > len) == (label == 1)) break;
    }
    ds.sequences.push_back(std::move(seq));
    ds.labels.push_back(label);
  }
  return ds;
}

SequenceDataset synth_target(Rng& rng, const SynthSizes& sizes) {
  std::vector<std::string> alphabet(std::begin(kTargetAlphabet), std::end(kTargetAlphabet));
  SequenceDataset ds{{}, {}, Vocab(alphabet), {"absent", "present"}, Tokenization::character};
  const std::span<const std::size_t> motif(kTargetMotif);

  // Background letter weights: motif letters are rare.
  std::vector<double> cumulative;
  double acc = 0.0;
  for (std::size_t t = 0; t < alphabet.size(); ++t) {
    const bool in_motif = std::find(motif.begin(), motif.end(), t) != motif.end();
    acc += in_motif ? 0.03 : (1.0 - 0.03 * static_cast<double>(motif.size())) /
                                 static_cast<double>(alphabet.size() - motif.size());
    cumulative.push_back(acc);
  }
  const auto draw = [&] {
    const double u = rng.uniform() * acc;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    return std::min(static_cast<std::size_t>(it - cumulative.begin()), alphabet.size() - 1);
  };

  const std::size_t min_len = std::max(sizes.min_length, 2 * motif.size() + 1);
  const std::size_t max_len = std::max(sizes.max_length, min_len);
  for (std::size_t i = 0; i < sizes.target; ++i) {
    const std::size_t label = i % 2;
    const std::size_t len = min_len + rng.below(max_len - min_len + 1);
    TokenSequence seq;
    if (label == 1) {
      const std::size_t copies = 1 + rng.below(2);
      seq.resize(len - copies * motif.size());
      for (auto& t : seq) t = draw();
      for (std::size_t c = 0; c < copies; ++c) {
        const std::size_t at = rng.below(seq.size() + 1);
        seq.insert(seq.begin() + static_cast<std::ptrdiff_t>(at), motif.begin(), motif.end());
      }
    } else {
      seq.resize(len);
      do {
        for (auto& t : seq) t = draw();
      } while (contains_motif(seq, motif));
    }
    ds.sequences.push_back(std::move(seq));
    ds.labels.push_back(label);
  }
  return ds;
}

}  // namespace

SynthTasks synth_tasks(std::uint64_t seed, const SynthSizes& sizes) {
  if (sizes.source == 0 || sizes.target == 0) throw ConfigError("synthetic task sizes must be positive");
  if (sizes.min_length == 0 || sizes.max_length < sizes.min_length) throw ConfigError("bad synthetic length range");
  Rng rng(seed);
  SynthTasks out;
  out.source = synth_source(rng, sizes);
  out.target = synth_target(rng, sizes);
  return out;
}

}  // namespace r2dl
