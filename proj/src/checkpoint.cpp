#include "r2dl/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"
#include "r2dl/errors.hpp"
#include "serialization.hpp"

namespace r2dl {

using nlohmann::json;

namespace {

json matrix_entry(const std::string& name, const Matrix& m) {
  return json{{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data().begin(), m.data().end())}};
}

Matrix matrix_from(const json& j, const std::string& expected_name) {
  if (j.at("name").get<std::string>() != expected_name) {
    throw FormatError("checkpoint tensor '" + j.at("name").get<std::string>() + "' found where '" + expected_name +
                      "' was expected");
  }
  return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(), j.at("data").get<std::vector<double>>());
}

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string(what) + ": " + e.what());
  }
}

template <typename F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw FormatError(std::string(what) + ": " + e.what());
  }
}

void check_version(const json& j, const char* what) {
  const int version = j.at("format_version").get<int>();
  if (version != kCheckpointFormatVersion) {
    throw FormatError(std::string(what) + ": unsupported format_version " + std::to_string(version));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Classifier

std::string classifier_to_json(const ClassifierCheckpoint& ckpt) {
  const auto& m = ckpt.model;
  json tensors = json::array();
  tensors.push_back(matrix_entry("embeddings", m.embeddings()));
  const auto names = ClassifierParams::tensor_names(m.architecture());
  for (std::size_t i = 0; i < names.size(); ++i) tensors.push_back(matrix_entry(names[i], m.params().tensors[i]));
  json j{{"format_version", kCheckpointFormatVersion},
         {"architecture", to_string(m.architecture())},
         {"d", m.dim()},
         {"vocab_size", m.vocab_size()},
         {"num_classes", m.num_classes()},
         {"seed", m.seed()},
         {"hidden", m.params().hidden},
         {"vocab", ckpt.vocab.tokens()},
         {"class_names", ckpt.class_names},
         {"tensors", std::move(tensors)}};
  return j.dump(1) + "\n";
}

ClassifierCheckpoint classifier_from_json(const std::string& text) {
  const json j = parse_json(text, "classifier checkpoint");
  return guarded("classifier checkpoint", [&] {
    check_version(j, "classifier checkpoint");
    ClassifierParams params;
    params.architecture = architecture_from_string(j.at("architecture").get<std::string>());
    params.hidden = j.at("hidden").get<std::size_t>();
    params.num_classes = j.at("num_classes").get<std::size_t>();
    const auto& tensors = j.at("tensors");
    const auto names = ClassifierParams::tensor_names(params.architecture);
    if (tensors.size() != names.size() + 1) throw FormatError("classifier checkpoint: wrong number of tensors");
    Matrix embeddings = matrix_from(tensors[0], "embeddings");
    for (std::size_t i = 0; i < names.size(); ++i) params.tensors.push_back(matrix_from(tensors[i + 1], names[i]));
    if (embeddings.rows() != j.at("d").get<std::size_t>() || embeddings.cols() != j.at("vocab_size").get<std::size_t>()) {
      throw FormatError("classifier checkpoint: header disagrees with embedding shape");
    }
    ClassifierCheckpoint ckpt{FrozenClassifier(std::move(embeddings), std::move(params), j.at("seed").get<std::uint64_t>()),
                              Vocab(j.at("vocab").get<std::vector<std::string>>()),
                              j.at("class_names").get<std::vector<std::string>>()};
    if (!ckpt.vocab.tokens().empty() && ckpt.vocab.size() != ckpt.model.vocab_size()) {
      throw FormatError("classifier checkpoint: vocabulary size disagrees with the embedding table");
    }
    return ckpt;
  });
}

void save_classifier(const ClassifierCheckpoint& ckpt, const std::filesystem::path& path) {
  write_text_file(path, classifier_to_json(ckpt));
}

ClassifierCheckpoint load_classifier(const std::filesystem::path& path) {
  return classifier_from_json(read_text_file(path));
}

// ---------------------------------------------------------------------------
// Program

std::string program_to_json(const ProgramCheckpoint& ckpt) {
  const auto& p = ckpt.program;
  json trace = json::array();
  for (const auto& r : ckpt.trace) trace.push_back(detail::trace_row_to_json(r));
  json j{{"format_version", kCheckpointFormatVersion},
         {"source_vocab_size", p.source_vocab()},
         {"target_vocab_size", p.target_vocab()},
         {"target_vocab", ckpt.target_vocab.tokens()},
         {"target_classes", ckpt.target_classes},
         {"target_tokenization", ckpt.target_tokenization == Tokenization::word ? "word" : "character"},
         {"label_map", ckpt.label_map.source_to_target()},
         {"source_fingerprint", hex64(ckpt.source_fingerprint)},
         {"config", detail::r2dl_config_to_json(p.config)},
         {"theta", matrix_entry("theta", p.theta)},
         {"support_sizes", p.support_sizes},
         {"table_override", p.table_override ? matrix_entry("table_override", *p.table_override) : json(nullptr)},
         {"best_iteration", ckpt.best_iteration},
         {"trace", std::move(trace)}};
  return j.dump(1) + "\n";
}

ProgramCheckpoint program_from_json(const std::string& text) {
  const json j = parse_json(text, "program checkpoint");
  return guarded("program checkpoint", [&] {
    check_version(j, "program checkpoint");
    AdversarialProgram program;
    program.theta = matrix_from(j.at("theta"), "theta");
    program.support_sizes = j.at("support_sizes").get<std::vector<std::size_t>>();
    program.config = detail::r2dl_config_from_json(j.at("config"));
    if (!j.at("table_override").is_null()) program.table_override = matrix_from(j.at("table_override"), "table_override");
    if (program.source_vocab() != j.at("source_vocab_size").get<std::size_t>() ||
        program.target_vocab() != j.at("target_vocab_size").get<std::size_t>()) {
      throw FormatError("program checkpoint: header disagrees with theta shape");
    }
    const auto classes = j.at("target_classes").get<std::vector<std::string>>();
    ProgramCheckpoint ckpt{std::move(program),
                           LabelMap(j.at("label_map").get<std::vector<std::size_t>>(), classes.size()),
                           Vocab(j.at("target_vocab").get<std::vector<std::string>>()),
                           classes,
                           j.at("target_tokenization").get<std::string>() == "word" ? Tokenization::word
                                                                                    : Tokenization::character,
                           0,
                           j.at("best_iteration").get<std::size_t>(),
                           {}};
    const auto fp = j.at("source_fingerprint").get<std::string>();
    ckpt.source_fingerprint = std::stoull(fp, nullptr, 16);
    for (const auto& r : j.at("trace")) ckpt.trace.push_back(detail::trace_row_from_json(r));
    if (ckpt.target_vocab.size() != ckpt.program.target_vocab()) {
      throw FormatError("program checkpoint: target vocabulary does not match theta");
    }
    return ckpt;
  });
}

void save_program(const ProgramCheckpoint& ckpt, const std::filesystem::path& path) {
  write_text_file(path, program_to_json(ckpt));
}

ProgramCheckpoint load_program(const std::filesystem::path& path) { return program_from_json(read_text_file(path)); }

// ---------------------------------------------------------------------------
// Text helpers

std::string trace_to_csv(std::span<const TraceRow> trace) {
  std::string out = "iteration,loss,valid_accuracy,mean_support\n";
  for (const auto& r : trace) {
    out += std::to_string(r.iteration) + ',' + format_double(r.loss) + ',' + format_double(r.valid_accuracy) + ',' +
           format_double(r.mean_support) + '\n';
  }
  return out;
}

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(std::begin(buf), std::end(buf), value);
  return std::string(buf, res.ptr);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
  if (!out) throw FormatError("failed writing " + path.string());
}

std::uint64_t file_fingerprint(const std::filesystem::path& path) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : read_text_file(path)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  const auto res = std::to_chars(std::begin(buf), std::end(buf), value, 16);
  std::string s(buf, res.ptr);
  return std::string(16 - s.size(), '0') + s;
}

}  // namespace r2dl
