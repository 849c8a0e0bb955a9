#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "r2dl/classifier.hpp"
#include "r2dl/data.hpp"
#include "r2dl/reprogram.hpp"

namespace r2dl {

inline constexpr int kCheckpointFormatVersion = 1;

/// Source model plus the vocabulary and class names it was trained with.
///
/// JSON layout: header fields format_version, architecture, d, vocab_size,
/// num_classes, seed, hidden; then "vocab", "class_names" and "tensors", an
/// array in the order embeddings, then ClassifierParams::tensor_names(), each
/// entry {"name", "rows", "cols", "data"} with data flattened row-major.
struct ClassifierCheckpoint {
  FrozenClassifier model;
  Vocab vocab;
  std::vector<std::string> class_names;

  friend bool operator==(const ClassifierCheckpoint&, const ClassifierCheckpoint&) = default;
};

std::string classifier_to_json(const ClassifierCheckpoint& ckpt);
ClassifierCheckpoint classifier_from_json(const std::string& text);
void save_classifier(const ClassifierCheckpoint& ckpt, const std::filesystem::path& path);
ClassifierCheckpoint load_classifier(const std::filesystem::path& path);

/// Trained adversarial program and everything needed to evaluate it again.
struct ProgramCheckpoint {
  AdversarialProgram program;
  LabelMap label_map;
  Vocab target_vocab;
  std::vector<std::string> target_classes;
  Tokenization target_tokenization = Tokenization::character;
  std::uint64_t source_fingerprint = 0;
  std::size_t best_iteration = 0;
  std::vector<TraceRow> trace;

  friend bool operator==(const ProgramCheckpoint&, const ProgramCheckpoint&) = default;
};

std::string program_to_json(const ProgramCheckpoint& ckpt);
ProgramCheckpoint program_from_json(const std::string& text);
void save_program(const ProgramCheckpoint& ckpt, const std::filesystem::path& path);
ProgramCheckpoint load_program(const std::filesystem::path& path);

/// iteration,loss,valid_accuracy,mean_support
std::string trace_to_csv(std::span<const TraceRow> trace);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);
/// FNV-1a over a file's bytes.
std::uint64_t file_fingerprint(const std::filesystem::path& path);
std::string hex64(std::uint64_t value);

}  // namespace r2dl
