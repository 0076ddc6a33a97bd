#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace cpmf {

using TokenId = std::int32_t;

// Word list driving pre-segmentation. Words are UTF-8, non-empty, and may
// not contain ASCII spaces (matching never crosses a space).
class Lexicon {
 public:
  Lexicon() = default;
  explicit Lexicon(const std::vector<std::string>& words);
  static Lexicon load(const std::string& path);

  bool contains(std::string_view word) const;
  std::size_t max_chars() const { return max_chars_; }
  std::size_t size() const { return words_.size(); }

 private:
  struct Hash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const {
      return std::hash<std::string_view>{}(s);
    }
  };
  std::unordered_set<std::string, Hash, std::equal_to<>> words_;
  std::size_t max_chars_ = 0;
};

// Sub-word vocabulary with a log-probability per piece.
//
// Id layout is fixed:
//   0            splitter glyph (U+2581), marks segmentation boundaries
//   1            end-of-document
//   2            escaped original space (U+23B5)
//   3..258       byte pieces <0x00>..<0xff>, the fallback that keeps
//                encoding total and byte-exact
//   259..        learned content pieces
class PieceVocab {
 public:
  static constexpr TokenId kSplitterId = 0;
  static constexpr TokenId kEodId = 1;
  static constexpr TokenId kSpaceId = 2;
  static constexpr TokenId kByteBase = 3;
  static constexpr TokenId kContentBase = 259;

  static const std::string kSplitterGlyph;  // U+2581
  static const std::string kSpaceGlyph;     // U+23B5
  static const std::string kEodPiece;       // "<eod>"

  // Log-prob assigned to control and byte pieces; low enough that a byte
  // path never beats a real piece, high enough to stay finite.
  static constexpr double kReservedLogProb = -30.0;

  PieceVocab();

  // Builds a vocab from (piece, log_prob) content entries. Entries must be
  // unique, non-empty, and free of the reserved glyphs.
  static PieceVocab from_entries(
      const std::vector<std::pair<std::string, double>>& content);

  static PieceVocab load(const std::string& path);
  void save(const std::string& path) const;

  std::size_t size() const { return pieces_.size(); }
  std::size_t content_size() const { return pieces_.size() - kContentBase; }
  const std::string& piece(TokenId id) const;
  double log_prob(TokenId id) const;
  void set_log_prob(TokenId id, double lp) { log_probs_[id] = lp; }
  std::optional<TokenId> find(std::string_view piece) const;
  std::size_t max_piece_chars() const { return max_piece_chars_; }
  bool is_byte_id(TokenId id) const {
    return id >= kByteBase && id < kContentBase;
  }

  // Sum of exp(log_prob) over every piece (content + reserved).
  double probability_mass() const;

  // Checks the type invariants; throws on violation.
  void validate() const;

 private:
  void add_content_piece(const std::string& piece, double log_prob);

  std::vector<std::string> pieces_;
  std::vector<double> log_probs_;
  struct Hash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const {
      return std::hash<std::string_view>{}(s);
    }
  };
  std::unordered_map<std::string, TokenId, Hash, std::equal_to<>> lookup_;
  std::size_t max_piece_chars_ = 1;
};

struct Segmentation {
  std::vector<TokenId> pieces;
  double log_prob = 0.0;
};

struct MarginalResult {
  double log_likelihood = 0.0;
  // (piece id, expected count), ascending by id.
  std::vector<std::pair<TokenId, double>> expected_counts;
};

struct UnigramTrainDiagnostics {
  // Corpus log marginal likelihood after each EM iteration, in order.
  std::vector<double> em_log_likelihood;
  std::size_t prune_rounds = 0;
};

// Greedy forward maximum matching. ASCII spaces separate words and are never
// part of one; characters that start no lexicon word become single-character
// words.
std::vector<std::string> pre_segment(std::string_view text,
                                     const Lexicon& lexicon);

// Renders the word sequence back over the original text, marking boundaries
// introduced by segmentation with the splitter glyph and each original space
// with the escape glyph. Throws MismatchError if words do not tile the
// original's non-space content.
std::string insert_splitters(const std::vector<std::string>& words,
                             std::string_view original);

// EM training of the unigram piece model. target_size and seed_size count
// learned content pieces (the reserved ids are always present on top).
// em_iters_per_round EM iterations run between pruning rounds.
PieceVocab train_unigram(const std::vector<std::string>& corpus_words,
                         std::size_t target_size, std::size_t seed_size,
                         double prune_keep,
                         UnigramTrainDiagnostics* diag = nullptr,
                         std::size_t em_iters_per_round = 2);
PieceVocab train_unigram_counted(
    const std::vector<std::pair<std::string, std::size_t>>& corpus_words,
    std::size_t target_size, std::size_t seed_size, double prune_keep,
    UnigramTrainDiagnostics* diag = nullptr,
    std::size_t em_iters_per_round = 2);

// Log marginal likelihood of the word under all segmentations, plus the
// expected piece counts (forward-backward over the segmentation lattice).
MarginalResult marginalize_word(std::string_view word, const PieceVocab& vocab);

// Highest-probability segmentation; ties broken toward fewer pieces, then
// leftmost-longest. Throws CoverageError when a character has no piece.
Segmentation viterbi_segment(std::string_view word, const PieceVocab& vocab);

// Full pipeline: pre-segment, mark boundaries, per-word Viterbi with byte
// fallback. Total: any valid UTF-8 input encodes.
std::vector<TokenId> encode(std::string_view text, const Lexicon& lexicon,
                            const PieceVocab& vocab);

// Exact left inverse of encode. Splitter ids vanish, escaped spaces become
// spaces, byte pieces become raw bytes, the end-of-document id renders as a
// blank line.
std::string decode(const std::vector<TokenId>& ids, const PieceVocab& vocab);

}  // namespace cpmf
