#include "cpmf/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "cpmf/errors.hpp"
#include "cpmf/utf8.hpp"

namespace cpmf {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add_exp(double x, double y) {
  if (x == kNegInf) return y;
  if (y == kNegInf) return x;
  const double vmax = std::max(x, y);
  const double vmin = std::min(x, y);
  return vmax + std::log1p(std::exp(vmin - vmax));
}

std::string escape_piece(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string unescape_piece(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out.push_back(s[i]);
      continue;
    }
    if (i + 1 >= s.size()) throw FormatError("dangling escape in piece");
    switch (s[++i]) {
      case '\\': out.push_back('\\'); break;
      case 't': out.push_back('\t'); break;
      case 'n': out.push_back('\n'); break;
      case 'r': out.push_back('\r'); break;
      default: throw FormatError("unknown escape in piece");
    }
  }
  return out;
}

std::string byte_piece_name(unsigned byte) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "<0x%02x>", byte);
  return buf;
}

bool contains_reserved_glyph(std::string_view s) {
  return s.find(PieceVocab::kSplitterGlyph) != std::string_view::npos ||
         s.find(PieceVocab::kSpaceGlyph) != std::string_view::npos;
}

}  // namespace

const std::string PieceVocab::kSplitterGlyph = "\xE2\x96\x81";  // U+2581
const std::string PieceVocab::kSpaceGlyph = "\xE2\x8E\xB5";     // U+23B5
const std::string PieceVocab::kEodPiece = "<eod>";

// ---------------------------------------------------------------------------
// Lexicon

Lexicon::Lexicon(const std::vector<std::string>& words) {
  for (const auto& w : words) {
    if (w.empty()) throw FormatError("empty lexicon word");
    if (w.find(' ') != std::string::npos)
      throw FormatError("lexicon word contains a space: '" + w + "'");
    if (!utf8::is_valid(w)) throw Utf8Error("lexicon word is not UTF-8");
    max_chars_ = std::max(max_chars_, utf8::codepoint_count(w));
    words_.insert(w);
  }
}

Lexicon Lexicon::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open lexicon file: " + path);
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) words.push_back(line);
  }
  return Lexicon(words);
}

bool Lexicon::contains(std::string_view word) const {
  return words_.find(word) != words_.end();
}

// ---------------------------------------------------------------------------
// PieceVocab

PieceVocab::PieceVocab() {
  pieces_.reserve(kContentBase);
  pieces_.push_back(kSplitterGlyph);
  pieces_.push_back(kEodPiece);
  pieces_.push_back(kSpaceGlyph);
  for (unsigned b = 0; b < 256; ++b) pieces_.push_back(byte_piece_name(b));
  log_probs_.assign(pieces_.size(), kReservedLogProb);
}

void PieceVocab::add_content_piece(const std::string& piece, double log_prob) {
  if (piece.empty()) throw FormatError("empty piece");
  if (!utf8::is_valid(piece)) throw Utf8Error("piece is not valid UTF-8");
  if (contains_reserved_glyph(piece))
    throw FormatError("piece contains a reserved glyph");
  if (lookup_.contains(piece)) throw FormatError("duplicate piece: " + piece);
  if (!std::isfinite(log_prob) || log_prob > 1e-9)
    throw FormatError("piece log_prob must be finite and <= 0");
  const TokenId id = static_cast<TokenId>(pieces_.size());
  pieces_.push_back(piece);
  log_probs_.push_back(std::min(log_prob, 0.0));
  lookup_.emplace(piece, id);
  max_piece_chars_ = std::max(max_piece_chars_, utf8::codepoint_count(piece));
}

PieceVocab PieceVocab::from_entries(
    const std::vector<std::pair<std::string, double>>& content) {
  PieceVocab v;
  for (const auto& [piece, lp] : content) v.add_content_piece(piece, lp);
  return v;
}

const std::string& PieceVocab::piece(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= pieces_.size())
    throw InvalidIdError("piece id " + std::to_string(id));
  return pieces_[id];
}

double PieceVocab::log_prob(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= pieces_.size())
    throw InvalidIdError("piece id " + std::to_string(id));
  return log_probs_[id];
}

std::optional<TokenId> PieceVocab::find(std::string_view piece) const {
  auto it = lookup_.find(piece);
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

double PieceVocab::probability_mass() const {
  double mass = 0.0;
  for (double lp : log_probs_) mass += std::exp(lp);
  return mass;
}

void PieceVocab::validate() const {
  for (std::size_t id = 0; id < pieces_.size(); ++id) {
    if (!std::isfinite(log_probs_[id]) || log_probs_[id] > 0.0)
      throw FormatError("log_prob out of range for piece " + std::to_string(id));
  }
  const double mass = probability_mass();
  if (std::abs(mass - 1.0) > 1e-6)
    throw FormatError("piece probabilities sum to " + std::to_string(mass));
}

void PieceVocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write vocab file: " + path);
  char buf[64];
  for (std::size_t id = 0; id < pieces_.size(); ++id) {
    std::snprintf(buf, sizeof(buf), "%.17g", log_probs_[id]);
    out << escape_piece(pieces_[id]) << '\t' << buf << '\n';
  }
  if (!out) throw IoError("failed writing vocab file: " + path);
}

PieceVocab PieceVocab::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open vocab file: " + path);
  PieceVocab v;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw FormatError("vocab line " + std::to_string(lineno) + " has no tab");
    const std::string piece = unescape_piece(line.substr(0, tab));
    double lp = 0.0;
    try {
      lp = std::stod(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw FormatError("bad log_prob on vocab line " + std::to_string(lineno));
    }
    if (lineno < static_cast<std::size_t>(kContentBase)) {
      if (piece != v.pieces_[lineno])
        throw FormatError("reserved piece mismatch on line " +
                          std::to_string(lineno));
      v.log_probs_[lineno] = lp;
    } else {
      v.add_content_piece(piece, lp);
    }
    ++lineno;
  }
  if (lineno < static_cast<std::size_t>(kContentBase))
    throw FormatError("vocab file truncated: " + std::to_string(lineno) +
                      " lines");
  v.validate();
  return v;
}

// ---------------------------------------------------------------------------
// Segmentation lattice

namespace {

struct Edge {
  std::size_t end;  // byte position after the piece
  TokenId id;
  double log_prob;
};

struct Lattice {
  std::string_view word;
  std::vector<std::size_t> offsets;         // char boundaries, incl. 0 and n
  std::vector<std::vector<Edge>> edges;     // outgoing, indexed by byte pos
};

Lattice build_lattice(std::string_view word, const PieceVocab& vocab,
                      bool with_byte_fallback) {
  Lattice lat;
  lat.word = word;
  lat.offsets = utf8::codepoint_offsets(word);
  lat.edges.assign(word.size() + 1, {});
  const std::size_t nchars = lat.offsets.size() - 1;
  for (std::size_t ci = 0; ci < nchars; ++ci) {
    const std::size_t start = lat.offsets[ci];
    const std::size_t max_len =
        std::min(vocab.max_piece_chars(), nchars - ci);
    for (std::size_t len = 1; len <= max_len; ++len) {
      const std::size_t end = lat.offsets[ci + len];
      const auto id = vocab.find(word.substr(start, end - start));
      if (id) lat.edges[start].push_back({end, *id, vocab.log_prob(*id)});
    }
  }
  if (with_byte_fallback) {
    for (std::size_t p = 0; p < word.size(); ++p) {
      const TokenId id = PieceVocab::kByteBase +
                         static_cast<unsigned char>(word[p]);
      lat.edges[p].push_back({p + 1, id, PieceVocab::kReservedLogProb});
    }
  }
  return lat;
}

[[noreturn]] void throw_coverage_error(const Lattice& lat) {
  // Report the first character no edge spans.
  const std::size_t nchars = lat.offsets.size() - 1;
  std::vector<bool> covered(nchars, false);
  for (std::size_t p = 0; p < lat.edges.size(); ++p) {
    for (const Edge& e : lat.edges[p]) {
      for (std::size_t ci = 0; ci < nchars; ++ci) {
        if (lat.offsets[ci] >= p && lat.offsets[ci + 1] <= e.end)
          covered[ci] = true;
      }
    }
  }
  for (std::size_t ci = 0; ci < nchars; ++ci) {
    if (!covered[ci]) {
      throw CoverageError("no piece covers character at index " +
                          std::to_string(ci) + " of '" +
                          std::string(lat.word) + "'");
    }
  }
  throw CoverageError("word has no complete segmentation: '" +
                      std::string(lat.word) + "'");
}

struct ViterbiCell {
  double log_prob = kNegInf;
  std::size_t piece_count = 0;
  std::size_t first_len = 0;
  std::size_t next = 0;
  TokenId id = -1;
  bool reachable = false;
};

// Suffix DP. Ties: higher log_prob, then fewer pieces, then longer leading
// piece (leftmost-longest).
Segmentation viterbi_on(const Lattice& lat) {
  const std::size_t n = lat.word.size();
  std::vector<ViterbiCell> best(n + 1);
  best[n].reachable = true;
  best[n].log_prob = 0.0;
  for (std::size_t p = n; p-- > 0;) {
    for (const Edge& e : lat.edges[p]) {
      const ViterbiCell& suffix = best[e.end];
      if (!suffix.reachable) continue;
      const double lp = e.log_prob + suffix.log_prob;
      const std::size_t count = 1 + suffix.piece_count;
      const std::size_t flen = e.end - p;
      ViterbiCell& cur = best[p];
      const bool better =
          !cur.reachable || lp > cur.log_prob ||
          (lp == cur.log_prob &&
           (count < cur.piece_count ||
            (count == cur.piece_count && flen > cur.first_len)));
      if (better) {
        cur = {lp, count, flen, e.end, e.id, true};
      }
    }
  }
  if (!best[0].reachable) throw_coverage_error(lat);
  Segmentation seg;
  seg.log_prob = best[0].log_prob;
  for (std::size_t p = 0; p < n; p = best[p].next) {
    seg.pieces.push_back(best[p].id);
  }
  return seg;
}

struct ForwardBackward {
  double log_z = kNegInf;
  std::vector<double> alpha, beta;
};

ForwardBackward forward_backward(const Lattice& lat) {
  const std::size_t n = lat.word.size();
  ForwardBackward fb;
  fb.alpha.assign(n + 1, kNegInf);
  fb.beta.assign(n + 1, kNegInf);
  fb.alpha[0] = 0.0;
  for (std::size_t p = 0; p <= n; ++p) {
    if (fb.alpha[p] == kNegInf) continue;
    for (const Edge& e : lat.edges[p]) {
      fb.alpha[e.end] = log_add_exp(fb.alpha[e.end], fb.alpha[p] + e.log_prob);
    }
  }
  fb.beta[n] = 0.0;
  for (std::size_t p = n; p-- > 0;) {
    for (const Edge& e : lat.edges[p]) {
      if (fb.beta[e.end] == kNegInf) continue;
      fb.beta[p] = log_add_exp(fb.beta[p], e.log_prob + fb.beta[e.end]);
    }
  }
  fb.log_z = fb.alpha[n];
  return fb;
}

// Accumulates expected piece counts of `word` into `counts` (indexed by
// piece id), scaled by `weight`. Returns the word's log marginal likelihood.
double accumulate_marginal(std::string_view word, const PieceVocab& vocab,
                           double weight, std::vector<double>& counts) {
  const Lattice lat = build_lattice(word, vocab, /*with_byte_fallback=*/false);
  const ForwardBackward fb = forward_backward(lat);
  if (fb.log_z == kNegInf) throw_coverage_error(lat);
  for (std::size_t p = 0; p < lat.edges.size(); ++p) {
    if (fb.alpha[p] == kNegInf) continue;
    for (const Edge& e : lat.edges[p]) {
      if (fb.beta[e.end] == kNegInf) continue;
      const double post =
          std::exp(fb.alpha[p] + e.log_prob + fb.beta[e.end] - fb.log_z);
      counts[e.id] += weight * post;
    }
  }
  return fb.log_z;
}

}  // namespace

MarginalResult marginalize_word(std::string_view word,
                                const PieceVocab& vocab) {
  std::vector<double> counts(vocab.size(), 0.0);
  MarginalResult result;
  result.log_likelihood = accumulate_marginal(word, vocab, 1.0, counts);
  for (std::size_t id = 0; id < counts.size(); ++id) {
    if (counts[id] != 0.0)
      result.expected_counts.emplace_back(static_cast<TokenId>(id), counts[id]);
  }
  return result;
}

Segmentation viterbi_segment(std::string_view word, const PieceVocab& vocab) {
  return viterbi_on(build_lattice(word, vocab, /*with_byte_fallback=*/false));
}

// ---------------------------------------------------------------------------
// Pre-segmentation and boundary marking

std::vector<std::string> pre_segment(std::string_view text,
                                     const Lexicon& lexicon) {
  const auto offsets = utf8::codepoint_offsets(text);
  const std::size_t nchars = offsets.size() - 1;
  std::vector<std::string> words;
  std::size_t ci = 0;
  while (ci < nchars) {
    const std::size_t start = offsets[ci];
    if (text[start] == ' ') {
      ++ci;
      continue;
    }
    std::size_t best_len = 1;
    const std::size_t cap = std::min(lexicon.max_chars(), nchars - ci);
    for (std::size_t len = cap; len >= 2; --len) {
      const std::string_view sub =
          text.substr(start, offsets[ci + len] - start);
      if (sub.find(' ') != std::string_view::npos) continue;
      if (lexicon.contains(sub)) {
        best_len = len;
        break;
      }
    }
    words.emplace_back(text.substr(start, offsets[ci + best_len] - start));
    ci += best_len;
  }
  return words;
}

namespace {

enum class MarkKind { word, splitter, space };

struct MarkItem {
  MarkKind kind;
  std::string_view word;  // valid when kind == word
};

std::vector<MarkItem> mark_items(const std::vector<std::string>& words,
                                 std::string_view original) {
  std::vector<MarkItem> items;
  std::size_t pos = 0;
  std::size_t wi = 0;
  while (pos < original.size()) {
    if (original[pos] == ' ') {
      items.push_back({MarkKind::space, {}});
      ++pos;
      continue;
    }
    if (wi >= words.size())
      throw MismatchError("text continues past the final word");
    const std::string& w = words[wi];
    if (w.empty()) throw MismatchError("empty word");
    if (w.find(' ') != std::string::npos)
      throw MismatchError("word contains a space: '" + w + "'");
    if (original.compare(pos, w.size(), w) != 0)
      throw MismatchError("word '" + w + "' does not match text at byte " +
                          std::to_string(pos));
    if (!items.empty() && items.back().kind == MarkKind::word)
      items.push_back({MarkKind::splitter, {}});
    items.push_back({MarkKind::word, std::string_view(w)});
    pos += w.size();
    ++wi;
  }
  if (wi != words.size())
    throw MismatchError(std::to_string(words.size() - wi) +
                        " word(s) left over after consuming text");
  return items;
}

}  // namespace

std::string insert_splitters(const std::vector<std::string>& words,
                             std::string_view original) {
  std::string out;
  out.reserve(original.size() + words.size() * 3);
  for (const MarkItem& item : mark_items(words, original)) {
    switch (item.kind) {
      case MarkKind::word: out += item.word; break;
      case MarkKind::splitter: out += PieceVocab::kSplitterGlyph; break;
      case MarkKind::space: out += PieceVocab::kSpaceGlyph; break;
    }
  }
  return out;
}

std::vector<TokenId> encode(std::string_view text, const Lexicon& lexicon,
                            const PieceVocab& vocab) {
  const std::vector<std::string> words = pre_segment(text, lexicon);
  std::vector<TokenId> ids;
  ids.reserve(text.size() / 2 + 4);
  for (const MarkItem& item : mark_items(words, text)) {
    switch (item.kind) {
      case MarkKind::word: {
        const Segmentation seg = viterbi_on(
            build_lattice(item.word, vocab, /*with_byte_fallback=*/true));
        ids.insert(ids.end(), seg.pieces.begin(), seg.pieces.end());
        break;
      }
      case MarkKind::splitter:
        ids.push_back(PieceVocab::kSplitterId);
        break;
      case MarkKind::space:
        ids.push_back(PieceVocab::kSpaceId);
        break;
    }
  }
  return ids;
}

std::string decode(const std::vector<TokenId>& ids, const PieceVocab& vocab) {
  std::string out;
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab.size())
      throw InvalidIdError("token id " + std::to_string(id));
    if (id == PieceVocab::kSplitterId) continue;
    if (id == PieceVocab::kSpaceId) {
      out.push_back(' ');
    } else if (id == PieceVocab::kEodId) {
      out += "\n\n";
    } else if (vocab.is_byte_id(id)) {
      out.push_back(static_cast<char>(id - PieceVocab::kByteBase));
    } else {
      out += vocab.piece(id);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Unigram training

namespace {

struct CountedWord {
  std::string word;
  std::size_t count;
};

// EM over the content pieces. Returns the corpus log likelihood after each
// iteration; probabilities are renormalized every M-step.
std::vector<double> run_em(const std::vector<CountedWord>& words,
                           PieceVocab& vocab, std::size_t iterations,
                           std::vector<double>* final_counts) {
  std::vector<double> logliks;
  std::vector<double> counts;
  for (std::size_t it = 0; it < iterations; ++it) {
    counts.assign(vocab.size(), 0.0);
    double loglik = 0.0;
    for (const CountedWord& cw : words) {
      loglik += static_cast<double>(cw.count) *
                accumulate_marginal(cw.word, vocab,
                                    static_cast<double>(cw.count), counts);
    }
    double total = 0.0;
    for (std::size_t id = PieceVocab::kContentBase; id < vocab.size(); ++id)
      total += counts[id];
    for (std::size_t id = PieceVocab::kContentBase; id < vocab.size(); ++id) {
      const double c = std::max(counts[id], 1e-300);
      vocab.set_log_prob(static_cast<TokenId>(id),
                         std::min(std::log(c / total), 0.0));
    }
    logliks.push_back(loglik);
  }
  if (final_counts) *final_counts = counts;
  return logliks;
}

}  // namespace

PieceVocab train_unigram_counted(
    const std::vector<std::pair<std::string, std::size_t>>& corpus_words,
    std::size_t target_size, std::size_t seed_size, double prune_keep,
    UnigramTrainDiagnostics* diag, std::size_t em_iters_per_round) {
  if (em_iters_per_round == 0) throw ConfigError("em_iters_per_round >= 1");
  if (seed_size < target_size)
    throw ConfigError("seed_size must be >= target_size");
  if (target_size == 0) throw ConfigError("target_size must be >= 1");
  if (!(prune_keep > 0.0 && prune_keep < 1.0))
    throw ConfigError("prune_keep must lie in (0, 1)");

  // Deduplicate in first-appearance order; words holding a reserved glyph
  // are left to the byte-fallback machinery and do not train the model.
  std::vector<CountedWord> words;
  {
    std::unordered_map<std::string, std::size_t> index;
    for (const auto& [w, c] : corpus_words) {
      if (w.empty() || c == 0 || contains_reserved_glyph(w)) continue;
      if (!utf8::is_valid(w)) throw Utf8Error("corpus word is not UTF-8");
      auto [it, inserted] = index.emplace(w, words.size());
      if (inserted) {
        words.push_back({w, c});
      } else {
        words[it->second].count += c;
      }
    }
  }
  if (words.empty()) throw EmptyCorpusError("no usable corpus words");

  // Seed: substrings up to 8 chars ranked by frequency (capped), plus every
  // single character. Initial probabilities follow frequency * length.
  constexpr std::size_t kMaxSeedPieceChars = 8;
  std::unordered_map<std::string, std::size_t> freq;
  for (const CountedWord& cw : words) {
    const auto offsets = utf8::codepoint_offsets(cw.word);
    const std::size_t nchars = offsets.size() - 1;
    for (std::size_t i = 0; i < nchars; ++i) {
      const std::size_t maxlen = std::min(kMaxSeedPieceChars, nchars - i);
      for (std::size_t len = 1; len <= maxlen; ++len) {
        freq[cw.word.substr(offsets[i], offsets[i + len] - offsets[i])] +=
            cw.count;
      }
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(),
                                                          freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  std::vector<std::pair<std::string, double>> seed;
  {
    std::unordered_set<std::string> taken;
    for (const auto& [sub, count] : ranked) {
      if (seed.size() >= seed_size) break;
      seed.emplace_back(sub, static_cast<double>(count));
      taken.insert(sub);
    }
    for (const auto& [sub, count] : ranked) {
      if (utf8::codepoint_count(sub) == 1 && !taken.contains(sub))
        seed.emplace_back(sub, static_cast<double>(count));
    }
  }
  double score_total = 0.0;
  for (auto& [piece, score] : seed) {
    score *= static_cast<double>(utf8::codepoint_count(piece));
    score_total += score;
  }
  for (auto& [piece, score] : seed) {
    score = std::min(std::log(score / score_total), 0.0);
  }
  PieceVocab vocab = PieceVocab::from_entries(seed);

  std::vector<double> counts;
  auto record = [&](const std::vector<double>& logliks) {
    if (diag)
      diag->em_log_likelihood.insert(diag->em_log_likelihood.end(),
                                     logliks.begin(), logliks.end());
  };

  record(run_em(words, vocab, em_iters_per_round, &counts));
  while (vocab.content_size() > target_size) {
    // Rank prunable pieces by the likelihood lost when each is removed and
    // its Viterbi occurrences fall back to the best alternative
    // segmentation. Pieces no Viterbi path uses rank first (zero loss),
    // ordered by their EM posterior usage.
    std::vector<double> usage(vocab.size(), 0.0);
    for (const CountedWord& cw : words) {
      const Segmentation seg = viterbi_segment(cw.word, vocab);
      for (TokenId id : seg.pieces)
        usage[id] += static_cast<double>(cw.count);
    }
    struct Candidate {
      double loss;
      double em_count;
      TokenId id;
    };
    std::vector<Candidate> prunable;
    for (std::size_t id = PieceVocab::kContentBase; id < vocab.size(); ++id) {
      const std::string& piece = vocab.piece(static_cast<TokenId>(id));
      if (utf8::codepoint_count(piece) == 1) continue;  // singles protected
      Lattice lat = build_lattice(piece, vocab, /*with_byte_fallback=*/false);
      for (auto& edges : lat.edges) {
        std::erase_if(edges, [&](const Edge& e) {
          return e.id == static_cast<TokenId>(id);
        });
      }
      const Segmentation alt = viterbi_on(lat);
      const double loss =
          usage[id] * (vocab.log_prob(static_cast<TokenId>(id)) - alt.log_prob);
      prunable.push_back({loss, counts[id], static_cast<TokenId>(id)});
    }
    if (prunable.empty()) break;  // nothing left to prune
    std::sort(prunable.begin(), prunable.end(),
              [&](const Candidate& a, const Candidate& b) {
                if (a.loss != b.loss) return a.loss < b.loss;
                if (a.em_count != b.em_count) return a.em_count < b.em_count;
                return vocab.piece(a.id) < vocab.piece(b.id);
              });
    const std::size_t complement = static_cast<std::size_t>(
        (1.0 - prune_keep) * static_cast<double>(prunable.size()));
    std::size_t n_remove =
        std::min(std::max<std::size_t>(complement, 1),
                 vocab.content_size() - target_size);
    n_remove = std::min(n_remove, prunable.size());

    std::unordered_set<TokenId> removed;
    for (std::size_t i = 0; i < n_remove; ++i) removed.insert(prunable[i].id);
    std::vector<std::pair<std::string, double>> kept;
    double kept_mass = 0.0;
    for (std::size_t id = PieceVocab::kContentBase; id < vocab.size(); ++id) {
      if (removed.contains(static_cast<TokenId>(id))) continue;
      kept.emplace_back(vocab.piece(static_cast<TokenId>(id)),
                        vocab.log_prob(static_cast<TokenId>(id)));
      kept_mass += std::exp(vocab.log_prob(static_cast<TokenId>(id)));
    }
    const double log_kept = std::log(kept_mass);
    for (auto& [piece, lp] : kept) lp = std::min(lp - log_kept, 0.0);
    vocab = PieceVocab::from_entries(kept);
    if (diag) ++diag->prune_rounds;
    record(run_em(words, vocab, em_iters_per_round, &counts));
  }
  return vocab;
}

PieceVocab train_unigram(const std::vector<std::string>& corpus_words,
                         std::size_t target_size, std::size_t seed_size,
                         double prune_keep, UnigramTrainDiagnostics* diag,
                         std::size_t em_iters_per_round) {
  std::vector<std::pair<std::string, std::size_t>> counted;
  counted.reserve(corpus_words.size());
  for (const auto& w : corpus_words) counted.emplace_back(w, 1);
  return train_unigram_counted(counted, target_size, seed_size, prune_keep,
                               diag, em_iters_per_round);
}

}  // namespace cpmf
