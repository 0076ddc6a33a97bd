#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "cpmf/errors.hpp"
#include "cpmf/rng.hpp"
#include "cpmf/tokenizer.hpp"
#include "cpmf/utf8.hpp"

using namespace cpmf;

namespace {

PieceVocab make_vocab(const std::vector<std::pair<std::string, double>>& entries) {
  return PieceVocab::from_entries(entries);
}

// ---------------------------------------------------------------------------
// Oracles. These stay independent of the lattice implementation: they
// enumerate segmentations recursively over code points.

void enumerate_segmentations(const std::string& word, const PieceVocab& vocab,
                             std::size_t char_index,
                             const std::vector<std::size_t>& offsets,
                             std::vector<TokenId>& current,
                             std::vector<std::vector<TokenId>>& out) {
  const std::size_t nchars = offsets.size() - 1;
  if (char_index == nchars) {
    out.push_back(current);
    return;
  }
  for (std::size_t len = 1; char_index + len <= nchars; ++len) {
    const std::string piece =
        word.substr(offsets[char_index],
                    offsets[char_index + len] - offsets[char_index]);
    const auto id = vocab.find(piece);
    if (!id) continue;
    current.push_back(*id);
    enumerate_segmentations(word, vocab, char_index + len, offsets, current,
                            out);
    current.pop_back();
  }
}

std::vector<std::vector<TokenId>> all_segmentations(const std::string& word,
                                                    const PieceVocab& vocab) {
  std::vector<std::vector<TokenId>> out;
  std::vector<TokenId> current;
  enumerate_segmentations(word, vocab, 0, utf8::codepoint_offsets(word),
                          current, out);
  return out;
}

double seg_log_prob(const std::vector<TokenId>& seg, const PieceVocab& vocab) {
  double lp = 0.0;
  for (TokenId id : seg) lp += vocab.log_prob(id);
  return lp;
}

// Exhaustive argmax with the pinned tie order: highest log-prob, fewest
// pieces, then longest pieces from the left.
std::vector<TokenId> brute_force_best(const std::string& word,
                                      const PieceVocab& vocab) {
  const auto segs = all_segmentations(word, vocab);
  REQUIRE(!segs.empty());
  auto piece_lens = [&](const std::vector<TokenId>& seg) {
    std::vector<std::size_t> lens;
    for (TokenId id : seg)
      lens.push_back(utf8::codepoint_count(vocab.piece(id)));
    return lens;
  };
  const std::vector<TokenId>* best = &segs.front();
  for (const auto& seg : segs) {
    const double a = seg_log_prob(seg, vocab);
    const double b = seg_log_prob(*best, vocab);
    if (a > b) {
      best = &seg;
    } else if (a == b) {
      if (seg.size() < best->size()) {
        best = &seg;
      } else if (seg.size() == best->size() &&
                 piece_lens(seg) > piece_lens(*best)) {
        best = &seg;  // lexicographically longer-first wins
      }
    }
  }
  return *best;
}

// Log marginal over the enumerated segmentations.
double brute_force_marginal(const std::string& word, const PieceVocab& vocab) {
  double total = 0.0;
  for (const auto& seg : all_segmentations(word, vocab)) {
    total += std::exp(seg_log_prob(seg, vocab));
  }
  return std::log(total);
}

// Plain EM over enumerated segmentations, mirroring the trainer's seeding
// (substring frequency ranking, probability mass proportional to
// frequency * length).
struct BruteEmResult {
  std::map<std::string, double> log_probs;
  std::vector<double> logliks;
};

BruteEmResult brute_force_em(
    const std::vector<std::pair<std::string, std::size_t>>& corpus,
    std::size_t iterations) {
  std::map<std::string, double> score;
  for (const auto& [word, count] : corpus) {
    const auto offsets = utf8::codepoint_offsets(word);
    const std::size_t nchars = offsets.size() - 1;
    for (std::size_t i = 0; i < nchars; ++i) {
      for (std::size_t len = 1; len <= std::min<std::size_t>(8, nchars - i);
           ++len) {
        const std::string sub =
            word.substr(offsets[i], offsets[i + len] - offsets[i]);
        score[sub] += static_cast<double>(count * len);
      }
    }
  }
  double total = 0.0;
  for (const auto& [piece, s] : score) total += s;
  std::map<std::string, double> prob;
  for (const auto& [piece, s] : score) prob[piece] = s / total;

  BruteEmResult result;
  for (std::size_t it = 0; it < iterations; ++it) {
    std::vector<std::pair<std::string, double>> entries;
    for (const auto& [piece, p] : prob) entries.emplace_back(piece, std::log(p));
    const PieceVocab vocab = make_vocab(entries);
    std::map<std::string, double> counts;
    double loglik = 0.0;
    for (const auto& [word, count] : corpus) {
      const auto segs = all_segmentations(word, vocab);
      double z = 0.0;
      for (const auto& seg : segs) z += std::exp(seg_log_prob(seg, vocab));
      loglik += static_cast<double>(count) * std::log(z);
      for (const auto& seg : segs) {
        const double w = std::exp(seg_log_prob(seg, vocab)) / z;
        for (TokenId id : seg)
          counts[vocab.piece(id)] += static_cast<double>(count) * w;
      }
    }
    double count_total = 0.0;
    for (const auto& [piece, c] : counts) count_total += c;
    for (auto& [piece, p] : prob) p = counts[piece] / count_total;
    result.logliks.push_back(loglik);
  }
  for (const auto& [piece, p] : prob) result.log_probs[piece] = std::log(p);
  return result;
}

std::string splitter() { return PieceVocab::kSplitterGlyph; }
std::string space_glyph() { return PieceVocab::kSpaceGlyph; }

PieceVocab ascii_vocab() {
  // Uniform single-character coverage over printable ASCII.
  std::vector<std::pair<std::string, double>> entries;
  const double lp = std::log(1.0 / 95.0);
  for (char c = 32; c < 127; ++c) entries.emplace_back(std::string(1, c), lp);
  return make_vocab(entries);
}

}  // namespace

TEST_CASE("pre_segment handles the pinned examples") {
  const Lexicon empty(std::vector<std::string>{});
  CHECK(pre_segment("", empty).empty());

  const Lexicon ab({"ab"});
  CHECK(pre_segment("abc", ab) == std::vector<std::string>{"ab", "c"});

  const Lexicon cn({"北京", "大学"});
  CHECK(pre_segment("北京大学", cn) ==
        std::vector<std::string>{"北京", "大学"});
}

TEST_CASE("pre_segment prefers the longest match and skips spaces") {
  const Lexicon lex({"ab", "abc", "cd"});
  CHECK(pre_segment("abcd", lex) == std::vector<std::string>{"abc", "d"});
  CHECK(pre_segment("ab cd", lex) == std::vector<std::string>{"ab", "cd"});
  CHECK(pre_segment("  a  ", lex) == std::vector<std::string>{"a"});
}

TEST_CASE("pre_segment agrees with a scan-all-words reference") {
  const std::vector<std::string> words = {"ab", "bc", "abc", "cab", "aa"};
  const Lexicon lex(words);
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    std::string text;
    const std::size_t len = rng.next_below(12);
    for (std::size_t i = 0; i < len; ++i) {
      const char* alphabet = "abc ";
      text.push_back(alphabet[rng.next_below(4)]);
    }
    std::vector<std::string> expect;
    std::size_t pos = 0;
    while (pos < text.size()) {
      if (text[pos] == ' ') {
        ++pos;
        continue;
      }
      std::string best;
      for (const auto& w : words) {
        if (w.size() > best.size() && text.compare(pos, w.size(), w) == 0)
          best = w;
      }
      if (best.empty()) best = text.substr(pos, 1);
      expect.push_back(best);
      pos += best.size();
    }
    CHECK(pre_segment(text, lex) == expect);
  }
}

TEST_CASE("insert_splitters marks boundaries and escapes spaces") {
  CHECK(insert_splitters({"你好"}, "你好") == "你好");
  CHECK(insert_splitters({"北京", "大学"}, "北京大学") ==
        "北京" + splitter() + "大学");
  CHECK(insert_splitters({"a", "b"}, "a b") == "a" + space_glyph() + "b");
  CHECK(insert_splitters({"a", "b"}, "a  b") ==
        "a" + space_glyph() + space_glyph() + "b");
  CHECK(insert_splitters({}, "") == "");
  CHECK(insert_splitters({}, " ") == space_glyph());
}

TEST_CASE("insert_splitters rejects words that do not tile the text") {
  CHECK_THROWS_AS(insert_splitters({"ab"}, "ac"), MismatchError);
  CHECK_THROWS_AS(insert_splitters({"a"}, "ab"), MismatchError);
  CHECK_THROWS_AS(insert_splitters({"a", "b"}, "a"), MismatchError);
}

TEST_CASE("marginalize_word single-piece word") {
  const PieceVocab vocab = make_vocab({{"a", 0.0}});
  const MarginalResult r = marginalize_word("a", vocab);
  CHECK(r.log_likelihood == doctest::Approx(0.0).epsilon(1e-12));
  REQUIRE(r.expected_counts.size() == 1);
  CHECK(r.expected_counts[0].second == doctest::Approx(1.0));
}

TEST_CASE("marginalize_word sums both segmentations of 'ab'") {
  const PieceVocab vocab = make_vocab({{"a", std::log(0.4)},
                                       {"b", std::log(0.4)},
                                       {"ab", std::log(0.2)}});
  const MarginalResult r = marginalize_word("ab", vocab);
  CHECK(r.log_likelihood == doctest::Approx(std::log(0.36)).epsilon(1e-12));
}

TEST_CASE("marginalize_word matches exhaustive enumeration on 'aaa'") {
  const PieceVocab vocab = make_vocab({{"a", std::log(0.5)},
                                       {"aa", std::log(0.3)},
                                       {"aaa", std::log(0.2)}});
  const MarginalResult r = marginalize_word("aaa", vocab);
  // 4 segmentations: a|a|a, aa|a, a|aa, aaa
  CHECK(r.log_likelihood ==
        doctest::Approx(brute_force_marginal("aaa", vocab)).epsilon(1e-12));
}

TEST_CASE("expected counts conserve character length") {
  const PieceVocab vocab = make_vocab({{"a", std::log(0.3)},
                                       {"b", std::log(0.3)},
                                       {"ab", std::log(0.2)},
                                       {"ba", std::log(0.1)},
                                       {"aba", std::log(0.1)}});
  for (const std::string word : {"a", "ab", "aba", "abab", "ababa"}) {
    const MarginalResult r = marginalize_word(word, vocab);
    double weighted = 0.0;
    for (const auto& [id, count] : r.expected_counts) {
      weighted += count * static_cast<double>(
                              utf8::codepoint_count(vocab.piece(id)));
    }
    CHECK(weighted ==
          doctest::Approx(static_cast<double>(utf8::codepoint_count(word)))
              .epsilon(1e-9));
  }
}

TEST_CASE("marginalize_word reports missing coverage") {
  const PieceVocab vocab = make_vocab({{"a", std::log(0.5)}});
  CHECK_THROWS_AS(marginalize_word("ax", vocab), CoverageError);
}

TEST_CASE("viterbi_segment picks the best single piece") {
  const PieceVocab vocab = make_vocab({{"ab", std::log(0.5)},
                                       {"a", std::log(0.25)},
                                       {"b", std::log(0.25)}});
  const Segmentation seg = viterbi_segment("ab", vocab);
  REQUIRE(seg.pieces.size() == 1);
  CHECK(vocab.piece(seg.pieces[0]) == "ab");
  CHECK(seg.log_prob == doctest::Approx(std::log(0.5)));

  const Segmentation single = viterbi_segment("a", vocab);
  REQUIRE(single.pieces.size() == 1);
  CHECK(vocab.piece(single.pieces[0]) == "a");
}

TEST_CASE("viterbi tie-breaking: fewer pieces, then leftmost-longest") {
  // log-probs are exact halves so the sums tie bit-for-bit
  const PieceVocab vocab = make_vocab({{"a", -1.0},
                                       {"b", -1.0},
                                       {"c", -1.0},
                                       {"ab", -2.0},
                                       {"bc", -2.0}});
  const Segmentation seg = viterbi_segment("abc", vocab);
  REQUIRE(seg.pieces.size() == 2);
  CHECK(vocab.piece(seg.pieces[0]) == "ab");
  CHECK(vocab.piece(seg.pieces[1]) == "c");
}

TEST_CASE("viterbi equals exhaustive search on random short words") {
  // Dyadic log-probs: every path sum of <= 8 of these is exact in double
  // precision, so the oracle and the decoder detect the same ties.
  std::vector<std::pair<std::string, double>> entries = {
      {"a", -1.25}, {"b", -1.5}, {"c", -2.0}, {"ab", -2.25}, {"bc", -2.75},
      {"ca", -3.0}, {"abc", -2.5}, {"aa", -3.25}, {"cc", -3.5},
      {"bca", -3.75}};
  const PieceVocab vocab = make_vocab(entries);
  Rng rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    std::string word;
    const std::size_t len = 1 + rng.next_below(8);
    for (std::size_t i = 0; i < len; ++i) {
      const char* alphabet = "abc";
      word.push_back(alphabet[rng.next_below(3)]);
    }
    const Segmentation seg = viterbi_segment(word, vocab);
    const auto best = brute_force_best(word, vocab);
    CHECK(seg.pieces == best);
    CHECK(seg.log_prob == doctest::Approx(seg_log_prob(best, vocab)));
  }
}

TEST_CASE("encode pinned examples") {
  const Lexicon lex({"北京", "大学"});
  const PieceVocab vocab = make_vocab({{"北京", std::log(0.4)},
                                       {"大学", std::log(0.4)},
                                       {"北", std::log(0.05)},
                                       {"京", std::log(0.05)},
                                       {"大", std::log(0.05)},
                                       {"学", std::log(0.05)}});
  CHECK(encode("", lex, vocab).empty());
  CHECK(decode({}, vocab) == "");

  const auto ids = encode("北京大学", lex, vocab);
  CHECK(decode(ids, vocab) == "北京大学");
  // boundary splitter sits between the two words
  REQUIRE(ids.size() == 3);
  CHECK(ids[1] == PieceVocab::kSplitterId);
}

TEST_CASE("encode restores original spaces, not splitters") {
  const PieceVocab vocab = ascii_vocab();
  const Lexicon lex(std::vector<std::string>{});
  const auto ids = encode("a b", lex, vocab);
  CHECK(decode(ids, vocab) == "a b");
  bool has_space_id = false;
  for (TokenId id : ids) has_space_id |= (id == PieceVocab::kSpaceId);
  CHECK(has_space_id);
}

TEST_CASE("encode falls back to byte pieces for unknown characters") {
  const Lexicon lex(std::vector<std::string>{});
  const PieceVocab vocab = ascii_vocab();
  const std::string text = "hi \xF0\x9F\x98\x80 ok";  // emoji outside vocab
  const auto ids = encode(text, lex, vocab);
  CHECK(decode(ids, vocab) == text);
  bool has_byte_id = false;
  for (TokenId id : ids) has_byte_id |= vocab.is_byte_id(id);
  CHECK(has_byte_id);
}

TEST_CASE("decode rejects out-of-range ids") {
  const PieceVocab vocab = ascii_vocab();
  CHECK_THROWS_AS(decode({static_cast<TokenId>(vocab.size())}, vocab),
                  InvalidIdError);
  CHECK_THROWS_AS(decode({-1}, vocab), InvalidIdError);
}

TEST_CASE("round trip over random mixed-script strings") {
  const Lexicon lex({"北京", "大学", "the", "and"});
  std::vector<std::string> clean = {"北", "京", "大", "学", "北京", "大学",
                                    "t", "h", "e", "a", "n", "d", "the",
                                    "and"};
  std::vector<std::pair<std::string, double>> entries;
  const double lp = std::log(1.0 / static_cast<double>(clean.size()));
  for (const auto& p : clean) entries.emplace_back(p, lp);
  const PieceVocab vocab = make_vocab(entries);

  const std::vector<std::string> alphabet = {
      "北", "京", "大", "学", "t", "h", "e", "a", "n", "d", " ", "  ", "\n",
      "\t", "😀", "é", "中", PieceVocab::kSplitterGlyph,
      PieceVocab::kSpaceGlyph};
  Rng rng(2024);
  for (int trial = 0; trial < 500; ++trial) {
    std::string text;
    const std::size_t len = rng.next_below(24);
    for (std::size_t i = 0; i < len; ++i) {
      text += alphabet[rng.next_below(alphabet.size())];
    }
    const auto ids = encode(text, lex, vocab);
    CHECK(decode(ids, vocab) == text);
  }
}

TEST_CASE("train_unigram on a single-character corpus") {
  const PieceVocab vocab =
      train_unigram(std::vector<std::string>(4, "x"), 3, 8, 0.8);
  CHECK(vocab.content_size() == 1);
  CHECK(vocab.piece(PieceVocab::kContentBase) == "x");
  CHECK(vocab.log_prob(PieceVocab::kContentBase) ==
        doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("train_unigram keeps both pieces of the aa corpus") {
  // Both boundary solutions of this degenerate corpus tie exactly under
  // frequency*length seeding, so EM holds the two pieces at equal mass; the
  // brute-force EM oracle confirms the tie.
  std::vector<std::pair<std::string, std::size_t>> corpus = {{"aa", 10}};
  const BruteEmResult oracle = brute_force_em(corpus, 2);
  CHECK(oracle.log_probs.at("a") ==
        doctest::Approx(oracle.log_probs.at("aa")).epsilon(1e-9));

  const PieceVocab vocab = train_unigram_counted(corpus, 3, 8, 0.8);
  REQUIRE(vocab.content_size() == 2);
  const auto a = vocab.find("a");
  const auto aa = vocab.find("aa");
  REQUIRE(a);
  REQUIRE(aa);
  CHECK(vocab.log_prob(*aa) ==
        doctest::Approx(oracle.log_probs.at("aa")).epsilon(1e-6));
  CHECK(vocab.log_prob(*a) ==
        doctest::Approx(oracle.log_probs.at("a")).epsilon(1e-6));
  CHECK(std::abs(vocab.log_prob(*aa) - vocab.log_prob(*a)) < 1e-6);
}

TEST_CASE("train_unigram matches the brute-force EM oracle") {
  std::vector<std::pair<std::string, std::size_t>> corpus = {
      {"abc", 6}, {"ab", 4}, {"bc", 4}, {"c", 2}};
  const BruteEmResult oracle = brute_force_em(corpus, 2);
  const PieceVocab vocab = train_unigram_counted(corpus, 32, 32, 0.8);
  for (const auto& [piece, lp] : oracle.log_probs) {
    const auto id = vocab.find(piece);
    REQUIRE(id);
    CHECK(vocab.log_prob(*id) == doctest::Approx(lp).epsilon(1e-9));
  }
}

TEST_CASE("train_unigram retains frequent pieces under pruning") {
  // "ab" occurs 15 times, "ba" only 5: pruning to 4 content pieces must keep
  // "ab" and may drop "ba".
  std::vector<std::pair<std::string, std::size_t>> corpus = {{"abab", 5},
                                                             {"ab", 5}};
  const PieceVocab vocab = train_unigram_counted(corpus, 4, 16, 0.8);
  CHECK(vocab.content_size() <= 4);
  REQUIRE(vocab.find("ab"));
  CHECK(vocab.find("a"));
  CHECK(vocab.find("b"));
  CHECK(!vocab.find("ba"));
  CHECK(vocab.log_prob(*vocab.find("ab")) > std::log(0.5));
}

TEST_CASE("EM log-likelihood is non-decreasing") {
  std::vector<std::string> corpus;
  Rng rng(5);
  for (int i = 0; i < 400; ++i) {
    const char* parts[] = {"ab", "abc", "bca", "ca", "aab", "c"};
    std::string word;
    const std::size_t n = 1 + rng.next_below(3);
    for (std::size_t j = 0; j < n; ++j) word += parts[rng.next_below(6)];
    corpus.push_back(word);
  }
  UnigramTrainDiagnostics diag;
  train_unigram(corpus, 12, 30, 0.8, &diag, 4);
  REQUIRE(diag.em_log_likelihood.size() >= 4);
  // monotone within each EM run; pruning resets the comparison
  std::size_t idx = 0;
  for (std::size_t round = 0; round <= diag.prune_rounds; ++round) {
    for (std::size_t i = 1; i < 4 && idx + i < diag.em_log_likelihood.size();
         ++i) {
      CHECK(diag.em_log_likelihood[idx + i] >=
            diag.em_log_likelihood[idx + i - 1] - 1e-9);
    }
    idx += 4;
  }
}

TEST_CASE("trained vocab stays normalized") {
  std::vector<std::string> corpus;
  for (int i = 0; i < 50; ++i) {
    corpus.push_back("abcab");
    corpus.push_back("cababc");
  }
  const PieceVocab vocab = train_unigram(corpus, 6, 20, 0.8);
  CHECK(vocab.probability_mass() == doctest::Approx(1.0).epsilon(1e-6));
  vocab.validate();
}

TEST_CASE("train_unigram rejects an empty corpus") {
  CHECK_THROWS_AS(train_unigram({}, 4, 8, 0.8), EmptyCorpusError);
  CHECK_THROWS_AS(train_unigram({""}, 4, 8, 0.8), EmptyCorpusError);
}

TEST_CASE("vocab file round trip with escaped characters") {
  const PieceVocab vocab = make_vocab({{"a\tb", std::log(0.3)},
                                       {"c\nd", std::log(0.3)},
                                       {"\\", std::log(0.2)},
                                       {"e", std::log(0.2)}});
  const std::string path = "build_test_vocab.tsv";
  vocab.save(path);
  const PieceVocab loaded = PieceVocab::load(path);
  REQUIRE(loaded.size() == vocab.size());
  for (std::size_t id = 0; id < vocab.size(); ++id) {
    CHECK(loaded.piece(static_cast<TokenId>(id)) ==
          vocab.piece(static_cast<TokenId>(id)));
    CHECK(loaded.log_prob(static_cast<TokenId>(id)) ==
          doctest::Approx(vocab.log_prob(static_cast<TokenId>(id))));
  }
  std::remove(path.c_str());
}

TEST_CASE("encode uses byte fallback for text holding reserved glyphs") {
  const PieceVocab vocab = ascii_vocab();
  const Lexicon lex(std::vector<std::string>{});
  const std::string tricky = "x" + splitter() + "y" + space_glyph() + "z";
  const auto ids = encode(tricky, lex, vocab);
  CHECK(decode(ids, vocab) == tricky);
}
