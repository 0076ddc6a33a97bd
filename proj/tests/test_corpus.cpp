#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "cpmf/corpus.hpp"
#include "cpmf/errors.hpp"
#include "cpmf/tokenizer.hpp"

using namespace cpmf;

namespace {

PieceVocab tiny_vocab() {
  std::vector<std::pair<std::string, double>> entries;
  const double lp = std::log(1.0 / 8.0);
  for (const char* p : {"a", "b", "c", "A", "B", "x", "y", "z"})
    entries.emplace_back(p, lp);
  return PieceVocab::from_entries(entries);
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name, const std::string& content)
      : path(name) {
    std::ofstream out(path, std::ios::binary);
    out << content;
  }
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("documents split on blank lines") {
  CHECK(documents_from_text("A\n\nB").documents ==
        std::vector<std::string>{"A", "B"});
  CHECK(documents_from_text("A\n\n\n\nB").documents ==
        std::vector<std::string>{"A", "B"});
  CHECK(documents_from_text("").documents.empty());
  CHECK(documents_from_text("  \n\t\n").documents.empty());
  CHECK(documents_from_text("A\nB\n\nC").documents ==
        std::vector<std::string>{"A\nB", "C"});
}

TEST_CASE("load_documents reads files and validates UTF-8") {
  TempFile f("corpus_test_docs.txt", "doc one\n\ndoc two\n");
  CHECK(load_documents(f.path).documents ==
        std::vector<std::string>{"doc one", "doc two"});
  CHECK_THROWS_AS(load_documents("corpus_no_such_file.txt"), IoError);

  TempFile bad("corpus_test_bad.txt", std::string("ok\xFF\xFE\n"));
  CHECK_THROWS_AS(load_documents(bad.path), Utf8Error);
}

TEST_CASE("concat_with_eod appends one EOD per document") {
  const Lexicon lex(std::vector<std::string>{});
  const PieceVocab vocab = tiny_vocab();

  CHECK(concat_with_eod({{}}, lex, vocab).ids.empty());

  DocumentSet one{{"a"}};
  const TokenStream s1 = concat_with_eod(one, lex, vocab);
  REQUIRE(s1.ids.size() == 2);
  CHECK(s1.ids[1] == PieceVocab::kEodId);
  CHECK(s1.eod_positions == std::vector<std::size_t>{1});

  DocumentSet two{{"ab", "c"}};
  const TokenStream s2 = concat_with_eod(two, lex, vocab);
  std::size_t eods = 0;
  for (TokenId id : s2.ids) eods += (id == PieceVocab::kEodId) ? 1 : 0;
  CHECK(eods == 2);
  CHECK(s2.eod_positions.size() == 2);
  for (std::size_t pos : s2.eod_positions)
    CHECK(s2.ids[pos] == PieceVocab::kEodId);
}

TEST_CASE("chunk emits full windows only") {
  TokenStream stream;
  stream.ids = {1, 2, 3, 4, 5};
  auto seqs = chunk(stream, 2);
  REQUIRE(seqs.size() == 2);
  CHECK(seqs[0] == std::vector<TokenId>{1, 2});
  CHECK(seqs[1] == std::vector<TokenId>{3, 4});

  stream.ids.assign(2048, 7);
  CHECK(chunk(stream, 1024).size() == 2);

  stream.ids.assign(5, 7);
  CHECK(chunk(stream, 8).empty());

  CHECK_THROWS_AS(chunk(stream, 1), ConfigError);
}

TEST_CASE("token conservation across seeds") {
  TokenStream stream;
  for (int i = 0; i < 103; ++i) stream.ids.push_back(i);
  const auto seqs = chunk(stream, 10);
  for (std::uint64_t seed : {1ull, 2ull, 99ull}) {
    std::size_t total = 0;
    for (const auto& batch : batches(seqs, 3, seed)) {
      for (const auto& seq : batch) total += seq.size();
    }
    CHECK(total == 100);
  }
}

TEST_CASE("batches are deterministic per seed and sized correctly") {
  std::vector<std::vector<TokenId>> seqs;
  for (TokenId i = 0; i < 5; ++i) seqs.push_back({i, i});

  const auto a = batches(seqs, 2, 42);
  const auto b = batches(seqs, 2, 42);
  CHECK(a == b);
  REQUIRE(a.size() == 3);
  CHECK(a[0].size() == 2);
  CHECK(a[1].size() == 2);
  CHECK(a[2].size() == 1);  // trailing partial batch last

  std::vector<std::vector<TokenId>> four(seqs.begin(), seqs.begin() + 4);
  CHECK(batches(four, 2, 7).size() == 2);
}

TEST_CASE("different seeds usually permute differently") {
  std::vector<std::vector<TokenId>> seqs;
  for (TokenId i = 0; i < 12; ++i) seqs.push_back({i});
  const auto base = batches(seqs, 12, 0);
  std::size_t differing = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    if (batches(seqs, 12, seed) != base) ++differing;
  }
  // 12! orderings make a collision vanishingly rare
  CHECK(differing >= 99);
}
