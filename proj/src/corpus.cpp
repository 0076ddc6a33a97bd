#include "cpmf/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cpmf/errors.hpp"
#include "cpmf/rng.hpp"
#include "cpmf/utf8.hpp"

namespace cpmf {

namespace {

bool is_blank(std::string_view line) {
  return line.find_first_not_of(" \t\r") == std::string_view::npos;
}

}  // namespace

DocumentSet documents_from_text(std::string_view text) {
  if (!utf8::is_valid(text)) throw Utf8Error("corpus text is not valid UTF-8");
  DocumentSet set;
  std::string current;
  std::size_t pos = 0;
  auto flush = [&] {
    if (!is_blank(current)) set.documents.push_back(current);
    current.clear();
  };
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = (nl == std::string_view::npos)
                                ? text.substr(pos)
                                : text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (is_blank(line)) {
      flush();
    } else {
      if (!current.empty()) current.push_back('\n');
      current += line;
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  flush();
  return set;
}

DocumentSet load_documents(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("failed reading corpus file: " + path);
  return documents_from_text(buf.str());
}

TokenStream concat_with_eod(const DocumentSet& docs, const Lexicon& lexicon,
                            const PieceVocab& vocab) {
  TokenStream stream;
  for (const std::string& doc : docs.documents) {
    const std::vector<TokenId> ids = encode(doc, lexicon, vocab);
    stream.ids.insert(stream.ids.end(), ids.begin(), ids.end());
    stream.eod_positions.push_back(stream.ids.size());
    stream.ids.push_back(PieceVocab::kEodId);
  }
  return stream;
}

std::vector<std::vector<TokenId>> chunk(const TokenStream& stream,
                                        std::size_t seq_len) {
  if (seq_len < 2) throw ConfigError("seq_len must be >= 2");
  std::vector<std::vector<TokenId>> sequences;
  const std::size_t n_full = stream.ids.size() / seq_len;
  sequences.reserve(n_full);
  for (std::size_t i = 0; i < n_full; ++i) {
    sequences.emplace_back(stream.ids.begin() + i * seq_len,
                           stream.ids.begin() + (i + 1) * seq_len);
  }
  return sequences;
}

std::vector<std::vector<std::vector<TokenId>>> batches(
    const std::vector<std::vector<TokenId>>& sequences, std::size_t batch_size,
    std::uint64_t seed) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  std::vector<std::size_t> order(sequences.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<std::vector<std::vector<TokenId>>> result;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(start + batch_size, order.size());
    std::vector<std::vector<TokenId>> batch;
    batch.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) batch.push_back(sequences[order[i]]);
    result.push_back(std::move(batch));
  }
  return result;
}

}  // namespace cpmf
