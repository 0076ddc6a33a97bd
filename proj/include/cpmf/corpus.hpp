#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cpmf/tokenizer.hpp"

namespace cpmf {

struct DocumentSet {
  std::vector<std::string> documents;
};

struct TokenStream {
  std::vector<TokenId> ids;
  std::vector<std::size_t> eod_positions;
};

// Reads a UTF-8 text file; documents are separated by blank lines, runs of
// blank lines collapse, and whitespace-only documents are dropped.
DocumentSet load_documents(const std::string& path);
DocumentSet documents_from_text(std::string_view text);

// enc(d1) + [EOD] + enc(d2) + [EOD] + ..., one EOD per document.
TokenStream concat_with_eod(const DocumentSet& docs, const Lexicon& lexicon,
                            const PieceVocab& vocab);

// Non-overlapping windows of exactly seq_len ids; a trailing partial window
// is dropped.
std::vector<std::vector<TokenId>> chunk(const TokenStream& stream,
                                        std::size_t seq_len);

// Seeded shuffle of the sequences grouped into batches; the trailing partial
// batch comes last. Same seed, same order.
std::vector<std::vector<std::vector<TokenId>>> batches(
    const std::vector<std::vector<TokenId>>& sequences, std::size_t batch_size,
    std::uint64_t seed);

}  // namespace cpmf
